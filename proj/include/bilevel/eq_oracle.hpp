#pragma once

#include <optional>

#include "bilevel/inner_solvers.hpp"
#include "bilevel/types.hpp"

namespace bilevel {

/// An approximate hypergradient with its accounting.
struct HypergradientEstimate {
  Vec grad;
  double accuracy_target = 0.0;  // eps^2/(4 C_F R_X) when both are supplied, else the raw eps/alpha
  double fd_delta = 0.0;         // finite-difference perturbation (equality oracle)
  double inner_tol = 0.0;        // accuracy used for the lower-level solves
  bool margin_warning = false;   // perturbation too large for the convexity margin
  bool degenerate_flag = false;  // near-degenerate active constraints excluded (inequality oracle)
  OracleCounter counters;        // oracle work spent inside this call
};

struct EqOracleOverrides {
  std::optional<double> fd_delta;   // default eps^2
  std::optional<double> inner_tol;  // default 2 (C_g + ||A||) delta^2
  std::optional<double> c_F;        // smoothness of F, for accuracy_target reporting
  std::optional<double> r_X;        // radius of the feasible set, same
  Vec* warm_y = nullptr;            // in/out: start for the unperturbed solve, updated on return
};

/// Finite-difference hypergradient oracle for linear equality constraints:
/// solve the lower level and its delta-perturbed version (g + delta f) over
/// the same affine set, recover both least-squares duals, and return
///   v_x + grad_x f(x, y_hat),
///   v_x = (grad_x g(x,y_d) - grad_x g(x,y) + A'(lam_d - lam)) / delta.
/// Uses f and g values/gradients only.
HypergradientEstimate inexact_grad_eq(const BilevelInstance& inst, const Vec& x, double eps,
                                      OracleCounter& counter, const EqOracleOverrides& ov = {});

}  // namespace bilevel
