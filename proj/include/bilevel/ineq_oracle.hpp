#pragma once

#include <vector>

#include "bilevel/eq_oracle.hpp"
#include "bilevel/inner_solvers.hpp"
#include "bilevel/types.hpp"

namespace bilevel {

/// Penalty weights for the single-level surrogate.  Defaults tie both to the
/// oracle accuracy: alpha1 = alpha^-2, alpha2 = alpha^-4.
struct PenaltyParams {
  double alpha = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;

  static PenaltyParams from_accuracy(double alpha);
  void validate() const;  // requires alpha2 >= alpha1 >= 1
};

struct ActiveSetTols {
  double act_tol = 0.0;
  double dual_tol = 0.0;
};

/// Indices i with |h_i| <= act_tol and lambda_i > dual_tol (sorted).
/// Degenerate rows (h_i ~ 0, lambda_i ~ 0) are excluded: the zero
/// subgradient is assigned there.
struct ActiveSet {
  std::vector<int> indices;
  double act_tol = 0.0;
  double dual_tol = 0.0;
  bool near_degenerate = false;  // some row was excluded with 0 < lambda_i <= dual_tol, h_i ~ 0
};

ActiveSet active_set(const Vec& h_vals, const Vec& lambda, const ActiveSetTols& tols);

/// Relative default tolerances: act_tol = 1e-7 (1 + ||b||_inf),
/// dual_tol = 1e-7 (1 + ||lambda||_inf).
ActiveSetTols default_active_tols(const BilevelInstance& inst, const Vec& lambda);

struct PenaltyEval {
  double value = 0.0;
  Vec grad_x;
  Vec grad_y;
};

/// Penalty surrogate at (x, y) given the lower-level solution pd and active
/// set I:
///   value  = f + a1 (g + lam' h - g*) + (a2/2) ||h_I||^2,
///   grad_y = grad_y f + a1 (grad_y g - B'lam) - a2 B_I' h_I,
///   grad_x = grad_x f + a1 (grad_x g + A'lam - grad_x g*) + a2 A_I' h_I,
/// with g* = g(x,y*) + lam' h(x,y*) and grad_x g* = grad_x g(x,y*) + A'lam
/// (envelope theorem; lam is treated as constant).
PenaltyEval penalty_value_and_grads(const BilevelInstance& inst, const Vec& x, const Vec& y,
                                    const PrimalDualPair& pd, const ActiveSet& I,
                                    const PenaltyParams& p, OracleCounter& counter);

struct IneqOracleOptions {
  InnerTolerance ll_tol{1e-10, 400000};  // lower-level accuracy
  std::optional<double> pen_tol;          // penalty-minimizer accuracy (auto if unset)
  // In/out warm-start caches: read as starting points when nonempty, updated
  // with the new solutions on return.  Callers own the state.
  PrimalDualPair* warm_ll = nullptr;
  Vec* warm_pen = nullptr;
};

/// Penalty-based inexact hypergradient oracle for inequality constraints:
/// solve the lower level, form the penalty surrogate, minimize it in y
/// (first-order, with the explicit ||h_I||^2 term handled by a prox step),
/// and return grad_x of the surrogate at the minimizer.
HypergradientEstimate inexact_grad_ineq(const BilevelInstance& inst, const Vec& x,
                                        const PenaltyParams& p, OracleCounter& counter,
                                        const IneqOracleOptions& opts = {});

struct ValueEstimate {
  double value = 0.0;
  OracleCounter counters;  // oracle work spent inside this call
};

/// Inexact zeroth-order oracle: solves the lower level to ||y - y*|| <=
/// alpha / L_f and returns f(x, y), so |F_tilde - F| <= alpha.  warm is an
/// optional in/out solution cache.
ValueEstimate zeroth_order_value(const BilevelInstance& inst, const Vec& x, double alpha,
                                 OracleCounter& counter, PrimalDualPair* warm = nullptr);

}  // namespace bilevel
