#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "bilevel/trace.hpp"
#include "bilevel/types.hpp"

namespace bilevel {

using GradOracle = std::function<Vec(const Vec&)>;
using ValueOracle = std::function<double(const Vec&)>;

/// clip_D(z) = min{1, D/||z||} z.  clip(0) = 0.
Vec clip(const Vec& z, double D);

/// Convex feasible sets with closed-form Euclidean projection.
struct FeasibleSet {
  enum class Kind { AllSpace, Box, Ball };
  Kind kind = Kind::AllSpace;
  Vec lo, hi;        // Box
  Vec center;        // Ball
  double radius = 0; // Ball

  static FeasibleSet all_space();
  static FeasibleSet box(Vec lo, Vec hi);
  static FeasibleSet ball(Vec center, double radius);
  Vec project(const Vec& x) const;
};

/// Gradient mapping G = C_F (x - proj_X(x - gradF / C_F)).
Vec gradient_mapping(const Vec& x, const Vec& gradF, double C_F, const FeasibleSet& X);

/// Hyperparameters shared by the outer solvers.  Zeros mean "derive the
/// default".  All Theta(.) defaults use unit constants and are overridable.
struct SolverConfig {
  double eps = 0.1;             // target epsilon
  double goldstein_delta = 0.1; // delta of (delta,eps)-stationarity
  double alpha = 0.0;           // oracle inexactness (enters IZO/PIGD defaults)
  double D = 0.0;               // clip radius; default delta eps^2 / L^2
  double eta = 0.0;             // step size; default delta eps^3 / L^4
  double rho = 0.0;             // IZO smoothing; default min(delta/2, f_gap/L)
  double nu = 0.0;              // IZO window radius; default delta - rho
  long long T = 0;              // iterations; default ceil(f_gap L^2/(delta eps^3))
  long long M = 0;              // window length; floor(delta/D) (IZO: floor(nu/D))
  long long K = 0;              // number of windows; floor(T/M)
  std::uint64_t seed = 0;
  double lipschitz_L = 1.0;     // estimate of L = L_f L_y
  double f_gap = 0.0;           // F(x0) - F_lb estimate for the T default
  std::optional<FeasibleSet> feasible_set;
};

/// Optional per-iteration probes; all may be empty.
struct TraceHooks {
  const OracleCounter* counters = nullptr;  // cumulative snapshots into trace rows
  ValueOracle value_probe;                  // fval column
  ValueOracle stationarity_probe;           // stat_measure column
  int record_every = 1;
};

struct RunResult {
  Vec x_out;
  RunTrace trace;
  SolverConfig cfg;            // with derived defaults filled in
  double max_delta_norm = 0.0; // max_t ||Delta_t|| (clipped-update solvers)
  double max_window_dev = 0.0; // max_k max_m ||z - xbar_k||
};

/// Projected descent with a fixed 1/C_F step.  Returns the iterate with the
/// smallest gradient-mapping norm.  delta_acc is recorded; the caller is
/// responsible for supplying an oracle of that accuracy.
RunResult inexact_pgd(const GradOracle& oracle, const Vec& x0, double C_F, const FeasibleSet& X,
                      long long N, double delta_acc, const TraceHooks& hooks = {});

/// Clipped online-gradient outer method with window averaging; x_out is
/// drawn uniformly from the window averages (using the run's RNG stream
/// after the main loop).
RunResult oigrm(const GradOracle& oracle, const Vec& x0, SolverConfig cfg,
                const TraceHooks& hooks = {});

/// Zeroth-order variant: two-point sphere estimator of the smoothed gradient.
RunResult izo(const ValueOracle& value_oracle, const Vec& x0, SolverConfig cfg,
              const TraceHooks& hooks = {});

/// Perturbed inexact gradient descent; x_out uniform over iterates.
RunResult pigd(const GradOracle& oracle, const Vec& x0, SolverConfig cfg,
               const TraceHooks& hooks = {});

struct RegretResult {
  std::vector<Vec> deltas;                    // Delta_1 .. Delta_M (Delta_1 = 0)
  std::function<double(const Vec&)> regret;   // Reg_M(u) = sum <g_m, Delta_m - u>
};

/// Online projected inexact gradient descent on linear losses; replays the
/// clipped update and exposes the comparator regret.
RegretResult inexact_ogd_regret(const std::vector<Vec>& losses, const std::vector<Vec>& noisy,
                                double D, double eta);

}  // namespace bilevel
