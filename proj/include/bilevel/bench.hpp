#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilevel/instance.hpp"
#include "bilevel/outer_solvers.hpp"

namespace bilevel {

enum class Family { EqQuadratic, IneqQuadratic };
enum class SolverKind { InexactPGD, OIGRM, IZO, PIGD, ExactBaselinePGD };

/// One benchmark configuration.  n_const == 0 means the d_y/5 rule.
struct ExperimentSpec {
  Family family = Family::IneqQuadratic;
  int dim_x = 0;
  int dim_y = 0;
  int n_const = 0;
  std::vector<std::uint64_t> seeds;
  SolverKind solver = SolverKind::InexactPGD;
  double eps = 0.1;
  double delta = 0.25;
  double alpha = 0.1;
  int max_iters = 0;
  std::string output_dir;
  int record_every = 1;
  bool timing = false;  // when false, wall_ms columns are zeroed (reproducible files)
};

SolverKind solver_kind_from_string(const std::string& s);
const char* to_string(SolverKind k);

/// Per-seed convergence traces of the chosen solver and the exact-KKT
/// baseline started from the same x0, with F recorded at matched iterations
/// and the gradient error against the exact hypergradient.  Output layout:
///   <dir>/traces/seed_<k>.csv, <dir>/traces/seed_<k>_baseline.csv,
///   <dir>/summary.csv, <dir>/plotdata/convergence.tsv (x, mean, std)
struct ConvergenceResult {
  std::vector<double> final_fo;    // per-seed final objective, first-order run
  std::vector<double> final_base;  // per-seed final objective, baseline
  double mean_rel_gap = 0.0;       // mean |fo-base| / max(1,|base|)
};
ConvergenceResult run_convergence(const ExperimentSpec& spec);

/// Per alpha: mean/std of the hypergradient error along a fixed trajectory
/// (the baseline trajectory does not depend on alpha) plus the final
/// objective gap of a first-order run at that alpha.  Writes
/// <dir>/alpha_sweep.csv with columns alpha, mean_grad_err, std, final_gap.
struct AlphaSweepRow {
  double alpha = 0.0;
  double mean_grad_err = 0.0;
  double std_grad_err = 0.0;
  double final_gap = 0.0;
};
std::vector<AlphaSweepRow> run_alpha_sweep(const ExperimentSpec& spec,
                                           const std::vector<double>& alphas);

/// Median wall time per hypergradient (first-order oracle vs exact KKT
/// baseline), cold-started, >= 20 timed calls after 3 warmups.  Writes
/// <dir>/scaling.csv with columns dy, t_first_order_ms, t_exact_ms.
struct ScalingRow {
  int dy = 0;
  double t_first_order_ms = 0.0;
  double t_exact_ms = 0.0;
};
std::vector<ScalingRow> run_scaling(const ExperimentSpec& spec, const std::vector<int>& dy_list);

/// Probes the exact hypergradient's Lipschitz constant over nearby pairs;
/// the step size 1/C_F of the PGD-style runs is derived from it.
double estimate_outer_smoothness(const BilevelInstance& inst, const Vec& x0, std::uint64_t seed,
                                 int n_pairs = 8, double radius = 1e-3, double safety = 2.0);

}  // namespace bilevel
