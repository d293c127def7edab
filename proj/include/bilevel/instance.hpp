#pragma once

#include <cstdint>
#include <string>

#include "bilevel/types.hpp"

namespace bilevel {

/// Strong-convexity floor added to G G^T / d_y when generating Q.
/// Guarantees lambda_min(Q) >= kMuFloor.
inline constexpr double kMuFloor = 1.0;

/// Reference ball radius on which the exact L_f / R_dual values of a
/// generated instance are certified.
inline constexpr double kRefRadius = 10.0;

/// Recipe for the random quadratic experiment family:
///   f(x,y) = c'y + reg_x ||x||^2 + reg_y ||y||^2
///   g(x,y) = 1/2 y'Qy + x'Py,   Q = G G^T / d_y + kMuFloor I
/// with constraint rows drawn standard-normal and b = |N(0,1)| + 0.1 so that
/// y = 0 is strictly feasible when the x-block is zero.
struct QuadraticInstanceSpec {
  int dim_x = 0;
  int dim_y = 0;
  int n_const = 0;
  std::uint64_t seed = 0;
  double reg_x = 0.01;
  double reg_y = 0.01;
  bool x_coupled_constraint = false;  // if false, the A-block on x is zero
  ConstraintKind kind = ConstraintKind::Inequality;
};

/// Deterministic in the spec: equal specs produce byte-identical instances.
BilevelInstance gen_quadratic(const QuadraticInstanceSpec& spec);

/// Empirical regularity probe: max gradient-difference ratios over sampled
/// pairs inside the ball of the given radius (tagged Probed).  For quadratic
/// instances the analytically exact values are returned instead (tagged
/// Exact).  n_samples must be >= 2.
RegularityEstimates probe_regularity(const BilevelInstance& inst, int n_samples, double radius,
                                     std::uint64_t seed);

/// Instance file format: one JSON document with fields
///   {dim_x, dim_y, d_h, kind, A, B, b, Q, P, c, reg_x, reg_y, seed},
/// matrices as row-major nested arrays of doubles.  Readers reject
/// non-finite values.  Only quadratic-family instances are serializable.
std::string save_instance_string(const BilevelInstance& inst);
void save_instance(const BilevelInstance& inst, const std::string& path);
BilevelInstance load_instance_string(const std::string& text);
BilevelInstance load_instance(const std::string& path);

}  // namespace bilevel
