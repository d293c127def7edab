#pragma once

#include <cstdint>
#include <vector>

#include "bilevel/inner_solvers.hpp"
#include "bilevel/outer_solvers.hpp"
#include "bilevel/types.hpp"

namespace bilevel {

/// Exact-oracle and certification layer.  Everything here may read the
/// analytic QuadraticData of an instance; it exists to check the
/// first-order pipeline against ground truth.

/// Exact lower-level solve for quadratic instances.  Equality: one dense KKT
/// solve.  Inequality: active-set enumeration for d_h <= 12, otherwise
/// descent-ascent plus a Newton polish of the guessed active set.
PrimalDualPair solve_ll_exact_quadratic(const BilevelInstance& inst, const Vec& x);

/// Brute-force active-set enumeration (2^d_h KKT solves); the independent
/// test oracle.  Guarded to d_h <= 20.
PrimalDualPair enumerate_active_sets(const BilevelInstance& inst, const Vec& x);

/// Exact hypergradient via implicit differentiation of the (reduced) KKT
/// system.  Requires a quadratic instance; throws DegeneracyError when
/// strict complementarity fails at the stated tolerance.
Vec exact_hypergrad_kkt(const BilevelInstance& inst, const Vec& x,
                        double strict_comp_tol = 1e-7);

/// Exact hyperobjective value F(x) = f(x, y*(x)) for quadratic instances.
double exact_value(const BilevelInstance& inst, const Vec& x);

struct GoldsteinCertificate {
  double delta = 0.0;
  double distance_upper_bound = 0.0;
  int n_samples = 0;
  Vec witness_weights;  // simplex weights over the sampled gradients
};

/// Samples gradients over the delta-ball around x (plus x itself), then
/// computes the minimum-norm point of their convex hull (Wolfe's algorithm,
/// duality-gap stop 1e-10).  The returned norm is an upper bound on
/// dist(0, conv of sampled gradients) and hence on dist(0, d_delta F(x))
/// when the oracle is exact.
GoldsteinCertificate goldstein_certify(const GradOracle& grad_oracle, const Vec& x, double delta,
                                       int n_samples, std::uint64_t seed);

/// Min-norm point of conv{columns of G}.  Optional simplex weights out.
Vec min_norm_point(const Mat& G, Vec* weights = nullptr, double gap_tol = 1e-10);

/// Central-difference check of a gradient: worst relative discrepancy over
/// all coordinates (or 20 seeded random directions when dim > 50) and all
/// step sizes.
double fd_gradient_check(const std::function<double(const Vec&)>& fun, const Vec& grad,
                         const Vec& x, const std::vector<double>& h_steps,
                         std::uint64_t seed = 0);

}  // namespace bilevel
