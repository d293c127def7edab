#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "bilevel/types.hpp"

namespace bilevel {

/// Lower-level primal solution with its dual multiplier.
/// kkt_residual is the max of the stationarity, feasibility and
/// complementarity residuals at return.
struct PrimalDualPair {
  Vec y;
  Vec lambda;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Accuracy request for an inner solve.  target is a Euclidean
/// distance-to-solution (certified through gradient residuals divided by the
/// strong-convexity modulus).
struct InnerTolerance {
  double target = 1e-8;
  int max_iters = 400000;
};

/// Euclidean projector onto {y : B y = c} with a cached factorization of
/// B B^T.  Throws FactorizationError if B is numerically rank deficient.
/// An empty B (0 rows) acts as the identity.
class AffineProjector {
 public:
  explicit AffineProjector(Mat B, double rank_tol = 1e-8);

  /// argmin_{By=c} ||y - u||^2 = u - B^T (BB^T)^{-1} (B u - c)
  Vec project(const Vec& u, const Vec& c) const;

  /// Projection onto the tangent space {By = 0}.
  Vec project_tangent(const Vec& v) const;

  /// Least-squares multiplier: argmin_l ||g - B^T l||^2 = (BB^T)^{-1} B g.
  Vec least_squares_dual(const Vec& g) const;

  const Mat& B() const { return B_; }
  int rows() const { return static_cast<int>(B_.rows()); }

 private:
  Mat B_;
  Eigen::LLT<Mat> llt_;  // of B B^T
};

/// Convenience wrapper over AffineProjector::project.
Vec project_affine(const Mat& B, const Vec& c, const Vec& u);

/// Smooth strongly convex objective of y alone, with known modulus/smoothness.
struct YOracle {
  std::function<Vec(const Vec&)> grad;
  double mu = 0.0;      // strong convexity modulus
  double smooth = 0.0;  // gradient Lipschitz constant
};

struct AgdOptions {
  Vec y0;                                        // start (projected if infeasible)
  std::function<void(const Vec&)> observer;      // called on every accepted iterate
};

struct AgdResult {
  Vec y;
  int iterations = 0;
  double residual = 0.0;  // final (projected) gradient norm
};

/// Accelerated gradient descent over the affine set {By = c}.  Stops when the
/// tangent-projected gradient satisfies ||P_T grad|| <= mu * tol.target,
/// which certifies ||y - y*|| <= tol.target.  Throws ConvergenceError with
/// the best iterate if the budget runs out.
AgdResult agd_affine(const YOracle& obj, const Mat& B, const Vec& c, const InnerTolerance& tol,
                     const AgdOptions& opts = {});
AgdResult agd_affine(const YOracle& obj, const AffineProjector& proj, const Vec& c,
                     const InnerTolerance& tol, const AgdOptions& opts = {});

struct DualRecovery {
  Vec lambda;
  double residual = 0.0;  // ||grad - B^T lambda||
};

/// Least-squares multiplier for the Lagrangian g + lambda' (Ax - By - b):
/// stationarity reads grad_y g - B^T lambda = 0, so
/// lambda_hat = argmin ||grad_at_y - B^T lambda||^2.
DualRecovery recover_dual(const Vec& grad_at_y, const Mat& B);

struct LlOptions {
  double feas_tol = 1e-8;
  double comp_tol = 1e-8;
  int polish_interval = 25;              // attempt an active-set polish this often
  const PrimalDualPair* warm = nullptr;  // optional warm start
};

/// Lower-level solver for inequality-constrained instances: projected
/// gradient descent-ascent on g + lambda' h with equal step sizes
/// 1/(C_g + ||B||^2) and lambda projected onto the nonnegative orthant.
/// Every polish_interval iterations the current active-set guess is solved
/// by agd_affine + recover_dual (still first order); the polished point is
/// returned once it passes all four KKT checks:
///   stationarity  ||grad_y g - B'lambda||  <= mu_g * tol.target
///   feasibility   max(h)+                  <= feas_tol + 0.1 ||B|| tol.target
///   dual          lambda >= -1e-12
///   complement.   max |lambda_i h_i|       <= comp_tol + scale * tol.target
PrimalDualPair solve_ll_inequality(const BilevelInstance& inst, const Vec& x,
                                   const InnerTolerance& tol, OracleCounter& counter,
                                   const LlOptions& opts = {});

struct PenaltyMinResult {
  Vec y;
  int iterations = 0;
  double grad_norm = 0.0;
};

/// Unconstrained AGD on a strongly convex penalty.  Returns y with
/// ||grad(y)|| <= mu * tol.target (hence ||y - y*|| <= tol.target).
PenaltyMinResult minimize_penalty(const std::function<Vec(const Vec&)>& grad, const Vec& y0,
                                  double mu, double C, const InnerTolerance& tol);

/// Explicit quadratic term (weight/2) ||B y - target||^2 handled by a prox
/// step, so its (possibly huge) curvature never enters the step size.
struct QuadraticTerm {
  double weight = 0.0;
  Mat B;       // may have 0 rows
  Vec target;  // same length as B.rows()
};

/// Accelerated proximal gradient on smooth_part + quadratic term.  The
/// smooth part is accessed through gradients only; the quadratic term is
/// constraint data.  Certificate: total gradient norm <= mu * tol.target
/// with mu the strong convexity of the smooth part.
PenaltyMinResult minimize_penalty_structured(const YOracle& smooth_part, const QuadraticTerm& quad,
                                             const Vec& y0, const InnerTolerance& tol);

}  // namespace bilevel
