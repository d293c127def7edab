#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "bilevel/errors.hpp"

namespace bilevel {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ConstraintKind { Equality, Inequality };

/// Linear lower-level constraint in canonical form
///   h(x,y) = A x - B y - b,
/// with h = 0 (Equality) or h <= 0 componentwise (Inequality).
/// B must have full row rank.
struct LinearConstraint {
  Mat A;  // d_h x d_x
  Mat B;  // d_h x d_y
  Vec b;  // d_h
  ConstraintKind kind = ConstraintKind::Equality;

  int rows() const { return static_cast<int>(b.size()); }

  Vec eval(const Vec& x, const Vec& y) const { return A * x - B * y - b; }

  /// Throws InputError on dimension mismatch or non-finite entries.
  void validate(int dim_x, int dim_y) const;
};

enum class Provenance { UserSupplied, Probed, Exact };

struct TaggedValue {
  double value = 0.0;
  Provenance tag = Provenance::UserSupplied;
};

/// Lipschitz / smoothness / strong-convexity estimates consumed by the
/// solvers.  mu_g must be strictly positive; everything must be finite.
struct RegularityEstimates {
  TaggedValue L_f;      // Lipschitz constant of f
  TaggedValue C_f;      // smoothness of f
  TaggedValue C_g;      // smoothness of g
  TaggedValue mu_g;     // strong convexity of g(x,.)
  TaggedValue L_y;      // Lipschitz constant of y*(x)
  TaggedValue R_dual;   // bound on the dual norm
  TaggedValue S_g;      // Hessian smoothness of g

  void validate() const;
};

/// Running tally of oracle invocations.  Each partial-gradient evaluation
/// counts as one gradient call.
struct OracleCounter {
  long long f_evals = 0;
  long long f_grads = 0;
  long long g_evals = 0;
  long long g_grads = 0;

  long long total() const { return f_evals + f_grads + g_evals + g_grads; }

  /// Work done since an earlier snapshot.
  OracleCounter since(const OracleCounter& before) const {
    return {f_evals - before.f_evals, f_grads - before.f_grads, g_evals - before.g_evals,
            g_grads - before.g_grads};
  }

  OracleCounter& operator+=(const OracleCounter& o) {
    f_evals += o.f_evals;
    f_grads += o.f_grads;
    g_evals += o.g_evals;
    g_grads += o.g_grads;
    return *this;
  }
};

/// First-order oracle for a smooth function of (x, y).
struct SmoothFn {
  std::function<double(const Vec&, const Vec&)> value;
  std::function<Vec(const Vec&, const Vec&)> grad_x;
  std::function<Vec(const Vec&, const Vec&)> grad_y;
};

/// Analytic data of a generated quadratic instance:
///   f(x,y) = c'y + reg_x ||x||^2 + reg_y ||y||^2
///   g(x,y) = 1/2 y'Qy + x'Py
/// Only the diagnostics layer may read this (it provides the second-order
/// baseline); the hypergradient oracles see first-order oracles only.
struct QuadraticData {
  Mat Q;  // d_y x d_y, symmetric positive definite
  Mat P;  // d_x x d_y
  Vec c;  // d_y
  double reg_x = 0.01;
  double reg_y = 0.01;
  std::uint64_t seed = 0;
};

/// A bilevel problem instance:
///   minimize_x F(x) = f(x, y*(x)),  y*(x) = argmin_{y in S(x)} g(x,y),
/// where S(x) is cut out by the linear constraint.  Immutable after
/// construction and safe to share across concurrent runs; counters are
/// per-run and owned by the caller.
struct BilevelInstance {
  int dim_x = 0;
  int dim_y = 0;
  SmoothFn upper;  // f
  SmoothFn lower;  // g, strongly convex in y
  LinearConstraint constraint;
  RegularityEstimates regularity;
  std::shared_ptr<const QuadraticData> quadratic;  // null for black-box instances

  double f(const Vec& x, const Vec& y, OracleCounter& c) const;
  Vec f_grad_x(const Vec& x, const Vec& y, OracleCounter& c) const;
  Vec f_grad_y(const Vec& x, const Vec& y, OracleCounter& c) const;
  double g(const Vec& x, const Vec& y, OracleCounter& c) const;
  Vec g_grad_x(const Vec& x, const Vec& y, OracleCounter& c) const;
  Vec g_grad_y(const Vec& x, const Vec& y, OracleCounter& c) const;

  void validate() const;
};

/// h(x,y) = A x - B y - b with dimension checks.
Vec eval_h(const BilevelInstance& inst, const Vec& x, const Vec& y);

/// Numerical full-row-rank test: sigma_min(B) > rank_tol * sigma_max(B).
bool has_full_row_rank(const Mat& B, double rank_tol = 1e-8);

}  // namespace bilevel
