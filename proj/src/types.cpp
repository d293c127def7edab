#include "bilevel/types.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace bilevel {

namespace {

double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw EvaluationError(std::string(what) + " returned a non-finite value");
  return v;
}

Vec checked(Vec v, Eigen::Index want, const char* what) {
  if (v.size() != want)
    throw EvaluationError(std::string(what) + " returned a vector of wrong dimension");
  if (!v.allFinite()) throw EvaluationError(std::string(what) + " returned non-finite entries");
  return v;
}

}  // namespace

void LinearConstraint::validate(int dim_x, int dim_y) const {
  const auto dh = b.size();
  if (A.rows() != dh || B.rows() != dh)
    throw InputError("constraint blocks disagree on the number of rows");
  if (A.cols() != dim_x || B.cols() != dim_y)
    throw InputError("constraint blocks disagree with the variable dimensions");
  if (!A.allFinite() || !B.allFinite() || !b.allFinite())
    throw InputError("constraint data contains non-finite entries");
}

void RegularityEstimates::validate() const {
  for (const TaggedValue* t : {&L_f, &C_f, &C_g, &mu_g, &L_y, &R_dual, &S_g})
    if (!std::isfinite(t->value) || t->value < 0.0)
      throw InputError("regularity estimates must be finite and nonnegative");
  if (mu_g.value <= 0.0) throw InputError("mu_g must be strictly positive");
}

double BilevelInstance::f(const Vec& x, const Vec& y, OracleCounter& c) const {
  ++c.f_evals;
  return checked(upper.value(x, y), "f");
}

Vec BilevelInstance::f_grad_x(const Vec& x, const Vec& y, OracleCounter& c) const {
  ++c.f_grads;
  return checked(upper.grad_x(x, y), dim_x, "grad_x f");
}

Vec BilevelInstance::f_grad_y(const Vec& x, const Vec& y, OracleCounter& c) const {
  ++c.f_grads;
  return checked(upper.grad_y(x, y), dim_y, "grad_y f");
}

double BilevelInstance::g(const Vec& x, const Vec& y, OracleCounter& c) const {
  ++c.g_evals;
  return checked(lower.value(x, y), "g");
}

Vec BilevelInstance::g_grad_x(const Vec& x, const Vec& y, OracleCounter& c) const {
  ++c.g_grads;
  return checked(lower.grad_x(x, y), dim_x, "grad_x g");
}

Vec BilevelInstance::g_grad_y(const Vec& x, const Vec& y, OracleCounter& c) const {
  ++c.g_grads;
  return checked(lower.grad_y(x, y), dim_y, "grad_y g");
}

void BilevelInstance::validate() const {
  if (dim_x <= 0 || dim_y <= 0) throw InputError("dimensions must be positive");
  if (!upper.value || !upper.grad_x || !upper.grad_y || !lower.value || !lower.grad_x ||
      !lower.grad_y)
    throw InputError("instance oracles are not all set");
  constraint.validate(dim_x, dim_y);
  regularity.validate();
}

Vec eval_h(const BilevelInstance& inst, const Vec& x, const Vec& y) {
  if (x.size() != inst.dim_x || y.size() != inst.dim_y)
    throw InputError("eval_h: vector dimensions do not match the instance");
  return inst.constraint.eval(x, y);
}

bool has_full_row_rank(const Mat& B, double rank_tol) {
  if (B.rows() == 0) return true;
  if (B.rows() > B.cols()) return false;
  Eigen::JacobiSVD<Mat> svd(B);
  const auto& s = svd.singularValues();
  return s(s.size() - 1) > rank_tol * s(0);
}

}  // namespace bilevel
