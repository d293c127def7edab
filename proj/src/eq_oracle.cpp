#include "bilevel/eq_oracle.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace bilevel {

HypergradientEstimate inexact_grad_eq(const BilevelInstance& inst, const Vec& x, double eps,
                                      OracleCounter& counter, const EqOracleOverrides& ov) {
  if (inst.constraint.kind != ConstraintKind::Equality)
    throw InputError("inexact_grad_eq: instance constraint is not Equality");
  if (x.size() != inst.dim_x) throw InputError("inexact_grad_eq: x dimension mismatch");
  if (!(eps > 0.0)) throw InputError("inexact_grad_eq: eps must be positive");

  const OracleCounter before = counter;
  const double mu_g = inst.regularity.mu_g.value;
  const double C_g = inst.regularity.C_g.value;
  const double C_f = inst.regularity.C_f.value;
  const Mat& A = inst.constraint.A;
  const Mat& B = inst.constraint.B;
  const double normA = A.isZero(0.0) ? 0.0 : Eigen::JacobiSVD<Mat>(A).singularValues()(0);

  const double delta = ov.fd_delta.value_or(eps * eps);
  if (!(delta > 0.0)) throw InputError("inexact_grad_eq: fd_delta must be positive");
  const double inner = ov.inner_tol.value_or(2.0 * (C_g + normA) * delta * delta);

  HypergradientEstimate est;
  est.fd_delta = delta;
  est.inner_tol = inner;
  est.margin_warning = C_f > 0.0 && delta > mu_g / (2.0 * C_f);
  est.accuracy_target =
      ov.c_F && ov.r_X ? eps * eps / (4.0 * *ov.c_F * *ov.r_X) : eps;

  AffineProjector proj(B);
  const Vec cvec = A * x - inst.constraint.b;
  InnerTolerance tol{inner, 400000};

  // unperturbed lower level: min g(x, .) over {By = cvec}
  YOracle g_obj{[&](const Vec& y) { return inst.g_grad_y(x, y, counter); }, mu_g, C_g};
  AgdOptions a0;
  a0.y0 = ov.warm_y && ov.warm_y->size() == inst.dim_y ? *ov.warm_y : Vec::Zero(inst.dim_y);
  AgdResult r0 = agd_affine(g_obj, proj, cvec, tol, a0);
  Vec grad0 = inst.g_grad_y(x, r0.y, counter);
  Vec lam0 = proj.least_squares_dual(grad0);

  // perturbed lower level: min g + delta f over the same set, warm-started at
  // the unperturbed solution (the two are O(delta) apart).
  const double mu_d = std::max(mu_g - delta * C_f, 0.5 * mu_g);
  const double C_d = C_g + delta * C_f;
  YOracle gd_obj{[&](const Vec& y) -> Vec {
                   return inst.g_grad_y(x, y, counter) + delta * inst.f_grad_y(x, y, counter);
                 },
                 mu_d, C_d};
  AgdOptions ad;
  ad.y0 = r0.y;
  AgdResult rd = agd_affine(gd_obj, proj, cvec, tol, ad);
  Vec grad_d = inst.g_grad_y(x, rd.y, counter) + delta * inst.f_grad_y(x, rd.y, counter);
  Vec lam_d = proj.least_squares_dual(grad_d);

  // h is linear, so grad_x <lam, h> = A' lam regardless of the y argument.
  Vec v_x = (inst.g_grad_x(x, rd.y, counter) - inst.g_grad_x(x, r0.y, counter) +
             A.transpose() * (lam_d - lam0)) /
            delta;
  est.grad = v_x + inst.f_grad_x(x, r0.y, counter);

  est.counters = counter.since(before);
  return est;
}

}  // namespace bilevel
