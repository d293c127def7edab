#include "bilevel/ineq_oracle.hpp"

#include <algorithm>
#include <cmath>

namespace bilevel {

PenaltyParams PenaltyParams::from_accuracy(double alpha) {
  if (!(alpha > 0.0) || alpha >= 1.0)
    throw InputError("PenaltyParams: accuracy alpha must lie in (0, 1)");
  PenaltyParams p;
  p.alpha = alpha;
  p.alpha1 = 1.0 / (alpha * alpha);
  p.alpha2 = p.alpha1 * p.alpha1;
  return p;
}

void PenaltyParams::validate() const {
  if (!(alpha > 0.0)) throw InputError("PenaltyParams: alpha must be positive");
  if (!(alpha1 >= 1.0) || !(alpha2 >= alpha1))
    throw InputError("PenaltyParams: need alpha2 >= alpha1 >= 1");
}

ActiveSet active_set(const Vec& h_vals, const Vec& lambda, const ActiveSetTols& tols) {
  if (h_vals.size() != lambda.size()) throw InputError("active_set: dimension mismatch");
  ActiveSet I;
  I.act_tol = tols.act_tol;
  I.dual_tol = tols.dual_tol;
  for (Eigen::Index i = 0; i < h_vals.size(); ++i) {
    if (std::abs(h_vals[i]) <= tols.act_tol) {
      if (lambda[i] > tols.dual_tol)
        I.indices.push_back(static_cast<int>(i));
      else if (lambda[i] > 0.0)
        I.near_degenerate = true;
    }
  }
  return I;
}

ActiveSetTols default_active_tols(const BilevelInstance& inst, const Vec& lambda) {
  ActiveSetTols t;
  const double bmax =
      inst.constraint.b.size() ? inst.constraint.b.lpNorm<Eigen::Infinity>() : 0.0;
  const double lmax = lambda.size() ? lambda.lpNorm<Eigen::Infinity>() : 0.0;
  t.act_tol = 1e-7 * (1.0 + bmax);
  t.dual_tol = 1e-7 * (1.0 + lmax);
  return t;
}

namespace {

Mat select_rows(const Mat& M, const std::vector<int>& idx) {
  Mat out(idx.size(), M.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(i) = M.row(idx[i]);
  return out;
}

Vec select(const Vec& v, const std::vector<int>& idx) {
  Vec out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

}  // namespace

PenaltyEval penalty_value_and_grads(const BilevelInstance& inst, const Vec& x, const Vec& y,
                                    const PrimalDualPair& pd, const ActiveSet& I,
                                    const PenaltyParams& p, OracleCounter& counter) {
  const Mat& A = inst.constraint.A;
  const Mat& B = inst.constraint.B;
  const Vec h_star = inst.constraint.eval(x, pd.y);
  const Vec h = inst.constraint.eval(x, y);
  const Mat AI = select_rows(A, I.indices);
  const Mat BI = select_rows(B, I.indices);
  const Vec hI = select(h, I.indices);

  const double g_star = inst.g(x, pd.y, counter) + pd.lambda.dot(h_star);
  const double bracket = inst.g(x, y, counter) + pd.lambda.dot(h) - g_star;

  PenaltyEval out;
  out.value = inst.f(x, y, counter) + p.alpha1 * bracket + 0.5 * p.alpha2 * hI.squaredNorm();
  out.grad_y = inst.f_grad_y(x, y, counter) +
               p.alpha1 * (inst.g_grad_y(x, y, counter) - B.transpose() * pd.lambda) -
               p.alpha2 * (BI.transpose() * hI);
  const Vec grad_x_gstar = inst.g_grad_x(x, pd.y, counter) + A.transpose() * pd.lambda;
  out.grad_x = inst.f_grad_x(x, y, counter) +
               p.alpha1 * (inst.g_grad_x(x, y, counter) + A.transpose() * pd.lambda - grad_x_gstar) +
               p.alpha2 * (AI.transpose() * hI);
  return out;
}

HypergradientEstimate inexact_grad_ineq(const BilevelInstance& inst, const Vec& x,
                                        const PenaltyParams& p, OracleCounter& counter,
                                        const IneqOracleOptions& opts) {
  if (inst.constraint.kind != ConstraintKind::Inequality)
    throw InputError("inexact_grad_ineq: instance constraint is not Inequality");
  p.validate();
  const OracleCounter before = counter;

  LlOptions ll;
  if (opts.warm_ll && opts.warm_ll->y.size() == inst.dim_y) ll.warm = opts.warm_ll;
  PrimalDualPair pd = solve_ll_inequality(inst, x, opts.ll_tol, counter, ll);
  if (opts.warm_ll) *opts.warm_ll = pd;

  const Vec h_star = inst.constraint.eval(x, pd.y);
  ActiveSet I = active_set(h_star, pd.lambda, default_active_tols(inst, pd.lambda));

  const double mu_g = inst.regularity.mu_g.value;
  const double C_g = inst.regularity.C_g.value;
  const double C_f = inst.regularity.C_f.value;
  const double mu_s = p.alpha1 * mu_g - C_f;
  if (!(mu_s > 0.0))
    throw InputError("inexact_grad_ineq: alpha1 too small, penalty may lose strong convexity");
  const double C_s = C_f + p.alpha1 * C_g;

  // Accuracy of the penalty minimizer: grad_x moves by at most
  // (a1 C_g + a2 ||A_I|| ||B_I||) per unit of y-error; budget a 5% share of
  // alpha for it.
  const Mat AI = select_rows(inst.constraint.A, I.indices);
  const Mat BI = select_rows(inst.constraint.B, I.indices);
  double cross = 0.0;
  if (!I.indices.empty() && !AI.isZero(0.0)) cross = AI.norm() * BI.norm();
  const double sens = p.alpha1 * C_g + p.alpha2 * cross;
  const double pen_target =
      opts.pen_tol.value_or(std::clamp(0.05 * p.alpha / std::max(sens, 1.0), 1e-12, 1e-2));

  // Smooth part: f + a1 (g + lam'h - g*); the alpha2 ||h_I||^2 term is
  // explicit constraint data and goes through the prox.
  YOracle smooth{[&](const Vec& y) -> Vec {
                   return inst.f_grad_y(x, y, counter) +
                          p.alpha1 *
                              (inst.g_grad_y(x, y, counter) -
                               inst.constraint.B.transpose() * pd.lambda);
                 },
                 mu_s, C_s};
  QuadraticTerm quad;
  quad.weight = p.alpha2;
  quad.B = BI;
  quad.target = AI * x - select(inst.constraint.b, I.indices);

  Vec y0 = opts.warm_pen && opts.warm_pen->size() == inst.dim_y ? *opts.warm_pen : pd.y;
  InnerTolerance pen_tol{pen_target, opts.ll_tol.max_iters};
  PenaltyMinResult pm = minimize_penalty_structured(smooth, quad, y0, pen_tol);
  if (opts.warm_pen) *opts.warm_pen = pm.y;

  PenaltyEval pe = penalty_value_and_grads(inst, x, pm.y, pd, I, p, counter);

  HypergradientEstimate est;
  est.grad = pe.grad_x;
  est.accuracy_target = p.alpha;
  est.inner_tol = pen_target;
  est.degenerate_flag = I.near_degenerate;
  est.counters = counter.since(before);
  return est;
}

ValueEstimate zeroth_order_value(const BilevelInstance& inst, const Vec& x, double alpha,
                                 OracleCounter& counter, PrimalDualPair* warm) {
  if (inst.constraint.kind != ConstraintKind::Inequality)
    throw InputError("zeroth_order_value: instance constraint is not Inequality");
  if (!(alpha > 0.0)) throw InputError("zeroth_order_value: alpha must be positive");
  const double L_f = inst.regularity.L_f.value;
  if (!(L_f > 0.0)) throw InputError("zeroth_order_value: L_f estimate required");

  const OracleCounter before = counter;
  LlOptions ll;
  if (warm && warm->y.size() == inst.dim_y) ll.warm = warm;
  InnerTolerance tol{alpha / L_f, 400000};
  PrimalDualPair pd = solve_ll_inequality(inst, x, tol, counter, ll);
  if (warm) *warm = pd;
  ValueEstimate out;
  out.value = inst.f(x, pd.y, counter);
  out.counters = counter.since(before);
  return out;
}

}  // namespace bilevel
