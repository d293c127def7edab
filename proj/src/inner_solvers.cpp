#include "bilevel/inner_solvers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <vector>

namespace bilevel {

AffineProjector::AffineProjector(Mat B, double rank_tol) : B_(std::move(B)) {
  if (B_.rows() == 0) return;
  Eigen::JacobiSVD<Mat> svd(B_);
  const auto& s = svd.singularValues();
  if (B_.rows() > B_.cols() || !(s(s.size() - 1) > rank_tol * s(0)))
    throw FactorizationError("AffineProjector: B is not of full row rank");
  llt_.compute(B_ * B_.transpose());
  if (llt_.info() != Eigen::Success)
    throw FactorizationError("AffineProjector: Cholesky of B B^T failed");
}

Vec AffineProjector::project(const Vec& u, const Vec& c) const {
  if (rows() == 0) return u;
  return u - B_.transpose() * llt_.solve(B_ * u - c);
}

Vec AffineProjector::project_tangent(const Vec& v) const {
  if (rows() == 0) return v;
  return v - B_.transpose() * llt_.solve(B_ * v);
}

Vec AffineProjector::least_squares_dual(const Vec& g) const {
  if (rows() == 0) return Vec(0);
  return llt_.solve(B_ * g);
}

Vec project_affine(const Mat& B, const Vec& c, const Vec& u) {
  return AffineProjector(B).project(u, c);
}

AgdResult agd_affine(const YOracle& obj, const Mat& B, const Vec& c, const InnerTolerance& tol,
                     const AgdOptions& opts) {
  return agd_affine(obj, AffineProjector(B), c, tol, opts);
}

AgdResult agd_affine(const YOracle& obj, const AffineProjector& proj, const Vec& c,
                     const InnerTolerance& tol, const AgdOptions& opts) {
  if (!(obj.mu > 0.0) || !(obj.smooth >= obj.mu))
    throw InputError("agd_affine: need 0 < mu <= smooth");
  if (!(tol.target > 0.0)) throw InputError("agd_affine: tolerance must be positive");

  const double kappa = obj.smooth / obj.mu;
  const double sq = std::sqrt(kappa);
  const double momentum = (sq - 1.0) / (sq + 1.0);
  const double thresh = obj.mu * tol.target;

  Vec y = proj.project(opts.y0, c);
  Vec z = y;
  Vec best = y;
  double best_res = std::numeric_limits<double>::infinity();

  for (int k = 0; k < tol.max_iters; ++k) {
    Vec gy = proj.project_tangent(obj.grad(y));
    const double res = gy.norm();
    if (res < best_res) {
      best_res = res;
      best = y;
    }
    if (opts.observer) opts.observer(y);
    if (res <= thresh) return {y, k, res};

    Vec gz = proj.project_tangent(obj.grad(z));
    Vec y_next = z - gz / obj.smooth;
    if ((k & 63) == 63) y_next = proj.project(y_next, c);  // wash out float drift
    z = y_next + momentum * (y_next - y);
    y = y_next;
  }
  throw ConvergenceError("agd_affine: iteration budget exhausted", best, best_res);
}

DualRecovery recover_dual(const Vec& grad_at_y, const Mat& B) {
  AffineProjector proj(B);
  Vec lam = proj.least_squares_dual(grad_at_y);
  return {lam, (grad_at_y - B.transpose() * lam).norm()};
}

namespace {

struct KktResiduals {
  double stationarity = 0.0;
  double violation = 0.0;      // max(h)+ for inequality
  double complementarity = 0.0;
  double max() const { return std::max({stationarity, violation, complementarity}); }
};

KktResiduals ll_residuals(const Vec& grad_y_g, const Mat& B, const Vec& h, const Vec& lam) {
  KktResiduals r;
  r.stationarity = (grad_y_g - B.transpose() * lam).norm();
  r.violation = h.size() ? std::max(0.0, h.maxCoeff()) : 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i)
    r.complementarity = std::max(r.complementarity, std::abs(lam[i] * h[i]));
  return r;
}

}  // namespace

PrimalDualPair solve_ll_inequality(const BilevelInstance& inst, const Vec& x,
                                   const InnerTolerance& tol, OracleCounter& counter,
                                   const LlOptions& opts) {
  if (inst.constraint.kind != ConstraintKind::Inequality)
    throw InputError("solve_ll_inequality: instance constraint is not Inequality");
  if (x.size() != inst.dim_x) throw InputError("solve_ll_inequality: x dimension mismatch");
  if (!(tol.target > 0.0)) throw InputError("solve_ll_inequality: tolerance must be positive");

  const Mat& A = inst.constraint.A;
  const Mat& B = inst.constraint.B;
  const int dh = inst.constraint.rows();
  const double mu_g = inst.regularity.mu_g.value;
  const double C_g = inst.regularity.C_g.value;
  const double normB = dh ? Eigen::JacobiSVD<Mat>(B).singularValues()(0) : 0.0;
  const double step = 1.0 / (C_g + normB * normB);
  const Vec cvec = A * x - inst.constraint.b;  // h = cvec - B y

  const double stat_tol = mu_g * tol.target;
  const double feas_tol = opts.feas_tol + 0.1 * normB * tol.target;
  const double comp_scale = normB * (1.0 + normB);

  Vec y = opts.warm && opts.warm->y.size() == inst.dim_y ? opts.warm->y : Vec::Zero(inst.dim_y);
  Vec lam = opts.warm && opts.warm->lambda.size() == dh ? opts.warm->lambda : Vec::Zero(dh);
  lam = lam.cwiseMax(0.0);

  Vec best_y = y, best_lam = lam;
  double best_res = std::numeric_limits<double>::infinity();
  int next_polish = std::max(1, opts.polish_interval);
  int polish_gap = std::max(1, opts.polish_interval);

  for (int t = 1; t <= tol.max_iters; ++t) {
    Vec gy = inst.g_grad_y(x, y, counter);
    y -= step * (gy - B.transpose() * lam);
    Vec h = cvec - B * y;
    lam = (lam + step * h).cwiseMax(0.0);

    const bool last = t == tol.max_iters;
    if (t >= next_polish || last) {
      next_polish = t + polish_gap;
      polish_gap = std::min(2 * polish_gap, 400);

      // raw iterate check (covers degenerate active sets the polish misses)
      Vec gy_now = inst.g_grad_y(x, y, counter);
      KktResiduals raw = ll_residuals(gy_now, B, cvec - B * y, lam);
      const double comp_tol = opts.comp_tol + comp_scale * (1.0 + lam.lpNorm<Eigen::Infinity>()) *
                                                  tol.target;
      if (raw.max() < best_res) {
        best_res = raw.max();
        best_y = y;
        best_lam = lam;
      }
      if (raw.stationarity <= stat_tol && raw.violation <= feas_tol &&
          raw.complementarity <= comp_tol)
        return {y, lam, raw.max(), t};

      // active-set polish: equality-solve the guessed tight rows
      std::vector<int> act;
      const double guess_tol = 1e-6 * (1.0 + inst.constraint.b.lpNorm<Eigen::Infinity>());
      Vec h_now = cvec - B * y;
      for (int i = 0; i < dh; ++i)
        if (lam[i] > 1e-10 || h_now[i] > -guess_tol) act.push_back(i);
      Mat BI(act.size(), inst.dim_y);
      Vec cI(act.size());
      for (size_t i = 0; i < act.size(); ++i) {
        BI.row(i) = B.row(act[i]);
        cI[i] = cvec[act[i]];
      }
      try {
        YOracle obj{[&](const Vec& yy) { return inst.g_grad_y(x, yy, counter); }, mu_g, C_g};
        AgdOptions ao;
        ao.y0 = y;
        InnerTolerance sub{std::min(tol.target, 0.25 * tol.target + 1e-14),
                           std::max(1000, tol.max_iters / 4)};
        AgdResult r = agd_affine(obj, BI, cI, sub, ao);
        Vec gy_hat = inst.g_grad_y(x, r.y, counter);
        Vec lam_hat = Vec::Zero(dh);
        if (!act.empty()) {
          DualRecovery dr = recover_dual(gy_hat, BI);
          for (size_t i = 0; i < act.size(); ++i) lam_hat[act[i]] = dr.lambda[i];
        }
        KktResiduals pol = ll_residuals(gy_hat, B, cvec - B * r.y, lam_hat);
        if (pol.max() < best_res) {
          best_res = pol.max();
          best_y = r.y;
          best_lam = lam_hat;
        }
        if (lam_hat.minCoeff() >= -1e-12 && pol.stationarity <= stat_tol &&
            pol.violation <= feas_tol &&
            pol.complementarity <= opts.comp_tol + comp_scale * tol.target)
          return {r.y, lam_hat, pol.max(), t};
      } catch (const FactorizationError&) {
        // rank-deficient guess; keep iterating
      } catch (const ConvergenceError&) {
      }
    }
  }
  throw ConvergenceError("solve_ll_inequality: iteration budget exhausted (best residual " +
                             std::to_string(best_res) + ")",
                         best_y, best_res);
}

PenaltyMinResult minimize_penalty(const std::function<Vec(const Vec&)>& grad, const Vec& y0,
                                  double mu, double C, const InnerTolerance& tol) {
  if (!(mu > 0.0)) throw InputError("minimize_penalty: mu must be positive");
  if (!(C >= mu)) throw InputError("minimize_penalty: need C >= mu");
  YOracle obj{grad, mu, C};
  AgdOptions ao;
  ao.y0 = y0;
  AgdResult r = agd_affine(obj, Mat(0, y0.size()), Vec(0), tol, ao);
  return {r.y, r.iterations, r.residual};
}

PenaltyMinResult minimize_penalty_structured(const YOracle& smooth_part, const QuadraticTerm& quad,
                                             const Vec& y0, const InnerTolerance& tol) {
  if (!(smooth_part.mu > 0.0) || !(smooth_part.smooth >= smooth_part.mu))
    throw InputError("minimize_penalty_structured: need 0 < mu <= smooth");
  const Eigen::Index d = y0.size();
  const bool has_quad = quad.B.rows() > 0 && quad.weight > 0.0;

  const double tau = 1.0 / smooth_part.smooth;
  Eigen::LLT<Mat> llt;
  if (has_quad) {
    Mat S = quad.B * quad.B.transpose();
    S.diagonal().array() += 1.0 / (tau * quad.weight);
    llt.compute(S);
    if (llt.info() != Eigen::Success)
      throw FactorizationError("minimize_penalty_structured: prox factorization failed");
  }
  auto prox = [&](const Vec& u) -> Vec {
    if (!has_quad) return u;
    Vec v = u + tau * quad.weight * (quad.B.transpose() * quad.target);
    return v - quad.B.transpose() * llt.solve(quad.B * v);
  };
  auto total_grad = [&](const Vec& y) -> Vec {
    Vec g = smooth_part.grad(y);
    if (has_quad) g += quad.weight * (quad.B.transpose() * (quad.B * y - quad.target));
    return g;
  };

  const double kappa = smooth_part.smooth / smooth_part.mu;
  const double sq = std::sqrt(kappa);
  const double momentum = (sq - 1.0) / (sq + 1.0);
  const double thresh = smooth_part.mu * tol.target;

  Vec y = y0, z = y0;
  Vec best = y;
  double best_res = std::numeric_limits<double>::infinity();
  for (int k = 0; k < tol.max_iters; ++k) {
    const double res = total_grad(y).norm();
    if (res < best_res) {
      best_res = res;
      best = y;
    }
    if (res <= thresh) return {y, k, res};
    Vec y_next = prox(z - tau * smooth_part.grad(z));
    z = y_next + momentum * (y_next - y);
    y = y_next;
  }
  throw ConvergenceError("minimize_penalty_structured: iteration budget exhausted", best, best_res);
}

}  // namespace bilevel
