#include "bilevel/diagnostics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "bilevel/rng.hpp"

namespace bilevel {

namespace {

const QuadraticData& quad_of(const BilevelInstance& inst, const char* who) {
  if (!inst.quadratic)
    throw InputError(std::string(who) + ": requires a quadratic instance (analytic Hessians)");
  return *inst.quadratic;
}

/// Solve the equality KKT system for the rows in `act`:
///   [ Hy  -B_I' ] [y  ]   [ -grad_lin ]
///   [ -B_I  0   ] [lam] = [ -(A_I x - b_I) ]
/// with Hy = Q + 2 reg_y I ... note: the lower objective g has Hessian Q; the
/// upper regularizer does not enter the LL problem.
struct KktSolution {
  Vec y;
  Vec lam_act;
  bool ok = false;
};

KktSolution solve_kkt(const Mat& Q, const Vec& lin, const Mat& BI, const Vec& cI) {
  const Eigen::Index dy = Q.rows(), m = BI.rows();
  Mat K(dy + m, dy + m);
  K.setZero();
  K.topLeftCorner(dy, dy) = Q;
  if (m) {
    K.topRightCorner(dy, m) = -BI.transpose();
    K.bottomLeftCorner(m, dy) = -BI;
  }
  Vec rhs(dy + m);
  rhs.head(dy) = -lin;
  if (m) rhs.tail(m) = -cI;
  Eigen::PartialPivLU<Mat> lu(K);
  Vec sol = lu.solve(rhs);
  KktSolution s;
  s.ok = (K * sol - rhs).norm() <= 1e-8 * (1.0 + rhs.norm());
  s.y = sol.head(dy);
  s.lam_act = sol.tail(m);
  return s;
}

}  // namespace

PrimalDualPair enumerate_active_sets(const BilevelInstance& inst, const Vec& x) {
  const QuadraticData& q = quad_of(inst, "enumerate_active_sets");
  const int dh = inst.constraint.rows();
  if (dh > 20) throw InputError("enumerate_active_sets: d_h too large for enumeration");
  const Mat& A = inst.constraint.A;
  const Mat& B = inst.constraint.B;
  const Vec& b = inst.constraint.b;
  const Vec lin = q.P.transpose() * x;
  const Vec cvec = A * x - b;

  PrimalDualPair best;
  double best_val = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::uint32_t mask = 0; mask < (1u << dh); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < dh; ++i)
      if (mask & (1u << i)) act.push_back(i);
    Mat BI(act.size(), inst.dim_y);
    Vec cI(act.size());
    for (size_t i = 0; i < act.size(); ++i) {
      BI.row(i) = B.row(act[i]);
      cI[i] = cvec[act[i]];
    }
    KktSolution s = solve_kkt(q.Q, lin, BI, cI);
    if (!s.ok) continue;
    Vec h = cvec - B * s.y;
    if (h.size() && h.maxCoeff() > 1e-9) continue;
    if (s.lam_act.size() && s.lam_act.minCoeff() < -1e-9) continue;
    const double val = 0.5 * s.y.dot(q.Q * s.y) + lin.dot(s.y);
    if (val < best_val - 1e-12 || !found) {
      best_val = val;
      best.y = s.y;
      best.lambda = Vec::Zero(dh);
      for (size_t i = 0; i < act.size(); ++i) best.lambda[act[i]] = std::max(0.0, s.lam_act[i]);
      best.kkt_residual = 0.0;
      found = true;
    }
  }
  if (!found) throw ConvergenceError("enumerate_active_sets: no KKT-consistent subset found",
                                     Vec::Zero(inst.dim_y), 0.0);
  return best;
}

PrimalDualPair solve_ll_exact_quadratic(const BilevelInstance& inst, const Vec& x) {
  const QuadraticData& q = quad_of(inst, "solve_ll_exact_quadratic");
  const Mat& B = inst.constraint.B;
  const Vec lin = q.P.transpose() * x;
  const Vec cvec = inst.constraint.A * x - inst.constraint.b;
  const int dh = inst.constraint.rows();

  if (inst.constraint.kind == ConstraintKind::Equality) {
    KktSolution s = solve_kkt(q.Q, lin, B, cvec);
    if (!s.ok) throw FactorizationError("solve_ll_exact_quadratic: singular equality KKT system");
    PrimalDualPair pd;
    pd.y = s.y;
    pd.lambda = s.lam_act;
    pd.kkt_residual = 0.0;
    return pd;
  }
  if (dh <= 12) return enumerate_active_sets(inst, x);

  // Large d_h: descent-ascent to locate the active set, then Newton-polish.
  OracleCounter scratch;
  InnerTolerance tol{1e-8, 400000};
  PrimalDualPair rough = solve_ll_inequality(inst, x, tol, scratch);
  Vec h = cvec - B * rough.y;
  std::vector<int> act;
  for (int i = 0; i < dh; ++i)
    if (rough.lambda[i] > 1e-9 || h[i] > -1e-7) act.push_back(i);
  Mat BI(act.size(), inst.dim_y);
  Vec cI(act.size());
  for (size_t i = 0; i < act.size(); ++i) {
    BI.row(i) = B.row(act[i]);
    cI[i] = cvec[act[i]];
  }
  KktSolution s = solve_kkt(q.Q, lin, BI, cI);
  PrimalDualPair pd;
  pd.iterations = rough.iterations;
  if (s.ok) {
    Vec hp = cvec - B * s.y;
    const bool feas = hp.size() == 0 || hp.maxCoeff() <= 1e-9;
    const bool dual_ok = s.lam_act.size() == 0 || s.lam_act.minCoeff() >= -1e-9;
    if (feas && dual_ok) {
      pd.y = s.y;
      pd.lambda = Vec::Zero(dh);
      for (size_t i = 0; i < act.size(); ++i) pd.lambda[act[i]] = std::max(0.0, s.lam_act[i]);
      pd.kkt_residual = (q.Q * pd.y + lin - B.transpose() * pd.lambda).norm();
      return pd;
    }
  }
  // polish failed (degenerate-ish); fall back to the rough solution
  pd.y = rough.y;
  pd.lambda = rough.lambda;
  pd.kkt_residual = rough.kkt_residual;
  return pd;
}

double exact_value(const BilevelInstance& inst, const Vec& x) {
  PrimalDualPair pd = solve_ll_exact_quadratic(inst, x);
  OracleCounter scratch;
  return inst.f(x, pd.y, scratch);
}

Vec exact_hypergrad_kkt(const BilevelInstance& inst, const Vec& x, double strict_comp_tol) {
  const QuadraticData& q = quad_of(inst, "exact_hypergrad_kkt");
  if (x.size() != inst.dim_x) throw InputError("exact_hypergrad_kkt: x dimension mismatch");
  const Mat& A = inst.constraint.A;
  const Mat& B = inst.constraint.B;
  const int dh = inst.constraint.rows();

  PrimalDualPair pd = solve_ll_exact_quadratic(inst, x);
  std::vector<int> act;
  if (inst.constraint.kind == ConstraintKind::Equality) {
    act.resize(dh);
    for (int i = 0; i < dh; ++i) act[i] = i;
  } else {
    const Vec h = inst.constraint.eval(x, pd.y);
    std::ostringstream report;
    for (int i = 0; i < dh; ++i) {
      const bool tight = std::abs(h[i]) <= strict_comp_tol;
      const bool dual_pos = pd.lambda[i] > strict_comp_tol;
      if (tight && dual_pos) act.push_back(i);
      if (tight && !dual_pos && pd.lambda[i] >= 0.0 && std::abs(h[i]) <= strict_comp_tol &&
          pd.lambda[i] <= strict_comp_tol) {
        report << "row " << i << ": h=" << h[i] << " lambda=" << pd.lambda[i] << "; ";
      }
    }
    const std::string rep = report.str();
    if (!rep.empty())
      throw DegeneracyError("exact_hypergrad_kkt: strict complementarity fails", rep);
  }

  // Reduced sensitivity system over the active rows:
  //   [ Q  -B_I' ] [ dy/dx  ]   [ -grad2_yx g ]        (grad2_yx g = P')
  //   [ -B_I  0  ] [ dl/dx  ] = [ -A_I        ]
  const Eigen::Index m = static_cast<Eigen::Index>(act.size());
  Mat BI(m, inst.dim_y);
  Mat AI(m, inst.dim_x);
  for (Eigen::Index i = 0; i < m; ++i) {
    BI.row(i) = B.row(act[i]);
    AI.row(i) = A.row(act[i]);
  }
  Mat K(inst.dim_y + m, inst.dim_y + m);
  K.setZero();
  K.topLeftCorner(inst.dim_y, inst.dim_y) = q.Q;
  if (m) {
    K.topRightCorner(inst.dim_y, m) = -BI.transpose();
    K.bottomLeftCorner(m, inst.dim_y) = -BI;
  }
  Mat rhs(inst.dim_y + m, inst.dim_x);
  rhs.topRows(inst.dim_y) = -q.P.transpose();
  if (m) rhs.bottomRows(m) = -AI;
  Eigen::PartialPivLU<Mat> lu(K);
  Mat sol = lu.solve(rhs);
  if ((K * sol - rhs).norm() > 1e-6 * (1.0 + rhs.norm())) {
    std::ostringstream rep;
    rep << "reduced KKT matrix is numerically singular (active rows: " << m << ")";
    throw DegeneracyError("exact_hypergrad_kkt: singular KKT matrix", rep.str());
  }
  const Mat dydx = sol.topRows(inst.dim_y);

  OracleCounter scratch;
  return inst.f_grad_x(x, pd.y, scratch) + dydx.transpose() * inst.f_grad_y(x, pd.y, scratch);
}

// ---------------------------------------------------------------------------
// Wolfe's minimum-norm-point algorithm

Vec min_norm_point(const Mat& G, Vec* weights, double gap_tol) {
  const Eigen::Index n = G.cols();
  if (n == 0) throw InputError("min_norm_point: empty set");
  std::vector<Eigen::Index> corral;
  {
    Eigen::Index j0 = 0;
    double best = G.col(0).squaredNorm();
    for (Eigen::Index j = 1; j < n; ++j)
      if (G.col(j).squaredNorm() < best) {
        best = G.col(j).squaredNorm();
        j0 = j;
      }
    corral.push_back(j0);
  }
  Vec w = Vec::Ones(1);

  auto point = [&]() -> Vec {
    Vec x = Vec::Zero(G.rows());
    for (size_t i = 0; i < corral.size(); ++i) x += w[i] * G.col(corral[i]);
    return x;
  };

  const int max_major = 16 * static_cast<int>(n) + 64;
  for (int major = 0; major < max_major; ++major) {
    Vec x = point();
    Eigen::Index jmin = 0;
    double ipmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double ip = x.dot(G.col(j));
      if (ip < ipmin) {
        ipmin = ip;
        jmin = j;
      }
    }
    if (x.squaredNorm() - ipmin <= gap_tol * std::max(1.0, x.squaredNorm())) break;
    if (std::find(corral.begin(), corral.end(), jmin) == corral.end()) {
      corral.push_back(jmin);
      Vec w2(w.size() + 1);
      w2 << w, 0.0;
      w = w2;
    }

    // minor cycle: affine min-norm over the corral, trimmed back to the simplex
    for (int minor = 0; minor < max_major; ++minor) {
      const Eigen::Index k = static_cast<Eigen::Index>(corral.size());
      Mat GS(G.rows(), k);
      for (Eigen::Index i = 0; i < k; ++i) GS.col(i) = G.col(corral[i]);
      Mat M(k + 1, k + 1);
      M.setZero();
      M.topLeftCorner(k, k) = GS.transpose() * GS;
      M.topRightCorner(k, 1).setOnes();
      M.bottomLeftCorner(1, k).setOnes();
      Vec rhs = Vec::Zero(k + 1);
      rhs[k] = 1.0;
      Vec v = Eigen::FullPivLU<Mat>(M).solve(rhs).head(k);
      if (v.minCoeff() >= -1e-12) {
        w = v.cwiseMax(0.0);
        w /= w.sum();
        break;
      }
      // step toward v until the first coordinate hits zero, then drop it
      double theta = 1.0;
      for (Eigen::Index i = 0; i < k; ++i)
        if (v[i] < w[i]) theta = std::min(theta, w[i] / (w[i] - v[i]));
      w = w + theta * (v - w);
      std::vector<Eigen::Index> keep;
      std::vector<double> wk;
      for (Eigen::Index i = 0; i < k; ++i)
        if (w[i] > 1e-14) {
          keep.push_back(corral[i]);
          wk.push_back(w[i]);
        }
      if (keep.empty()) {  // numerical corner: keep the best single column
        keep.push_back(corral[0]);
        wk.push_back(1.0);
      }
      corral = std::move(keep);
      w = Eigen::Map<Vec>(wk.data(), static_cast<Eigen::Index>(wk.size()));
      w /= w.sum();
    }
  }

  Vec x = point();
  if (weights) {
    Vec full = Vec::Zero(n);
    for (size_t i = 0; i < corral.size(); ++i) full[corral[i]] += w[i];
    *weights = full;
  }
  return x;
}

GoldsteinCertificate goldstein_certify(const GradOracle& grad_oracle, const Vec& x, double delta,
                                       int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw InputError("goldstein_certify: n_samples must be >= 1");
  if (!(delta > 0.0)) throw InputError("goldstein_certify: delta must be positive");
  const int d = static_cast<int>(x.size());
  CounterRng rng(seed);
  Mat G(d, n_samples + 1);
  G.col(0) = grad_oracle(x);
  for (int s = 0; s < n_samples; ++s) G.col(s + 1) = grad_oracle(x + rng.ball(d, delta));

  GoldsteinCertificate cert;
  cert.delta = delta;
  cert.n_samples = n_samples;
  Vec w;
  Vec mnp = min_norm_point(G, &w);
  cert.distance_upper_bound = mnp.norm();
  cert.witness_weights = w;
  return cert;
}

double fd_gradient_check(const std::function<double(const Vec&)>& fun, const Vec& grad,
                         const Vec& x, const std::vector<double>& h_steps, std::uint64_t seed) {
  if (h_steps.empty()) throw InputError("fd_gradient_check: no step sizes");
  const int d = static_cast<int>(x.size());
  std::vector<Vec> dirs;
  if (d <= 50) {
    for (int i = 0; i < d; ++i) dirs.push_back(Vec::Unit(d, i));
  } else {
    CounterRng rng(seed);
    for (int i = 0; i < 20; ++i) dirs.push_back(rng.unit_sphere(d));
  }
  double worst = 0.0;
  const double floor_ = 1e-8 * (1.0 + grad.norm());
  for (double h : h_steps) {
    for (const Vec& e : dirs) {
      const double fd = (fun(x + h * e) - fun(x - h * e)) / (2.0 * h);
      const double an = grad.dot(e);
      worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(fd), floor_));
    }
  }
  return worst;
}

}  // namespace bilevel
