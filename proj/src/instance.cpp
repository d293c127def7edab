#include "bilevel/instance.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "bilevel/rng.hpp"

namespace bilevel {

namespace {

Mat gaussian_mat(CounterRng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)  // row-major draw order, frozen
    for (int j = 0; j < cols; ++j) m(i, j) = rng.gaussian();
  return m;
}

BilevelInstance from_quadratic(std::shared_ptr<const QuadraticData> qd, LinearConstraint con) {
  BilevelInstance inst;
  inst.dim_x = static_cast<int>(qd->P.rows());
  inst.dim_y = static_cast<int>(qd->P.cols());
  inst.constraint = std::move(con);
  // The lambdas share ownership of the data so copies of the oracles stay valid.
  inst.upper.value = [q = qd](const Vec& x, const Vec& y) {
    return q->c.dot(y) + q->reg_x * x.squaredNorm() + q->reg_y * y.squaredNorm();
  };
  inst.upper.grad_x = [q = qd](const Vec& x, const Vec&) -> Vec { return 2.0 * q->reg_x * x; };
  inst.upper.grad_y = [q = qd](const Vec&, const Vec& y) -> Vec { return q->c + 2.0 * q->reg_y * y; };
  inst.lower.value = [q = qd](const Vec& x, const Vec& y) {
    return 0.5 * y.dot(q->Q * y) + x.dot(q->P * y);
  };
  inst.lower.grad_x = [q = qd](const Vec&, const Vec& y) -> Vec { return q->P * y; };
  inst.lower.grad_y = [q = qd](const Vec& x, const Vec& y) -> Vec {
    return q->Q * y + q->P.transpose() * x;
  };
  const QuadraticData& q = *qd;
  inst.quadratic = std::move(qd);

  // Exact regularity values for the quadratic family.  L_f and R_dual are
  // certified on the reference ball of radius kRefRadius.
  Eigen::SelfAdjointEigenSolver<Mat> eig(q.Q);
  const double lam_min = eig.eigenvalues()(0);
  const double lam_max = eig.eigenvalues()(eig.eigenvalues().size() - 1);
  const double p_norm = q.P.norm() == 0.0 ? 0.0 : Eigen::JacobiSVD<Mat>(q.P).singularValues()(0);
  double a_norm = 0.0, b_sigma_min = 1.0;
  if (inst.constraint.rows() > 0) {
    if (!inst.constraint.A.isZero(0.0))
      a_norm = Eigen::JacobiSVD<Mat>(inst.constraint.A).singularValues()(0);
    Eigen::JacobiSVD<Mat> svdB(inst.constraint.B);
    b_sigma_min = svdB.singularValues()(svdB.singularValues().size() - 1);
  }
  RegularityEstimates r;
  const double reg = std::max(q.reg_x, q.reg_y);
  r.mu_g = {lam_min, Provenance::Exact};
  r.C_g = {lam_max + p_norm, Provenance::Exact};
  r.C_f = {2.0 * reg, Provenance::Exact};
  r.L_f = {q.c.norm() + 2.0 * reg * kRefRadius, Provenance::Exact};
  r.S_g = {0.0, Provenance::Exact};
  r.L_y = {(p_norm + a_norm) / lam_min, Provenance::Exact};  // upper bound
  r.R_dual = {(lam_max + p_norm) * kRefRadius / std::max(b_sigma_min, 1e-300),
              Provenance::Exact};  // upper bound on the reference ball
  inst.regularity = r;
  inst.validate();
  return inst;
}

}  // namespace

BilevelInstance gen_quadratic(const QuadraticInstanceSpec& spec) {
  if (spec.dim_x <= 0 || spec.dim_y <= 0 || spec.n_const <= 0)
    throw InputError("gen_quadratic: dimensions must be positive");
  if (spec.n_const > spec.dim_y) throw InputError("gen_quadratic: n_const must not exceed dim_y");
  if (spec.reg_x < 0.0 || spec.reg_y < 0.0) throw InputError("gen_quadratic: negative regularizer");

  CounterRng rng(spec.seed);
  auto qd = std::make_shared<QuadraticData>();
  qd->seed = spec.seed;
  qd->reg_x = spec.reg_x;
  qd->reg_y = spec.reg_y;
  Mat G = gaussian_mat(rng, spec.dim_y, spec.dim_y);
  qd->Q = G * G.transpose() / spec.dim_y + kMuFloor * Mat::Identity(spec.dim_y, spec.dim_y);
  qd->P = gaussian_mat(rng, spec.dim_x, spec.dim_y);
  qd->c = gaussian_mat(rng, spec.dim_y, 1).col(0);

  LinearConstraint con;
  con.kind = spec.kind;
  // The experiment writes its constraint as A_paper y - b_paper <= 0; in
  // canonical form h = A x - B y - b that is B = -A_paper with b > 0 drawn
  // positive-shifted so y = 0 is strictly interior.
  con.B = -gaussian_mat(rng, spec.n_const, spec.dim_y);
  con.A = spec.x_coupled_constraint ? gaussian_mat(rng, spec.n_const, spec.dim_x)
                                    : Mat::Zero(spec.n_const, spec.dim_x);
  Vec b(spec.n_const);
  for (int i = 0; i < spec.n_const; ++i) b[i] = std::abs(rng.gaussian()) + 0.1;
  con.b = b;
  if (!has_full_row_rank(con.B)) throw FactorizationError("gen_quadratic: B lost row rank");
  return from_quadratic(std::move(qd), std::move(con));
}

RegularityEstimates probe_regularity(const BilevelInstance& inst, int n_samples, double radius,
                                     std::uint64_t seed) {
  if (n_samples < 2) throw InputError("probe_regularity: need at least 2 samples");
  if (!(radius > 0.0)) throw InputError("probe_regularity: radius must be positive");

  if (inst.quadratic) {
    RegularityEstimates r = inst.regularity;  // exact values recorded at generation
    return r;
  }

  CounterRng rng(seed);
  OracleCounter cnt;
  RegularityEstimates r;
  double L_f = 0.0, C_f = 0.0, C_g = 0.0, mu_g = std::numeric_limits<double>::infinity();
  Vec px = rng.ball(inst.dim_x, radius);
  Vec py = rng.ball(inst.dim_y, radius);
  Vec fx = inst.f_grad_x(px, py, cnt), fy = inst.f_grad_y(px, py, cnt);
  Vec gx = inst.g_grad_x(px, py, cnt), gy = inst.g_grad_y(px, py, cnt);
  for (int s = 1; s < n_samples; ++s) {
    Vec qx = rng.ball(inst.dim_x, radius);
    Vec qy = rng.ball(inst.dim_y, radius);
    Vec fx2 = inst.f_grad_x(qx, qy, cnt), fy2 = inst.f_grad_y(qx, qy, cnt);
    Vec gx2 = inst.g_grad_x(qx, qy, cnt), gy2 = inst.g_grad_y(qx, qy, cnt);
    const double dz = std::sqrt((qx - px).squaredNorm() + (qy - py).squaredNorm());
    L_f = std::max(L_f, std::sqrt(fx2.squaredNorm() + fy2.squaredNorm()));
    if (dz > 1e-12) {
      const double df = std::sqrt((fx2 - fx).squaredNorm() + (fy2 - fy).squaredNorm());
      const double dg = std::sqrt((gx2 - gx).squaredNorm() + (gy2 - gy).squaredNorm());
      C_f = std::max(C_f, df / dz);
      C_g = std::max(C_g, dg / dz);
    }
    // strong convexity of g(x, .) along the sampled pair at fixed x
    Vec gy_same = inst.g_grad_y(px, qy, cnt);
    const double dy = (qy - py).squaredNorm();
    if (dy > 1e-16) mu_g = std::min(mu_g, (gy_same - gy).dot(qy - py) / dy);
    px = qx;
    py = qy;
    fx = fx2;
    fy = fy2;
    gx = gx2;
    gy = gy2;
  }
  r.L_f = {L_f, Provenance::Probed};
  r.C_f = {C_f, Provenance::Probed};
  r.C_g = {C_g, Provenance::Probed};
  r.mu_g = {std::isfinite(mu_g) && mu_g > 0.0 ? mu_g : 0.0, Provenance::Probed};
  r.L_y = {C_g / std::max(r.mu_g.value, 1e-300), Provenance::Probed};
  r.R_dual = {0.0, Provenance::Probed};
  r.S_g = {0.0, Provenance::Probed};
  return r;
}

// ---------------------------------------------------------------------------
// JSON instance files

namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Mat mat_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw IoError(std::string("instance file: bad row count for ") + name);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw IoError(std::string("instance file: bad column count for ") + name);
    for (Eigen::Index k = 0; k < cols; ++k) {
      const double v = row[k].get<double>();
      if (!std::isfinite(v)) throw IoError(std::string("instance file: non-finite entry in ") + name);
      m(i, k) = v;
    }
  }
  return m;
}

Vec vec_from_json(const json& j, Eigen::Index n, const char* name) {
  Mat m = mat_from_json(json::array({j}), 1, n, name);
  return m.row(0).transpose();
}

}  // namespace

std::string save_instance_string(const BilevelInstance& inst) {
  if (!inst.quadratic)
    throw InputError("save_instance: only quadratic-family instances are serializable");
  const QuadraticData& q = *inst.quadratic;
  json j;
  j["dim_x"] = inst.dim_x;
  j["dim_y"] = inst.dim_y;
  j["d_h"] = inst.constraint.rows();
  j["kind"] = inst.constraint.kind == ConstraintKind::Equality ? "equality" : "inequality";
  j["A"] = mat_to_json(inst.constraint.A);
  j["B"] = mat_to_json(inst.constraint.B);
  j["b"] = vec_to_json(inst.constraint.b);
  j["Q"] = mat_to_json(q.Q);
  j["P"] = mat_to_json(q.P);
  j["c"] = vec_to_json(q.c);
  j["reg_x"] = q.reg_x;
  j["reg_y"] = q.reg_y;
  j["seed"] = q.seed;
  return j.dump(1) + "\n";
}

void save_instance(const BilevelInstance& inst, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << save_instance_string(inst);
  if (!out) throw IoError("write failed: " + path);
}

BilevelInstance load_instance_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw IoError(std::string("instance file: parse error: ") + e.what());
  }
  try {
    const int dim_x = j.at("dim_x").get<int>();
    const int dim_y = j.at("dim_y").get<int>();
    const int d_h = j.at("d_h").get<int>();
    if (dim_x <= 0 || dim_y <= 0 || d_h < 0) throw IoError("instance file: bad dimensions");
    const std::string kind = j.at("kind").get<std::string>();
    auto qd = std::make_shared<QuadraticData>();
    qd->Q = mat_from_json(j.at("Q"), dim_y, dim_y, "Q");
    qd->P = mat_from_json(j.at("P"), dim_x, dim_y, "P");
    qd->c = vec_from_json(j.at("c"), dim_y, "c");
    qd->reg_x = j.at("reg_x").get<double>();
    qd->reg_y = j.at("reg_y").get<double>();
    qd->seed = j.at("seed").get<std::uint64_t>();
    if (!std::isfinite(qd->reg_x) || !std::isfinite(qd->reg_y))
      throw IoError("instance file: non-finite regularizer");
    LinearConstraint con;
    con.A = mat_from_json(j.at("A"), d_h, dim_x, "A");
    con.B = mat_from_json(j.at("B"), d_h, dim_y, "B");
    con.b = vec_from_json(j.at("b"), d_h, "b");
    if (kind == "equality")
      con.kind = ConstraintKind::Equality;
    else if (kind == "inequality")
      con.kind = ConstraintKind::Inequality;
    else
      throw IoError("instance file: unknown constraint kind '" + kind + "'");

    // Rebuild oracles and exact regularity through the generator's assembly path.
    return from_quadratic(std::move(qd), std::move(con));
  } catch (const json::exception& e) {
    throw IoError(std::string("instance file: ") + e.what());
  }
}

BilevelInstance load_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open instance file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_instance_string(ss.str());
}

}  // namespace bilevel
