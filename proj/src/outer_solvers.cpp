#include "bilevel/outer_solvers.hpp"

#include <chrono>
#include <cmath>

#include "bilevel/rng.hpp"

namespace bilevel {

Vec clip(const Vec& z, double D) {
  if (!(D > 0.0)) throw InputError("clip: D must be positive");
  const double n = z.norm();
  if (n <= D || n == 0.0) return z;
  return z * (D / n);
}

FeasibleSet FeasibleSet::all_space() { return {}; }

FeasibleSet FeasibleSet::box(Vec lo, Vec hi) {
  if (lo.size() != hi.size() || (hi - lo).minCoeff() < 0.0)
    throw InputError("FeasibleSet::box: need lo <= hi");
  FeasibleSet s;
  s.kind = Kind::Box;
  s.lo = std::move(lo);
  s.hi = std::move(hi);
  return s;
}

FeasibleSet FeasibleSet::ball(Vec center, double radius) {
  if (!(radius > 0.0)) throw InputError("FeasibleSet::ball: radius must be positive");
  FeasibleSet s;
  s.kind = Kind::Ball;
  s.center = std::move(center);
  s.radius = radius;
  return s;
}

Vec FeasibleSet::project(const Vec& x) const {
  switch (kind) {
    case Kind::AllSpace:
      return x;
    case Kind::Box: {
      if (x.size() != lo.size()) throw InputError("FeasibleSet: dimension mismatch");
      return x.cwiseMax(lo).cwiseMin(hi);
    }
    case Kind::Ball: {
      if (x.size() != center.size()) throw InputError("FeasibleSet: dimension mismatch");
      Vec d = x - center;
      const double n = d.norm();
      if (n <= radius) return x;
      return center + d * (radius / n);
    }
  }
  throw InputError("FeasibleSet: unsupported set shape");
}

Vec gradient_mapping(const Vec& x, const Vec& gradF, double C_F, const FeasibleSet& X) {
  if (!(C_F > 0.0)) throw InputError("gradient_mapping: C_F must be positive");
  return C_F * (x - X.project(x - gradF / C_F));
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void record(RunTrace& trace, const TraceHooks& hooks, int t, const Vec& x, double grad_norm,
            Clock::time_point t0) {
  if (hooks.record_every > 1 && t % hooks.record_every != 0) return;
  TraceRow r;
  r.t = t;
  r.x_norm = x.norm();
  r.grad_norm = grad_norm;
  if (hooks.value_probe) r.fval = hooks.value_probe(x);
  if (hooks.stationarity_probe) r.stat_measure = hooks.stationarity_probe(x);
  if (hooks.counters) r.counters = *hooks.counters;
  r.wall_ms = ms_since(t0);
  trace.rows.push_back(std::move(r));
}

void fill_clipped_defaults(SolverConfig& cfg, bool is_izo, int dim) {
  const double L = cfg.lipschitz_L;
  if (!(L > 0.0)) throw InputError("SolverConfig: lipschitz_L must be positive");
  if (!(cfg.eps > 0.0) || !(cfg.goldstein_delta > 0.0))
    throw InputError("SolverConfig: eps and goldstein_delta must be positive");
  const double d = cfg.goldstein_delta;
  if (is_izo) {
    if (cfg.rho == 0.0)
      cfg.rho = cfg.f_gap > 0.0 ? std::min(0.5 * d, cfg.f_gap / L) : 0.5 * d;
    if (cfg.nu == 0.0) cfg.nu = d - cfg.rho;
    if (!(cfg.rho > 0.0) || !(cfg.nu > 0.0)) throw InputError("SolverConfig: bad rho/nu");
    const double denom = dim * cfg.rho * cfg.rho * L * L + cfg.alpha * cfg.alpha * dim * dim;
    if (cfg.D == 0.0) cfg.D = cfg.nu * cfg.eps * cfg.eps * cfg.rho * cfg.rho / denom;
    if (cfg.eta == 0.0)
      cfg.eta = cfg.nu * std::pow(cfg.eps, 3) * std::pow(cfg.rho, 4) / (denom * denom);
  } else {
    if (cfg.D == 0.0) cfg.D = d * cfg.eps * cfg.eps / (L * L);
    if (cfg.eta == 0.0) cfg.eta = d * std::pow(cfg.eps, 3) / std::pow(L, 4);
  }
  if (cfg.T == 0) {
    if (!(cfg.f_gap > 0.0))
      throw InputError("SolverConfig: set T or provide f_gap for the default");
    cfg.T = static_cast<long long>(std::ceil(cfg.f_gap * L * L / (d * std::pow(cfg.eps, 3))));
  }
  const double window_radius = is_izo ? cfg.nu : d;
  if (cfg.M == 0) cfg.M = static_cast<long long>(std::floor(window_radius / cfg.D));
  if (cfg.M < 1) throw InputError("SolverConfig: M = floor(delta/D) must be >= 1");
  if (cfg.K == 0) cfg.K = cfg.T / cfg.M;
  if (cfg.K < 1) throw InputError("SolverConfig: K = floor(T/M) must be >= 1");
}

/// Shared skeleton of OIGRM and IZO: clipped online update plus window
/// averages over the probe points z_t.
RunResult run_clipped(const std::function<Vec(const Vec&, CounterRng&)>& estimator, const Vec& x0,
                      SolverConfig cfg, bool is_izo, const TraceHooks& hooks) {
  fill_clipped_defaults(cfg, is_izo, static_cast<int>(x0.size()));
  const auto t0 = Clock::now();
  CounterRng rng(cfg.seed);

  RunResult out;
  out.cfg = cfg;
  Vec x = x0;
  Vec delta = Vec::Zero(x0.size());
  Vec window_sum = Vec::Zero(x0.size());
  std::vector<Vec> window_avgs;
  std::vector<Vec> window_z;  // current window's probes, for the locality metric
  record(out.trace, hooks, 0, x, std::numeric_limits<double>::quiet_NaN(), t0);

  for (long long t = 1; t <= cfg.T; ++t) {
    const double s = rng.uniform01();
    Vec x_next = x + delta;
    Vec z = x + s * delta;
    Vec g = estimator(z, rng);
    delta = clip(delta - cfg.eta * g, cfg.D);
    out.max_delta_norm = std::max(out.max_delta_norm, delta.norm());
    x = std::move(x_next);

    window_sum += z;
    window_z.push_back(std::move(z));
    if (static_cast<long long>(window_z.size()) == cfg.M) {
      Vec avg = window_sum / static_cast<double>(cfg.M);
      for (const Vec& zz : window_z)
        out.max_window_dev = std::max(out.max_window_dev, (zz - avg).norm());
      window_avgs.push_back(std::move(avg));
      window_sum.setZero();
      window_z.clear();
    }
    record(out.trace, hooks, static_cast<int>(t), x, g.norm(), t0);
  }
  if (static_cast<long long>(window_avgs.size()) > cfg.K) window_avgs.resize(cfg.K);
  if (window_avgs.empty()) throw InputError("clipped solver: no complete window (T < M)");
  out.x_out = window_avgs[rng.below(window_avgs.size())];
  out.trace.final_x = out.x_out;
  return out;
}

}  // namespace

RunResult inexact_pgd(const GradOracle& oracle, const Vec& x0, double C_F, const FeasibleSet& X,
                      long long N, double delta_acc, const TraceHooks& hooks) {
  if (N <= 0) throw InputError("inexact_pgd: N must be positive");
  if (!(C_F > 0.0)) throw InputError("inexact_pgd: C_F must be positive");
  const auto t0 = Clock::now();

  RunResult out;
  out.cfg.eps = delta_acc;
  Vec x = X.project(x0);
  Vec best = x;
  double best_gm = std::numeric_limits<double>::infinity();
  record(out.trace, hooks, 0, x, std::numeric_limits<double>::quiet_NaN(), t0);

  for (long long t = 0; t < N; ++t) {
    Vec g = oracle(x);
    Vec x_next = X.project(x - g / C_F);
    const double gm = (C_F * (x - x_next)).norm();
    if (gm < best_gm) {
      best_gm = gm;
      best = x;
    }
    x = std::move(x_next);
    TraceRow r;
    r.t = static_cast<int>(t + 1);
    r.x_norm = x.norm();
    r.grad_norm = g.norm();
    r.stat_measure = gm;
    if (hooks.value_probe) r.fval = hooks.value_probe(x);
    if (hooks.counters) r.counters = *hooks.counters;
    r.wall_ms = ms_since(t0);
    if (hooks.record_every <= 1 || (t + 1) % hooks.record_every == 0)
      out.trace.rows.push_back(std::move(r));
  }
  out.x_out = best;
  out.trace.final_x = best;
  return out;
}

RunResult oigrm(const GradOracle& oracle, const Vec& x0, SolverConfig cfg,
                const TraceHooks& hooks) {
  return run_clipped([&](const Vec& z, CounterRng&) { return oracle(z); }, x0, std::move(cfg),
                     false, hooks);
}

RunResult izo(const ValueOracle& value_oracle, const Vec& x0, SolverConfig cfg,
              const TraceHooks& hooks) {
  const int d = static_cast<int>(x0.size());
  if (cfg.f_gap == 0.0 && cfg.rho == 0.0) {
    // short presolve for the smoothing default: probe the value at x0 and a
    // few nearby points, take the best seen as the lower-bound estimate
    CounterRng pre(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    const double f0 = value_oracle(x0);
    double fbest = f0;
    for (int k = 0; k < 4; ++k)
      fbest = std::min(fbest, value_oracle(x0 + cfg.goldstein_delta * pre.unit_sphere(d)));
    cfg.f_gap = std::max(f0 - fbest, cfg.goldstein_delta * cfg.lipschitz_L);
  }
  SolverConfig filled = cfg;
  fill_clipped_defaults(filled, true, d);
  const double rho = filled.rho;
  auto estimator = [&value_oracle, rho, d](const Vec& z, CounterRng& rng) -> Vec {
    Vec w = rng.unit_sphere(d);
    const double fp = value_oracle(z + rho * w);
    const double fm = value_oracle(z - rho * w);
    return (d / (2.0 * rho)) * (fp - fm) * w;
  };
  return run_clipped(estimator, x0, std::move(filled), true, hooks);
}

RunResult pigd(const GradOracle& oracle, const Vec& x0, SolverConfig cfg, const TraceHooks& hooks) {
  if (!(cfg.goldstein_delta > 0.0)) throw InputError("pigd: goldstein_delta must be positive");
  if (cfg.T <= 0) throw InputError("pigd: set T");
  if (cfg.eta == 0.0) {
    const double L = cfg.lipschitz_L;
    const double gap = cfg.f_gap > 0.0 ? cfg.f_gap : cfg.goldstein_delta * L;
    cfg.eta = std::sqrt((gap + cfg.goldstein_delta * L) * cfg.goldstein_delta) /
              (std::sqrt(static_cast<double>(cfg.T) * L) * std::pow(double(x0.size()), 0.25) *
               (cfg.alpha + L));
  }
  const auto t0 = Clock::now();
  CounterRng rng(cfg.seed);
  const int d = static_cast<int>(x0.size());

  RunResult out;
  out.cfg = cfg;
  std::vector<Vec> iterates;
  iterates.reserve(cfg.T);
  Vec x = x0;
  record(out.trace, hooks, 0, x, std::numeric_limits<double>::quiet_NaN(), t0);
  for (long long t = 0; t < cfg.T; ++t) {
    iterates.push_back(x);
    Vec w = rng.unit_sphere(d);
    Vec g = oracle(x + cfg.goldstein_delta * w);
    x -= cfg.eta * g;
    record(out.trace, hooks, static_cast<int>(t + 1), x, g.norm(), t0);
  }
  out.x_out = iterates[rng.below(iterates.size())];
  out.trace.final_x = out.x_out;
  return out;
}

RegretResult inexact_ogd_regret(const std::vector<Vec>& losses, const std::vector<Vec>& noisy,
                                double D, double eta) {
  if (losses.size() != noisy.size()) throw InputError("inexact_ogd_regret: length mismatch");
  if (losses.empty()) throw InputError("inexact_ogd_regret: empty loss sequence");
  if (!(D > 0.0) || !(eta > 0.0)) throw InputError("inexact_ogd_regret: need D, eta > 0");

  RegretResult out;
  Vec delta = Vec::Zero(losses[0].size());
  out.deltas.reserve(losses.size());
  for (size_t m = 0; m < losses.size(); ++m) {
    out.deltas.push_back(delta);
    delta = clip(delta - eta * noisy[m], D);
  }
  std::vector<Vec> g = losses;
  std::vector<Vec> deltas = out.deltas;
  out.regret = [g = std::move(g), deltas = std::move(deltas)](const Vec& u) {
    double reg = 0.0;
    for (size_t m = 0; m < g.size(); ++m) reg += g[m].dot(deltas[m] - u);
    return reg;
  };
  return out;
}

}  // namespace bilevel
