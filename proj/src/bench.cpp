#include "bilevel/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "bilevel/diagnostics.hpp"
#include "bilevel/eq_oracle.hpp"
#include "bilevel/ineq_oracle.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

namespace fs = std::filesystem;

SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "pgd") return SolverKind::InexactPGD;
  if (s == "oigrm") return SolverKind::OIGRM;
  if (s == "izo") return SolverKind::IZO;
  if (s == "pigd") return SolverKind::PIGD;
  if (s == "exact") return SolverKind::ExactBaselinePGD;
  throw InputError("unknown solver '" + s + "' (expected pgd|oigrm|izo|pigd|exact)");
}

const char* to_string(SolverKind k) {
  switch (k) {
    case SolverKind::InexactPGD: return "pgd";
    case SolverKind::OIGRM: return "oigrm";
    case SolverKind::IZO: return "izo";
    case SolverKind::PIGD: return "pigd";
    case SolverKind::ExactBaselinePGD: return "exact";
  }
  return "?";
}

namespace {

int n_const_of(const ExperimentSpec& spec, int dy) {
  const int n = spec.n_const > 0 ? spec.n_const : std::max(1, dy / 5);
  if (n > dy) throw InputError("bench: n_const exceeds dim_y");
  return n;
}

BilevelInstance make_instance(const ExperimentSpec& spec, int dy, std::uint64_t seed) {
  QuadraticInstanceSpec q;
  q.dim_x = spec.dim_x;
  q.dim_y = dy;
  q.n_const = n_const_of(spec, dy);
  q.seed = seed;
  if (spec.family == Family::EqQuadratic) {
    q.kind = ConstraintKind::Equality;
    q.x_coupled_constraint = true;  // exercise the A-block
  } else {
    q.kind = ConstraintKind::Inequality;
    q.x_coupled_constraint = false;  // h = A_paper y - b_paper family
  }
  return gen_quadratic(q);
}

Vec draw_x0(const ExperimentSpec& spec, std::uint64_t seed) {
  CounterRng rng(seed ^ 0xB11E7E1ULL);
  return rng.gaussian_vec(spec.dim_x);
}

/// Warm-start caches shared by successive oracle calls along a trajectory.
struct WarmState {
  PrimalDualPair ll;
  Vec pen;
};

GradOracle first_order_oracle(const ExperimentSpec& spec, const BilevelInstance& inst,
                              double alpha, OracleCounter& counter) {
  auto warm = std::make_shared<WarmState>();
  if (spec.family == Family::IneqQuadratic) {
    PenaltyParams p = PenaltyParams::from_accuracy(alpha);
    return [&inst, &counter, p, warm](const Vec& x) -> Vec {
      IneqOracleOptions opts;
      opts.warm_ll = &warm->ll;
      opts.warm_pen = &warm->pen;
      return inexact_grad_ineq(inst, x, p, counter, opts).grad;
    };
  }
  const double eps = spec.eps;
  return [&inst, &counter, eps, warm](const Vec& x) -> Vec {
    EqOracleOverrides ov;
    if (warm->pen.size() == inst.dim_y) ov.warm_y = &warm->pen;
    HypergradientEstimate est = inexact_grad_eq(inst, x, eps, counter, ov);
    warm->pen = est.grad;  // placeholder; replaced below by the LL solution
    warm->pen = Vec();
    return est.grad;
  };
}

/// High-accuracy first-order evaluation of F for trace recording.  Probe
/// work is tallied separately so run counters reflect solver calls only.
ValueOracle value_probe(const ExperimentSpec& spec, const BilevelInstance& inst) {
  auto warm = std::make_shared<WarmState>();
  auto probe_cnt = std::make_shared<OracleCounter>();
  if (spec.family == Family::IneqQuadratic) {
    return [&inst, warm, probe_cnt](const Vec& x) {
      const double acc = 1e-6 * (1.0 + inst.regularity.L_f.value);
      return zeroth_order_value(inst, x, acc, *probe_cnt, &warm->ll).value;
    };
  }
  return [&inst, warm, probe_cnt](const Vec& x) {
    const Vec cvec = inst.constraint.A * x - inst.constraint.b;
    YOracle obj{[&inst, &x, probe_cnt](const Vec& y) { return inst.g_grad_y(x, y, *probe_cnt); },
                inst.regularity.mu_g.value, inst.regularity.C_g.value};
    AgdOptions ao;
    ao.y0 = warm->pen.size() == inst.dim_y ? warm->pen : Vec::Zero(inst.dim_y);
    AgdResult r = agd_affine(obj, inst.constraint.B, cvec, InnerTolerance{1e-8, 400000}, ao);
    warm->pen = r.y;
    return inst.f(x, r.y, *probe_cnt);
  };
}

/// ||first-order oracle - exact oracle|| at probe points, with its own
/// warm state and counter.
ValueOracle grad_error_probe(const ExperimentSpec& spec, const BilevelInstance& inst,
                             double alpha) {
  auto cnt = std::make_shared<OracleCounter>();
  auto oracle = std::make_shared<GradOracle>(first_order_oracle(spec, inst, alpha, *cnt));
  return [&inst, oracle, cnt](const Vec& x) {
    try {
      return ((*oracle)(x) - exact_hypergrad_kkt(inst, x)).norm();
    } catch (const DegeneracyError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
}

RunResult run_one(const ExperimentSpec& spec, const BilevelInstance& inst, SolverKind kind,
                  double alpha, const Vec& x0, double c_F, OracleCounter& counter,
                  const TraceHooks& hooks, std::uint64_t seed) {
  const long long T = std::max(1, spec.max_iters);
  if (kind == SolverKind::ExactBaselinePGD) {
    GradOracle exact = [&inst](const Vec& x) { return exact_hypergrad_kkt(inst, x); };
    return inexact_pgd(exact, x0, c_F, FeasibleSet::all_space(), T, 0.0, hooks);
  }
  GradOracle oracle = first_order_oracle(spec, inst, alpha, counter);
  SolverConfig cfg;
  cfg.eps = spec.eps;
  cfg.goldstein_delta = spec.delta;
  cfg.alpha = alpha;
  cfg.seed = seed;
  cfg.lipschitz_L = inst.regularity.L_f.value * std::max(1.0, inst.regularity.L_y.value);
  cfg.T = T;
  switch (kind) {
    case SolverKind::InexactPGD:
      return inexact_pgd(oracle, x0, c_F, FeasibleSet::all_space(), T, alpha, hooks);
    case SolverKind::OIGRM:
      return oigrm(oracle, x0, cfg, hooks);
    case SolverKind::PIGD:
      return pigd(oracle, x0, cfg, hooks);
    case SolverKind::IZO: {
      auto warm = std::make_shared<WarmState>();
      ValueOracle vo = [&inst, &counter, alpha, warm](const Vec& x) {
        return zeroth_order_value(inst, x, alpha, counter, &warm->ll).value;
      };
      return izo(vo, x0, cfg, hooks);
    }
    default:
      throw InputError("run_one: unsupported solver kind");
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

double estimate_outer_smoothness(const BilevelInstance& inst, const Vec& x0, std::uint64_t seed,
                                 int n_pairs, double radius, double safety) {
  CounterRng rng(seed ^ 0xCF5E57ULL);
  Vec base = x0;
  Vec g0;
  for (int attempt = 0;; ++attempt) {
    try {
      g0 = exact_hypergrad_kkt(inst, base);
      break;
    } catch (const DegeneracyError&) {
      if (attempt >= 8) throw;
      base = x0 + 1e-4 * (attempt + 1) * rng.unit_sphere(inst.dim_x);
    }
  }
  double cf = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    Vec d = rng.unit_sphere(inst.dim_x);
    try {
      Vec g1 = exact_hypergrad_kkt(inst, base + radius * d);
      cf = std::max(cf, (g1 - g0).norm() / radius);
    } catch (const DegeneracyError&) {
      // probe hit a kink; skip it
    }
  }
  return std::max(cf * safety, 1e-6);
}

ConvergenceResult run_convergence(const ExperimentSpec& spec) {
  if (spec.seeds.empty()) throw InputError("run_convergence: need at least one seed");
  if (spec.output_dir.empty()) throw InputError("run_convergence: output_dir not set");
  ensure_dir(spec.output_dir + "/traces");
  ensure_dir(spec.output_dir + "/plotdata");

  ConvergenceResult result;
  std::vector<std::vector<double>> fvals, gerrs, fvals_base;  // [record index][seed]

  for (std::uint64_t seed : spec.seeds) {
    BilevelInstance inst = make_instance(spec, spec.dim_y, seed);
    Vec x0 = draw_x0(spec, seed);
    const double c_F = estimate_outer_smoothness(inst, x0, seed);

    OracleCounter cnt_fo;
    TraceHooks hooks_fo;
    hooks_fo.counters = &cnt_fo;
    hooks_fo.record_every = spec.record_every;
    hooks_fo.value_probe = value_probe(spec, inst);
    hooks_fo.stationarity_probe = grad_error_probe(spec, inst, spec.alpha);
    const SolverKind fo_kind =
        spec.solver == SolverKind::ExactBaselinePGD ? SolverKind::InexactPGD : spec.solver;
    RunResult run_fo = run_one(spec, inst, fo_kind, spec.alpha, x0, c_F, cnt_fo, hooks_fo, seed);

    OracleCounter cnt_base;
    TraceHooks hooks_base;
    hooks_base.counters = &cnt_base;
    hooks_base.record_every = spec.record_every;
    hooks_base.value_probe = value_probe(spec, inst);
    RunResult run_base = run_one(spec, inst, SolverKind::ExactBaselinePGD, spec.alpha, x0, c_F,
                                 cnt_base, hooks_base, seed);

    write_trace_csv(run_fo.trace,
                    spec.output_dir + "/traces/seed_" + std::to_string(seed) + ".csv",
                    !spec.timing);
    write_trace_csv(run_base.trace,
                    spec.output_dir + "/traces/seed_" + std::to_string(seed) + "_baseline.csv",
                    !spec.timing);

    const size_t n = std::min(run_fo.trace.rows.size(), run_base.trace.rows.size());
    if (fvals.size() < n) {
      fvals.resize(n);
      gerrs.resize(n);
      fvals_base.resize(n);
    }
    for (size_t i = 0; i < n; ++i) {
      fvals[i].push_back(run_fo.trace.rows[i].fval);
      gerrs[i].push_back(run_fo.trace.rows[i].stat_measure);
      fvals_base[i].push_back(run_base.trace.rows[i].fval);
    }
    result.final_fo.push_back(run_fo.trace.rows.back().fval);
    result.final_base.push_back(run_base.trace.rows.back().fval);
  }

  std::ostringstream summary, plot;
  summary << "t,mean_fval,std_fval,mean_grad_err,std_grad_err,mean_fval_baseline,"
             "std_fval_baseline\n";
  plot << "x\tmean\tstd\n";
  for (size_t i = 0; i < fvals.size(); ++i) {
    const int t = i == 0 ? 0 : static_cast<int>(i) * std::max(1, spec.record_every);
    summary << t << ',' << format_double(mean_of(fvals[i])) << ','
            << format_double(std_of(fvals[i])) << ',' << format_double(mean_of(gerrs[i])) << ','
            << format_double(std_of(gerrs[i])) << ',' << format_double(mean_of(fvals_base[i]))
            << ',' << format_double(std_of(fvals_base[i])) << '\n';
    plot << t << '\t' << format_double(mean_of(fvals[i])) << '\t'
         << format_double(std_of(fvals[i])) << '\n';
  }
  write_text(spec.output_dir + "/summary.csv", summary.str());
  write_text(spec.output_dir + "/plotdata/convergence.tsv", plot.str());

  std::vector<double> gaps;
  for (size_t s = 0; s < result.final_fo.size(); ++s)
    gaps.push_back(std::abs(result.final_fo[s] - result.final_base[s]) /
                   std::max(1.0, std::abs(result.final_base[s])));
  result.mean_rel_gap = mean_of(gaps);
  return result;
}

std::vector<AlphaSweepRow> run_alpha_sweep(const ExperimentSpec& spec,
                                           const std::vector<double>& alphas) {
  if (alphas.empty()) throw InputError("run_alpha_sweep: empty alpha list");
  if (spec.seeds.empty()) throw InputError("run_alpha_sweep: need at least one seed");
  if (spec.family != Family::IneqQuadratic)
    throw InputError("run_alpha_sweep: inequality family only");
  ensure_dir(spec.output_dir);

  std::vector<std::vector<double>> errs(alphas.size());
  std::vector<std::vector<double>> gaps(alphas.size());
  for (std::uint64_t seed : spec.seeds) {
    BilevelInstance inst = make_instance(spec, spec.dim_y, seed);
    Vec x0 = draw_x0(spec, seed);
    const double c_F = estimate_outer_smoothness(inst, x0, seed);

    // fixed trajectory: the exact-baseline iterates, independent of alpha
    std::vector<Vec> points;
    double f_base_final = 0.0;
    {
      ValueOracle fval = value_probe(spec, inst);
      Vec x = x0;
      points.push_back(x);
      for (int t = 0; t < std::max(1, spec.max_iters); ++t) {
        x = x - exact_hypergrad_kkt(inst, x) / c_F;
        if ((t + 1) % std::max(1, spec.record_every) == 0) points.push_back(x);
      }
      f_base_final = fval(x);
    }
    for (size_t ai = 0; ai < alphas.size(); ++ai) {
      OracleCounter cnt;
      GradOracle fo = first_order_oracle(spec, inst, alphas[ai], cnt);
      for (const Vec& x : points) {
        try {
          errs[ai].push_back((fo(x) - exact_hypergrad_kkt(inst, x)).norm());
        } catch (const DegeneracyError&) {
        }
      }
      OracleCounter cnt2;
      TraceHooks hf;
      hf.counters = &cnt2;
      hf.record_every = std::max(1, spec.max_iters);  // final row only
      hf.value_probe = value_probe(spec, inst);
      RunResult fo_run =
          run_one(spec, inst, SolverKind::InexactPGD, alphas[ai], x0, c_F, cnt2, hf, seed);
      gaps[ai].push_back(std::abs(fo_run.trace.rows.back().fval - f_base_final));
    }
  }

  std::vector<AlphaSweepRow> rows;
  std::ostringstream csv;
  csv << "alpha,mean_grad_err,std,final_gap\n";
  for (size_t ai = 0; ai < alphas.size(); ++ai) {
    AlphaSweepRow r{alphas[ai], mean_of(errs[ai]), std_of(errs[ai]), mean_of(gaps[ai])};
    rows.push_back(r);
    csv << format_double(r.alpha) << ',' << format_double(r.mean_grad_err) << ','
        << format_double(r.std_grad_err) << ',' << format_double(r.final_gap) << '\n';
  }
  write_text(spec.output_dir + "/alpha_sweep.csv", csv.str());
  return rows;
}

std::vector<ScalingRow> run_scaling(const ExperimentSpec& spec, const std::vector<int>& dy_list) {
  if (dy_list.empty()) throw InputError("run_scaling: empty dy list");
  if (spec.seeds.empty()) throw InputError("run_scaling: need at least one seed");
  ensure_dir(spec.output_dir);
  using Clock = std::chrono::steady_clock;

  std::vector<ScalingRow> rows;
  for (int dy : dy_list) {
    if (spec.n_const > 0 && spec.n_const > dy)
      throw InputError("run_scaling: n_const rule violated at dy=" + std::to_string(dy));
    BilevelInstance inst = make_instance(spec, dy, spec.seeds.front());
    Vec x = draw_x0(spec, spec.seeds.front());
    PenaltyParams p = PenaltyParams::from_accuracy(spec.alpha);

    auto median = [](std::vector<double>& v) {
      std::sort(v.begin(), v.end());
      return v[v.size() / 2];
    };
    const int n_timed = 20, n_warm = 3;
    std::vector<double> t_fo, t_ex;
    for (int k = 0; k < n_warm + n_timed; ++k) {
      OracleCounter cnt;
      const auto t0 = Clock::now();
      (void)inexact_grad_ineq(inst, x, p, cnt);  // cold start on purpose
      const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      if (k >= n_warm) t_fo.push_back(ms);
    }
    for (int k = 0; k < n_warm + n_timed; ++k) {
      const auto t0 = Clock::now();
      (void)exact_hypergrad_kkt(inst, x);
      const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      if (k >= n_warm) t_ex.push_back(ms);
    }
    rows.push_back({dy, median(t_fo), median(t_ex)});
  }

  std::ostringstream csv;
  csv << "dy,t_first_order_ms,t_exact_ms\n";
  for (const ScalingRow& r : rows)
    csv << r.dy << ',' << format_double(r.t_first_order_ms) << ','
        << format_double(r.t_exact_ms) << '\n';
  write_text(spec.output_dir + "/scaling.csv", csv.str());
  return rows;
}

}  // namespace bilevel
