#include "fisherflow/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "fisherflow/config.hpp"
#include "fisherflow/diagnostics.hpp"
#include "fisherflow/dynamics.hpp"
#include "fisherflow/errors.hpp"
#include "fisherflow/particles.hpp"
#include "fisherflow/proximal.hpp"
#include "parallel.hpp"

namespace fisherflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.17g}", v);
}

std::string num(std::uint64_t v) { return fmt::format("{}", v); }

struct Table {
  std::string schema;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

class Output {
 public:
  Output(fs::path dir, bool dat) : dir_(std::move(dir)), dat_(dat) {}

  const fs::path& dir() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }

  void csv(const std::string& name, const Table& t) {
    std::ofstream f = open(name);
    f << fmt::format("# schema={} version={} doubles=%.17g (round-trip, not truncated)\n",
                     t.schema, kSchemaVersion);
    f << join(t.columns) << '\n';
    for (const auto& r : t.rows) f << join(r) << '\n';
  }

  void dat(const std::string& name, const std::string& xlabel, const std::string& ylabel,
           const std::vector<double>& x, const std::vector<double>& y) {
    if (!dat_) return;
    std::ofstream f = open(name);
    f << fmt::format("# {} {}\n", xlabel, ylabel);
    for (std::size_t i = 0; i < x.size(); ++i) f << num(x[i]) << ' ' << num(y[i]) << '\n';
  }

  void text(const std::string& name, const std::string& body) { open(name) << body; }

  Output sub(const std::string& name) const { return Output(dir_ / name, dat_); }
  void adopt(const Output& child) {
    const auto prefix = fs::relative(child.dir_, dir_).string();
    for (const auto& f : child.files_) files_.push_back(prefix + "/" + f);
  }

 private:
  std::ofstream open(const std::string& name) {
    fs::create_directories(dir_);
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw NumericalError(fmt::format("cannot write {}", (dir_ / name).string()));
    files_.push_back(name);
    return f;
  }

  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += v[i];
    }
    return s;
  }

  fs::path dir_;
  bool dat_;
  std::vector<std::string> files_;
};

struct Context {
  const RunConfig& cfg;
  Output& out;
  std::ostream& log;
  std::ostream& err;
  json& summary;
};

Table trace_table(const EnergyTrace& trace) {
  Table t{"dynamics_trace",
          {"t", "F", "I", "H", "energy", "residual_l2p", "lambda", "m2", "boundary_mass"},
          {}};
  for (const auto& r : trace.rows) {
    t.rows.push_back({num(r.t), num(r.F), num(r.I), num(r.H), num(r.energy), num(r.residual_l2p),
                      num(r.lambda), num(r.m2), num(r.boundary_mass)});
  }
  return t;
}

void write_trace(Output& out, const std::string& stem, const EnergyTrace& trace) {
  out.csv(stem + ".csv", trace_table(trace));
  std::vector<double> t, e;
  for (const auto& r : trace.rows) {
    t.push_back(r.t);
    e.push_back(r.energy);
  }
  out.dat(stem + "_energy.dat", "t", "energy", t, e);
}

void write_density(Output& out, const std::string& stem, const GridDensity& p) {
  Table t{"density", {"x", "p"}, {}};
  std::vector<double> xs = p.grid().nodes();
  std::vector<double> ps(p.values().begin(), p.values().end());
  for (std::size_t i = 0; i < p.size(); ++i) t.rows.push_back({num(xs[i]), num(ps[i])});
  out.csv(stem + ".csv", t);
  out.dat(stem + ".dat", "x", "p", xs, ps);
}

void write_summary(Output& out, const std::string& name,
                   const std::vector<std::pair<std::string, double>>& items, json& summary) {
  Table t{"summary", {"quantity", "value"}, {}};
  for (const auto& [k, v] : items) {
    t.rows.push_back({k, num(v)});
    summary[k] = std::isfinite(v) ? json(v) : json(nullptr);
  }
  out.csv(name, t);
}

int cmd_evolve(Context& c) {
  const FreeEnergyModel m = c.cfg.model();
  const Params params = c.cfg.params();
  const GridDensity p0 = c.cfg.initial().materialize(m.grid());
  const DynamicsConfig dyn = c.cfg.dynamics();
  EvolveResult r = [&] {
    try {
      return evolve(p0, m, params, dyn);
    } catch (const EvolveError& e) {
      write_trace(c.out, "trace", e.trace());
      throw;
    }
  }();
  write_trace(c.out, "trace", r.trace);
  write_density(c.out, "final_density", r.final_state.p);
  write_summary(c.out, "summary.csv",
                {{"t_final", r.final_state.t},
                 {"steps", static_cast<double>(r.steps)},
                 {"converged", r.converged ? 1.0 : 0.0},
                 {"energy", r.trace.rows.back().energy},
                 {"lambda", r.final_state.lambda},
                 {"residual_l2p", r.final_state.residual_l2p}},
                c.summary);
  c.log << fmt::format("evolve: {} steps to t = {}, energy {:.10g}, residual {:.3e}{}\n", r.steps,
                       r.final_state.t, r.trace.rows.back().energy, r.final_state.residual_l2p,
                       r.converged ? " (stationary)" : "");
  return kExitOk;
}

int cmd_ground_state(Context& c) {
  const FreeEnergyModel m = c.cfg.model();
  const Params params = c.cfg.params();
  const GridDensity p0 = c.cfg.initial().materialize(m.grid());
  const DynamicsConfig dyn = c.cfg.dynamics();
  StationaryOptions opts;
  opts.scheme = dyn.scheme;
  opts.max_steps = dyn.max_steps;
  StationaryResult st = [&] {
    try {
      return solve_stationary(m, params, p0, dyn.stationary_tol, opts);
    } catch (const EvolveError& e) {
      write_trace(c.out, "stationary_trace", e.trace());
      throw;
    }
  }();
  write_trace(c.out, "stationary_trace", st.trace);
  write_density(c.out, "ground_state", st.p_star);
  std::vector<std::pair<std::string, double>> items = {
      {"energy_star", st.energy_star},
      {"lambda_star", st.lambda_star},
      {"residual_l2p", st.residual_l2p},
      {"steps", static_cast<double>(st.steps)}};
  std::string line = fmt::format("ground-state: energy {:.10g}, lambda {:.10g}, residual {:.3e}",
                                 st.energy_star, st.lambda_star, st.residual_l2p);
  if (m.variant() == FreeEnergyModel::Variant::kLinear && params.gamma == 0.0) {
    const double eig = ground_state_eigenvalue(m, params.sigma);
    items.emplace_back("eigenvalue", eig);
    items.emplace_back("relative_difference", std::abs(st.energy_star - eig) / std::abs(eig));
    line += fmt::format(", Schrodinger eigenvalue {:.10g}", eig);
  }
  write_summary(c.out, "summary.csv", items, c.summary);
  c.log << line << '\n';
  return kExitOk;
}

struct JkoRun {
  DiscreteFlow flow;
  FlowComparison comparison;
};

JkoRun run_jko(const RunConfig& cfg, const ProxConfig& pc, Output& out) {
  const FreeEnergyModel m = cfg.model();
  const Params params = cfg.params();
  const GridDensity p0 = cfg.initial().materialize(m.grid());
  const double ref = cfg.reference_dt();
  const double ratio = pc.h / ref;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw ValidationError(fmt::format(
        "proximal.h = {} must be an integer multiple of proximal.reference_dt = {}", pc.h, ref));
  }
  DiscreteFlow flow = jko_flow(p0, m, params, pc);
  Table t{"proximal",
          {"i", "t", "F", "I", "H", "energy", "lambda_raw", "lambda", "inner_steps"},
          {}};
  std::vector<double> ts, es;
  for (std::size_t i = 0; i < flow.densities.size(); ++i) {
    const EnergyParts e = energy_parts(params, m, flow.densities[i]);
    const double ti = pc.h * static_cast<double>(i);
    t.rows.push_back({num(static_cast<std::uint64_t>(i)), num(ti), num(e.potential),
                      num(e.fisher), num(e.entropy), num(e.total), num(flow.lambdas_raw[i]),
                      num(flow.lambdas[i]), num(static_cast<std::uint64_t>(flow.inner_steps[i]))});
    ts.push_back(ti);
    es.push_back(e.total);
  }
  out.csv("proximal.csv", t);
  out.dat("proximal_energy.dat", "t", "energy", ts, es);

  DynamicsConfig dc;
  dc.dt = ref;
  dc.t_end = pc.h * static_cast<double>(pc.steps());
  dc.record_stride = static_cast<std::size_t>(std::llround(ratio));
  dc.stationary_tol = 0.0;
  dc.keep_densities = true;
  const EvolveResult cont = evolve(p0, m, params, dc);
  const FlowComparison cmp = compare_to_continuous(flow, cont.trace);
  Table ct{"proximal_comparison", {"h", "times_compared", "sup_norm", "w1"}, {}};
  ct.rows.push_back({num(pc.h), num(static_cast<std::uint64_t>(cmp.times_compared)),
                     num(cmp.sup_norm), num(cmp.wasserstein)});
  out.csv("comparison.csv", ct);
  return {std::move(flow), cmp};
}

int cmd_jko(Context& c) {
  const ProxConfig pc = c.cfg.proximal();
  const JkoRun r = run_jko(c.cfg, pc, c.out);
  c.summary["sup_norm"] = r.comparison.sup_norm;
  c.summary["w1"] = r.comparison.wasserstein;
  c.log << fmt::format("jko: h = {}, {} steps, sup-norm error {:.3e}, W1 error {:.3e}\n", pc.h,
                       r.flow.densities.size() - 1, r.comparison.sup_norm,
                       r.comparison.wasserstein);
  return kExitOk;
}

GridDensity grid_oracle(const RunConfig& cfg, double t_end) {
  const FreeEnergyModel m = cfg.model();
  const GridDensity p0 = cfg.initial().materialize(m.grid());
  if (t_end == 0.0) return p0;
  DynamicsConfig dc = cfg.dynamics();
  const double steps = std::ceil(t_end / dc.dt - 1e-9);
  dc.dt = t_end / steps;
  dc.t_end = t_end;
  dc.record_stride = static_cast<std::size_t>(steps);
  dc.stationary_tol = 0.0;
  return evolve(p0, m, cfg.params(), dc).final_state.p;
}

int cmd_sample(Context& c) {
  const FreeEnergyModel m = c.cfg.model();
  const Params params = c.cfg.params();
  const GridDensity p0 = c.cfg.initial().materialize(m.grid());
  const ParticleConfig pc = c.cfg.particles();
  const SampleResult res = sample_flow(p0, m, params, pc);
  Table rows{"particles", {"t", "mean", "m2", "ESS", "births", "deaths"}, {}};
  std::vector<double> ts, means;
  for (const auto& r : res.rows) {
    rows.rows.push_back(
        {num(r.t), num(r.mean), num(r.m2), num(r.ess), num(r.births), num(r.deaths)});
    ts.push_back(r.t);
    means.push_back(r.mean);
  }
  c.out.csv("particles.csv", rows);
  c.out.dat("particles_mean.dat", "t", "mean", ts, means);
  Table measure{"weighted_measure", {"position", "weight"}, {}};
  for (std::size_t i = 0; i < res.measure.size(); ++i) {
    measure.rows.push_back({num(res.measure.positions()[i]), num(res.measure.weights()[i])});
  }
  c.out.csv("measure.csv", measure);
  for (const auto& w : res.warnings) c.err << "warning: " << w << '\n';

  const GridDensity oracle = grid_oracle(c.cfg, pc.t_end);
  const double mean = measure_moments(res.measure, 1);
  const double m2 = measure_moments(res.measure, 2);
  const double gm = moment(oracle, 1);
  const double g2 = moment(oracle, 2);
  const double w1 = wasserstein1(res.measure, oracle);
  Table cmp{"particle_comparison", {"quantity", "particles", "grid", "difference"}, {}};
  cmp.rows.push_back({"mean", num(mean), num(gm), num(mean - gm)});
  cmp.rows.push_back({"m2", num(m2), num(g2), num(m2 - g2)});
  cmp.rows.push_back({"w1", num(w1), num(0.0), num(w1)});
  c.out.csv("comparison.csv", cmp);
  c.summary["mean"] = mean;
  c.summary["m2"] = m2;
  c.summary["grid_mean"] = gm;
  c.summary["grid_m2"] = g2;
  c.summary["ess"] = res.measure.effective_sample_size();
  c.log << fmt::format("sample: mean {:.5f} (grid {:.5f}), m2 {:.5f} (grid {:.5f}), ESS {:.0f}\n",
                       mean, gm, m2, g2, res.measure.effective_sample_size());
  return kExitOk;
}

struct CheckResult {
  std::string name;
  bool passed;
  double value;
  double threshold;
  std::string detail;
};

using CheckList = std::vector<CheckResult>;

void guarded(CheckList& out, const std::string& name, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    out.push_back({name, false, std::numeric_limits<double>::quiet_NaN(),
                   std::numeric_limits<double>::quiet_NaN(), e.what()});
  }
}

CheckList run_checks(const RunConfig& cfg) {
  CheckList out;
  const FreeEnergyModel m = cfg.model();
  const Params params = cfg.params();
  const GridDensity p0 = cfg.initial().materialize(m.grid());
  DynamicsConfig dyn = cfg.dynamics();
  dyn.keep_densities = true;
  const auto add = [&](std::string name, bool ok, double value, double threshold,
                       std::string detail = "") {
    out.push_back({std::move(name), ok, value, threshold, std::move(detail)});
  };

  std::optional<EvolveResult> run;
  guarded(out, "evolve", [&] { run = evolve(p0, m, params, dyn); });
  std::optional<StationaryResult> st;
  guarded(out, "stationary_solve", [&] {
    StationaryOptions opts;
    opts.scheme = dyn.scheme;
    opts.max_steps = dyn.max_steps;
    st = solve_stationary(m, params, p0, dyn.stationary_tol, opts);
  });

  if (run) {
    const EnergyTrace& tr = run->trace;
    double mass = 0.0, rise = -std::numeric_limits<double>::infinity(), lam = 0.0;
    for (std::size_t j = 0; j < tr.rows.size(); ++j) {
      const GridDensity& p = tr.densities[j];
      mass = std::max(mass, std::abs(integrate(p.grid(), p.values()) - 1.0));
      if (j > 0) rise = std::max(rise, tr.rows[j].energy - tr.rows[j - 1].energy);
      const GridField d = linear_derivative(m, p);
      std::vector<double> f(p.size());
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = d[i] * p[i];
      double expected = integrate(p.grid(), f) + params.sigma * params.sigma * tr.rows[j].I;
      if (params.gamma != 0.0) expected += params.gamma * tr.rows[j].H;
      lam = std::max(lam, std::abs(tr.rows[j].lambda - expected));
    }
    add("mass_conservation", mass <= 1e-10, mass, 1e-10);
    add("energy_monotone", tr.rows.size() < 2 || rise <= 1e-8, rise, 1e-8);
    add("lambda_identity", lam <= 1e-6, lam, 1e-6);
    guarded(out, "dissipation", [&] {
      const DissipationReport d = dissipation_check(tr);
      add("dissipation", d.passed, d.max_relative_mismatch, d.tolerance, d.message);
    });
    if (st) {
      guarded(out, "gaussian_envelope", [&] {
        const GridDensity anchors[] = {p0, st->p_star};
        const GaussianEnvelope env = fit_gaussian_envelope(anchors);
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& p : tr.densities) worst = std::max(worst, envelope_violation(p, env));
        add("gaussian_envelope", worst <= 0.0, worst, 0.0);
      });
      if (params.gamma == 0.0) {
        guarded(out, "exponential_rate", [&] {
          const ExpRateReport e = exp_rate_report(tr, *st, params);
          add("exponential_rate", e.r_squared >= 0.99 && e.slope < 0.0, e.r_squared, 0.99,
              fmt::format("slope {:.4g}", e.slope));
          add("relative_fisher_bound", e.bound_violations == 0, e.max_bound_excess, 1e-8);
        });
      }
    }
  }

  if (st) {
    add("stationary_residual", st->residual_l2p <= dyn.stationary_tol, st->residual_l2p,
        dyn.stationary_tol);
    guarded(out, "first_order_inequality", [&] {
      double worst = std::numeric_limits<double>::infinity();
      const double center = m.confining().center;
      for (std::uint32_t k = 0; k < 20; ++k) {
        const GridDensity q = random_mixture(m.grid(), center, 2.0, cfg.count("particles", "seed"), k);
        worst = std::min(worst, first_order_gap(params, m, st->p_star, q));
      }
      add("first_order_inequality", worst >= -1e-4, worst, -1e-4);
    });
    if (m.variant() == FreeEnergyModel::Variant::kLinear && params.gamma == 0.0) {
      const double eig = ground_state_eigenvalue(m, params.sigma);
      const double rel = std::abs(st->energy_star - eig) / std::abs(eig);
      add("ground_state_eigenvalue", rel <= 1e-4, rel, 1e-4);
      const double lrel = std::abs(st->lambda_star - st->energy_star) / std::abs(eig);
      add("lambda_equals_energy", lrel <= 1e-4, lrel, 1e-4);
    }
    guarded(out, "poincare_inequality", [&] {
      const GapEstimate gap = spectral_gap(st->p_star);
      double slack = std::numeric_limits<double>::infinity(), ident = 0.0, cons = -1.0;
      for (const GridField& f : inequality_corpus(st->p_star)) {
        const InequalityReport r = functional_inequality_check(st->p_star, f, gap.poincare_constant);
        slack = std::min(slack, r.slack);
        ident = std::max({ident, std::abs(r.mean_generator), std::abs(r.ibp_defect)});
        // zero-mean copy for the Poincare inequality itself
        const double mean = expectation(st->p_star, f);
        std::vector<double> g(f.values().begin(), f.values().end());
        for (double& v : g) v -= mean;
        const GridField gf(f.grid(), g);
        for (double& v : g) v *= v;
        const double var = expectation(st->p_star, GridField(f.grid(), std::move(g)));
        cons = std::max(cons, var - gap.poincare_constant * dirichlet_form(st->p_star, gf));
      }
      add("functional_inequality", slack >= -1e-9, slack, -1e-9,
          fmt::format("spectral gap {:.6g}", gap.gap));
      add("generator_identities", ident <= 1e-6, ident, 1e-6);
      add("poincare_consistency", cons <= 1e-8, cons, 1e-8);
    });
  }

  guarded(out, "fisher_convexity", [&] {
    const ConvexityReport r = fisher_convexity_probe(200, cfg.count("particles", "seed"), m.grid());
    add("fisher_convexity", r.violations == 0 && r.max_equality_error <= 1e-10, r.min_slack, -1e-8,
        fmt::format("{} trials, {} violations", r.trials, r.violations));
  });

  if (params.gamma == 0.0) {
    guarded(out, "proximal", [&] {
      const ProxConfig pc = cfg.proximal();
      const DiscreteFlow flow = jko_flow(p0, m, params, pc);
      double rise = -std::numeric_limits<double>::infinity(), chain = rise, res = 0.0;
      for (std::size_t i = 1; i < flow.densities.size(); ++i) {
        const GridDensity& a = flow.densities[i - 1];
        const GridDensity& b = flow.densities[i];
        const double ea = generalized_free_energy(params, m, a);
        rise = std::max(rise, generalized_free_energy(params, m, b) - ea);
        chain = std::max(chain, prox_objective(b, a, m, params, pc.h) - ea);
        const Residual r = prox_residual(b, a, m, params, pc.h);
        res = std::max(res, residual_l2(b, r.field));
      }
      add("proximal_monotone", rise <= 1e-8, rise, 1e-8);
      add("proximal_kl_chain", chain <= 1e-8, chain, 1e-8);
      add("proximal_residual", res <= pc.inner_tol, res, pc.inner_tol);
    });
  }
  return out;
}

int cmd_check(Context& c) {
  const CheckList checks = run_checks(c.cfg);
  Table t{"check", {"check", "passed", "value", "threshold"}, {}};
  bool all = true;
  for (const auto& r : checks) {
    all = all && r.passed;
    t.rows.push_back({r.name, r.passed ? "1" : "0", num(r.value), num(r.threshold)});
    c.log << fmt::format("{} {}: value {:.6g}, threshold {:.3g}{}\n", r.passed ? "PASS" : "FAIL",
                         r.name, r.value, r.threshold, r.detail.empty() ? "" : " (" + r.detail + ")");
    c.summary["checks"][r.name] = r.passed;
  }
  c.out.csv("check.csv", t);
  c.log << fmt::format("check: {} of {} passed\n",
                       std::count_if(checks.begin(), checks.end(), [](auto& r) { return r.passed; }),
                       checks.size());
  return all ? kExitOk : kExitNumerical;
}

int cmd_sweep(Context& c) {
  const std::string kind = c.cfg.sweep_kind();
  if (kind == "sigma" || kind == "both") {
    const FreeEnergyModel m = c.cfg.model();
    if (c.cfg.params().gamma != 0.0) throw ValidationError("sweep: gamma = 0 required");
    SweepOptions opts;
    opts.tol = c.cfg.dynamics().stationary_tol;
    const auto rows = gamma_sweep(m, c.cfg.sweep_sigmas(), opts);
    Table t{"sigma_sweep",
            {"sigma", "min_energy", "F", "I", "lambda", "gap_to_inf_F", "steps"},
            {}};
    std::vector<double> s, e;
    for (const auto& r : rows) {
      t.rows.push_back({num(r.sigma), num(r.min_energy), num(r.potential), num(r.fisher),
                        num(r.lambda), num(r.gap_to_inf), num(static_cast<std::uint64_t>(r.steps))});
      s.push_back(r.sigma);
      e.push_back(r.min_energy);
      c.log << fmt::format("sweep: sigma {} min energy {:.10g}\n", r.sigma, r.min_energy);
    }
    c.out.csv("sigma_sweep.csv", t);
    c.out.dat("sigma_sweep.dat", "sigma", "min_energy", s, e);
  }
  if (kind == "h" || kind == "both") {
    const auto hs = c.cfg.sweep_hs();
    std::vector<Output> subs;
    for (std::size_t k = 0; k < hs.size(); ++k) subs.push_back(c.out.sub(fmt::format("h_{}", k)));
    std::vector<FlowComparison> cmp(hs.size());
    detail::parallel_for(hs.size(), worker_threads(), [&](std::size_t k) {
      ProxConfig pc = c.cfg.proximal();
      pc.h = hs[k];
      pc.validate();
      cmp[k] = run_jko(c.cfg, pc, subs[k]).comparison;
    });
    Table t{"h_study", {"h", "times_compared", "sup_norm", "w1"}, {}};
    std::vector<double> w;
    for (std::size_t k = 0; k < hs.size(); ++k) {
      c.out.adopt(subs[k]);
      t.rows.push_back({num(hs[k]), num(static_cast<std::uint64_t>(cmp[k].times_compared)),
                        num(cmp[k].sup_norm), num(cmp[k].wasserstein)});
      w.push_back(cmp[k].wasserstein);
      c.log << fmt::format("sweep: h {} sup-norm {:.3e} W1 {:.3e}\n", hs[k], cmp[k].sup_norm,
                           cmp[k].wasserstein);
    }
    c.out.csv("h_study.csv", t);
    c.out.dat("h_study.dat", "h", "w1", hs, w);
  }
  return kExitOk;
}

int dispatch(const std::string& sub, Context& c) {
  if (sub == "evolve") return cmd_evolve(c);
  if (sub == "ground-state") return cmd_ground_state(c);
  if (sub == "jko") return cmd_jko(c);
  if (sub == "sample") return cmd_sample(c);
  if (sub == "check") return cmd_check(c);
  if (sub == "sweep") return cmd_sweep(c);
  throw ValidationError(fmt::format("unknown subcommand '{}'", sub));
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [section, keys] : cfg.sections()) {
    for (const auto& [key, value] : keys) j[section][key] = value;
  }
  return j;
}

}  // namespace

int run(const CliRequest& request, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg;
  try {
    if (request.config_path) cfg = RunConfig::from_file(*request.config_path);
    for (const auto& o : request.overrides) cfg.apply_override(o);
    if (request.seed) cfg.set("particles", "seed", std::to_string(*request.seed));
    if (request.out_dir) cfg.set("output", "directory", *request.out_dir);
    cfg.validate();
    (void)worker_threads();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  const auto formats = cfg.output_formats();
  const bool dat = std::find(formats.begin(), formats.end(), "dat") != formats.end();
  Output output(cfg.output_directory(), dat);
  json summary = json::object();
  int code = kExitOk;
  std::string status = "ok";
  std::string message;
  try {
    output.text("config.ini", cfg.to_ini());
    Context ctx{cfg, output, out, err, summary};
    code = dispatch(request.subcommand, ctx);
    if (code != kExitOk) status = "failed";
  } catch (const ValidationError& e) {
    code = kExitValidation;
    status = "failed";
    message = e.what();
  } catch (const std::exception& e) {
    code = kExitNumerical;
    status = "failed";
    message = e.what();
  }
  if (!message.empty()) err << "error: " << message << '\n';

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json manifest = {
      {"tool", "fisherflow"},
      {"version", FISHERFLOW_VERSION},
      {"subcommand", request.subcommand},
      {"status", status},
      {"exit_code", code},
      {"error", message},
      {"seed", cfg.count("particles", "seed")},
      {"threads", worker_threads()},
      {"wall_time_seconds", wall},
      {"csv_schema_version", kSchemaVersion},
      {"config", config_json(cfg)},
      {"config_ini", cfg.to_ini()},
      {"files", output.files()},
      {"summary", summary},
  };
  try {
    fs::create_directories(output.dir());
    std::ofstream(output.dir() / "manifest.json") << manifest.dump(2) << '\n';
  } catch (const std::exception& e) {
    err << "error: cannot write manifest: " << e.what() << '\n';
    if (code == kExitOk) code = kExitNumerical;
  }
  return code;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Mean-field Schrodinger dynamics, proximal flows and particle estimators"};
  app.require_subcommand(1);
  CliRequest req;
  std::string config;
  std::uint64_t seed = 0;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", req.overrides, "Override section.key=value (repeatable)");
    sub->add_option("--out", req.out_dir, "Output directory");
    sub->add_option("--seed", seed, "Particle seed");
  };
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"evolve", "Integrate the dynamics and write the energy trace"},
      {"ground-state", "Solve for the stationary density"},
      {"jko", "Run the entropy-proximal flow and compare with the dynamics"},
      {"sample", "Run the birth-death particle estimator"},
      {"check", "Run the invariant suite"},
      {"sweep", "Sweep sigma and/or the proximal step"},
  };
  for (const auto& [name, help] : subs) add_common(app.add_subcommand(name, help));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  for (const auto* sub : app.get_subcommands()) {
    req.subcommand = sub->get_name();
    if (!config.empty()) req.config_path = config;
    if (sub->count("--seed") > 0) req.seed = seed;
  }
  return run(req, std::cout, std::cerr);
}

}  // namespace fisherflow
