#include "fisherflow/proximal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "fisherflow/errors.hpp"

namespace fisherflow {

void ProxConfig::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw ValidationError(fmt::format("proximal: h > 0 required (got {})", h));
  }
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw ValidationError(fmt::format("proximal: T > 0 required (got {})", T));
  }
  if (h > T * (1.0 + 1e-12)) {
    throw ValidationError(fmt::format("proximal: h <= T required (got h = {}, T = {})", h, T));
  }
  if (!(inner_tol > 0.0)) {
    throw ValidationError(fmt::format("proximal: inner_tol > 0 required (got {})", inner_tol));
  }
  if (inner_max_steps == 0) throw ValidationError("proximal: inner_max_steps >= 1 required");
}

std::size_t ProxConfig::steps() const {
  return static_cast<std::size_t>(std::floor(T / h + 1e-9));
}

namespace {

void require_gamma_zero(const Params& params) {
  if (params.gamma != 0.0) throw ValidationError("proximal: gamma = 0 required");
}

}  // namespace

Residual prox_residual(const GridDensity& p_next, const GridDensity& p_prev,
                       const FreeEnergyModel& m, const Params& params, double h) {
  require_same_grid(p_next.grid(), p_prev.grid(), "prox_residual");
  GridField d = linear_derivative(m, p_next);
  auto& v = d.mutable_values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] += (std::log(p_next[i]) - std::log(p_prev[i])) / h;
  }
  return first_order_residual(Params(params.sigma, 0.0), d, p_next);
}

double prox_objective(const GridDensity& p, const GridDensity& p_prev, const FreeEnergyModel& m,
                      const Params& params, double h) {
  return free_energy(m, p) + params.sigma * params.sigma * fisher_sqrt(p) +
         relative_entropy(p, p_prev) / h;
}

ProxStep prox_step(const GridDensity& p_prev, const FreeEnergyModel& m, const Params& params,
                   const ProxConfig& cfg) {
  require_gamma_zero(params);
  cfg.validate();
  require_same_grid(p_prev.grid(), m.grid(), "prox_step");
  std::vector<double> u(p_prev.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = -std::log(p_prev[i]) / cfg.h;
  const FreeEnergyModel tilted = m.with_extra_potential(GridField(m.grid(), std::move(u)));
  StationaryOptions opts;
  opts.max_steps = cfg.inner_max_steps;
  opts.record_stride = 1000;
  StationaryResult st =
      solve_stationary(tilted, Params(params.sigma, 1.0 / cfg.h), p_prev, cfg.inner_tol, opts);
  const Residual r = prox_residual(st.p_star, p_prev, m, params, cfg.h);
  const double l2 = residual_l2(st.p_star, r.field);
  return ProxStep{std::move(st.p_star), st.lambda_star, r.lambda, l2, st.steps};
}

const GridDensity& DiscreteFlow::at(double t) const {
  const auto i = static_cast<std::size_t>(std::max(0.0, std::floor(t / h + 1e-9)));
  return densities[std::min(i, densities.size() - 1)];
}

DiscreteFlow jko_flow(const GridDensity& p0, const FreeEnergyModel& m, const Params& params,
                      const ProxConfig& cfg) {
  require_gamma_zero(params);
  cfg.validate();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  DiscreteFlow flow{cfg.h, {p0}, {nan}, {nan}, {0}};
  const std::size_t n = cfg.steps();
  for (std::size_t i = 1; i <= n; ++i) {
    ProxStep s = prox_step(flow.densities.back(), m, params, cfg);
    flow.densities.push_back(std::move(s.p_next));
    flow.lambdas.push_back(s.lambda);
    flow.lambdas_raw.push_back(s.lambda_raw);
    flow.inner_steps.push_back(s.inner_steps);
  }
  return flow;
}

FlowComparison compare_to_continuous(const DiscreteFlow& flow, const EnergyTrace& trace) {
  if (trace.densities.size() != trace.rows.size()) {
    throw ValidationError("compare_to_continuous: trace must be recorded with keep_densities");
  }
  FlowComparison c{0, 0.0, 0.0};
  const double T = flow.h * static_cast<double>(flow.densities.size() - 1);
  for (std::size_t j = 0; j < trace.rows.size(); ++j) {
    const double t = trace.rows[j].t;
    if (t > T + 1e-9 * std::max(1.0, T)) continue;
    const double k = t / flow.h;
    if (std::abs(k - std::round(k)) > 1e-6) continue;
    const GridDensity& ph = flow.densities[static_cast<std::size_t>(std::llround(k))];
    require_same_grid(ph.grid(), trace.densities[j].grid(), "compare_to_continuous");
    c.sup_norm = std::max(c.sup_norm, sup_distance(ph, trace.densities[j]));
    c.wasserstein = std::max(c.wasserstein, wasserstein1(ph, trace.densities[j]));
    ++c.times_compared;
  }
  if (c.times_compared != flow.densities.size()) {
    throw ValidationError(fmt::format(
        "compare_to_continuous: trace records {} of the {} times i*h; record every h / dt steps",
        c.times_compared, flow.densities.size()));
  }
  return c;
}

}  // namespace fisherflow
