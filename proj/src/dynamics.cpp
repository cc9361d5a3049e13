#include "fisherflow/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "tridiagonal.hpp"

namespace fisherflow {

namespace {

constexpr double kGuardLimit = 0.5;
constexpr double kBoundaryLimit = 1e-10;
constexpr double kInitialEndLimit = 1e-12;

DynamicsState make_state(double t, std::vector<double> psi, const FreeEnergyModel& m,
                         const Params& params) {
  const Grid1D& grid = m.grid();
  std::vector<double> sq(psi.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = psi[i] * psi[i];
  GridDensity p = normalize(GridField(grid, std::move(sq)));
  GridField derivative = linear_derivative(m, p);
  Residual r = first_order_residual(params, derivative, p);
  const double l2 = residual_l2(p, r.field);
  return DynamicsState{t, GridField(grid, std::move(psi)), std::move(p), std::move(derivative),
                       r.lambda, l2};
}

// B - lambda, the frozen potential of the psi equation.
std::vector<double> shifted_potential(const DynamicsState& s, const Params& params) {
  std::vector<double> b(s.p.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    b[i] = s.derivative[i] - s.lambda;
    if (params.gamma != 0.0) b[i] += params.gamma * std::log(s.p[i]);
  }
  return b;
}

double guard_norm(std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 1; i + 1 < b.size(); ++i) m = std::max(m, 0.5 * std::abs(b[i]));
  return m;
}

void normalize_psi(std::vector<double>& psi, const Grid1D& grid) {
  for (double& v : psi) v = std::max(v, 0.0);
  std::vector<double> sq(psi.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = psi[i] * psi[i];
  const double mass = integrate(grid, sq);
  if (!std::isfinite(mass) || !(mass > 0.0)) throw NumericalError("degenerate mass");
  const double s = 1.0 / std::sqrt(mass);
  for (double& v : psi) v *= s;
}

std::vector<double> implicit_step(std::span<const double> psi, std::span<const double> b,
                                  double sigma, double dx, double dt) {
  const std::size_t n = psi.size();
  const std::size_t m = n - 2;
  const double r = dt * sigma * sigma / (2.0 * dx * dx);
  std::vector<double> lower(m, -r), diag(m), upper(m, -r), rhs(m);
  for (std::size_t k = 0; k < m; ++k) {
    diag[k] = 1.0 + 2.0 * r + 0.5 * dt * b[k + 1];
    rhs[k] = psi[k + 1];
  }
  const auto x = detail::solve_tridiagonal(lower, diag, upper, rhs);
  std::vector<double> out(n, 0.0);
  std::copy(x.begin(), x.end(), out.begin() + 1);
  return out;
}

std::vector<double> strang_step(std::span<const double> psi, std::span<const double> b,
                                double sigma, double dx, double dt) {
  const std::size_t n = psi.size();
  const std::size_t m = n - 2;
  std::vector<double> half(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) half[i] = std::exp(-0.25 * dt * b[i]) * psi[i];
  const double r = dt * sigma * sigma / (4.0 * dx * dx);
  std::vector<double> lower(m, -r), diag(m, 1.0 + 2.0 * r), upper(m, -r), rhs(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = k + 1;
    rhs[k] = (1.0 - 2.0 * r) * half[i] + r * (half[i - 1] + half[i + 1]);
  }
  const auto x = detail::solve_tridiagonal(lower, diag, upper, rhs);
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < m; ++k) out[k + 1] = std::exp(-0.25 * dt * b[k + 1]) * x[k];
  return out;
}

TraceRow make_row(const DynamicsState& s, const FreeEnergyModel& m, const Params& params) {
  const GridDensity& p = s.p;
  const auto v = m.potential().values();
  std::vector<double> f(p.size());
  // F = int V p + 1/2 int (K*p) p = int (V + dF/dp) p / 2
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = 0.5 * (v[i] + s.derivative[i]) * p[i];
  const double F = integrate(p.grid(), f);
  const double I = fisher_sqrt(p);
  const double H = entropy(p);
  double energy = F + params.sigma * params.sigma * I;
  if (params.gamma != 0.0) energy += params.gamma * H;
  return TraceRow{s.t, F, I, H, energy, s.residual_l2p, s.lambda, moment(p, 2),
                  boundary_mass(p)};
}

void record(EnergyTrace& trace, const DynamicsState& s, const FreeEnergyModel& m,
            const Params& params, bool keep_density) {
  trace.rows.push_back(make_row(s, m, params));
  if (keep_density) trace.densities.push_back(s.p);
}

void check_initial_ends(const GridDensity& p0) {
  const double ends = std::max(p0[0], p0[p0.size() - 1]);
  if (ends >= kInitialEndLimit) {
    throw NumericalError(
        fmt::format("domain too small: initial density {:.3e} at the grid ends", ends));
  }
}

}  // namespace

void DynamicsConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ValidationError(fmt::format("dynamics: dt > 0 required (got {})", dt));
  }
  if (!(t_end > 0.0) || !std::isfinite(t_end)) {
    throw ValidationError(fmt::format("dynamics: t_end > 0 required (got {})", t_end));
  }
  if (record_stride == 0) throw ValidationError("dynamics: record_stride >= 1 required");
  if (!(stationary_tol >= 0.0)) {
    throw ValidationError(
        fmt::format("dynamics: stationary_tol >= 0 required (got {})", stationary_tol));
  }
  if (max_steps == 0) throw ValidationError("dynamics: max_steps >= 1 required");
}

DynamicsState DynamicsState::initial(const GridDensity& p0, const FreeEnergyModel& m,
                                     const Params& params) {
  require_same_grid(p0.grid(), m.grid(), "dynamics");
  std::vector<double> psi(p0.size());
  for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = std::sqrt(p0[i]);
  // Dirichlet ends, as after any step
  psi.front() = 0.0;
  psi.back() = 0.0;
  normalize_psi(psi, p0.grid());
  return make_state(0.0, std::move(psi), m, params);
}

double boundary_mass(const GridDensity& p) { return std::max(p[1], p[p.size() - 2]); }

double max_stable_dt(const DynamicsState& s, const Params& params) {
  const double g = guard_norm(shifted_potential(s, params));
  double limit = g > 0.0 ? kGuardLimit / g : std::numeric_limits<double>::infinity();
  if (params.gamma > 0.0) limit = std::min(limit, 1.0 / params.gamma);
  return limit;
}

DynamicsState step(const DynamicsState& s, const FreeEnergyModel& m, const Params& params,
                   double dt, TimeScheme scheme) {
  if (!(dt > 0.0)) throw ValidationError("dynamics: dt > 0 required");
  const auto b = shifted_potential(s, params);
  const double g = guard_norm(b);
  if (dt * g > kGuardLimit || dt * params.gamma > 1.0) {
    throw NumericalError(fmt::format(
        "dt too large: dt * max|(dF/dp + gamma log p - lambda)/2| = {:.3e} (limit {}), "
        "dt * gamma = {:.3e} (limit 1)",
        dt * g, kGuardLimit, dt * params.gamma));
  }
  const double dx = m.grid().dx();
  std::vector<double> psi = scheme == TimeScheme::kImplicit
                                ? implicit_step(s.psi.values(), b, params.sigma, dx, dt)
                                : strang_step(s.psi.values(), b, params.sigma, dx, dt);
  normalize_psi(psi, m.grid());
  DynamicsState next = make_state(s.t + dt, std::move(psi), m, params);
  const double bm = boundary_mass(next.p);
  if (bm > kBoundaryLimit) {
    throw NumericalError(fmt::format(
        "domain too small: density {:.3e} next to the boundary at t = {}", bm, next.t));
  }
  return next;
}

EvolveResult evolve(const GridDensity& p0, const FreeEnergyModel& m, const Params& params,
                    const DynamicsConfig& cfg) {
  cfg.validate();
  check_initial_ends(p0);
  EnergyTrace trace;
  DynamicsState s = DynamicsState::initial(p0, m, params);
  record(trace, s, m, params, cfg.keep_densities);
  const bool use_tol = cfg.stationary_tol > 0.0;
  if (use_tol && s.residual_l2p <= cfg.stationary_tol) {
    return EvolveResult{std::move(s), std::move(trace), 0, true};
  }
  const auto total = static_cast<std::size_t>(std::floor(cfg.t_end / cfg.dt + 1e-9));
  std::size_t k = 0;
  bool converged = false;
  try {
    while (k < total) {
      if (k == cfg.max_steps) {
        throw NumericalError(fmt::format("max_steps = {} exceeded at t = {}", cfg.max_steps, s.t));
      }
      DynamicsState next = step(s, m, params, cfg.dt, cfg.scheme);
      ++k;
      next.t = static_cast<double>(k) * cfg.dt;
      s = std::move(next);
      converged = use_tol && s.residual_l2p <= cfg.stationary_tol;
      if (k % cfg.record_stride == 0 || k == total || converged) {
        record(trace, s, m, params, cfg.keep_densities);
      }
      if (converged) break;
    }
  } catch (const NumericalError& e) {
    throw EvolveError(e.what(), std::move(trace), std::move(s));
  }
  return EvolveResult{std::move(s), std::move(trace), k, converged};
}

DissipationReport dissipation_check(const EnergyTrace& trace, double tolerance) {
  DissipationReport report;
  report.tolerance = tolerance;
  const auto& rows = trace.rows;
  if (rows.size() < 3) {
    throw ValidationError("dissipation_check: trace needs at least 3 rows");
  }
  for (std::size_t j = 1; j + 1 < rows.size(); ++j) {
    const double rate = rows[j].residual_l2p * rows[j].residual_l2p;
    if (rate < 1e-8) continue;
    const double h1 = rows[j].t - rows[j - 1].t;
    const double h2 = rows[j + 1].t - rows[j].t;
    const double d = -h2 / (h1 * (h1 + h2)) * rows[j - 1].energy +
                     (h2 - h1) / (h1 * h2) * rows[j].energy +
                     h1 / (h2 * (h1 + h2)) * rows[j + 1].energy;
    report.max_relative_mismatch =
        std::max(report.max_relative_mismatch, std::abs(d + rate) / rate);
    ++report.testable_rows;
  }
  if (report.testable_rows == 0) {
    report.message = "no testable rows";
    return report;
  }
  report.passed = report.max_relative_mismatch <= tolerance;
  report.message = fmt::format("{} rows, max relative mismatch {:.3e} (tolerance {:.1e})",
                               report.testable_rows, report.max_relative_mismatch, tolerance);
  return report;
}

StationaryResult solve_stationary(const FreeEnergyModel& m, const Params& params,
                                  const GridDensity& guess, double tol,
                                  const StationaryOptions& options) {
  if (!(tol > 0.0)) throw ValidationError("solve_stationary: tol > 0 required");
  if (options.dt < 0.0) throw ValidationError("solve_stationary: dt >= 0 required");
  if (options.record_stride == 0) {
    throw ValidationError("solve_stationary: record_stride >= 1 required");
  }
  check_initial_ends(guess);
  EnergyTrace trace;
  DynamicsState s = DynamicsState::initial(guess, m, params);
  record(trace, s, m, params, false);
  double dt = options.dt > 0.0 ? options.dt : 0.9 * max_stable_dt(s, params);
  std::size_t k = 0;
  try {
    while (s.residual_l2p > tol) {
      if (k >= options.max_steps || s.t >= options.t_max) {
        throw NumericalError(fmt::format(
            "stationary solve did not converge: residual {:.3e} > tol {:.1e} after {} steps",
            s.residual_l2p, tol, k));
      }
      // halve until the guard admits the step; the state is kept
      while (dt > max_stable_dt(s, params)) {
        dt *= 0.5;
        if (dt < 1e-14) throw NumericalError("dt too large: stiffness guard unsatisfiable");
      }
      s = step(s, m, params, dt, options.scheme);
      ++k;
      if (k % options.record_stride == 0) record(trace, s, m, params, false);
    }
  } catch (const NumericalError& e) {
    throw EvolveError(e.what(), std::move(trace), std::move(s));
  }
  if (trace.rows.back().t != s.t) record(trace, s, m, params, false);
  const double energy = trace.rows.back().energy;
  return StationaryResult{s.p, s.lambda, energy, s.residual_l2p, k, std::move(trace)};
}

ExpRateReport exp_rate_report(const EnergyTrace& trace, const StationaryResult& stationary,
                              const Params& params) {
  if (params.gamma != 0.0) throw ValidationError("exp_rate_report: gamma = 0 required");
  if (trace.densities.size() != trace.rows.size()) {
    throw ValidationError("exp_rate_report: trace must be recorded with keep_densities");
  }
  if (trace.rows.empty()) throw ValidationError("exp_rate_report: trace too short");
  ExpRateReport rep{};
  rep.gap_monotone = true;
  const double gap0 = trace.rows.front().energy - stationary.energy_star;
  std::vector<double> ts, ys;
  double prev = std::numeric_limits<double>::infinity();
  const double s2 = params.sigma * params.sigma;
  for (std::size_t j = 0; j < trace.rows.size(); ++j) {
    const double gap = trace.rows[j].energy - stationary.energy_star;
    if (gap > prev + 1e-8) rep.gap_monotone = false;
    prev = gap;
    const double excess =
        0.25 * s2 * relative_fisher(trace.densities[j], stationary.p_star) - gap;
    rep.max_bound_excess = j == 0 ? excess : std::max(rep.max_bound_excess, excess);
    if (excess > 1e-8) ++rep.bound_violations;
    if (gap >= 1e-9 && gap <= gap0 / 10.0) {
      ts.push_back(trace.rows[j].t);
      ys.push_back(std::log(gap));
    }
  }
  rep.rows_used = ts.size();
  if (ts.size() < 5) {
    throw ValidationError(
        fmt::format("trace too short: {} rows with gap in [1e-9, gap0/10], need 5", ts.size()));
  }
  const auto n = static_cast<double>(ts.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    mt += ts[j];
    my += ys[j];
  }
  mt /= n;
  my /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    stt += (ts[j] - mt) * (ts[j] - mt);
    sty += (ts[j] - mt) * (ys[j] - my);
    syy += (ys[j] - my) * (ys[j] - my);
  }
  rep.slope = sty / stt;
  rep.rate = -rep.slope;
  rep.r_squared = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;
  return rep;
}

namespace {

// Nodes used for the envelope: resolved (not floored) and away from the Dirichlet ends.
bool envelope_node(const GridDensity& p, std::size_t i) {
  const std::size_t margin = std::max<std::size_t>(2, p.size() / 50);
  return i >= margin && i + margin < p.size() && p[i] > 1e-250;
}

}  // namespace

GaussianEnvelope fit_gaussian_envelope(std::span<const GridDensity> anchors) {
  if (anchors.empty()) throw ValidationError("fit_gaussian_envelope: at least one anchor");
  double a_min = std::numeric_limits<double>::infinity();
  double a_max = 0.0;
  for (const GridDensity& p : anchors) {
    // least squares u ~ a x^2 + b x + c via normal equations
    double s[5] = {0, 0, 0, 0, 0};
    double t[3] = {0, 0, 0};
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!envelope_node(p, i)) continue;
      const double x = p.grid().x(i);
      const double u = -std::log(p[i]);
      double xk = 1.0;
      for (int k = 0; k < 5; ++k) {
        s[k] += xk;
        if (k < 3) t[k] += xk * u;
        xk *= x;
      }
    }
    // rows: [s4 s3 s2; s3 s2 s1; s2 s1 s0] [a b c] = [t2 t1 t0]
    const double m[3][3] = {{s[4], s[3], s[2]}, {s[3], s[2], s[1]}, {s[2], s[1], s[0]}};
    const double rhs[3] = {t[2], t[1], t[0]};
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (!(std::abs(det) > 0.0)) throw NumericalError("fit_gaussian_envelope: singular fit");
    const double det_a = rhs[0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                         m[0][1] * (rhs[1] * m[2][2] - m[1][2] * rhs[2]) +
                         m[0][2] * (rhs[1] * m[2][1] - m[1][1] * rhs[2]);
    const double a = det_a / det;
    if (!(a > 0.0)) throw NumericalError("fit_gaussian_envelope: anchor is not confining");
    a_min = std::min(a_min, a);
    a_max = std::max(a_max, a);
  }
  GaussianEnvelope env{0.5 * a_min, 2.0 * a_max, 0.0};
  double worst = 0.0;
  for (const GridDensity& p : anchors) worst = std::max(worst, envelope_violation(p, env));
  env.offset = worst + 1.0;
  return env;
}

double envelope_violation(const GridDensity& p, const GaussianEnvelope& env) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!envelope_node(p, i)) continue;
    const double x = p.grid().x(i);
    const double u = -std::log(p[i]);
    worst = std::max(worst, env.lower_curvature * x * x - env.offset - u);
    worst = std::max(worst, u - env.upper_curvature * x * x - env.offset);
  }
  return worst;
}

GridField propagate_unnormalized(const GridField& f0,
                                 const std::function<GridField(double)>& potential,
                                 double sigma, double dt, double t_end) {
  if (!(dt > 0.0) || !(sigma > 0.0) || t_end < 0.0) {
    throw ValidationError("propagate_unnormalized: dt > 0, sigma > 0, t_end >= 0 required");
  }
  const Grid1D& grid = f0.grid();
  const std::size_t n = grid.size();
  const std::size_t m = n - 2;
  const double r = dt * sigma * sigma / (4.0 * grid.dx() * grid.dx());
  std::vector<double> f(f0.values().begin(), f0.values().end());
  f.front() = 0.0;
  f.back() = 0.0;
  const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
  std::vector<double> lower(m, -r), diag(m), upper(m, -r), rhs(m);
  for (std::size_t k = 0; k < steps; ++k) {
    const GridField v = potential(static_cast<double>(k) * dt);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t i = j + 1;
      const double q = 0.25 * dt * v[i];
      diag[j] = 1.0 + 2.0 * r + q;
      rhs[j] = (1.0 - 2.0 * r - q) * f[i] + r * (f[i - 1] + f[i + 1]);
    }
    const auto x = detail::solve_tridiagonal(lower, diag, upper, rhs);
    std::copy(x.begin(), x.end(), f.begin() + 1);
  }
  return GridField(grid, std::move(f));
}

}  // namespace fisherflow
