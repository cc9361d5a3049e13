#include "fisherflow/particles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "fisherflow/errors.hpp"
#include "fisherflow/philox.hpp"
#include "parallel.hpp"

namespace fisherflow {

namespace {

// Third counter word of every stream.
enum Purpose : std::uint32_t {
  kStep = 1,
  kResample = 2,
  kInit = 3,
  kBarPsi = 4,
};

double neumaier_sum(std::span<const double> v) {
  double s = 0.0, c = 0.0;
  for (double x : v) {
    const double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  return s + c;
}

double max_abs(const GridField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

std::size_t worker_threads() {
  if (const char* env = std::getenv("FISHERFLOW_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
      throw ValidationError(
          fmt::format("FISHERFLOW_THREADS must be a positive integer (got '{}')", env));
    }
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ParticleEnsemble birth_death_step(const ParticleEnsemble& e, const GridField& rate, double dt,
                                  double sigma, std::size_t threads) {
  const std::size_t n = e.positions.size();
  if (n == 0) throw ValidationError("birth_death_step: empty ensemble");
  if (!(dt > 0.0) || !(sigma > 0.0)) {
    throw ValidationError("birth_death_step: dt > 0 and sigma > 0 required");
  }
  if (dt * max_abs(rate) > 0.5) {
    throw NumericalError(fmt::format("dt too large: dt * max|rate| = {:.3e} > 0.5",
                                     dt * max_abs(rate)));
  }
  if (threads == 0) threads = worker_threads();
  const double scale = sigma * std::sqrt(dt);
  std::vector<double> moved(n);
  std::vector<signed char> fate(n);  // -1 dies, 0 survives, +1 clones
  detail::parallel_for(n, threads, [&](std::size_t i) {
    PhiloxStream s(e.seed, static_cast<std::uint32_t>(i), e.step_index, kStep);
    const double x = e.positions[i] + scale * s.normal();
    const double eta = rate.interpolate(x);
    const double u = s.uniform();
    moved[i] = x;
    fate[i] = 0;
    if (eta > 0.0 && u < -std::expm1(-eta * dt)) fate[i] = -1;
    if (eta < 0.0 && u < -std::expm1(eta * dt)) fate[i] = 1;
  });

  ParticleEnsemble next;
  next.seed = e.seed;
  next.t = e.t + dt;
  next.step_index = e.step_index + 1;
  next.births = e.births;
  next.deaths = e.deaths;
  std::vector<double> pool;
  pool.reserve(n + n / 4);
  for (std::size_t i = 0; i < n; ++i) {
    if (fate[i] < 0) {
      ++next.deaths;
      continue;
    }
    pool.push_back(moved[i]);
    if (fate[i] > 0) {
      ++next.births;
      pool.push_back(moved[i]);
    }
  }
  if (pool.empty()) {
    throw NumericalError(fmt::format("population collapse at t = {}: every walker died", next.t));
  }
  PhiloxStream r(e.seed, 0, e.step_index, kResample);
  const std::size_t s = pool.size();
  if (s < n) {
    // rebirth at uniformly drawn survivors
    for (std::size_t j = s; j < n; ++j) {
      const auto k = static_cast<std::size_t>(r.uniform() * static_cast<double>(s));
      pool.push_back(pool[std::min(k, s - 1)]);
    }
  } else if (s > n) {
    // uniform subset of size n (partial Fisher-Yates)
    for (std::size_t j = 0; j < n; ++j) {
      const auto k = j + static_cast<std::size_t>(r.uniform() * static_cast<double>(s - j));
      std::swap(pool[j], pool[std::min(k, s - 1)]);
    }
    pool.resize(n);
  }
  next.positions = std::move(pool);
  return next;
}

void PotentialHistory::push(double t, GridField snapshot) {
  if (times_.empty()) {
    if (t != 0.0) throw ValidationError("potential history must start at t = 0");
  } else {
    if (!(t > times_.back())) throw ValidationError("potential history times must increase");
    require_same_grid(snapshots_.front().grid(), snapshot.grid(), "potential history");
  }
  times_.push_back(t);
  snapshots_.push_back(std::move(snapshot));
  horizon_ = std::max(horizon_, t);
}

void PotentialHistory::set_horizon(double t) {
  if (times_.empty() || t < times_.back()) {
    throw ValidationError("potential history horizon precedes its last snapshot");
  }
  horizon_ = t;
}

const GridField& PotentialHistory::at(double t) const {
  if (times_.empty()) throw ValidationError("potential history is empty");
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const auto k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
  return snapshots_[k];
}

BarPsiEstimate estimate_barpsi(double x, double t, const PotentialHistory& hist,
                               const GridField& psi0, std::size_t M, double dt, double sigma,
                               std::uint64_t seed, std::uint32_t query_id) {
  if (M == 0 || !(dt > 0.0) || !(sigma > 0.0) || t < 0.0) {
    throw ValidationError("estimate_barpsi: M >= 1, dt > 0, sigma > 0, t >= 0 required");
  }
  if (t == 0.0) return {psi0.interpolate(x), 0.0};
  const auto steps = static_cast<std::size_t>(std::llround(t / dt));
  if (steps == 0 || std::abs(static_cast<double>(steps) * dt - t) > 1e-9 * std::max(1.0, t)) {
    throw ValidationError(fmt::format("estimate_barpsi: t = {} is not a multiple of dt = {}", t, dt));
  }
  if (hist.empty() || t > hist.horizon() + 1e-9 * std::max(1.0, t)) {
    throw ValidationError(fmt::format("estimate_barpsi: t = {} beyond history", t));
  }
  // step k covers physical times [t - (k+1) dt, t - k dt]; potential frozen at its start
  std::vector<const GridField*> fields(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double start = t - static_cast<double>(k + 1) * dt;
    fields[k] = &hist.at(start + 1e-7 * dt);
  }
  const double scale = sigma * std::sqrt(dt);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    PhiloxStream s(seed, static_cast<std::uint32_t>(m), query_id, kBarPsi);
    double pos = x;
    double integral = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      const double next = pos + scale * s.normal();
      integral += 0.25 * dt * (fields[k]->interpolate(pos) + fields[k]->interpolate(next));
      pos = next;
    }
    const double v = std::exp(-integral) * psi0.interpolate(pos);
    const double d = v - mean;
    mean += d / static_cast<double>(m + 1);
    m2 += d * (v - mean);
  }
  const double var = M > 1 ? m2 / static_cast<double>(M - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(M))};
}

WeightedMeasure::WeightedMeasure(std::vector<double> positions, std::vector<double> weights)
    : positions_(std::move(positions)), weights_(std::move(weights)) {
  if (positions_.empty() || positions_.size() != weights_.size()) {
    throw ValidationError("weighted measure: positions and weights must be nonempty and aligned");
  }
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    if (!std::isfinite(positions_[i]) || !std::isfinite(weights_[i]) || weights_[i] < 0.0) {
      throw ValidationError("weighted measure: finite positions and weights >= 0 required");
    }
  }
  const double total = neumaier_sum(weights_);
  if (std::abs(total - 1.0) > 1e-12) {
    throw ValidationError(fmt::format("weighted measure: weights sum to {} not 1", total));
  }
}

WeightedMeasure WeightedMeasure::from_unnormalized(std::vector<double> positions,
                                                   std::vector<double> raw) {
  for (double w : raw) {
    if (!std::isfinite(w) || w < 0.0) {
      throw NumericalError("weighted measure: raw weights must be finite and >= 0");
    }
  }
  const double total = neumaier_sum(raw);
  if (!(total > 0.0)) throw NumericalError("weighted measure: degenerate weights");
  for (double& w : raw) w /= total;
  return WeightedMeasure(std::move(positions), std::move(raw));
}

double WeightedMeasure::effective_sample_size() const {
  std::vector<double> sq(weights_.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = weights_[i] * weights_[i];
  return 1.0 / neumaier_sum(sq);
}

double measure_moments(const WeightedMeasure& w, int k) {
  if (k < 0 || k > 4) throw ValidationError("moment order must be in [0, 4]");
  std::vector<double> terms(w.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    terms[i] = w.weights()[i] * std::pow(w.positions()[i], k);
  }
  return neumaier_sum(terms);
}

double wasserstein1(const WeightedMeasure& w, const GridDensity& p) {
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return w.positions()[a] < w.positions()[b]; });
  const auto cp = cumulative(p);
  std::vector<double> diff(p.size());
  std::size_t j = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p.grid().x(i);
    while (j < order.size() && w.positions()[order[j]] <= x) acc += w.weights()[order[j++]];
    diff[i] = std::abs(acc - cp[i]);
  }
  return integrate(p.grid(), diff);
}

void ParticleConfig::validate() const {
  if (N < 100) throw ValidationError(fmt::format("particles: N >= 100 required (got {})", N));
  if (M < 100) throw ValidationError(fmt::format("particles: M >= 100 required (got {})", M));
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ValidationError(fmt::format("particles: dt > 0 required (got {})", dt));
  }
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) {
    throw ValidationError(fmt::format("particles: t_end >= 0 required (got {})", t_end));
  }
  if (barpsi_points == 1) throw ValidationError("particles: barpsi_points = 0 or >= 2 required");
}

namespace {

// dF/dp of the walker measure on the grid: V + K * mu with mu binned to nearest nodes.
GridField mean_field(const FreeEnergyModel& m, std::span<const double> walkers) {
  const auto& kernel = m.kernel();
  if (!kernel || kernel->kind == KernelSpec::Kind::kZero || kernel->amplitude == 0.0) {
    return m.potential();
  }
  const Grid1D& g = m.grid();
  const std::size_t n = g.size();
  std::vector<double> mass(n, 0.0);
  const double unit = 1.0 / static_cast<double>(walkers.size());
  for (double x : walkers) {
    const double s = std::round((x - g.x_min()) / g.dx());
    const auto i = static_cast<std::size_t>(std::clamp(s, 0.0, static_cast<double>(n - 1)));
    mass[i] += unit;
  }
  std::vector<double> lags(n);
  for (std::size_t l = 0; l < n; ++l) lags[l] = (*kernel)(g.dx() * static_cast<double>(l));
  std::vector<double> v(m.potential().values().begin(), m.potential().values().end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mass[j] != 0.0) s += lags[i > j ? i - j : j - i] * mass[j];
    }
    v[i] += s;
  }
  return GridField(g, std::move(v));
}

std::vector<double> sample_initial(const GridField& psi0, std::size_t n, std::uint64_t seed) {
  const Grid1D& g = psi0.grid();
  std::vector<double> c(g.size(), 0.0);
  for (std::size_t i = 1; i < c.size(); ++i) c[i] = c[i - 1] + 0.5 * g.dx() * (psi0[i - 1] + psi0[i]);
  const double total = c.back();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    PhiloxStream s(seed, static_cast<std::uint32_t>(i), 0, kInit);
    const double u = s.uniform() * total;
    const auto it = std::upper_bound(c.begin(), c.end(), u);
    const std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(it - c.begin()), 1,
                                                  c.size() - 1);
    const double width = c[j] - c[j - 1];
    const double frac = width > 0.0 ? (u - c[j - 1]) / width : 0.5;
    out[i] = g.x(j - 1) + frac * g.dx();
  }
  return out;
}

WeightedMeasure reweight(const std::vector<double>& walkers, double t,
                         const PotentialHistory& hist, const GridField& psi0,
                         const ParticleConfig& cfg, double sigma, std::size_t threads) {
  std::vector<double> raw(walkers.size());
  if (t == 0.0) {
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = psi0.interpolate(walkers[i]);
  } else if (cfg.barpsi_points == 0) {
    detail::parallel_for(walkers.size(), threads, [&](std::size_t i) {
      raw[i] = estimate_barpsi(walkers[i], t, hist, psi0, cfg.M, cfg.dt, sigma, cfg.seed,
                               static_cast<std::uint32_t>(i))
                   .mean;
    });
  } else {
    const auto [lo_it, hi_it] = std::minmax_element(walkers.begin(), walkers.end());
    const double lo = *lo_it;
    const double hi = std::max(*hi_it, lo + 1e-12);
    const std::size_t L = cfg.barpsi_points;
    const double step = (hi - lo) / static_cast<double>(L - 1);
    std::vector<double> lattice(L);
    detail::parallel_for(L, threads, [&](std::size_t k) {
      lattice[k] = estimate_barpsi(lo + step * static_cast<double>(k), t, hist, psi0, cfg.M,
                                   cfg.dt, sigma, cfg.seed, static_cast<std::uint32_t>(k))
                       .mean;
    });
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double s = std::clamp((walkers[i] - lo) / step, 0.0, static_cast<double>(L - 1));
      const auto k = std::min(static_cast<std::size_t>(s), L - 2);
      const double f = s - static_cast<double>(k);
      raw[i] = lattice[k] + f * (lattice[k + 1] - lattice[k]);
    }
  }
  for (double& w : raw) w = std::max(w, 0.0);
  return WeightedMeasure::from_unnormalized(walkers, std::move(raw));
}

ParticleRow make_row(const WeightedMeasure& w, const ParticleEnsemble& e) {
  return ParticleRow{e.t, measure_moments(w, 1), measure_moments(w, 2),
                     w.effective_sample_size(), e.births, e.deaths};
}

}  // namespace

SampleResult sample_flow(const GridDensity& p0, const FreeEnergyModel& m, const Params& params,
                         const ParticleConfig& cfg) {
  cfg.validate();
  if (params.gamma != 0.0) throw ValidationError("particles: gamma = 0 required");
  require_same_grid(p0.grid(), m.grid(), "sample_flow");
  const std::size_t threads = cfg.threads != 0 ? cfg.threads : worker_threads();
  std::vector<double> root(p0.size());
  for (std::size_t i = 0; i < root.size(); ++i) root[i] = std::sqrt(p0[i]);
  const GridField psi0(p0.grid(), std::move(root));

  ParticleEnsemble e;
  e.seed = cfg.seed;
  e.positions = sample_initial(psi0, cfg.N, cfg.seed);
  PotentialHistory hist;
  std::vector<ParticleRow> rows;
  rows.push_back(make_row(reweight(e.positions, 0.0, hist, psi0, cfg, params.sigma, threads), e));

  const auto steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
  for (std::size_t k = 0; k < steps; ++k) {
    const GridField field = mean_field(m, e.positions);
    std::vector<double> half(field.values().begin(), field.values().end());
    for (double& v : half) v *= 0.5;
    hist.push(static_cast<double>(k) * cfg.dt, field);
    e = birth_death_step(e, GridField(field.grid(), std::move(half)), cfg.dt, params.sigma,
                         threads);
    e.t = static_cast<double>(k + 1) * cfg.dt;
    hist.set_horizon(e.t);
    if (cfg.record_stride != 0 && (k + 1) % cfg.record_stride == 0 && k + 1 != steps) {
      rows.push_back(
          make_row(reweight(e.positions, e.t, hist, psi0, cfg, params.sigma, threads), e));
    }
  }
  WeightedMeasure measure = reweight(e.positions, e.t, hist, psi0, cfg, params.sigma, threads);
  if (steps > 0) rows.push_back(make_row(measure, e));
  std::vector<std::string> warnings;
  const double ess = measure.effective_sample_size();
  if (ess < static_cast<double>(cfg.N) / 10.0) {
    warnings.push_back(fmt::format("effective sample size {:.1f} < N/10 = {:.1f}", ess,
                                   static_cast<double>(cfg.N) / 10.0));
  }
  return SampleResult{std::move(measure), std::move(hist), std::move(e), std::move(rows),
                      std::move(warnings)};
}

}  // namespace fisherflow
