#include "fisherflow/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "fisherflow/errors.hpp"

namespace fisherflow {

Params::Params(double sigma_, double gamma_) : sigma(sigma_), gamma(gamma_) {
  if (!std::isfinite(sigma) || !(sigma > 0.0)) {
    throw ValidationError(fmt::format("params: sigma > 0 required (got {})", sigma));
  }
  if (!std::isfinite(gamma) || gamma < 0.0) {
    throw ValidationError(fmt::format("params: gamma >= 0 required (got {})", gamma));
  }
}

double PerturbationSpec::operator()(double x) const {
  switch (kind) {
    case Kind::kNone:
      return 0.0;
    case Kind::kCosine:
      return amplitude * std::cos(scale * x);
    case Kind::kBump: {
      const double z = (x - center) / scale;
      return amplitude * std::exp(-0.5 * z * z);
    }
  }
  return 0.0;
}

double PerturbationSpec::lipschitz() const {
  switch (kind) {
    case Kind::kNone:
      return 0.0;
    case Kind::kCosine:
      return std::abs(amplitude * scale);
    case Kind::kBump:
      // max |z exp(-z^2/2)| = exp(-1/2)
      return std::abs(amplitude) / scale * std::exp(-0.5);
  }
  return 0.0;
}

double PerturbationSpec::gradient_lipschitz() const {
  switch (kind) {
    case Kind::kNone:
      return 0.0;
    case Kind::kCosine:
      return std::abs(amplitude) * scale * scale;
    case Kind::kBump:
      return std::abs(amplitude) / (scale * scale);
  }
  return 0.0;
}

double KernelSpec::operator()(double r) const {
  switch (kind) {
    case Kind::kZero:
      return 0.0;
    case Kind::kGaussian:
      return amplitude * std::exp(-0.5 * r * r / (width * width));
    case Kind::kQuadratic:
      return amplitude * r * r;
  }
  return 0.0;
}

double kernel_spectrum_min(const std::vector<double>& lags) {
  const std::size_t n = lags.size();
  if (n < 2) return lags.empty() ? 0.0 : lags[0];
  const double m = static_cast<double>(n - 1);
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    double s = lags[0] + ((j % 2 == 0) ? lags[n - 1] : -lags[n - 1]);
    for (std::size_t l = 1; l + 1 < n; ++l) {
      s += 2.0 * lags[l] * std::cos(std::numbers::pi * static_cast<double>(j * l) / m);
    }
    lowest = std::min(lowest, s);
  }
  return lowest;
}

namespace {

void check_decomposition(const QuadraticSpec& g, const PerturbationSpec& w, double kappa_lower) {
  if (!(g.a > 0.0) || !std::isfinite(g.a)) {
    throw ValidationError(fmt::format("model: g curvature a > 0 required (got {})", g.a));
  }
  if (!(kappa_lower > 0.0) || kappa_lower > g.curvature() * (1.0 + 1e-12)) {
    throw ValidationError(fmt::format(
        "model: 0 < kappa_lower <= Hessian of g = {} required (got {})", g.curvature(),
        kappa_lower));
  }
  if (w.kind == PerturbationSpec::Kind::kBump && !(w.scale > 0.0)) {
    throw ValidationError("model: bump width > 0 required");
  }
}

GridField sample_potential(const Grid1D& grid, const QuadraticSpec& g, const PerturbationSpec& w) {
  return GridField::sample(grid, [&](double x) { return g(x) + w(x); });
}

}  // namespace

FreeEnergyModel::FreeEnergyModel(Variant variant, GridField potential, QuadraticSpec g,
                                 PerturbationSpec w, std::optional<KernelSpec> kernel,
                                 double kappa_lower)
    : variant_(variant),
      potential_(std::move(potential)),
      g_(g),
      w_(w),
      kernel_(kernel),
      kappa_lower_(kappa_lower) {}

FreeEnergyModel FreeEnergyModel::linear(const Grid1D& grid, QuadraticSpec g, PerturbationSpec w,
                                        double kappa_lower) {
  check_decomposition(g, w, kappa_lower);
  return FreeEnergyModel(Variant::kLinear, sample_potential(grid, g, w), g, w, std::nullopt,
                         kappa_lower);
}

FreeEnergyModel FreeEnergyModel::interaction(const Grid1D& grid, QuadraticSpec g,
                                             PerturbationSpec w, KernelSpec kernel,
                                             double kappa_lower) {
  check_decomposition(g, w, kappa_lower);
  if (kernel.kind == KernelSpec::Kind::kGaussian && !(kernel.width > 0.0)) {
    throw ValidationError("model: gaussian kernel width > 0 required");
  }
  FreeEnergyModel m(Variant::kInteraction, sample_potential(grid, g, w), g, w, kernel,
                    kappa_lower);
  m.kernel_lags_.resize(grid.size());
  for (std::size_t l = 0; l < grid.size(); ++l) m.kernel_lags_[l] = kernel(grid.dx() * l);
  double scale = 0.0;
  for (double k : m.kernel_lags_) scale = std::max(scale, std::abs(k));
  if (scale > 0.0) {
    const double lowest = kernel_spectrum_min(m.kernel_lags_);
    if (lowest < -1e-10 * scale * static_cast<double>(grid.size())) {
      throw ValidationError(fmt::format(
          "model: interaction kernel is not positive semidefinite (spectrum min {})", lowest));
    }
  }
  return m;
}

FreeEnergyModel FreeEnergyModel::with_extra_potential(const GridField& extra) const {
  require_same_grid(grid(), extra.grid(), "with_extra_potential");
  FreeEnergyModel m = *this;
  std::vector<double> v(potential_.values().begin(), potential_.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += extra[i];
  m.potential_ = GridField(grid(), std::move(v));
  if (m.extra_) {
    std::vector<double> e(m.extra_->values().begin(), m.extra_->values().end());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += extra[i];
    m.extra_ = GridField(grid(), std::move(e));
  } else {
    m.extra_ = extra;
  }
  return m;
}

double FreeEnergyModel::potential_at(double x) const {
  double v = g_(x) + w_(x);
  if (extra_) v += extra_->interpolate(x);
  return v;
}

double FreeEnergyModel::potential_min() const {
  const auto v = potential_.values();
  return *std::min_element(v.begin(), v.end());
}

GridField FreeEnergyModel::convolve(const GridDensity& p) const {
  require_same_grid(grid(), p.grid(), "convolve");
  const std::size_t n = p.size();
  std::vector<double> out(n, 0.0);
  if (!kernel_) return GridField(grid(), std::move(out));
  const auto w = grid().trapezoid_weights();
  std::vector<double> wp(n);
  for (std::size_t j = 0; j < n; ++j) wp[j] = w[j] * p[j];
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += kernel_lags_[i > j ? i - j : j - i] * wp[j];
    out[i] = s;
  }
  return GridField(grid(), std::move(out));
}

GridDensity InitialCondition::materialize(const Grid1D& grid) const {
  if (!(v0.a > 0.0)) throw ValidationError("initial: v0 curvature a > 0 required");
  // shift by the minimum exponent before exponentiating
  std::vector<double> e(grid.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = v0(grid.x(i)) + w0(grid.x(i));
  const double lo = *std::min_element(e.begin(), e.end());
  for (double& x : e) x = std::exp(-(x - lo));
  return normalize(GridField(grid, std::move(e)));
}

double entropy(const GridDensity& p) {
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = p[i] * std::log(p[i]);
  return integrate(p.grid(), f);
}

double fisher_sqrt(const GridDensity& p) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const double d = std::sqrt(p[i + 1]) - std::sqrt(p[i]);
    s += d * d;
  }
  return s / p.grid().dx();
}

double fisher_log_form(const GridDensity& p) {
  std::vector<double> logp(p.size());
  for (std::size_t i = 0; i < logp.size(); ++i) logp[i] = std::log(p[i]);
  const GridField g = gradient(GridField(p.grid(), std::move(logp)));
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = g[i] * g[i] * p[i];
  return 0.25 * integrate(p.grid(), f);
}

double free_energy(const FreeEnergyModel& m, const GridDensity& p) {
  require_same_grid(m.grid(), p.grid(), "free_energy");
  const auto v = m.potential().values();
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = v[i] * p[i];
  double value = integrate(p.grid(), f);
  if (m.variant() == FreeEnergyModel::Variant::kInteraction) {
    const GridField kp = m.convolve(p);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = kp[i] * p[i];
    value += 0.5 * integrate(p.grid(), f);
  }
  return value;
}

GridField linear_derivative(const FreeEnergyModel& m, const GridDensity& p) {
  require_same_grid(m.grid(), p.grid(), "linear_derivative");
  if (m.variant() == FreeEnergyModel::Variant::kLinear) return m.potential();
  const GridField kp = m.convolve(p);
  std::vector<double> d(p.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = m.potential()[i] + kp[i];
  return GridField(p.grid(), std::move(d));
}

EnergyParts energy_parts(const Params& params, const FreeEnergyModel& m, const GridDensity& p) {
  EnergyParts e{};
  e.potential = free_energy(m, p);
  e.fisher = fisher_sqrt(p);
  e.entropy = entropy(p);
  e.total = e.potential + params.sigma * params.sigma * e.fisher;
  if (params.gamma != 0.0) e.total += params.gamma * e.entropy;
  return e;
}

double generalized_free_energy(const Params& params, const FreeEnergyModel& m,
                               const GridDensity& p) {
  return energy_parts(params, m, p).total;
}

GridField quantum_potential(const GridDensity& p) {
  const std::size_t n = p.size();
  std::vector<double> psi(n);
  for (std::size_t i = 0; i < n; ++i) psi[i] = std::sqrt(p[i]);
  const double inv_h2 = 1.0 / (p.grid().dx() * p.grid().dx());
  std::vector<double> q(n);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    q[i] = (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) * inv_h2 / psi[i];
  }
  q[0] = q[1];
  q[n - 1] = q[n - 2];
  return GridField(p.grid(), std::move(q));
}

Residual first_order_residual(const Params& params, const FreeEnergyModel& m,
                              const GridDensity& p) {
  return first_order_residual(params, linear_derivative(m, p), p);
}

Residual first_order_residual(const Params& params, const GridField& dF, const GridDensity& p) {
  require_same_grid(dF.grid(), p.grid(), "first_order_residual");
  const GridField q = quantum_potential(p);
  const double s2 = params.sigma * params.sigma;
  std::vector<double> r(p.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = dF[i] - s2 * q[i];
    if (params.gamma != 0.0) r[i] += params.gamma * std::log(p[i]);
  }
  std::vector<double> rp(p.size());
  for (std::size_t i = 0; i < r.size(); ++i) rp[i] = r[i] * p[i];
  const double lambda = integrate(p.grid(), rp) / integrate(p.grid(), p.values());
  for (double& x : r) x -= lambda;
  return Residual{GridField(p.grid(), std::move(r)), lambda};
}

double residual_l2(const GridDensity& p, const GridField& r) {
  require_same_grid(p.grid(), r.grid(), "residual_l2");
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = r[i] * r[i] * p[i];
  return std::sqrt(integrate(p.grid(), f));
}

double relative_entropy(const GridDensity& p, const GridDensity& q) {
  require_same_grid(p.grid(), q.grid(), "relative_entropy");
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = p[i] * std::log(p[i] / q[i]);
  return integrate(p.grid(), f);
}

double relative_fisher(const GridDensity& p, const GridDensity& q) {
  require_same_grid(p.grid(), q.grid(), "relative_fisher");
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const double d = std::sqrt(p[i + 1] / q[i + 1]) - std::sqrt(p[i] / q[i]);
    s += d * d * (std::sqrt(q[i]) * std::sqrt(q[i + 1]));
  }
  return 4.0 * s / p.grid().dx();
}

}  // namespace fisherflow
