#include "fisherflow/grid.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fisherflow/errors.hpp"

namespace fisherflow {

Grid1D::Grid1D(double x_min, double x_max, std::size_t n) : x_min_(x_min), x_max_(x_max), n_(n) {
  if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_min < x_max)) {
    throw ValidationError(fmt::format("grid requires x_min < x_max (got {}, {})", x_min, x_max));
  }
  if (n < 3) {
    throw ValidationError(fmt::format("grid requires n >= 3 (got {})", n));
  }
  dx_ = (x_max - x_min) / static_cast<double>(n - 1);
}

std::vector<double> Grid1D::nodes() const {
  std::vector<double> xs(n_);
  for (std::size_t i = 0; i < n_; ++i) xs[i] = x(i);
  return xs;
}

std::vector<double> Grid1D::trapezoid_weights() const {
  std::vector<double> w(n_, dx_);
  w.front() = 0.5 * dx_;
  w.back() = 0.5 * dx_;
  return w;
}

GridField::GridField(Grid1D grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw ValidationError(fmt::format("field has {} values for a grid of {} nodes",
                                      values_.size(), grid_.size()));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("non-finite field");
  }
}

GridField::GridField(Grid1D grid, double constant)
    : grid_(grid), values_(grid.size(), constant) {
  if (!std::isfinite(constant)) throw ValidationError("non-finite field");
}

GridField GridField::sample(const Grid1D& grid, const std::function<double(double)>& f) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.x(i));
  return GridField(grid, std::move(v));
}

double GridField::interpolate(double x) const {
  const double s = (x - grid_.x_min()) / grid_.dx();
  if (!(s > 0.0)) return values_.front();
  const auto last = static_cast<double>(values_.size() - 1);
  if (s >= last) return values_.back();
  const auto i = static_cast<std::size_t>(s);
  const double frac = s - static_cast<double>(i);
  return values_[i] + frac * (values_[i + 1] - values_[i]);
}

GridDensity GridDensity::from_normalized(Grid1D grid, std::vector<double> values) {
  if (values.size() != grid.size()) throw ValidationError("density size does not match grid");
  for (double v : values) {
    if (!std::isfinite(v) || v < kDensityFloor) {
      throw ValidationError("density values must be finite and >= the density floor");
    }
  }
  const double mass = integrate(grid, values);
  if (std::abs(mass - 1.0) > 1e-10) {
    throw ValidationError(fmt::format("density mass {} is not 1 within 1e-10", mass));
  }
  return GridDensity(grid, std::move(values));
}

double integrate(const Grid1D& grid, std::span<const double> values) {
  const std::size_t n = values.size();
  double interior = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) interior += values[i];
  const double total = grid.dx() * (interior + 0.5 * (values[0] + values[n - 1]));
  if (!std::isfinite(total)) throw ValidationError("non-finite field");
  return total;
}

double integrate(const GridField& f) { return integrate(f.grid(), f.values()); }

GridField gradient(const GridField& f) {
  const auto v = f.values();
  const std::size_t n = v.size();
  const double h = f.grid().dx();
  std::vector<double> g(n);
  for (std::size_t i = 1; i + 1 < n; ++i) g[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
  g[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
  g[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
  return GridField(f.grid(), std::move(g));
}

GridField laplacian(const GridField& f) {
  const auto v = f.values();
  const std::size_t n = v.size();
  const double inv_h2 = 1.0 / (f.grid().dx() * f.grid().dx());
  std::vector<double> l(n);
  for (std::size_t i = 1; i + 1 < n; ++i) l[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * inv_h2;
  l[0] = l[1];
  l[n - 1] = l[n - 2];
  return GridField(f.grid(), std::move(l));
}

GridDensity normalize(const GridField& f) {
  std::vector<double> v(f.values().begin(), f.values().end());
  // all-floor input carries no shape; refusing it beats returning a uniform density
  if (!(*std::max_element(v.begin(), v.end()) > kDensityFloor)) {
    throw NumericalError("degenerate mass: no value above the density floor");
  }
  for (double& x : v) x = std::max(x, kDensityFloor);
  const double mass = integrate(f.grid(), v);
  if (!std::isfinite(mass) || !(mass > 0.0)) throw NumericalError("degenerate mass");
  for (double& x : v) x = std::max(x / mass, kDensityFloor);
  return GridDensity(f.grid(), std::move(v));
}

double moment(const GridDensity& p, int k) {
  if (k < 0 || k > 4) throw ValidationError("moment order must be in [0, 4]");
  const Grid1D& g = p.grid();
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::pow(g.x(i), k) * p[i];
  return integrate(g, f);
}

void require_same_grid(const Grid1D& a, const Grid1D& b, const char* what) {
  if (!(a == b)) throw ValidationError(fmt::format("{}: densities live on different grids", what));
}

std::vector<double> cumulative(const GridDensity& p) {
  const double h = p.grid().dx();
  std::vector<double> c(p.size(), 0.0);
  for (std::size_t i = 1; i < c.size(); ++i) c[i] = c[i - 1] + 0.5 * h * (p[i - 1] + p[i]);
  return c;
}

double wasserstein1(const GridDensity& p, const GridDensity& q) {
  require_same_grid(p.grid(), q.grid(), "wasserstein1");
  const auto cp = cumulative(p);
  const auto cq = cumulative(q);
  std::vector<double> diff(cp.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = std::abs(cp[i] - cq[i]);
  return integrate(p.grid(), diff);
}

double sup_distance(const GridDensity& p, const GridDensity& q) {
  require_same_grid(p.grid(), q.grid(), "sup_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) m = std::max(m, std::abs(p[i] - q[i]));
  return m;
}

GridDensity gaussian_density(const Grid1D& grid, double mean, double variance) {
  if (!(variance > 0.0)) throw ValidationError("gaussian variance must be > 0");
  return normalize(GridField::sample(grid, [&](double x) {
    return std::exp(-(x - mean) * (x - mean) / (2.0 * variance));
  }));
}

}  // namespace fisherflow
