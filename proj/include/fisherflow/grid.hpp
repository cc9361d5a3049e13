#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace fisherflow {

/// Floor applied to density values by normalize().
inline constexpr double kDensityFloor = 1e-300;

/// Uniform grid on [x_min, x_max] with n nodes (n >= 3).
class Grid1D {
 public:
  Grid1D(double x_min, double x_max, std::size_t n);

  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  std::size_t size() const { return n_; }
  double dx() const { return dx_; }
  double x(std::size_t i) const { return x_min_ + static_cast<double>(i) * dx_; }
  std::vector<double> nodes() const;

  /// Trapezoid weights; sum(w) == x_max - x_min.
  std::vector<double> trapezoid_weights() const;

  friend bool operator==(const Grid1D&, const Grid1D&) = default;

 private:
  double x_min_;
  double x_max_;
  std::size_t n_;
  double dx_;
};

/// Samples of a function on a grid, arbitrary sign.
class GridField {
 public:
  GridField(Grid1D grid, std::vector<double> values);
  GridField(Grid1D grid, double constant);

  /// Evaluate f at every node.
  static GridField sample(const Grid1D& grid, const std::function<double(double)>& f);

  const Grid1D& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Piecewise-linear interpolation, clamped to the end values outside the grid.
  double interpolate(double x) const;

 private:
  Grid1D grid_;
  std::vector<double> values_;
};

/// Strictly positive density with unit trapezoid mass. Only normalize() and
/// from_normalized() construct it.
class GridDensity {
 public:
  const Grid1D& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  GridField as_field() const { return GridField(grid_, values_); }

  /// Adopts values that are already floored and normalized; verifies both.
  static GridDensity from_normalized(Grid1D grid, std::vector<double> values);

 private:
  GridDensity(Grid1D grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {}

  friend GridDensity normalize(const GridField& f);

  Grid1D grid_;
  std::vector<double> values_;
};

double integrate(const GridField& f);
double integrate(const Grid1D& grid, std::span<const double> values);

/// Central differences inside, second-order one-sided at the two ends.
GridField gradient(const GridField& f);

/// Three-point second difference; end nodes copy their interior neighbour.
GridField laplacian(const GridField& f);

/// Clamp below kDensityFloor and divide by the trapezoid mass.
GridDensity normalize(const GridField& f);

double moment(const GridDensity& p, int k);

/// Integral of |CDF_p - CDF_q| (1D Wasserstein-1).
double wasserstein1(const GridDensity& p, const GridDensity& q);

/// Max-node |p - q|.
double sup_distance(const GridDensity& p, const GridDensity& q);

/// Cumulative trapezoid integral, CDF[0] = 0.
std::vector<double> cumulative(const GridDensity& p);

/// Gaussian N(mean, variance) sampled on the grid and normalized.
GridDensity gaussian_density(const Grid1D& grid, double mean, double variance);

void require_same_grid(const Grid1D& a, const Grid1D& b, const char* what);

}  // namespace fisherflow
