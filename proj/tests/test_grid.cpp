#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fisherflow/errors.hpp"
#include "fisherflow/grid.hpp"

namespace fisherflow {
namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

TEST(Grid, RejectsDegenerateGrids) {
  EXPECT_THROW(Grid1D(1.0, 1.0, 10), ValidationError);
  EXPECT_THROW(Grid1D(2.0, 1.0, 10), ValidationError);
  EXPECT_THROW(Grid1D(0.0, 1.0, 2), ValidationError);
}

TEST(Grid, TrapezoidWeightsSumToLength) {
  const Grid1D g(-3.0, 5.0, 101);
  double s = 0.0;
  for (double w : g.trapezoid_weights()) s += w;
  EXPECT_NEAR(s, 8.0, 1e-12);
  EXPECT_DOUBLE_EQ(g.x(100), 5.0);
}

TEST(Grid, TrapezoidErrorIsSecondOrder) {
  // int_0^pi sin = 2
  double prev = 0.0;
  for (std::size_t n : {33u, 65u, 129u, 257u}) {
    const Grid1D g(0.0, std::numbers::pi, n);
    const double err = std::abs(integrate(GridField::sample(g, [](double x) { return std::sin(x); })) - 2.0);
    if (prev > 0.0) {
      EXPECT_NEAR(prev / err, 4.0, 0.05);
    }
    prev = err;
  }
}

TEST(Grid, GradientAndLaplacianExactOnQuadratics) {
  const Grid1D g(-1.0, 2.0, 31);
  const GridField f = GridField::sample(g, [](double x) { return 3.0 * x * x - x + 2.0; });
  const GridField df = gradient(f);
  const GridField lf = laplacian(f);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(df[i], 6.0 * g.x(i) - 1.0, 1e-10);
    EXPECT_NEAR(lf[i], 6.0, 1e-9);
  }
}

TEST(Grid, InterpolationIsLinearAndClamped) {
  const Grid1D g(0.0, 1.0, 11);
  const GridField f = GridField::sample(g, [](double x) { return 2.0 * x + 1.0; });
  EXPECT_NEAR(f.interpolate(0.537), 2.074, 1e-12);
  EXPECT_DOUBLE_EQ(f.interpolate(-4.0), 1.0);
  EXPECT_DOUBLE_EQ(f.interpolate(9.0), 3.0);
}

TEST(Grid, NormalizeFloorsAndHasUnitMass) {
  const Grid1D g(-1.0, 1.0, 21);
  std::vector<double> v(21, 2.0);
  v[3] = -1.0;
  const GridDensity p = normalize(GridField(g, v));
  EXPECT_NEAR(integrate(p.grid(), p.values()), 1.0, 1e-14);
  EXPECT_GE(p[3], kDensityFloor);
  EXPECT_THROW(normalize(GridField(g, 0.0)), NumericalError);
}

TEST(Grid, FromNormalizedValidates) {
  const Grid1D g(0.0, 1.0, 11);
  EXPECT_NO_THROW(GridDensity::from_normalized(g, std::vector<double>(11, 1.0)));
  EXPECT_THROW(GridDensity::from_normalized(g, std::vector<double>(11, 1.1)), ValidationError);
  EXPECT_THROW(GridDensity::from_normalized(g, std::vector<double>(10, 1.0)), ValidationError);
  std::vector<double> bad(11, 1.0);
  bad[0] = 0.0;
  EXPECT_THROW(GridDensity::from_normalized(g, bad), ValidationError);
}

TEST(Grid, GaussianMomentsAndCdfMatchClosedForm) {
  const Grid1D g(-12.0, 12.0, 2401);
  const GridDensity p = gaussian_density(g, 0.5, 2.0);
  EXPECT_NEAR(moment(p, 1), 0.5, 1e-8);
  EXPECT_NEAR(moment(p, 2), 2.25, 1e-6);
  const std::vector<double> cdf = cumulative(p);
  for (std::size_t i = 0; i < g.size(); i += 200) {
    EXPECT_NEAR(cdf[i], normal_cdf((g.x(i) - 0.5) / std::sqrt(2.0)), 1e-5);
  }
}

TEST(Grid, WassersteinClosedForms) {
  const Grid1D g(-15.0, 15.0, 3001);
  // translation: W1 = shift
  EXPECT_NEAR(wasserstein1(gaussian_density(g, 0.0, 1.0), gaussian_density(g, 0.7, 1.0)), 0.7, 1e-5);
  // dilation x -> 2x of N(0,1): W1 = E|Z| = sqrt(2/pi)
  EXPECT_NEAR(wasserstein1(gaussian_density(g, 0.0, 1.0), gaussian_density(g, 0.0, 4.0)),
              std::sqrt(2.0 / std::numbers::pi), 1e-5);
  const GridDensity p = gaussian_density(g, 0.3, 1.5);
  EXPECT_EQ(wasserstein1(p, p), 0.0);
  EXPECT_EQ(sup_distance(p, p), 0.0);
}

TEST(Grid, MismatchedGridsAreRejected) {
  const GridDensity a = gaussian_density(Grid1D(-5.0, 5.0, 101), 0.0, 1.0);
  const GridDensity b = gaussian_density(Grid1D(-5.0, 5.0, 103), 0.0, 1.0);
  EXPECT_THROW(wasserstein1(a, b), ValidationError);
  EXPECT_THROW(sup_distance(a, b), ValidationError);
}

}  // namespace
}  // namespace fisherflow
