#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fisherflow/errors.hpp"
#include "fisherflow/functionals.hpp"

namespace fisherflow {
namespace {

const Grid1D kGrid(-12.0, 12.0, 2401);

FreeEnergyModel harmonic(const Grid1D& g = kGrid) {
  return FreeEnergyModel::linear(g, QuadraticSpec{1.0, 0.0}, PerturbationSpec{}, 2.0);
}

FreeEnergyModel gaussian_interaction(const Grid1D& g) {
  return FreeEnergyModel::interaction(
      g, QuadraticSpec{0.5, 0.0},
      PerturbationSpec{PerturbationSpec::Kind::kCosine, 0.2, 1.5, 0.0},
      KernelSpec{KernelSpec::Kind::kGaussian, 0.8, 0.7}, 1.0);
}

TEST(Params, ValidatesPreconditions) {
  EXPECT_THROW(Params(0.0), ValidationError);
  EXPECT_THROW(Params(-1.0), ValidationError);
  EXPECT_THROW(Params(1.0, -0.1), ValidationError);
  EXPECT_NO_THROW(Params(0.5, 1.0));
}

TEST(Model, DecompositionIsValidated) {
  EXPECT_THROW(FreeEnergyModel::linear(kGrid, QuadraticSpec{0.0, 0.0}, {}, 1.0), ValidationError);
  EXPECT_THROW(FreeEnergyModel::linear(kGrid, QuadraticSpec{1.0, 0.0}, {}, 2.5), ValidationError);
  EXPECT_THROW(FreeEnergyModel::linear(kGrid, QuadraticSpec{1.0, 0.0}, {}, 0.0), ValidationError);
}

TEST(Model, NonPositiveDefiniteKernelIsRejected) {
  const Grid1D g(-6.0, 6.0, 121);
  EXPECT_THROW(FreeEnergyModel::interaction(g, QuadraticSpec{}, {},
                                            KernelSpec{KernelSpec::Kind::kQuadratic, 0.5, 1.0}, 1.0),
               ValidationError);
  EXPECT_NO_THROW(gaussian_interaction(g));
}

TEST(Model, PerturbationLipschitzConstantsBoundFiniteDifferences) {
  for (const PerturbationSpec w : {PerturbationSpec{PerturbationSpec::Kind::kCosine, 0.3, 2.0, 0.0},
                                   PerturbationSpec{PerturbationSpec::Kind::kBump, -0.7, 0.4, 1.0}}) {
    double lip = 0.0;
    for (double x = -5.0; x < 5.0; x += 1e-3) lip = std::max(lip, std::abs(w(x + 1e-3) - w(x)) / 1e-3);
    EXPECT_LE(lip, w.lipschitz() * (1.0 + 1e-6));
    EXPECT_GE(lip, 0.99 * w.lipschitz());
  }
}

TEST(Model, ConvolutionMatchesBruteForceSum) {
  const Grid1D g(-6.0, 6.0, 121);
  const FreeEnergyModel m = gaussian_interaction(g);
  const GridDensity p = gaussian_density(g, 0.4, 0.8);
  const GridField c = m.convolve(p);
  const std::vector<double> w = g.trapezoid_weights();
  const KernelSpec k = *m.kernel();
  double pair = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) s += w[j] * k(g.x(i) - g.x(j)) * p[j];
    EXPECT_NEAR(c[i], s, 1e-12);
    pair += w[i] * p[i] * s;
  }
  double lin = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) lin += w[i] * m.potential()[i] * p[i];
  EXPECT_NEAR(free_energy(m, p), lin + 0.5 * pair, 1e-12);
  const GridField d = linear_derivative(m, p);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(d[i], m.potential()[i] + c[i], 1e-12);
}

TEST(Model, KernelSpectrumCertificate) {
  std::vector<double> gauss(64), quad(64);
  for (std::size_t l = 0; l < 64; ++l) {
    gauss[l] = std::exp(-0.5 * 0.01 * static_cast<double>(l * l));
    quad[l] = 0.01 * static_cast<double>(l * l);
  }
  EXPECT_GT(kernel_spectrum_min(gauss), -1e-10 * 64);
  EXPECT_LT(kernel_spectrum_min(quad), -1e-3);
}

TEST(Functionals, GaussianClosedForms) {
  for (double s2 : {0.5, 1.0, 2.0}) {
    const GridDensity p = gaussian_density(kGrid, 0.0, s2);
    EXPECT_NEAR(entropy(p), -0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * s2), 1e-6);
    EXPECT_NEAR(fisher_sqrt(p), 0.25 / s2, 1e-4);
    EXPECT_NEAR(fisher_log_form(p), 0.25 / s2, 1e-4);
    EXPECT_NEAR(free_energy(harmonic(), p), s2, 1e-6);
  }
}

TEST(Functionals, FisherDiscretizationConvergesAtSecondOrder) {
  double prev = 0.0;
  for (std::size_t n : {201u, 401u, 801u}) {
    const GridDensity p = gaussian_density(Grid1D(-10.0, 10.0, n), 0.0, 1.0);
    const double err = std::abs(fisher_sqrt(p) - 0.25);
    if (prev > 0.0) {
      EXPECT_NEAR(prev / err, 4.0, 0.3);
    }
    prev = err;
  }
}

TEST(Functionals, QuantumPotentialOfGaussian) {
  // sqrt p ~ exp(-x^2/(4 s2)):  Delta sqrt p / sqrt p = x^2/(4 s2^2) - 1/(2 s2)
  const double s2 = 1.5;
  const GridDensity p = gaussian_density(kGrid, 0.0, s2);
  const GridField q = quantum_potential(p);
  for (std::size_t i = 900; i <= 1500; i += 50) {
    const double x = kGrid.x(i);
    EXPECT_NEAR(q[i], x * x / (4 * s2 * s2) - 0.5 / s2, 1e-4);
  }
}

TEST(Functionals, ResidualIsMeanZeroAndLambdaIdentityHolds) {
  const Params params(0.7, 0.3);
  const FreeEnergyModel m = harmonic();
  const GridDensity p = gaussian_density(kGrid, 0.5, 0.8);
  const Residual r = first_order_residual(params, m, p);
  std::vector<double> rp(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) rp[i] = r.field[i] * p[i];
  EXPECT_NEAR(integrate(kGrid, rp), 0.0, 1e-12);
  const EnergyParts e = energy_parts(params, m, p);
  // lambda = int dF p + sigma^2 I + gamma H for the staggered Fisher term
  EXPECT_NEAR(r.lambda, e.potential + params.sigma * params.sigma * e.fisher + params.gamma * e.entropy,
              1e-10);
  EXPECT_NEAR(e.total, generalized_free_energy(params, m, p), 1e-15);
}

// d/de F(p + e (q - p)) at e = 0 equals int r (q - p)
void expect_residual_is_gradient(const Params& params, const FreeEnergyModel& m,
                                 const GridDensity& p, const GridDensity& q) {
  const Grid1D& g = p.grid();
  const auto mix = [&](double e) {
    std::vector<double> v(p.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - e) * p[i] + e * q[i];
    return generalized_free_energy(params, m, normalize(GridField(g, v)));
  };
  const double h = 1e-5;
  const double fd = (mix(h) - mix(-h)) / (2 * h);
  const Residual r = first_order_residual(params, m, p);
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = r.field[i] * (q[i] - p[i]);
  EXPECT_NEAR(integrate(g, f), fd, 1e-6 * (1.0 + std::abs(fd)));
}

TEST(Functionals, ResidualIsTheDiscreteGradient) {
  const Grid1D g(-8.0, 8.0, 401);
  const GridDensity p = gaussian_density(g, 0.2, 1.1);
  const GridDensity q = gaussian_density(g, -0.6, 0.7);
  expect_residual_is_gradient(Params(1.0), harmonic(g), p, q);
  expect_residual_is_gradient(Params(0.6, 1.0), harmonic(g), p, q);
  expect_residual_is_gradient(Params(0.8, 0.5), gaussian_interaction(g), p, q);
}

TEST(Functionals, RelativeQuantitiesMatchGaussianClosedForms) {
  const GridDensity p = gaussian_density(kGrid, 0.0, 1.0);
  const GridDensity q = gaussian_density(kGrid, 0.0, 2.0);
  // KL(N(0,1) | N(0,2)) = (1/2)(1/2 - 1 + log 2)
  EXPECT_NEAR(relative_entropy(p, q), 0.5 * (0.5 - 1.0 + std::log(2.0)), 1e-6);
  // int |grad log(p/q)|^2 p = int (x/2)^2 p = 1/4
  EXPECT_NEAR(relative_fisher(p, q), 0.25, 1e-4);
  EXPECT_NEAR(relative_entropy(p, p), 0.0, 1e-15);
  EXPECT_NEAR(relative_fisher(p, p), 0.0, 1e-15);
}

TEST(Functionals, InitialConditionIsExponentialOfPotential) {
  const InitialCondition ic{QuadraticSpec{0.625, 0.5}, PerturbationSpec{}};
  const GridDensity p = ic.materialize(kGrid);
  // exp(-0.625 (x - 0.5)^2) is N(0.5, 0.8)
  EXPECT_NEAR(moment(p, 1), 0.5, 1e-8);
  EXPECT_NEAR(moment(p, 2) - 0.25, 0.8, 1e-6);
  EXPECT_DOUBLE_EQ(ic.eta_lower(), 1.25);
}

}  // namespace
}  // namespace fisherflow
