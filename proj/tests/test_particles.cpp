#include <cmath>
#include <cstdlib>
#include <numbers>

#include <gtest/gtest.h>

#include "fisherflow/dynamics.hpp"
#include "fisherflow/errors.hpp"
#include "fisherflow/particles.hpp"
#include "fisherflow/philox.hpp"

namespace fisherflow {
namespace {

using Block = std::array<std::uint32_t, 4>;

// Known-answer vectors of the Philox4x32-10 reference implementation.
TEST(Philox, KnownAnswerVectors) {
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}),
            (Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                       {0xffffffffu, 0xffffffffu}),
            (Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                       {0xa4093822u, 0x299f31d0u}),
            (Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, StreamsAreReproducibleAndDistinct) {
  PhiloxStream a(7, 1, 2, 3), b(7, 1, 2, 3), c(7, 1, 2, 4), d(8, 1, 2, 3);
  for (int k = 0; k < 10; ++k) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_NE(x, c.uniform());
    EXPECT_NE(x, d.uniform());
    EXPECT_GT(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(Philox, NormalMoments) {
  PhiloxStream s(42, 0, 0, 0);
  const int n = 200000;
  double m1 = 0, m2 = 0, m4 = 0;
  for (int k = 0; k < n; ++k) {
    const double z = s.normal();
    m1 += z;
    m2 += z * z;
    m4 += z * z * z * z;
  }
  EXPECT_NEAR(m1 / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(m2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(m4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

ParticleEnsemble ensemble(std::size_t n, std::uint64_t seed) {
  ParticleEnsemble e;
  e.seed = seed;
  e.positions.assign(n, 0.0);
  return e;
}

TEST(BirthDeath, ZeroRateIsBrownianMotion) {
  const Grid1D g(-10.0, 10.0, 101);
  const double sigma = 0.7, dt = 0.01;
  ParticleEnsemble e = ensemble(20000, 3);
  for (int k = 0; k < 100; ++k) e = birth_death_step(e, GridField(g, 0.0), dt, sigma, 1);
  double m1 = 0, m2 = 0;
  for (double x : e.positions) {
    m1 += x;
    m2 += x * x;
  }
  m1 /= e.positions.size();
  const double var = m2 / e.positions.size() - m1 * m1;
  EXPECT_NEAR(var, sigma * sigma * 1.0, 0.05 * sigma * sigma);
  EXPECT_EQ(e.births, 0u);
  EXPECT_EQ(e.deaths, 0u);
  EXPECT_EQ(e.step_index, 100u);
  EXPECT_NEAR(e.t, 1.0, 1e-12);
}

TEST(BirthDeath, ConstantRateKillsTheExpectedFraction) {
  const Grid1D g(-10.0, 10.0, 101);
  const std::size_t n = 50000;
  for (double rate : {2.0, -2.0}) {
    const ParticleEnsemble e = birth_death_step(ensemble(n, 11), GridField(g, rate), 0.1, 1.0, 1);
    const double prob = 1.0 - std::exp(-std::abs(rate) * 0.1);
    const double events = static_cast<double>(rate > 0 ? e.deaths : e.births);
    EXPECT_NEAR(events / n, prob, 4.0 * std::sqrt(prob * (1 - prob) / n));
    EXPECT_EQ(e.positions.size(), n);
  }
}

TEST(BirthDeath, StabilityGuard) {
  const Grid1D g(-10.0, 10.0, 101);
  EXPECT_THROW(birth_death_step(ensemble(100, 1), GridField(g, 6.0), 0.1, 1.0), NumericalError);
  EXPECT_THROW(birth_death_step(ParticleEnsemble{}, GridField(g, 0.0), 0.1, 1.0), ValidationError);
}

TEST(BirthDeath, ResultIsIndependentOfThreadCount) {
  const Grid1D g(-5.0, 5.0, 101);
  const GridField rate = GridField::sample(g, [](double x) { return 0.5 * x * x - 0.5; });
  ParticleEnsemble a = ensemble(5000, 5), b = a;
  for (double& x : a.positions) x = 0.1;
  b = a;
  for (int k = 0; k < 20; ++k) {
    a = birth_death_step(a, rate, 0.01, 1.0, 1);
    b = birth_death_step(b, rate, 0.01, 1.0, 3);
  }
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.births, b.births);
  EXPECT_EQ(a.deaths, b.deaths);
}

TEST(History, PiecewiseConstantLookup) {
  const Grid1D g(0.0, 1.0, 5);
  PotentialHistory h;
  EXPECT_THROW(h.at(0.0), ValidationError);
  EXPECT_THROW(h.push(0.5, GridField(g, 0.0)), ValidationError);
  h.push(0.0, GridField(g, 1.0));
  h.push(0.5, GridField(g, 2.0));
  EXPECT_THROW(h.push(0.5, GridField(g, 3.0)), ValidationError);
  h.set_horizon(1.0);
  EXPECT_EQ(h.at(0.25)[0], 1.0);
  EXPECT_EQ(h.at(0.5)[0], 2.0);
  EXPECT_EQ(h.at(1.0)[0], 2.0);
}

TEST(BarPsi, ConstantPotentialAndConstantDatumIsExact) {
  const Grid1D g(-5.0, 5.0, 101);
  PotentialHistory h;
  h.push(0.0, GridField(g, 1.2));
  h.set_horizon(1.0);
  const BarPsiEstimate est = estimate_barpsi(0.3, 1.0, h, GridField(g, 1.0), 500, 0.01, 1.0, 9, 0);
  EXPECT_NEAR(est.mean, std::exp(-0.6), 1e-12);
  EXPECT_NEAR(est.std_error, 0.0, 1e-12);
  EXPECT_THROW(estimate_barpsi(0.3, 1.005, h, GridField(g, 1.0), 500, 0.01, 1.0, 9, 0),
               ValidationError);
  EXPECT_THROW(estimate_barpsi(0.3, 2.0, h, GridField(g, 1.0), 500, 0.01, 1.0, 9, 0),
               ValidationError);
}

// Feynman-Kac against the Crank-Nicolson solution of the same linear equation with a
// potential that switches at t = 0.5.
TEST(BarPsi, MatchesThePdeSolution) {
  const Grid1D g(-8.0, 8.0, 801);
  const double sigma = 1.0, dt = 0.01;
  const GridField v1 = GridField::sample(g, [](double x) { return x * x; });
  const GridField v2 = GridField::sample(g, [](double x) { return 0.5 * (x - 1.0) * (x - 1.0); });
  PotentialHistory h;
  h.push(0.0, v1);
  h.push(0.5, v2);
  h.set_horizon(1.0);
  const GridField psi0 = GridField::sample(g, [](double x) { return std::exp(-0.4 * (x - 0.5) * (x - 0.5)); });
  // the estimator looks back from time t, so the PDE sees V(t - s) forward in s
  const GridField pde = propagate_unnormalized(
      psi0, [&](double s) { return s < 0.5 - 1e-12 ? v1 : v2; }, sigma, 1e-4, 1.0);
  for (std::uint32_t q = 0; q < 5; ++q) {
    const double x = -1.0 + 0.6 * q;
    const BarPsiEstimate est = estimate_barpsi(x, 1.0, h, psi0, 20000, dt, sigma, 17, q);
    EXPECT_NEAR(est.mean, pde.interpolate(x), 4.0 * est.std_error + 0.02 * pde.interpolate(x))
        << "x = " << x;
  }
}

TEST(WeightedMeasure, ValidatesAndSummarizes) {
  EXPECT_THROW(WeightedMeasure({0.0, 1.0}, {0.5, 0.6}), ValidationError);
  EXPECT_THROW(WeightedMeasure({0.0, 1.0}, {1.5, -0.5}), ValidationError);
  EXPECT_THROW(WeightedMeasure({0.0}, {0.5, 0.5}), ValidationError);
  const WeightedMeasure m = WeightedMeasure::from_unnormalized({-1.0, 1.0, 3.0, 5.0}, {1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(m.effective_sample_size(), 4.0);
  EXPECT_DOUBLE_EQ(measure_moments(m, 1), 2.0);
  EXPECT_DOUBLE_EQ(measure_moments(m, 2), 9.0);
  EXPECT_THROW(WeightedMeasure::from_unnormalized({0.0}, {0.0}), NumericalError);
}

TEST(WeightedMeasure, WassersteinToAGridDensity) {
  const Grid1D g(-10.0, 10.0, 2001);
  // point mass at 0 against N(0,1): E|Z|
  EXPECT_NEAR(wasserstein1(WeightedMeasure({0.0}, {1.0}), gaussian_density(g, 0.0, 1.0)),
              std::sqrt(2.0 / std::numbers::pi), 1e-4);
  EXPECT_NEAR(wasserstein1(WeightedMeasure({0.5}, {1.0}), gaussian_density(g, 0.5, 1e-4)), 0.0, 1e-2);
}

TEST(SampleFlow, SmallRunTracksTheGridOracleAndIsThreadInvariant) {
  const Grid1D g(-8.0, 8.0, 801);
  const FreeEnergyModel m = FreeEnergyModel::linear(g, QuadraticSpec{1.0, 0.0}, PerturbationSpec{}, 2.0);
  const GridDensity p0 = InitialCondition{QuadraticSpec{0.625, 0.5}, PerturbationSpec{}}.materialize(g);
  ParticleConfig pc;
  pc.N = 4000;
  pc.M = 2000;
  pc.t_end = 0.5;
  pc.seed = 21;
  pc.barpsi_points = 41;
  pc.threads = 1;
  const SampleResult a = sample_flow(p0, m, Params(1.0), pc);
  pc.threads = 2;
  const SampleResult b = sample_flow(p0, m, Params(1.0), pc);
  EXPECT_EQ(a.measure.positions(), b.measure.positions());
  EXPECT_EQ(a.measure.weights(), b.measure.weights());
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(a.rows.front().t, 0.0);
  EXPECT_NEAR(a.rows.back().t, 0.5, 1e-12);

  DynamicsConfig dc;
  dc.dt = 1e-3;
  dc.t_end = 0.5;
  dc.record_stride = 500;
  const GridDensity oracle = evolve(p0, m, Params(1.0), dc).final_state.p;
  EXPECT_NEAR(measure_moments(a.measure, 1), moment(oracle, 1), 0.08);
  EXPECT_NEAR(measure_moments(a.measure, 2), moment(oracle, 2), 0.08);

  pc.N = 50;
  EXPECT_THROW(pc.validate(), ValidationError);
  pc.N = 4000;
  EXPECT_THROW(sample_flow(p0, m, Params(1.0, 0.5), pc), ValidationError);
}

}  // namespace
}  // namespace fisherflow
