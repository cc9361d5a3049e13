#pragma once

#include <cstddef>
#include <vector>

#include "fisherflow/dynamics.hpp"
#include "fisherflow/functionals.hpp"
#include "fisherflow/grid.hpp"

namespace fisherflow {

struct ProxConfig {
  double h = 0.1;
  double T = 1.0;
  double inner_tol = 1e-8;
  std::size_t inner_max_steps = 1'000'000;

  void validate() const;
  /// floor(T / h)
  std::size_t steps() const;
};

struct ProxStep {
  GridDensity p_next;
  /// lambda of the inner stationary solve
  double lambda_raw;
  /// int (dF/dp + (log p_next - log p_prev)/h - sigma^2 Delta sqrt(p)/sqrt(p)) p_next
  double lambda;
  double residual_l2p;
  std::size_t inner_steps;
};

/// argmin over p of  F(p) + sigma^2 I(p) + KL(p | p_prev) / h.
/// Solved as the stationary point of the model with potential V - log(p_prev)/h and
/// entropy weight 1/h.
ProxStep prox_step(const GridDensity& p_prev, const FreeEnergyModel& m, const Params& params,
                   const ProxConfig& cfg);

/// Residual of the proximal first-order condition at p_next, lambda included.
Residual prox_residual(const GridDensity& p_next, const GridDensity& p_prev,
                       const FreeEnergyModel& m, const Params& params, double h);

/// F(p) + sigma^2 I(p) + KL(p | p_prev) / h.
double prox_objective(const GridDensity& p, const GridDensity& p_prev, const FreeEnergyModel& m,
                      const Params& params, double h);

struct DiscreteFlow {
  double h;
  std::vector<GridDensity> densities;  // i = 0..N_h
  std::vector<double> lambdas;         // entry 0 unused (NaN)
  std::vector<double> lambdas_raw;     // entry 0 unused (NaN)
  std::vector<std::size_t> inner_steps;

  /// Piecewise constant: p^h_{floor(t/h)}, clamped to the last density.
  const GridDensity& at(double t) const;
};

DiscreteFlow jko_flow(const GridDensity& p0, const FreeEnergyModel& m, const Params& params,
                      const ProxConfig& cfg);

struct FlowComparison {
  std::size_t times_compared;
  double sup_norm;     // sup_t max_x |p^h_t - p_t|
  double wasserstein;  // sup_t W1(p^h_t, p_t)
};

/// Compares the flow with a continuous trace (recorded with keep_densities) at the
/// recorded times t = i h, i = 0..N_h.
FlowComparison compare_to_continuous(const DiscreteFlow& flow, const EnergyTrace& trace);

}  // namespace fisherflow
