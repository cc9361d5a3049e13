#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fisherflow/errors.hpp"
#include "fisherflow/functionals.hpp"
#include "fisherflow/grid.hpp"

namespace fisherflow {

/// Time discretization of the psi equation
///   d/dt psi = (sigma^2/2) Delta psi - 1/2 (dF/dp + gamma log p - lambda) psi
/// with the potential frozen at the start of each step and homogeneous Dirichlet
/// ends.
enum class TimeScheme {
  /// Backward Euler on the frozen linear operator. Its fixed points are exactly the
  /// discrete stationary points.
  kImplicit,
  /// Potential half-steps around a Crank-Nicolson diffusion step.
  kStrangCrankNicolson,
};

struct DynamicsConfig {
  double dt = 1e-3;
  double t_end = 10.0;
  std::size_t record_stride = 10;
  /// Stop once the residual L2(p) norm drops to this value; 0 disables.
  double stationary_tol = 0.0;
  std::size_t max_steps = 10'000'000;
  TimeScheme scheme = TimeScheme::kImplicit;
  /// Keep the density of every recorded row in the trace.
  bool keep_densities = false;

  void validate() const;
};

struct DynamicsState {
  double t;
  GridField psi;          // psi >= 0, int psi^2 = 1
  GridDensity p;          // psi^2 renormalized
  GridField derivative;   // dF/dp(p, .)
  double lambda;
  double residual_l2p;

  static DynamicsState initial(const GridDensity& p0, const FreeEnergyModel& m,
                               const Params& params);
};

struct TraceRow {
  double t;
  double F;
  double I;
  double H;
  double energy;
  double residual_l2p;
  double lambda;
  double m2;
  double boundary_mass;
};

struct EnergyTrace {
  std::vector<TraceRow> rows;
  /// Row-aligned densities when DynamicsConfig::keep_densities is set.
  std::vector<GridDensity> densities;
};

/// p at the outermost free nodes (1 and n-2).
double boundary_mass(const GridDensity& p);

/// Largest dt the stiffness guard admits for this state.
double max_stable_dt(const DynamicsState& s, const Params& params);

/// One time step. Throws NumericalError("dt too large") when the stiffness guard
/// fails and NumericalError("domain too small") when mass reaches the ends.
DynamicsState step(const DynamicsState& s, const FreeEnergyModel& m, const Params& params,
                   double dt, TimeScheme scheme = TimeScheme::kImplicit);

struct EvolveResult {
  DynamicsState final_state;
  EnergyTrace trace;
  std::size_t steps;
  bool converged;
};

/// Evolution failure that keeps everything recorded before the failure.
class EvolveError : public NumericalError {
 public:
  EvolveError(const std::string& what, EnergyTrace trace, std::optional<DynamicsState> last)
      : NumericalError(what), trace_(std::move(trace)), last_(std::move(last)) {}
  const EnergyTrace& trace() const { return trace_; }
  const std::optional<DynamicsState>& last_state() const { return last_; }

 private:
  EnergyTrace trace_;
  std::optional<DynamicsState> last_;
};

EvolveResult evolve(const GridDensity& p0, const FreeEnergyModel& m, const Params& params,
                    const DynamicsConfig& cfg);

struct DissipationReport {
  std::size_t testable_rows = 0;
  double max_relative_mismatch = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  std::string message;
};

/// Compares a second-order finite difference of the energy column with
/// -residual_l2p^2 on rows where residual_l2p^2 >= 1e-8.
DissipationReport dissipation_check(const EnergyTrace& trace, double tolerance = 2e-2);

struct StationaryOptions {
  /// 0 picks dt from the stiffness guard of the initial state.
  double dt = 0.0;
  double t_max = 1e5;
  std::size_t max_steps = 5'000'000;
  std::size_t record_stride = 100;
  TimeScheme scheme = TimeScheme::kImplicit;
};

struct StationaryResult {
  GridDensity p_star;
  double lambda_star;
  double energy_star;
  double residual_l2p;
  std::size_t steps;
  EnergyTrace trace;
};

StationaryResult solve_stationary(const FreeEnergyModel& m, const Params& params,
                                  const GridDensity& guess, double tol,
                                  const StationaryOptions& options = {});

struct ExpRateReport {
  double rate;        // c in gap_t <= exp(-c t) gap_0
  double slope;       // fitted d log(gap)/dt
  double r_squared;
  std::size_t rows_used;
  bool gap_monotone;
  std::size_t bound_violations;  // rows with sigma^2/4 I(p_t|p*) > gap_t + 1e-8
  double max_bound_excess;
};

/// Requires gamma = 0 and a trace recorded with keep_densities.
ExpRateReport exp_rate_report(const EnergyTrace& trace, const StationaryResult& stationary,
                              const Params& params);

/// Quadratic sandwich c_lo x^2 - C <= -log p <= c_hi x^2 + C.
struct GaussianEnvelope {
  double lower_curvature;
  double upper_curvature;
  double offset;
};

/// Fits the sandwich once from anchor densities (typically p_0 and p*).
GaussianEnvelope fit_gaussian_envelope(std::span<const GridDensity> anchors);

/// Largest violation of the sandwich over nodes away from the ends (<= 0 inside).
double envelope_violation(const GridDensity& p, const GaussianEnvelope& env);

/// Unnormalized linear flow d/dt f = (sigma^2/2) Delta f - 1/2 V(t) f by Crank-Nicolson
/// with V(t) frozen at the start of each step; Dirichlet ends.
GridField propagate_unnormalized(const GridField& f0,
                                 const std::function<GridField(double)>& potential,
                                 double sigma, double dt, double t_end);

}  // namespace fisherflow
