#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fisherflow/functionals.hpp"
#include "fisherflow/grid.hpp"

namespace fisherflow {

/// Worker count: FISHERFLOW_THREADS if set, otherwise the hardware concurrency.
std::size_t worker_threads();

/// Fixed-size population of birth-death Brownian walkers.
struct ParticleEnsemble {
  std::vector<double> positions;
  double t = 0.0;
  std::uint64_t seed = 0;
  /// Index of the next step; part of every random stream address.
  std::uint32_t step_index = 0;
  std::uint64_t births = 0;
  std::uint64_t deaths = 0;
};

/// Diffuse by sigma sqrt(dt) xi, then kill with probability 1 - exp(-rate+ dt) or clone
/// with probability 1 - exp(-rate- dt), then resample to exactly N walkers.
/// `threads` = 0 uses worker_threads().
ParticleEnsemble birth_death_step(const ParticleEnsemble& e, const GridField& rate, double dt,
                                  double sigma, std::size_t threads = 0);

/// Grid snapshots of dF/dp held piecewise constant in time: snapshot k is valid on
/// [times[k], times[k+1]), the last one up to horizon().
class PotentialHistory {
 public:
  void push(double t, GridField snapshot);
  void set_horizon(double t);

  const std::vector<double>& times() const { return times_; }
  const std::vector<GridField>& snapshots() const { return snapshots_; }
  double horizon() const { return horizon_; }
  bool empty() const { return times_.empty(); }

  /// Snapshot valid at time t.
  const GridField& at(double t) const;

 private:
  std::vector<double> times_;
  std::vector<GridField> snapshots_;
  double horizon_ = 0.0;
};

struct BarPsiEstimate {
  double mean;
  double std_error;
};

/// Feynman-Kac estimate of the unnormalized solution at (x, t):
///   E[exp(-int_0^t 1/2 dF/dp(p_{t-s}, x + sigma W_s) ds) psi0(x + sigma W_t)]
/// with M Euler paths of step dt and the trapezoid rule for the time integral.
/// Paths draw from streams (seed, path, query_id).
BarPsiEstimate estimate_barpsi(double x, double t, const PotentialHistory& hist,
                               const GridField& psi0, std::size_t M, double dt, double sigma,
                               std::uint64_t seed, std::uint32_t query_id);

/// Positions with nonnegative weights summing to 1.
class WeightedMeasure {
 public:
  WeightedMeasure(std::vector<double> positions, std::vector<double> weights);
  /// Normalizes nonnegative raw weights.
  static WeightedMeasure from_unnormalized(std::vector<double> positions,
                                           std::vector<double> raw);

  const std::vector<double>& positions() const { return positions_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return positions_.size(); }
  /// 1 / sum w^2
  double effective_sample_size() const;

 private:
  std::vector<double> positions_;
  std::vector<double> weights_;
};

/// sum w_i x_i^k, k in [0, 4].
double measure_moments(const WeightedMeasure& w, int k);

/// Integral over the grid of |CDF_w - CDF_p|.
double wasserstein1(const WeightedMeasure& w, const GridDensity& p);

struct ParticleConfig {
  std::size_t N = 20000;
  std::size_t M = 20000;
  double dt = 1e-2;
  double t_end = 1.0;
  std::uint64_t seed = 0;
  /// Lattice size for evaluating psi-bar (interpolated at the walkers); 0 evaluates
  /// at every walker.
  std::size_t barpsi_points = 161;
  /// Emit a weighted row every record_stride steps; 0 records t = 0 and t_end only.
  std::size_t record_stride = 0;
  /// 0 uses worker_threads().
  std::size_t threads = 0;

  void validate() const;
};

struct ParticleRow {
  double t;
  double mean;
  double m2;
  double ess;
  std::uint64_t births;
  std::uint64_t deaths;
};

struct SampleResult {
  WeightedMeasure measure;
  PotentialHistory history;
  ParticleEnsemble ensemble;
  std::vector<ParticleRow> rows;
  std::vector<std::string> warnings;
};

/// Walkers start i.i.d. from sqrt(p0) (normalized); each step records dF/dp of the
/// walker measure into the history and advances birth_death_step with rate dF/dp / 2.
/// The returned measure reweights the walkers by psi-bar.
SampleResult sample_flow(const GridDensity& p0, const FreeEnergyModel& m, const Params& params,
                         const ParticleConfig& cfg);

}  // namespace fisherflow
