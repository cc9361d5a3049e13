#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fisherflow/dynamics.hpp"
#include "fisherflow/functionals.hpp"
#include "fisherflow/grid.hpp"

namespace fisherflow {

// The weighted calculus below lives on the resolved nodes of p (p > 1e-280, a
// contiguous range). Edges carry sqrt(p_i p_{i+1}), nodes the trapezoid mass w_i p_i,
// and the generator is the flux divergence
//   (L f)_i = [c_{i+1/2} (f_{i+1} - f_i) - c_{i-1/2} (f_i - f_{i-1})] / (dx m_i),
// so int L f p = 0 and int |grad f|^2 p = -int f L f p hold to roundoff.

/// sum m_i f_i over resolved nodes.
double expectation(const GridDensity& p, const GridField& f);
/// sum c_e (f_{i+1} - f_i)^2 / dx over resolved edges.
double dirichlet_form(const GridDensity& p, const GridField& f);
/// L f = Delta f - grad u . grad f with u = -log p; zero off the resolved range.
GridField generator(const GridDensity& p, const GridField& f);

struct GapEstimate {
  double gap;
  double poincare_constant;
  double lowest;  // zero mode, ~0
};

/// Second-smallest eigenvalue of -L in L^2(p). Throws for grids above 4096 nodes.
GapEstimate spectral_gap(const GridDensity& p);

/// Smallest eigenvalue of -sigma^2 Delta_h + V on the interior nodes with Dirichlet
/// ends (Linear models): the minimum of F + sigma^2 I.
double ground_state_eigenvalue(const FreeEnergyModel& m, double sigma);

struct InequalityReport {
  double lhs;
  double rhs;
  double slack;  // rhs - lhs
  bool satisfied;
  double mean_generator;  // int L f p
  double ibp_defect;      // int |grad f|^2 p + int f L f p
};

/// lhs = (int f p)^2 int |grad f|^2 p / C_P,
/// rhs = int f^2 p int (L f)^2 p - (int f L f p)^2.
InequalityReport functional_inequality_check(const GridDensity& p, const GridField& f,
                                             double poincare_constant);

struct SweepRow {
  double sigma;
  double min_energy;   // F(p*) + sigma^2 I(p*)
  double potential;    // F(p*)
  double fisher;       // I(p*)
  double lambda;
  double gap_to_inf;   // min_energy - inf F; NaN without a closed form
  std::size_t steps;
};

struct SweepOptions {
  double tol = 1e-9;
  StationaryOptions stationary;
};

/// Stationary minimum of F + sigma^2 I for each sigma (gamma = 0). inf F is the grid
/// minimum of V for Linear models.
std::vector<SweepRow> gamma_sweep(const FreeEnergyModel& m, const std::vector<double>& sigmas,
                                  const SweepOptions& options = {});

struct ConvexityReport {
  std::size_t trials;
  std::size_t violations;      // slack < -1e-8
  double min_slack;
  double max_equality_error;   // |slack| with q = p
};

/// alpha I(p) + (1 - alpha) I(q) - I(alpha p + (1 - alpha) q) over random Gaussian
/// mixtures on `grid`; every trial also checks the q = p equality case.
ConvexityReport fisher_convexity_probe(std::size_t trials, std::uint64_t seed,
                                       const Grid1D& grid);

/// Slack of the convexity inequality for one pair.
double fisher_convexity_slack(const GridDensity& p, const GridDensity& q, double alpha);

/// F(q) - F(p) - int r_p (q - p) for the generalized free energy, r_p the first-order
/// residual at p. Nonnegative for every q when the free energy is convex.
double first_order_gap(const Params& params, const FreeEnergyModel& m, const GridDensity& p,
                       const GridDensity& q);

/// Random Gaussian mixture (1 to 3 components) with means within `spread` of `center`
/// and standard deviations in [0.3, 1.5], drawn from stream (seed, index).
GridDensity random_mixture(const Grid1D& grid, double center, double spread, std::uint64_t seed,
                           std::uint32_t index);

/// Test functions x^j exp(-x^2 / (2 s^2)), j = 0..9, s in {0.5, 1, 2, 4, inf}, each
/// scaled to unit L^2(p) norm.
std::vector<GridField> inequality_corpus(const GridDensity& p);

}  // namespace fisherflow
