#include "fisherflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "fisherflow/errors.hpp"
#include "fisherflow/philox.hpp"

namespace fisherflow {

namespace {

constexpr double kResolved = 1e-280;
constexpr std::size_t kDenseLimit = 4096;

struct Range {
  std::size_t lo;
  std::size_t hi;  // inclusive
};

Range resolved_range(const GridDensity& p) {
  std::size_t lo = 0;
  while (lo < p.size() && !(p[lo] > kResolved)) ++lo;
  if (lo == p.size()) throw NumericalError("density has no resolved nodes");
  std::size_t hi = p.size() - 1;
  while (!(p[hi] > kResolved)) --hi;
  if (hi == lo) throw NumericalError("density is resolved on a single node");
  return {lo, hi};
}

std::vector<double> node_mass(const GridDensity& p) {
  const auto w = p.grid().trapezoid_weights();
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = w[i] * p[i];
  return m;
}

double edge_weight(const GridDensity& p, std::size_t i) {
  return std::sqrt(p[i]) * std::sqrt(p[i + 1]);
}

}  // namespace

double expectation(const GridDensity& p, const GridField& f) {
  require_same_grid(p.grid(), f.grid(), "expectation");
  const Range r = resolved_range(p);
  const auto m = node_mass(p);
  double s = 0.0;
  for (std::size_t i = r.lo; i <= r.hi; ++i) s += m[i] * f[i];
  return s;
}

double dirichlet_form(const GridDensity& p, const GridField& f) {
  require_same_grid(p.grid(), f.grid(), "dirichlet_form");
  const Range r = resolved_range(p);
  double s = 0.0;
  for (std::size_t i = r.lo; i < r.hi; ++i) {
    const double d = f[i + 1] - f[i];
    s += edge_weight(p, i) * d * d;
  }
  return s / p.grid().dx();
}

GridField generator(const GridDensity& p, const GridField& f) {
  require_same_grid(p.grid(), f.grid(), "generator");
  const Range r = resolved_range(p);
  const auto m = node_mass(p);
  const double dx = p.grid().dx();
  std::vector<double> out(p.size(), 0.0);
  for (std::size_t i = r.lo; i <= r.hi; ++i) {
    double flux = 0.0;
    if (i < r.hi) flux += edge_weight(p, i) * (f[i + 1] - f[i]);
    if (i > r.lo) flux -= edge_weight(p, i - 1) * (f[i] - f[i - 1]);
    out[i] = flux / (dx * m[i]);
  }
  return GridField(p.grid(), std::move(out));
}

GapEstimate spectral_gap(const GridDensity& p) {
  if (p.size() > kDenseLimit) {
    throw ValidationError(
        fmt::format("use coarser grid: spectral_gap is dense and capped at {} nodes (got {})",
                    kDenseLimit, p.size()));
  }
  const Range r = resolved_range(p);
  const std::size_t n = r.hi - r.lo + 1;
  const auto m = node_mass(p);
  const double dx = p.grid().dx();
  // M^{-1/2} A M^{-1/2} with A the Dirichlet form matrix
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd sub(static_cast<Eigen::Index>(n - 1));
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::size_t i = r.lo + k;
    const double c = edge_weight(p, i) / dx;
    diag[static_cast<Eigen::Index>(k)] += c / m[i];
    diag[static_cast<Eigen::Index>(k + 1)] += c / m[i + 1];
    sub[static_cast<Eigen::Index>(k)] = -c / std::sqrt(m[i] * m[i + 1]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("spectral_gap: eigensolve failed");
  const auto& ev = solver.eigenvalues();
  const double gap = ev[1];
  if (!(gap > 0.0)) throw NumericalError("spectral_gap: nonpositive gap");
  return GapEstimate{gap, 1.0 / gap, ev[0]};
}

double ground_state_eigenvalue(const FreeEnergyModel& m, double sigma) {
  if (m.variant() != FreeEnergyModel::Variant::kLinear) {
    throw ValidationError("ground_state_eigenvalue: Linear model required");
  }
  if (!(sigma > 0.0)) throw ValidationError("ground_state_eigenvalue: sigma > 0 required");
  const std::size_t n = m.grid().size() - 2;
  const double c = sigma * sigma / (m.grid().dx() * m.grid().dx());
  Eigen::VectorXd diag(static_cast<Eigen::Index>(n));
  Eigen::VectorXd sub = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n - 1), -c);
  for (std::size_t k = 0; k < n; ++k) diag[static_cast<Eigen::Index>(k)] = 2.0 * c + m.potential()[k + 1];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("ground_state_eigenvalue: eigensolve failed");
  return solver.eigenvalues()[0];
}

InequalityReport functional_inequality_check(const GridDensity& p, const GridField& f,
                                             double poincare_constant) {
  if (!(poincare_constant > 0.0)) {
    throw ValidationError("functional_inequality_check: C_P > 0 required");
  }
  const GridField lf = generator(p, f);
  std::vector<double> tmp(p.size());
  const auto field = [&](auto fn) {
    for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = fn(i);
    return GridField(p.grid(), tmp);
  };
  const double mean_f = expectation(p, f);
  const double grad2 = dirichlet_form(p, f);
  const double f2 = expectation(p, field([&](std::size_t i) { return f[i] * f[i]; }));
  const double lf2 = expectation(p, field([&](std::size_t i) { return lf[i] * lf[i]; }));
  const double flf = expectation(p, field([&](std::size_t i) { return f[i] * lf[i]; }));
  InequalityReport rep{};
  rep.lhs = mean_f * mean_f * grad2 / poincare_constant;
  rep.rhs = f2 * lf2 - flf * flf;
  rep.slack = rep.rhs - rep.lhs;
  rep.satisfied = rep.slack >= -1e-9;
  rep.mean_generator = expectation(p, lf);
  rep.ibp_defect = grad2 + flf;
  return rep;
}

std::vector<SweepRow> gamma_sweep(const FreeEnergyModel& m, const std::vector<double>& sigmas,
                                  const SweepOptions& options) {
  if (sigmas.empty()) throw ValidationError("gamma_sweep: at least one sigma");
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    if (!(sigmas[k] > 0.0)) throw ValidationError("gamma_sweep: sigma > 0 required");
    if (k > 0 && !(sigmas[k] < sigmas[k - 1])) {
      throw ValidationError("gamma_sweep: sigmas must be strictly decreasing");
    }
  }
  const bool closed_form = m.variant() == FreeEnergyModel::Variant::kLinear;
  const double inf_f = closed_form ? m.potential_min() : std::numeric_limits<double>::quiet_NaN();
  const QuadraticSpec& g = m.confining();
  std::vector<SweepRow> rows;
  for (double sigma : sigmas) {
    // ground state of the quadratic part: variance sigma / (2 sqrt(a))
    const double var = std::max(sigma / (2.0 * std::sqrt(g.a)), 4.0 * m.grid().dx() * m.grid().dx());
    const GridDensity guess = gaussian_density(m.grid(), g.center, var);
    const Params params(sigma, 0.0);
    const StationaryResult st = solve_stationary(m, params, guess, options.tol, options.stationary);
    const EnergyParts e = energy_parts(params, m, st.p_star);
    rows.push_back(SweepRow{sigma, e.total, e.potential, e.fisher, st.lambda_star,
                            e.total - inf_f, st.steps});
  }
  return rows;
}

double fisher_convexity_slack(const GridDensity& p, const GridDensity& q, double alpha) {
  require_same_grid(p.grid(), q.grid(), "fisher_convexity_slack");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  const double beta = 1.0 - alpha;
  std::vector<double> mix(p.size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * p[i] + beta * q[i];
  const GridDensity r = normalize(GridField(p.grid(), std::move(mix)));
  return alpha * fisher_sqrt(p) + beta * fisher_sqrt(q) - fisher_sqrt(r);
}

namespace {

GridDensity mixture_from(PhiloxStream& s, const Grid1D& grid, double mid, double span) {
  const auto components = 1 + static_cast<int>(s.uniform() * 3.0);
  std::vector<double> mean(components), var(components), weight(components);
  for (int c = 0; c < components; ++c) {
    mean[c] = mid + span * (2.0 * s.uniform() - 1.0);
    const double sd = 0.3 + 1.2 * s.uniform();
    var[c] = sd * sd;
    weight[c] = 0.1 + s.uniform();
  }
  return normalize(GridField::sample(grid, [&](double x) {
    double v = 0.0;
    for (int c = 0; c < components; ++c) {
      const double z = x - mean[c];
      v += weight[c] * std::exp(-0.5 * z * z / var[c]) / std::sqrt(var[c]);
    }
    return v;
  }));
}

}  // namespace

ConvexityReport fisher_convexity_probe(std::size_t trials, std::uint64_t seed,
                                       const Grid1D& grid) {
  if (trials == 0) throw ValidationError("fisher_convexity_probe: trials >= 1 required");
  ConvexityReport rep{trials, 0, std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t t = 0; t < trials; ++t) {
    PhiloxStream s(seed, static_cast<std::uint32_t>(t), 0, 0);
    const double mid = 0.5 * (grid.x_min() + grid.x_max());
    const double span = 0.25 * (grid.x_max() - grid.x_min());
    const GridDensity p = mixture_from(s, grid, mid, span);
    const GridDensity q = mixture_from(s, grid, mid, span);
    const double alpha = 0.01 + 0.98 * s.uniform();
    const double slack = fisher_convexity_slack(p, q, alpha);
    rep.min_slack = std::min(rep.min_slack, slack);
    if (slack < -1e-8) ++rep.violations;
    rep.max_equality_error =
        std::max(rep.max_equality_error, std::abs(fisher_convexity_slack(p, p, alpha)));
  }
  return rep;
}

double first_order_gap(const Params& params, const FreeEnergyModel& m, const GridDensity& p,
                       const GridDensity& q) {
  require_same_grid(p.grid(), q.grid(), "first_order_gap");
  const Residual r = first_order_residual(params, m, p);
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = r.field[i] * (q[i] - p[i]);
  return generalized_free_energy(params, m, q) - generalized_free_energy(params, m, p) -
         integrate(p.grid(), f);
}

GridDensity random_mixture(const Grid1D& grid, double center, double spread, std::uint64_t seed,
                           std::uint32_t index) {
  PhiloxStream s(seed, index, 1, 0);
  return mixture_from(s, grid, center, spread);
}

std::vector<GridField> inequality_corpus(const GridDensity& p) {
  constexpr double kWidths[] = {0.5, 1.0, 2.0, 4.0, 0.0};
  std::vector<GridField> out;
  for (int j = 0; j <= 9; ++j) {
    for (double s : kWidths) {
      GridField f = GridField::sample(p.grid(), [&](double x) {
        const double g = s > 0.0 ? std::exp(-0.5 * x * x / (s * s)) : 1.0;
        return std::pow(x, j) * g;
      });
      std::vector<double> sq(p.size());
      for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = f[i] * f[i];
      const double norm = std::sqrt(expectation(p, GridField(p.grid(), std::move(sq))));
      if (!(norm > 0.0)) throw NumericalError("inequality_corpus: function vanishes under p");
      for (double& v : f.mutable_values()) v /= norm;
      out.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace fisherflow
