#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fisherflow/grid.hpp"

namespace fisherflow {

/// Temperature sigma and entropy weight gamma of the generalized free energy.
struct Params {
  Params(double sigma, double gamma = 0.0);
  double sigma;
  double gamma;
};

/// Strongly convex part g(x) = a (x - center)^2, Hessian 2a.
struct QuadraticSpec {
  double a = 1.0;
  double center = 0.0;

  double operator()(double x) const { return a * (x - center) * (x - center); }
  double curvature() const { return 2.0 * a; }
};

/// Bounded-gradient perturbation w added to a quadratic.
struct PerturbationSpec {
  enum class Kind { kNone, kCosine, kBump };
  Kind kind = Kind::kNone;
  double amplitude = 0.0;
  double scale = 1.0;   // frequency for kCosine, width for kBump
  double center = 0.0;  // kBump only

  double operator()(double x) const;
  /// Lipschitz constant of w.
  double lipschitz() const;
  /// Lipschitz constant of w'.
  double gradient_lipschitz() const;
};

/// Even interaction kernel K(r).
struct KernelSpec {
  enum class Kind { kZero, kGaussian, kQuadratic };
  Kind kind = Kind::kZero;
  double amplitude = 0.0;
  double width = 1.0;  // kGaussian only

  double operator()(double r) const;
};

/// Smallest eigenvalue of the circulant embedding of the sampled kernel lags
/// (a DCT-I of the lag sequence). Nonnegative => kernel matrix is PSD.
double kernel_spectrum_min(const std::vector<double>& lags);

/// Convex potential F with closed-form linear derivative.
/// Linear:      F(p) = int V p
/// Interaction: F(p) = int V p + 1/2 int int K(x - y) p(x) p(y)
class FreeEnergyModel {
 public:
  enum class Variant { kLinear, kInteraction };

  static FreeEnergyModel linear(const Grid1D& grid, QuadraticSpec g, PerturbationSpec w,
                                double kappa_lower);
  static FreeEnergyModel interaction(const Grid1D& grid, QuadraticSpec g, PerturbationSpec w,
                                     KernelSpec kernel, double kappa_lower);

  /// Same model with `extra` added to V (kernel unchanged).
  FreeEnergyModel with_extra_potential(const GridField& extra) const;

  Variant variant() const { return variant_; }
  const Grid1D& grid() const { return potential_.grid(); }
  const GridField& potential() const { return potential_; }
  const QuadraticSpec& confining() const { return g_; }
  const PerturbationSpec& perturbation() const { return w_; }
  const std::optional<KernelSpec>& kernel() const { return kernel_; }
  double kappa_lower() const { return kappa_lower_; }
  double kappa_upper() const { return g_.curvature(); }

  /// Value of V at an arbitrary point (g + w, plus any extra tilt interpolated).
  double potential_at(double x) const;
  /// min over the grid of V (inf F for Linear models).
  double potential_min() const;

  /// (K * p)(x_i) = sum_j w_j K(x_i - x_j) p_j; zero field for Linear models.
  GridField convolve(const GridDensity& p) const;

 private:
  FreeEnergyModel(Variant variant, GridField potential, QuadraticSpec g, PerturbationSpec w,
                  std::optional<KernelSpec> kernel, double kappa_lower);

  Variant variant_;
  GridField potential_;
  QuadraticSpec g_;
  PerturbationSpec w_;
  std::optional<KernelSpec> kernel_;
  std::vector<double> kernel_lags_;
  std::optional<GridField> extra_;
  double kappa_lower_;
};

/// p0 proportional to exp(-(v0 + w0)).
struct InitialCondition {
  QuadraticSpec v0;
  PerturbationSpec w0;

  GridDensity materialize(const Grid1D& grid) const;
  double eta_lower() const { return v0.curvature(); }
};

double entropy(const GridDensity& p);

/// int |grad sqrt p|^2 on staggered (edge) differences.
double fisher_sqrt(const GridDensity& p);

/// 1/4 int |grad log p|^2 p with central differences; agrees with fisher_sqrt to O(dx^2).
double fisher_log_form(const GridDensity& p);

double free_energy(const FreeEnergyModel& m, const GridDensity& p);
GridField linear_derivative(const FreeEnergyModel& m, const GridDensity& p);

struct EnergyParts {
  double potential;  // F(p)
  double fisher;     // I(p)
  double entropy;    // H(p)
  double total;      // F + sigma^2 I + gamma H
};

EnergyParts energy_parts(const Params& params, const FreeEnergyModel& m, const GridDensity& p);
double generalized_free_energy(const Params& params, const FreeEnergyModel& m,
                               const GridDensity& p);

/// Delta_h sqrt(p) / sqrt(p) at interior nodes, ends copy their neighbour.
GridField quantum_potential(const GridDensity& p);

struct Residual {
  GridField field;
  double lambda;
};

/// dF/dp - sigma^2 Delta sqrt(p)/sqrt(p) + gamma log p - lambda, with lambda making
/// the residual mean-zero under p.
Residual first_order_residual(const Params& params, const FreeEnergyModel& m,
                              const GridDensity& p);
/// Same, reusing an already evaluated dF/dp(p, .).
Residual first_order_residual(const Params& params, const GridField& derivative,
                              const GridDensity& p);

/// sqrt(int r^2 p).
double residual_l2(const GridDensity& p, const GridField& r);

double relative_entropy(const GridDensity& p, const GridDensity& q);

/// int |grad log(p/q)|^2 p, computed as 4 int |grad sqrt(p/q)|^2 q on edges.
double relative_fisher(const GridDensity& p, const GridDensity& q);

}  // namespace fisherflow
