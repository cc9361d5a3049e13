#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fisherflow/dynamics.hpp"
#include "fisherflow/functionals.hpp"
#include "fisherflow/grid.hpp"
#include "fisherflow/particles.hpp"
#include "fisherflow/proximal.hpp"

namespace fisherflow {

/// One-level INI configuration. Every key has a default; files and overrides may only
/// set known keys.
class RunConfig {
 public:
  using Sections = std::map<std::string, std::map<std::string, std::string>>;

  /// All defaults (the harmonic example).
  RunConfig();

  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);

  /// Sets one key; throws ValidationError for unknown sections or keys.
  void set(const std::string& section, const std::string& key, const std::string& value);
  /// "section.key=value"
  void apply_override(const std::string& assignment);

  const Sections& sections() const { return values_; }
  const std::string& raw(const std::string& section, const std::string& key) const;
  /// INI text of every key, sorted; parses back to the same config.
  std::string to_ini() const;

  /// Builds every typed object once so all preconditions are checked up front.
  void validate() const;

  Grid1D grid() const;
  FreeEnergyModel model() const;
  Params params() const;
  InitialCondition initial() const;
  DynamicsConfig dynamics() const;
  ProxConfig proximal() const;
  /// proximal.reference_dt: step of the continuous run used for comparisons.
  double reference_dt() const;
  ParticleConfig particles() const;
  std::string output_directory() const;
  std::vector<std::string> output_formats() const;
  std::vector<double> sweep_sigmas() const;
  std::vector<double> sweep_hs() const;
  std::string sweep_kind() const;

  double number(const std::string& section, const std::string& key) const;
  std::uint64_t count(const std::string& section, const std::string& key) const;

 private:
  Sections values_;
};

QuadraticSpec parse_quadratic(const std::string& text);
PerturbationSpec parse_perturbation(const std::string& text);
KernelSpec parse_kernel(const std::string& text);

}  // namespace fisherflow
