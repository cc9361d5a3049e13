#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fisherflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

struct CliRequest {
  /// evolve, ground-state, jko, sample, check or sweep
  std::string subcommand;
  std::optional<std::string> config_path;
  /// "section.key=value", applied in order after the file
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
};

/// Runs one experiment and writes its CSVs, .dat files, config.ini and manifest.json
/// into the output directory. Returns 0, 1 (validation) or 2 (numerical failure);
/// files written before a failure are kept.
int run(const CliRequest& request, std::ostream& out, std::ostream& err);

/// Parses argv with CLI11 and calls run().
int cli_main(int argc, char** argv);

}  // namespace fisherflow
