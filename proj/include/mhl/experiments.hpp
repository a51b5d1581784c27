#pragma once

// Batch experiment runner behind the command-line tool and the C API.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mhl/decomposition.hpp"

namespace mhl {

enum class ExperimentCommand { Identities, Constants, Decompose, Probe, Gradcheck };

const char* to_string(ExperimentCommand c);

struct ExperimentConfig {
  ExperimentCommand command = ExperimentCommand::Identities;
  std::optional<std::uint64_t> seed;
  std::string filtration_json;    // resolved filtration description
  std::string filtration_source;  // "default", "inline" or the file path
  std::size_t trials = 0;         // 0 = per-command default
  std::vector<double> p_values;
  double tolerance = 1e-6;
  MaskMode mask_mode = MaskMode::Greedy;
  std::optional<std::vector<double>> F;  // decompose: explicit martingale
  std::size_t samples = 2000;            // gradcheck sphere samples
  double q = 2.0;                        // gradcheck exponent
  unsigned jobs = 1;
  std::string out;
};

struct ExperimentOverrides {
  std::optional<std::string> command;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::string> out;
};

/// Parses a JSON config; relative filtration paths resolve against base_dir.
/// Throws Error(InvalidArgument) on anything malformed or missing.
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& base_dir = ".",
                                         const ExperimentOverrides& overrides = {});

inline constexpr int kExitOk = 0;
inline constexpr int kExitChecksFailed = 1;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitNotConverged = 3;

struct ExperimentOutput {
  int exit_code = kExitOk;
  std::string summary_json;
  std::vector<std::pair<std::string, std::string>> files;  // name, CSV content
};

/// Same config, same bytes, whatever `jobs` is.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// RFC-4180 field quoting and %.17g numbers.
std::string csv_field(const std::string& s);
std::string csv_number(double v);

}  // namespace mhl
