#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgraph/federation.hpp"

namespace fedgraph {

// Fully resolved experiment description. Parsing materializes every default,
// so emitting a parsed config and parsing it again is a fixed point.
struct ExperimentConfig {
  SbmSpec data;                            // seed field derived at run time
  int num_clients = 10;                    // K
  double alpha = 0.3;                      // Dirichlet label-skew strength
  std::vector<std::string> client_names;   // optional display names

  RoundConfig round;
  ModelConfig model;

  bool drift_enabled = false;
  double drift_scale = 0.1;
  HmmModel drift;  // defaults to default_drift_model()

  std::uint64_t seed = 42;
  std::string output_dir = "out";
  int repetitions = 1;

  void validate() const;
};

// Line-oriented text config: `section.key = value` per line, `#` comments.
// Lists are space-separated, matrices use `;` between rows. Unknown keys and
// invariant violations raise ConfigError naming the key path and line.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);
ExperimentConfig parse_config_file(const std::string& path);

// Resolved form with every key spelled out, suitable for re-parsing.
std::string emit_config(const ExperimentConfig& cfg);

}  // namespace fedgraph
