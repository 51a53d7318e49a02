#pragma once

#include <stdexcept>
#include <string>

namespace fedgraph {

// Invalid specs, hyperparameters, or CLI/config input.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A client too small to receive nonempty train/val/test masks.
struct SplitError : std::runtime_error {
  explicit SplitError(const std::string& what) : std::runtime_error(what) {}
};

// Dimension mismatch between tensors, graphs, or parameter sets.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Degenerate training input (e.g. empty node mask).
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

// Violation of the federation round contract (bad mixing matrix, empty
// aggregation list, inconsistent state).
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedgraph
