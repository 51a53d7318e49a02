#pragma once

#include <cstdint>
#include <vector>

#include "fedgraph/graph.hpp"

namespace fedgraph {

// Hidden Markov chain over node states with categorical observations.
struct HmmModel {
  Vector initial;     // S, P(x1)
  Matrix transition;  // S x S, row-stochastic, P(x_i | x_{i-1})
  Matrix emission;    // S x O, row-stochastic, P(y_i | x_i)

  int num_states() const { return static_cast<int>(initial.size()); }
  int num_observations() const { return static_cast<int>(emission.cols()); }
  void validate() const;
};

// Three hidden states over four observations; used when drift is enabled
// without explicit distributions. All entries are dyadic so rows sum to one
// exactly and survive text round-trips.
HmmModel default_drift_model();

struct StateSequence {
  std::vector<int> hidden;
  std::vector<int> observed;
};

// x1 ~ initial, x_i ~ transition[x_{i-1}], y_i ~ emission[x_i].
StateSequence sample_sequence(const HmmModel& m, int length, std::uint64_t seed);

// log P(X, Y) under the chain factorization
// P(x1) P(y1|x1) prod_{i>=2} P(x_i|x_{i-1}) P(y_i|x_i);
// -infinity when any referenced probability is zero.
double joint_log_probability(const HmmModel& m, const StateSequence& s);

// log P(Y) marginalized over hidden sequences (forward algorithm, log space).
double observation_likelihood(const HmmModel& m, const std::vector<int>& observed);

// One hidden state per node, drawn from the initial distribution.
std::vector<int> sample_initial_states(const HmmModel& m, int count,
                                       std::uint64_t seed);

struct DriftResult {
  ClientDataset dataset;
  std::vector<int> node_states;
};

// Advances every node's hidden state one Markov step. The emitted
// observation o adds Gaussian noise with standard deviation
// drift_scale * o / (O - 1) to that node's features; observation 0 leaves
// them untouched. Labels, masks and edges never change.
DriftResult evolve_client(const ClientDataset& c, const HmmModel& m,
                          std::vector<int> node_states, int round_index,
                          double drift_scale, std::uint64_t seed);

}  // namespace fedgraph
