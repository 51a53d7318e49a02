#include "fedgraph/hmm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "fedgraph/errors.hpp"
#include "fedgraph/rng.hpp"

namespace fedgraph {

namespace {

constexpr double kRowSumTolerance = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

double log_sum_exp(const Vector& values) {
  const double peak = values.maxCoeff();
  if (peak == kNegInf) return kNegInf;
  return peak + std::log((values.array() - peak).exp().sum());
}

void check_stochastic_rows(const Matrix& m, const char* name) {
  for (int r = 0; r < m.rows(); ++r) {
    if ((m.row(r).array() < 0.0).any())
      throw ConfigError(std::string("hmm: negative entry in ") + name);
    if (std::abs(m.row(r).sum() - 1.0) > kRowSumTolerance)
      throw ConfigError(std::string("hmm: row ") + std::to_string(r) + " of " +
                        name + " does not sum to 1");
  }
}

void check_sequence(const HmmModel& m, const StateSequence& s) {
  if (s.hidden.size() != s.observed.size())
    throw ShapeError("hmm: hidden and observed sequences differ in length");
  if (s.hidden.empty()) throw std::invalid_argument("hmm: empty sequence");
  for (int x : s.hidden) {
    if (x < 0 || x >= m.num_states()) throw ShapeError("hmm: hidden state out of range");
  }
  for (int y : s.observed) {
    if (y < 0 || y >= m.num_observations())
      throw ShapeError("hmm: observation out of range");
  }
}

}  // namespace

void HmmModel::validate() const {
  const int s = num_states();
  if (s < 1) throw ConfigError("hmm: need at least one state");
  if (emission.rows() != s || transition.rows() != s || transition.cols() != s)
    throw ShapeError("hmm: distribution shapes do not match the state count");
  if (num_observations() < 1) throw ConfigError("hmm: need at least one observation");
  if ((initial.array() < 0.0).any())
    throw ConfigError("hmm: negative entry in initial distribution");
  if (std::abs(initial.sum() - 1.0) > kRowSumTolerance)
    throw ConfigError("hmm: initial distribution does not sum to 1");
  check_stochastic_rows(transition, "transition");
  check_stochastic_rows(emission, "emission");
}

HmmModel default_drift_model() {
  HmmModel m;
  m.initial.resize(3);
  m.initial << 0.5, 0.25, 0.25;
  m.transition.resize(3, 3);
  m.transition << 0.75, 0.125, 0.125,
                  0.125, 0.75, 0.125,
                  0.125, 0.125, 0.75;
  m.emission.resize(3, 4);
  m.emission << 0.625, 0.25, 0.0625, 0.0625,
                0.125, 0.5, 0.25, 0.125,
                0.0625, 0.125, 0.25, 0.5625;
  return m;
}

StateSequence sample_sequence(const HmmModel& m, int length, std::uint64_t seed) {
  if (length < 1) throw std::invalid_argument("sample_sequence: length must be >= 1");
  m.validate();
  Rng rng(substream_seed(seed, "hmm.sequence"));

  StateSequence s;
  s.hidden.reserve(length);
  s.observed.reserve(length);
  int state = rng.categorical(m.initial.transpose());
  s.hidden.push_back(state);
  s.observed.push_back(rng.categorical(m.emission.row(state)));
  for (int i = 1; i < length; ++i) {
    state = rng.categorical(m.transition.row(state));
    s.hidden.push_back(state);
    s.observed.push_back(rng.categorical(m.emission.row(state)));
  }
  return s;
}

double joint_log_probability(const HmmModel& m, const StateSequence& s) {
  m.validate();
  check_sequence(m, s);
  double log_p = safe_log(m.initial[s.hidden[0]]) +
                 safe_log(m.emission(s.hidden[0], s.observed[0]));
  for (std::size_t i = 1; i < s.hidden.size(); ++i) {
    log_p += safe_log(m.transition(s.hidden[i - 1], s.hidden[i])) +
             safe_log(m.emission(s.hidden[i], s.observed[i]));
    if (log_p == kNegInf) return kNegInf;
  }
  return log_p;
}

double observation_likelihood(const HmmModel& m, const std::vector<int>& observed) {
  m.validate();
  if (observed.empty())
    throw std::invalid_argument("observation_likelihood: empty observation list");
  for (int y : observed) {
    if (y < 0 || y >= m.num_observations())
      throw ShapeError("observation_likelihood: observation out of range");
  }

  const int s = m.num_states();
  Vector log_alpha(s);
  for (int x = 0; x < s; ++x) {
    log_alpha[x] = safe_log(m.initial[x]) + safe_log(m.emission(x, observed[0]));
  }
  Vector scratch(s), next(s);
  for (std::size_t i = 1; i < observed.size(); ++i) {
    for (int to = 0; to < s; ++to) {
      for (int from = 0; from < s; ++from) {
        scratch[from] = log_alpha[from] + safe_log(m.transition(from, to));
      }
      next[to] = log_sum_exp(scratch) + safe_log(m.emission(to, observed[i]));
    }
    log_alpha = next;
  }
  return log_sum_exp(log_alpha);
}

std::vector<int> sample_initial_states(const HmmModel& m, int count,
                                       std::uint64_t seed) {
  m.validate();
  if (count < 0) throw std::invalid_argument("sample_initial_states: negative count");
  Rng rng(substream_seed(seed, "hmm.init"));
  std::vector<int> states(count);
  for (int i = 0; i < count; ++i) states[i] = rng.categorical(m.initial.transpose());
  return states;
}

DriftResult evolve_client(const ClientDataset& c, const HmmModel& m,
                          std::vector<int> node_states, int round_index,
                          double drift_scale, std::uint64_t seed) {
  m.validate();
  if (static_cast<int>(node_states.size()) != c.num_nodes())
    throw ShapeError("evolve_client: one hidden state per node required");
  for (int x : node_states) {
    if (x < 0 || x >= m.num_states())
      throw ShapeError("evolve_client: hidden state out of range");
  }

  DriftResult result{c, std::move(node_states)};
  Rng rng(substream_seed(seed, "hmm.evolve",
                         static_cast<std::uint64_t>(round_index),
                         static_cast<std::uint64_t>(c.client_id)));
  const int many = m.num_observations();
  const int f = c.subgraph.feature_dim();
  for (int u = 0; u < c.num_nodes(); ++u) {
    const int next = rng.categorical(m.transition.row(result.node_states[u]));
    result.node_states[u] = next;
    const int obs = rng.categorical(m.emission.row(next));
    if (obs > 0 && drift_scale != 0.0 && many > 1) {
      const double sigma = drift_scale * obs / (many - 1);
      for (int j = 0; j < f; ++j) {
        result.dataset.subgraph.features(u, j) += sigma * rng.normal();
      }
    }
  }
  return result;
}

}  // namespace fedgraph
