#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedgraph/gnn.hpp"
#include "fedgraph/hmm.hpp"

namespace fedgraph {

enum class Strategy { local, global, fedavg, fedprox, hfgnn };
std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

enum class TopologyScope { selected_subset, all_clients };

// Row-stochastic client-to-client propagation weights for one round.
struct ClientWeightMatrix {
  Matrix weights;
  int round = 0;
  void validate(double self_floor = 0.0) const;
};

// Uniform sample without replacement, deterministic per (seed, round),
// returned sorted ascending.
std::vector<int> sample_clients(int num_clients, int clients_per_round,
                                int round, std::uint64_t seed);

// Embeds each client as its forward() output on the shared probe graph and
// softmaxes the zero-clipped cosine similarities at the given temperature;
// each row is then convexly blended with self_floor weight on the diagonal.
// A client whose embedding has zero norm falls back to a self-only row.
ClientWeightMatrix compute_similarity(const std::vector<const GnnParams*>& clients,
                                      const Graph& probe, double temperature,
                                      double self_floor, int round = 0);

// values is one flat parameter vector per row; returns omega^depth * values
// applied as `depth` successive multiplications.
Matrix propagate_knowledge(const Matrix& values, const Matrix& omega, int depth);

// Sample-count-weighted mean, iterated in the order given (callers pass
// ascending client id).
GnnParams aggregate_fedavg(const std::vector<const GnnParams*>& params,
                           const std::vector<long>& sample_counts);

struct RoundConfig {
  Strategy strategy = Strategy::hfgnn;
  int num_rounds = 100;
  int clients_per_round = 0;  // resolved against the client count
  TrainConfig train;
  int propagation_depth = 2;
  double similarity_temperature = 0.5;
  double self_floor = 0.1;
  double personalization_retention = 0.5;  // lambda for the feature group
  TopologyScope topology_scope = TopologyScope::selected_subset;
  bool force_uniform_weights = false;  // diagnostic: bypass similarity
  void validate(int num_clients) const;
};

enum class FlowDirection { up, down };
enum class Split { val, test };

struct FlowRecord {
  int round = 0;
  int client_id = 0;
  FlowDirection direction = FlowDirection::up;
  long param_count = 0;
  Strategy strategy = Strategy::local;
};

struct MetricsRow {
  int round = 0;
  int client_id = 0;
  Split split = Split::val;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct FederationState {
  std::vector<GnnParams> client_params;
  GnnParams global_params;  // used by global/fedavg/fedprox
  std::vector<ClientWeightMatrix> omega_history;
  int round = 0;
  std::vector<MetricsRow> metrics;
  std::vector<FlowRecord> flow;
};

struct ExperimentData {
  std::vector<ClientDataset> clients;
  ClientDataset merged;  // disjoint union, feeds the centralized baseline
  Graph probe;           // fixed shared graph for similarity embeddings
};

// Builds the merged view and the seeded 32-node probe graph.
ExperimentData make_experiment_data(std::vector<ClientDataset> clients,
                                    std::uint64_t seed);

// All clients and the global model start from one seeded initialization.
FederationState init_state(const ExperimentData& data, const ModelConfig& model,
                           std::uint64_t seed);

// One federation round: sample, train, aggregate per strategy, evaluate.
void run_round(FederationState& state, const RoundConfig& cfg,
               const ExperimentData& data, std::uint64_t seed);

// Same round with an explicit training order over the selected clients; the
// post-round state is independent of this order (aggregation always iterates
// ascending ids).
void run_round_ordered(FederationState& state, const RoundConfig& cfg,
                       const ExperimentData& data, std::uint64_t seed,
                       const std::vector<int>& training_order);

struct DriftSpec {
  HmmModel model;
  double scale = 0.1;
};

struct ExperimentSinks {
  std::ostream* metrics = nullptr;
  std::ostream* flow = nullptr;
};

struct ExperimentResult {
  std::vector<MetricsRow> metrics;
  std::vector<FlowRecord> flow;
  double mean_test_accuracy = 0.0;  // final round, across clients
  double std_test_accuracy = 0.0;   // sample std across clients (0 for K=1)
};

// Runs cfg.num_rounds rounds, applying one HMM drift step to every client
// between rounds when a drift spec is given. When sinks are set, CSV rows
// (with headers) are written incrementally and flushed after every round.
ExperimentResult run_experiment(const RoundConfig& cfg,
                                std::vector<ClientDataset> datasets,
                                const std::optional<DriftSpec>& drift,
                                std::uint64_t seed, const ModelConfig& model,
                                const ExperimentSinks& sinks = {});

// CSV encodings for the metrics and flow logs.
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);
void write_flow_header(std::ostream& out);
void write_flow_row(std::ostream& out, const FlowRecord& row);
std::vector<FlowRecord> read_flow_csv(std::istream& in);

}  // namespace fedgraph
