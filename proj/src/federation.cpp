#include "fedgraph/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fedgraph/errors.hpp"
#include "fedgraph/rng.hpp"

namespace fedgraph {

namespace {
constexpr double kOmegaRowTolerance = 1e-9;
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::local: return "local";
    case Strategy::global: return "global";
    case Strategy::fedavg: return "fedavg";
    case Strategy::fedprox: return "fedprox";
    case Strategy::hfgnn: return "hfgnn";
  }
  throw ConfigError("unknown strategy value");
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "local") return Strategy::local;
  if (name == "global") return Strategy::global;
  if (name == "fedavg") return Strategy::fedavg;
  if (name == "fedprox") return Strategy::fedprox;
  if (name == "hfgnn") return Strategy::hfgnn;
  throw ConfigError("unknown strategy '" + name +
                    "' (expected local|global|fedavg|fedprox|hfgnn)");
}

void ClientWeightMatrix::validate(double self_floor) const {
  if (weights.rows() != weights.cols())
    throw ProtocolError("weight matrix must be square");
  for (int r = 0; r < weights.rows(); ++r) {
    if ((weights.row(r).array() < 0.0).any())
      throw ProtocolError("weight matrix has a negative entry in row " +
                          std::to_string(r));
    if (std::abs(weights.row(r).sum() - 1.0) > 1e-12)
      throw ProtocolError("weight matrix row " + std::to_string(r) +
                          " does not sum to 1");
    if (weights(r, r) < self_floor - 1e-12)
      throw ProtocolError("weight matrix diagonal below the self floor");
  }
}

std::vector<int> sample_clients(int num_clients, int clients_per_round,
                                int round, std::uint64_t seed) {
  if (clients_per_round < 1 || clients_per_round > num_clients)
    throw ConfigError("clients_per_round must lie in [1, " +
                      std::to_string(num_clients) + "], got " +
                      std::to_string(clients_per_round));
  Rng rng(substream_seed(seed, "fed.select", static_cast<std::uint64_t>(round)));
  std::vector<int> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < clients_per_round; ++i) {
    const int j = i + rng.uniform_int(num_clients - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(clients_per_round);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ClientWeightMatrix compute_similarity(const std::vector<const GnnParams*>& clients,
                                      const Graph& probe, double temperature,
                                      double self_floor, int round) {
  if (clients.empty()) throw ProtocolError("compute_similarity: no clients");
  if (!(temperature > 0.0))
    throw ConfigError("similarity temperature must be positive");
  if (self_floor < 0.0 || self_floor > 1.0)
    throw ConfigError("self_floor must lie in [0, 1]");

  const int k = static_cast<int>(clients.size());
  std::vector<Vector> embeddings(k);
  std::vector<double> norms(k);
  for (int i = 0; i < k; ++i) {
    // Per-node-centered log-probabilities. Raw log-probability vectors share
    // a large common component (cosine >= (C-2)/(C-1) even under total
    // disagreement), which flattens every similarity; centering removes it,
    // makes the zero clip meaningful, and gives the uniform predictor the
    // zero-norm embedding the fallback below expects.
    Matrix output = forward(probe, *clients[i]);
    output.colwise() -= output.rowwise().mean();
    embeddings[i] = Eigen::Map<const Vector>(output.data(), output.size());
    norms[i] = embeddings[i].norm();
  }

  ClientWeightMatrix omega;
  omega.round = round;
  omega.weights = Matrix::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    if (norms[i] == 0.0) {
      omega.weights(i, i) = 1.0;  // degenerate embedding: keep own params
      continue;
    }
    Eigen::RowVectorXd sim(k);
    for (int j = 0; j < k; ++j) {
      sim[j] = norms[j] == 0.0
                   ? 0.0
                   : std::max(0.0, embeddings[i].dot(embeddings[j]) /
                                       (norms[i] * norms[j]));
    }
    Eigen::RowVectorXd scaled = sim / temperature;
    scaled.array() -= scaled.maxCoeff();
    Eigen::RowVectorXd soft = scaled.array().exp();
    soft /= soft.sum();

    omega.weights.row(i) = (1.0 - self_floor) * soft;
    omega.weights(i, i) += self_floor;
    omega.weights.row(i) /= omega.weights.row(i).sum();
  }
  omega.validate(self_floor);
  return omega;
}

Matrix propagate_knowledge(const Matrix& values, const Matrix& omega, int depth) {
  if (depth < 1) throw ConfigError("propagation depth must be >= 1");
  if (omega.rows() != omega.cols())
    throw ProtocolError("propagate_knowledge: omega must be square");
  if (values.rows() != omega.rows())
    throw ShapeError("propagate_knowledge: one value row per client required");
  for (int r = 0; r < omega.rows(); ++r) {
    if ((omega.row(r).array() < 0.0).any() ||
        std::abs(omega.row(r).sum() - 1.0) > kOmegaRowTolerance)
      throw ProtocolError("propagate_knowledge: omega is not row-stochastic");
  }
  Matrix out = values;
  for (int step = 0; step < depth; ++step) out = omega * out;
  return out;
}

GnnParams aggregate_fedavg(const std::vector<const GnnParams*>& params,
                           const std::vector<long>& sample_counts) {
  if (params.empty()) throw ProtocolError("aggregate_fedavg: empty parameter list");
  if (params.size() != sample_counts.size())
    throw ProtocolError("aggregate_fedavg: one sample count per client required");
  long total = 0;
  for (long c : sample_counts) {
    if (c < 0) throw ProtocolError("aggregate_fedavg: negative sample count");
    total += c;
  }
  if (total <= 0) throw ProtocolError("aggregate_fedavg: zero total sample count");

  Vector acc = Vector::Zero(params.front()->parameter_count());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double w = static_cast<double>(sample_counts[i]) / static_cast<double>(total);
    acc += w * flatten(*params[i]);
  }
  return unflatten(acc, *params.front());
}

void RoundConfig::validate(int num_clients) const {
  if (num_rounds < 1) throw ConfigError("round.rounds: must be >= 1");
  if (clients_per_round < 1 || clients_per_round > num_clients)
    throw ConfigError("round.clients_per_round: must lie in [1, " +
                      std::to_string(num_clients) + "]");
  if (propagation_depth < 1) throw ConfigError("round.propagation_depth: must be >= 1");
  if (!(similarity_temperature > 0.0))
    throw ConfigError("round.similarity_temperature: must be positive");
  if (self_floor < 0.0 || self_floor > 1.0)
    throw ConfigError("round.self_floor: must lie in [0, 1]");
  if (personalization_retention < 0.0 || personalization_retention > 1.0)
    throw ConfigError("round.personalization_retention: must lie in [0, 1]");
  train.validate();
}

ExperimentData make_experiment_data(std::vector<ClientDataset> clients,
                                    std::uint64_t seed) {
  if (clients.empty()) throw ConfigError("experiment needs at least one client");
  std::sort(clients.begin(), clients.end(),
            [](const ClientDataset& a, const ClientDataset& b) {
              return a.client_id < b.client_id;
            });
  for (std::size_t i = 0; i < clients.size(); ++i) {
    if (clients[i].client_id != static_cast<int>(i))
      throw ConfigError("client ids must be 0..K-1 without gaps");
  }

  ExperimentData data;
  data.merged = merge_clients(clients);

  // 32-node probe shared by every client for the whole run: one block of
  // near-prototype nodes per class, so the embeddings profile what each
  // model predicts for every class.
  SbmSpec probe_spec;
  const int blocks = std::min(clients.front().subgraph.num_classes, 32);
  const int base = 32 / blocks;
  probe_spec.block_sizes.assign(blocks, base);
  for (int i = 0; i < 32 - base * blocks; ++i) probe_spec.block_sizes[i] += 1;
  probe_spec.p_in = 1.0;
  probe_spec.p_out = 0.0;
  probe_spec.feature_dim = clients.front().subgraph.feature_dim();
  probe_spec.feature_noise = 0.25;
  probe_spec.seed = substream_seed(seed, "fed.probe");
  data.probe = generate_sbm(probe_spec);

  data.clients = std::move(clients);
  return data;
}

FederationState init_state(const ExperimentData& data, const ModelConfig& model,
                           std::uint64_t seed) {
  model.validate();
  const Graph& g0 = data.clients.front().subgraph;
  FederationState state;
  state.global_params = init_params(g0.feature_dim(), model.hidden_dim,
                                    model.num_layers, g0.num_classes, seed);
  state.client_params.assign(data.clients.size(), state.global_params);
  return state;
}

namespace {

std::uint64_t train_seed(std::uint64_t seed, int round, int client) {
  return substream_seed(seed, "fed.train", static_cast<std::uint64_t>(round),
                        static_cast<std::uint64_t>(client));
}

bool evaluates_global(Strategy s) {
  return s == Strategy::global || s == Strategy::fedavg || s == Strategy::fedprox;
}

void record_flow(FederationState& state, const RoundConfig& cfg, int round,
                 int client, FlowDirection dir, long param_count) {
  state.flow.push_back({round, client, dir, param_count, cfg.strategy});
}

std::vector<int> resolve_order(const std::vector<int>& selected,
                               const std::vector<int>& requested) {
  if (requested.empty()) return selected;
  std::vector<int> sorted = requested;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != selected)
    throw ProtocolError("training order must be a permutation of the selected clients");
  return requested;
}

}  // namespace

void run_round_ordered(FederationState& state, const RoundConfig& cfg,
                       const ExperimentData& data, std::uint64_t seed,
                       const std::vector<int>& training_order) {
  const int k = static_cast<int>(data.clients.size());
  cfg.validate(k);
  if (static_cast<int>(state.client_params.size()) != k)
    throw ProtocolError("state does not match the client count");

  const int round = state.round;
  const long param_count = state.global_params.parameter_count();

  switch (cfg.strategy) {
    case Strategy::local: {
      const auto selected = sample_clients(k, cfg.clients_per_round, round, seed);
      for (int id : resolve_order(selected, training_order)) {
        state.client_params[id] =
            local_train(data.clients[id], state.client_params[id], cfg.train,
                        nullptr, train_seed(seed, round, id));
      }
      break;
    }
    case Strategy::global: {
      state.global_params = local_train(data.merged, state.global_params,
                                        cfg.train, nullptr,
                                        train_seed(seed, round, 0));
      break;
    }
    case Strategy::fedavg:
    case Strategy::fedprox: {
      const auto selected = sample_clients(k, cfg.clients_per_round, round, seed);
      const GnnParams anchor = state.global_params;
      std::vector<GnnParams> trained(k);
      for (int id : resolve_order(selected, training_order)) {
        const GnnParams* prox = cfg.strategy == Strategy::fedprox ? &anchor : nullptr;
        trained[id] = local_train(data.clients[id], anchor, cfg.train, prox,
                                  train_seed(seed, round, id));
        record_flow(state, cfg, round, id, FlowDirection::up, param_count);
      }
      std::vector<const GnnParams*> pointers;
      std::vector<long> counts;
      for (int id : selected) {
        pointers.push_back(&trained[id]);
        counts.push_back(data.clients[id].num_samples);
      }
      state.global_params = aggregate_fedavg(pointers, counts);
      for (int id : selected) {
        state.client_params[id] = state.global_params;
        record_flow(state, cfg, round, id, FlowDirection::down, param_count);
      }
      break;
    }
    case Strategy::hfgnn: {
      const auto selected = sample_clients(k, cfg.clients_per_round, round, seed);
      for (int id : resolve_order(selected, training_order)) {
        state.client_params[id] =
            local_train(data.clients[id], state.client_params[id], cfg.train,
                        nullptr, train_seed(seed, round, id));
        record_flow(state, cfg, round, id, FlowDirection::up, param_count);
      }

      std::vector<int> participants;
      if (cfg.topology_scope == TopologyScope::all_clients) {
        participants.resize(k);
        std::iota(participants.begin(), participants.end(), 0);
      } else {
        participants = selected;
      }
      const int m = static_cast<int>(participants.size());

      ClientWeightMatrix omega;
      if (cfg.force_uniform_weights) {
        omega.weights = Matrix::Constant(m, m, 1.0 / m);
        omega.round = round;
      } else {
        std::vector<const GnnParams*> pointers;
        for (int id : participants) pointers.push_back(&state.client_params[id]);
        omega = compute_similarity(pointers, data.probe,
                                   cfg.similarity_temperature, cfg.self_floor,
                                   round);
      }
      state.omega_history.push_back(omega);

      Matrix theta(m, flatten_group(state.client_params[participants[0]],
                                    ParamGroup::topology)
                          .size());
      Matrix phi(m, flatten_group(state.client_params[participants[0]],
                                  ParamGroup::feature)
                        .size());
      for (int i = 0; i < m; ++i) {
        theta.row(i) =
            flatten_group(state.client_params[participants[i]], ParamGroup::topology);
        phi.row(i) =
            flatten_group(state.client_params[participants[i]], ParamGroup::feature);
      }

      const Matrix theta_mixed =
          propagate_knowledge(theta, omega.weights, cfg.propagation_depth);
      const Matrix phi_mixed = omega.weights * phi;
      const double lambda = cfg.personalization_retention;
      for (int i = 0; i < m; ++i) {
        const int id = participants[i];
        assign_group(state.client_params[id], ParamGroup::topology,
                     theta_mixed.row(i).transpose());
        const Vector blended = (1.0 - lambda) * phi.row(i).transpose() +
                               lambda * phi_mixed.row(i).transpose();
        assign_group(state.client_params[id], ParamGroup::feature, blended);
      }
      for (int id : selected) {
        record_flow(state, cfg, round, id, FlowDirection::down, param_count);
      }
      break;
    }
  }

  for (int id = 0; id < k; ++id) {
    const GnnParams& eval_params = evaluates_global(cfg.strategy)
                                       ? state.global_params
                                       : state.client_params[id];
    const auto& client = data.clients[id];
    const EvalResult val = evaluate(client.subgraph, eval_params, client.val_mask);
    const EvalResult test = evaluate(client.subgraph, eval_params, client.test_mask);
    state.metrics.push_back({round, id, Split::val, val.loss, val.accuracy});
    state.metrics.push_back({round, id, Split::test, test.loss, test.accuracy});
  }
  state.round += 1;
}

void run_round(FederationState& state, const RoundConfig& cfg,
               const ExperimentData& data, std::uint64_t seed) {
  run_round_ordered(state, cfg, data, seed, {});
}

namespace {

void flush_new_rows(const FederationState& state, const ExperimentSinks& sinks,
                    std::size_t& metrics_written, std::size_t& flow_written) {
  if (sinks.metrics != nullptr) {
    for (; metrics_written < state.metrics.size(); ++metrics_written) {
      write_metrics_row(*sinks.metrics, state.metrics[metrics_written]);
    }
    sinks.metrics->flush();
  }
  if (sinks.flow != nullptr) {
    for (; flow_written < state.flow.size(); ++flow_written) {
      write_flow_row(*sinks.flow, state.flow[flow_written]);
    }
    sinks.flow->flush();
  }
}

}  // namespace

ExperimentResult run_experiment(const RoundConfig& cfg,
                                std::vector<ClientDataset> datasets,
                                const std::optional<DriftSpec>& drift,
                                std::uint64_t seed, const ModelConfig& model,
                                const ExperimentSinks& sinks) {
  const int k = static_cast<int>(datasets.size());
  cfg.validate(k);
  if (drift) drift->model.validate();

  ExperimentData data = make_experiment_data(std::move(datasets), seed);
  FederationState state =
      init_state(data, model, substream_seed(seed, "fed.init"));

  std::vector<std::vector<int>> node_states(k);
  if (drift) {
    for (int id = 0; id < k; ++id) {
      node_states[id] = sample_initial_states(
          drift->model, data.clients[id].num_nodes(),
          substream_seed(seed, "fed.drift.init", static_cast<std::uint64_t>(id)));
    }
  }

  if (sinks.metrics != nullptr) write_metrics_header(*sinks.metrics);
  if (sinks.flow != nullptr) write_flow_header(*sinks.flow);

  std::size_t metrics_written = 0, flow_written = 0;
  for (int round = 0; round < cfg.num_rounds; ++round) {
    run_round(state, cfg, data, seed);
    flush_new_rows(state, sinks, metrics_written, flow_written);

    if (drift && round + 1 < cfg.num_rounds) {
      for (int id = 0; id < k; ++id) {
        DriftResult step = evolve_client(
            data.clients[id], drift->model, std::move(node_states[id]), round,
            drift->scale,
            substream_seed(seed, "fed.drift", static_cast<std::uint64_t>(id)));
        data.clients[id] = std::move(step.dataset);
        node_states[id] = std::move(step.node_states);
      }
      data.merged = merge_clients(data.clients);
    }
  }

  ExperimentResult result;
  result.metrics = std::move(state.metrics);
  result.flow = std::move(state.flow);

  Vector final_acc(k);
  for (const auto& row : result.metrics) {
    if (row.round == cfg.num_rounds - 1 && row.split == Split::test) {
      final_acc[row.client_id] = row.accuracy;
    }
  }
  result.mean_test_accuracy = final_acc.mean();
  if (k > 1) {
    const double var =
        (final_acc.array() - result.mean_test_accuracy).square().sum() / (k - 1);
    result.std_test_accuracy = std::sqrt(var);
  }
  return result;
}

void write_metrics_header(std::ostream& out) {
  out << "round,client_id,split,loss,accuracy\n";
}

void write_metrics_row(std::ostream& out, const MetricsRow& row) {
  out << row.round << ',' << row.client_id << ','
      << (row.split == Split::val ? "val" : "test") << ','
      << format_double(row.loss) << ',' << format_double(row.accuracy) << '\n';
}

void write_flow_header(std::ostream& out) {
  out << "round,client_id,direction,param_count,strategy\n";
}

void write_flow_row(std::ostream& out, const FlowRecord& row) {
  out << row.round << ',' << row.client_id << ','
      << (row.direction == FlowDirection::up ? "up" : "down") << ','
      << row.param_count << ',' << to_string(row.strategy) << '\n';
}

std::vector<FlowRecord> read_flow_csv(std::istream& in) {
  std::vector<FlowRecord> records;
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError("flow csv: missing header line");
  if (line != "round,client_id,direction,param_count,strategy")
    throw ConfigError("flow csv: unexpected header '" + line + "'");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5)
      throw ConfigError("flow csv: line " + std::to_string(line_no) +
                        " has " + std::to_string(fields.size()) + " fields");
    FlowRecord rec;
    rec.round = std::stoi(fields[0]);
    rec.client_id = std::stoi(fields[1]);
    if (fields[2] == "up") {
      rec.direction = FlowDirection::up;
    } else if (fields[2] == "down") {
      rec.direction = FlowDirection::down;
    } else {
      throw ConfigError("flow csv: bad direction '" + fields[2] + "' on line " +
                        std::to_string(line_no));
    }
    rec.param_count = std::stol(fields[3]);
    rec.strategy = strategy_from_string(fields[4]);
    records.push_back(rec);
  }
  return records;
}

}  // namespace fedgraph
