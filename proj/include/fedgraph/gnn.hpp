#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgraph/graph.hpp"

namespace fedgraph {

// Disjoint split of the parameters: neighbor transforms form the topology
// group, self transforms plus biases and the classification head the
// feature group.
enum class ParamGroup { topology, feature };

struct GnnLayer {
  Matrix w_neigh;  // d_in x d_out, topology group
  Matrix w_self;   // d_in x d_out, feature group
  Vector bias;     // d_out, feature group
};

struct GnnParams {
  std::vector<GnnLayer> layers;
  Matrix head_weight;  // d_last x num_classes, feature group
  Vector head_bias;    // num_classes, feature group

  int num_layers() const { return static_cast<int>(layers.size()); }
  int input_dim() const;
  int num_classes() const { return static_cast<int>(head_bias.size()); }
  long parameter_count() const;
  void check_shapes() const;
};

struct ModelConfig {
  int hidden_dim = 16;
  int num_layers = 2;
  void validate() const;
};

// Glorot-uniform weights, zero biases; deterministic per seed.
GnnParams init_params(int input_dim, int hidden_dim, int num_layers,
                      int num_classes, std::uint64_t seed);

// Flattened views use a fixed layout: per layer w_neigh, w_self, bias
// (column-major), then head weight and head bias.
Vector flatten(const GnnParams& p);
GnnParams unflatten(const Vector& flat, const GnnParams& like);
Vector flatten_group(const GnnParams& p, ParamGroup group);
void assign_group(GnnParams& p, ParamGroup group, const Vector& flat);

// Mean of transformed neighbor states: row i holds
// mean_{j in N_i} W_neigh^T h_j; isolated nodes aggregate to zero.
Matrix message_aggregate(const Matrix& h, const Graph& g, const GnnParams& p,
                         int layer);

// ReLU-gated affine update for hidden layers; the last layer stays linear
// and feeds the classification head.
Matrix node_update(const Matrix& h, const Matrix& msg, const GnnParams& p,
                   int layer);

// Per-node class log-probabilities.
Matrix forward(const Graph& g, const GnnParams& p);

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 32;
  int local_epochs = 5;
  double weight_decay = 5e-4;
  OptimizerKind optimizer = OptimizerKind::adam;
  double prox_coefficient = 0.1;  // rho, active only when an anchor is given
  void validate() const;
};

struct LossGrads {
  double loss = 0.0;
  GnnParams grads;
};

// Masked mean cross-entropy, plus (rho/2) ||p - anchor||^2 when an anchor is
// given and (weight_decay/2) ||p||^2; gradients by reverse accumulation
// through the message-passing stack.
LossGrads loss_and_grads(const Graph& g, const GnnParams& p,
                         const std::vector<int>& mask, const GnnParams* anchor,
                         double prox_coefficient, double weight_decay);

// Full-batch gradient steps over the train mask for cfg.local_epochs epochs;
// when batch_size is smaller than the train mask, each epoch steps on a
// seeded batch_size subsample instead. Optimizer state is fresh per call.
GnnParams local_train(const ClientDataset& c, const GnnParams& start,
                      const TrainConfig& cfg, const GnnParams* anchor,
                      std::uint64_t seed);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(const Graph& g, const GnnParams& p,
                    const std::vector<int>& mask);

// Checkpoints: a text manifest ("fedgraph-checkpoint <entries>" then one
// "<layer> <group> <rows> <cols>" line per tensor) followed by the raw
// little-endian doubles in manifest order.
void save_checkpoint(const std::string& path, const GnnParams& p);
GnnParams load_checkpoint(const std::string& path);

}  // namespace fedgraph
