#include "fedgraph/gnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedgraph/errors.hpp"
#include "fedgraph/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace fedgraph {

int GnnParams::input_dim() const {
  if (layers.empty()) throw ShapeError("params: no layers");
  return static_cast<int>(layers.front().w_neigh.rows());
}

long GnnParams::parameter_count() const {
  long count = 0;
  for (const auto& layer : layers) {
    count += layer.w_neigh.size() + layer.w_self.size() + layer.bias.size();
  }
  return count + head_weight.size() + head_bias.size();
}

void GnnParams::check_shapes() const {
  if (layers.empty()) throw ShapeError("params: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.w_self.rows() != layer.w_neigh.rows() ||
        layer.w_self.cols() != layer.w_neigh.cols() ||
        layer.bias.size() != layer.w_neigh.cols())
      throw ShapeError("params: inconsistent shapes in layer " + std::to_string(l));
    if (l > 0 && layers[l - 1].w_neigh.cols() != layer.w_neigh.rows())
      throw ShapeError("params: layer " + std::to_string(l) +
                       " input does not match previous output");
  }
  if (head_weight.rows() != layers.back().w_neigh.cols() ||
      head_weight.cols() != head_bias.size())
    throw ShapeError("params: head shape mismatch");
}

void ModelConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("model.hidden_dim: must be >= 1");
  if (num_layers < 1) throw ConfigError("model.layers: must be >= 1");
}

GnnParams init_params(int input_dim, int hidden_dim, int num_layers,
                      int num_classes, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || num_layers < 1 || num_classes < 1)
    throw ConfigError("init_params: dimensions must be positive");

  Rng rng(substream_seed(seed, "gnn.init"));
  auto glorot = [&rng](int rows, int cols) {
    Matrix w(rows, cols);
    const double limit = std::sqrt(6.0 / (rows + cols));
    for (int j = 0; j < cols; ++j) {
      for (int i = 0; i < rows; ++i) w(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
    }
    return w;
  };

  GnnParams p;
  int d_in = input_dim;
  for (int l = 0; l < num_layers; ++l) {
    GnnLayer layer;
    layer.w_neigh = glorot(d_in, hidden_dim);
    layer.w_self = glorot(d_in, hidden_dim);
    layer.bias = Vector::Zero(hidden_dim);
    p.layers.push_back(std::move(layer));
    d_in = hidden_dim;
  }
  p.head_weight = glorot(hidden_dim, num_classes);
  p.head_bias = Vector::Zero(num_classes);
  return p;
}

namespace {

void append(Vector& out, long& offset, const Matrix& m) {
  out.segment(offset, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
  offset += m.size();
}

void append(Vector& out, long& offset, const Vector& v) {
  out.segment(offset, v.size()) = v;
  offset += v.size();
}

void take(const Vector& in, long& offset, Matrix& m) {
  m = Eigen::Map<const Matrix>(in.data() + offset, m.rows(), m.cols());
  offset += m.size();
}

void take(const Vector& in, long& offset, Vector& v) {
  v = in.segment(offset, v.size());
  offset += v.size();
}

long group_size(const GnnParams& p, ParamGroup group) {
  long size = 0;
  for (const auto& layer : p.layers) {
    if (group == ParamGroup::topology) {
      size += layer.w_neigh.size();
    } else {
      size += layer.w_self.size() + layer.bias.size();
    }
  }
  if (group == ParamGroup::feature) size += p.head_weight.size() + p.head_bias.size();
  return size;
}

}  // namespace

Vector flatten(const GnnParams& p) {
  Vector flat(p.parameter_count());
  long offset = 0;
  for (const auto& layer : p.layers) {
    append(flat, offset, layer.w_neigh);
    append(flat, offset, layer.w_self);
    append(flat, offset, layer.bias);
  }
  append(flat, offset, p.head_weight);
  append(flat, offset, p.head_bias);
  return flat;
}

GnnParams unflatten(const Vector& flat, const GnnParams& like) {
  if (flat.size() != like.parameter_count())
    throw ShapeError("unflatten: length does not match the parameter count");
  GnnParams p = like;
  long offset = 0;
  for (auto& layer : p.layers) {
    take(flat, offset, layer.w_neigh);
    take(flat, offset, layer.w_self);
    take(flat, offset, layer.bias);
  }
  take(flat, offset, p.head_weight);
  take(flat, offset, p.head_bias);
  return p;
}

Vector flatten_group(const GnnParams& p, ParamGroup group) {
  Vector flat(group_size(p, group));
  long offset = 0;
  for (const auto& layer : p.layers) {
    if (group == ParamGroup::topology) {
      append(flat, offset, layer.w_neigh);
    } else {
      append(flat, offset, layer.w_self);
      append(flat, offset, layer.bias);
    }
  }
  if (group == ParamGroup::feature) {
    append(flat, offset, p.head_weight);
    append(flat, offset, p.head_bias);
  }
  return flat;
}

void assign_group(GnnParams& p, ParamGroup group, const Vector& flat) {
  if (flat.size() != group_size(p, group))
    throw ShapeError("assign_group: length does not match the group size");
  long offset = 0;
  for (auto& layer : p.layers) {
    if (group == ParamGroup::topology) {
      take(flat, offset, layer.w_neigh);
    } else {
      take(flat, offset, layer.w_self);
      take(flat, offset, layer.bias);
    }
  }
  if (group == ParamGroup::feature) {
    take(flat, offset, p.head_weight);
    take(flat, offset, p.head_bias);
  }
}

namespace {

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    const double lse = peak + std::log((logits.row(i).array() - peak).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

struct ForwardTrace {
  Matrix agg;                 // row-normalized adjacency
  std::vector<Matrix> h;      // h[0] = features, ..., h[L]
  std::vector<Matrix> agg_h;  // agg * h[l], cached for the backward pass
  std::vector<Matrix> z;      // pre-activations
  Matrix log_probs;
};

ForwardTrace run_forward(const Graph& g, const GnnParams& p) {
  p.check_shapes();
  if (p.input_dim() != g.feature_dim())
    throw ShapeError("forward: parameter input dim " +
                     std::to_string(p.input_dim()) + " vs graph feature dim " +
                     std::to_string(g.feature_dim()));

  ForwardTrace t;
  t.agg = mean_adjacency(g);
  t.h.push_back(g.features);
  const int depth = p.num_layers();
  for (int l = 0; l < depth; ++l) {
    t.agg_h.push_back(t.agg * t.h[l]);
    Matrix z = t.h[l] * p.layers[l].w_self + t.agg_h[l] * p.layers[l].w_neigh;
    z.rowwise() += p.layers[l].bias.transpose();
    t.z.push_back(z);
    t.h.push_back(l + 1 < depth ? z.cwiseMax(0.0) : z);
  }
  Matrix logits = t.h[depth] * p.head_weight;
  logits.rowwise() += p.head_bias.transpose();
  t.log_probs = log_softmax_rows(logits);
  return t;
}

void check_mask(const Graph& g, const std::vector<int>& mask) {
  if (mask.empty()) throw TrainingError("node mask is empty");
  for (int u : mask) {
    if (u < 0 || u >= g.num_nodes)
      throw ShapeError("node mask index out of range: " + std::to_string(u));
  }
}

}  // namespace

Matrix message_aggregate(const Matrix& h, const Graph& g, const GnnParams& p,
                         int layer) {
  if (layer < 0 || layer >= p.num_layers())
    throw ShapeError("message_aggregate: layer index out of range");
  if (h.rows() != g.num_nodes || h.cols() != p.layers[layer].w_neigh.rows())
    throw ShapeError("message_aggregate: state shape mismatch");
  return mean_adjacency(g) * h * p.layers[layer].w_neigh;
}

Matrix node_update(const Matrix& h, const Matrix& msg, const GnnParams& p,
                   int layer) {
  if (layer < 0 || layer >= p.num_layers())
    throw ShapeError("node_update: layer index out of range");
  const auto& lp = p.layers[layer];
  if (h.cols() != lp.w_self.rows() || msg.rows() != h.rows() ||
      msg.cols() != lp.w_self.cols())
    throw ShapeError("node_update: state/message shape mismatch");
  Matrix z = h * lp.w_self + msg;
  z.rowwise() += lp.bias.transpose();
  return layer + 1 < p.num_layers() ? z.cwiseMax(0.0) : z;
}

Matrix forward(const Graph& g, const GnnParams& p) {
  return run_forward(g, p).log_probs;
}

LossGrads loss_and_grads(const Graph& g, const GnnParams& p,
                         const std::vector<int>& mask, const GnnParams* anchor,
                         double prox_coefficient, double weight_decay) {
  check_mask(g, mask);
  ForwardTrace t = run_forward(g, p);
  const int depth = p.num_layers();
  const double inv_m = 1.0 / static_cast<double>(mask.size());

  double loss = 0.0;
  Matrix d_logits = Matrix::Zero(g.num_nodes, p.num_classes());
  for (int u : mask) {
    loss -= t.log_probs(u, g.labels[u]);
    d_logits.row(u) = t.log_probs.row(u).array().exp();
    d_logits(u, g.labels[u]) -= 1.0;
  }
  loss *= inv_m;
  d_logits *= inv_m;

  LossGrads out;
  out.grads = p;  // shape template
  out.grads.head_weight = t.h[depth].transpose() * d_logits;
  out.grads.head_bias = d_logits.colwise().sum().transpose();
  Matrix dh = d_logits * p.head_weight.transpose();
  for (int l = depth - 1; l >= 0; --l) {
    Matrix dz;
    if (l + 1 < depth) {
      dz = (dh.array() * (t.z[l].array() > 0.0).cast<double>()).matrix();
    } else {
      dz = dh;
    }
    out.grads.layers[l].w_self = t.h[l].transpose() * dz;
    out.grads.layers[l].w_neigh = t.agg_h[l].transpose() * dz;
    out.grads.layers[l].bias = dz.colwise().sum().transpose();
    if (l > 0) {
      dh = dz * p.layers[l].w_self.transpose() +
           t.agg.transpose() * (dz * p.layers[l].w_neigh.transpose());
    }
  }

  if (weight_decay != 0.0 || (anchor != nullptr && prox_coefficient != 0.0)) {
    Vector flat = flatten(p);
    Vector grad_flat = flatten(out.grads);
    if (weight_decay != 0.0) {
      loss += 0.5 * weight_decay * flat.squaredNorm();
      grad_flat += weight_decay * flat;
    }
    if (anchor != nullptr && prox_coefficient != 0.0) {
      Vector diff = flat - flatten(*anchor);
      loss += 0.5 * prox_coefficient * diff.squaredNorm();
      grad_flat += prox_coefficient * diff;
    }
    out.grads = unflatten(grad_flat, p);
  }
  out.loss = loss;
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate: must be positive");
  if (local_epochs < 1) throw ConfigError("train.local_epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay: must be >= 0");
  if (prox_coefficient < 0.0) throw ConfigError("train.prox_coefficient: must be >= 0");
}

GnnParams local_train(const ClientDataset& c, const GnnParams& start,
                      const TrainConfig& cfg, const GnnParams* anchor,
                      std::uint64_t seed) {
  cfg.validate();
  if (c.train_mask.empty()) throw TrainingError("local_train: empty train mask");

  const int train_size = static_cast<int>(c.train_mask.size());
  const bool minibatched = cfg.batch_size < train_size;
  Rng batch_rng(substream_seed(seed, "gnn.batch"));

  GnnParams params = start;
  Vector flat = flatten(params);

  // Adam state, fresh per call.
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Vector moment1 = Vector::Zero(flat.size());
  Vector moment2 = Vector::Zero(flat.size());
  int step = 0;

  auto apply_step = [&](const std::vector<int>& batch) {
    const LossGrads lg = loss_and_grads(c.subgraph, params, batch, anchor,
                                        cfg.prox_coefficient, cfg.weight_decay);
    const Vector grad = flatten(lg.grads);
    if (cfg.optimizer == OptimizerKind::sgd) {
      flat -= cfg.learning_rate * grad;
    } else {
      step += 1;
      moment1 = beta1 * moment1 + (1.0 - beta1) * grad;
      moment2 = beta2 * moment2 + (1.0 - beta2) * grad.cwiseProduct(grad);
      const double corr1 = 1.0 - std::pow(beta1, step);
      const double corr2 = 1.0 - std::pow(beta2, step);
      flat -= (cfg.learning_rate * (moment1 / corr1).array() /
               ((moment2 / corr2).array().sqrt() + eps))
                  .matrix();
    }
    params = unflatten(flat, start);
  };

  // One gradient step per epoch: full-batch over the train mask, or a
  // seeded batch_size subsample when the cap binds.
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    if (!minibatched) {
      apply_step(c.train_mask);
      continue;
    }
    std::vector<int> pool = c.train_mask;
    for (int i = 0; i < cfg.batch_size; ++i) {
      const int j = i + batch_rng.uniform_int(static_cast<int>(pool.size()) - i);
      std::swap(pool[i], pool[j]);
    }
    std::vector<int> batch(pool.begin(), pool.begin() + cfg.batch_size);
    std::sort(batch.begin(), batch.end());
    apply_step(batch);
  }
  return params;
}

EvalResult evaluate(const Graph& g, const GnnParams& p,
                    const std::vector<int>& mask) {
  check_mask(g, mask);
  const Matrix log_probs = forward(g, p);
  EvalResult r;
  for (int u : mask) {
    r.loss -= log_probs(u, g.labels[u]);
    Eigen::Index best = 0;
    log_probs.row(u).maxCoeff(&best);
    if (static_cast<int>(best) == g.labels[u]) r.accuracy += 1.0;
  }
  r.loss /= static_cast<double>(mask.size());
  r.accuracy /= static_cast<double>(mask.size());
  return r;
}

void save_checkpoint(const std::string& path, const GnnParams& p) {
  p.check_shapes();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);

  const int depth = p.num_layers();
  std::ostringstream manifest;
  std::vector<const double*> blobs;
  std::vector<long> sizes;
  auto entry = [&](int layer, const char* group, long rows, long cols,
                   const double* data) {
    manifest << layer << ' ' << group << ' ' << rows << ' ' << cols << '\n';
    blobs.push_back(data);
    sizes.push_back(rows * cols);
  };
  for (int l = 0; l < depth; ++l) {
    const auto& layer = p.layers[l];
    entry(l, "theta", layer.w_neigh.rows(), layer.w_neigh.cols(), layer.w_neigh.data());
    entry(l, "phi", layer.w_self.rows(), layer.w_self.cols(), layer.w_self.data());
    entry(l, "phi", layer.bias.size(), 1, layer.bias.data());
  }
  entry(depth, "phi", p.head_weight.rows(), p.head_weight.cols(), p.head_weight.data());
  entry(depth, "phi", p.head_bias.size(), 1, p.head_bias.data());

  out << "fedgraph-checkpoint " << blobs.size() << '\n' << manifest.str();
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    out.write(reinterpret_cast<const char*>(blobs[i]),
              static_cast<std::streamsize>(sizes[i] * sizeof(double)));
  }
  if (!out) throw ConfigError("write failed: " + path);
}

GnnParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path);

  std::string magic;
  std::size_t entries = 0;
  if (!(in >> magic >> entries) || magic != "fedgraph-checkpoint")
    throw ConfigError("checkpoint: bad header in " + path);
  if (entries < 5 || (entries - 2) % 3 != 0)
    throw ConfigError("checkpoint: unexpected entry count");

  struct Entry {
    int layer;
    std::string group;
    long rows, cols;
  };
  std::vector<Entry> manifest(entries);
  for (auto& e : manifest) {
    if (!(in >> e.layer >> e.group >> e.rows >> e.cols))
      throw ConfigError("checkpoint: truncated manifest");
  }
  in.ignore(1);  // newline before the binary payload

  auto read_block = [&in, &path](long rows, long cols) {
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(rows * cols * sizeof(double)));
    if (!in) throw ConfigError("checkpoint: truncated payload in " + path);
    return m;
  };

  GnnParams p;
  const std::size_t layer_count = (entries - 2) / 3;
  for (std::size_t l = 0; l < layer_count; ++l) {
    const auto& wn = manifest[3 * l];
    const auto& ws = manifest[3 * l + 1];
    const auto& b = manifest[3 * l + 2];
    if (wn.group != "theta" || ws.group != "phi" || b.group != "phi")
      throw ConfigError("checkpoint: unexpected group layout");
    GnnLayer layer;
    layer.w_neigh = read_block(wn.rows, wn.cols);
    layer.w_self = read_block(ws.rows, ws.cols);
    layer.bias = read_block(b.rows, b.cols).col(0);
    p.layers.push_back(std::move(layer));
  }
  p.head_weight = read_block(manifest[entries - 2].rows, manifest[entries - 2].cols);
  p.head_bias = read_block(manifest[entries - 1].rows, manifest[entries - 1].cols).col(0);
  p.check_shapes();
  return p;
}

}  // namespace fedgraph
