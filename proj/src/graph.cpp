#include "fedgraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedgraph/errors.hpp"
#include "fedgraph/rng.hpp"

namespace fedgraph {

namespace {
constexpr double kFeatureScale = 1.0;  // one-hot block indicator magnitude
}

std::string format_double(double value) {
  // Shortest representation that still parses back to the identical bits;
  // 17 significant digits always do.
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

void Graph::validate() const {
  if (num_nodes < 0) throw ShapeError("graph: negative node count");
  if (features.rows() != num_nodes)
    throw ShapeError("graph: feature rows do not match node count");
  if (labels.size() != num_nodes)
    throw ShapeError("graph: label count does not match node count");
  if (num_nodes > 0 && features.cols() < 1)
    throw ShapeError("graph: feature dimension must be at least 1");
  for (int u = 0; u < num_nodes; ++u) {
    if (labels[u] < 0 || labels[u] >= num_classes)
      throw ShapeError("graph: label out of range at node " + std::to_string(u));
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto [u, v] = edges[i];
    if (u == v) throw ShapeError("graph: self-loop at node " + std::to_string(u));
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
      throw ShapeError("graph: edge endpoint out of range");
    if (u > v) throw ShapeError("graph: edge not in canonical (u < v) order");
    if (i > 0 && !(edges[i - 1] < edges[i]))
      throw ShapeError("graph: edges not sorted or duplicated");
  }
}

std::vector<std::vector<int>> adjacency_lists(const Graph& g) {
  std::vector<std::vector<int>> adj(g.num_nodes);
  for (const auto& [u, v] : g.edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  return adj;
}

Matrix mean_adjacency(const Graph& g) {
  Matrix agg = Matrix::Zero(g.num_nodes, g.num_nodes);
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(g.num_nodes);
  for (const auto& [u, v] : g.edges) {
    agg(u, v) = 1.0;
    agg(v, u) = 1.0;
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  for (int u = 0; u < g.num_nodes; ++u) {
    if (degree[u] > 0.0) agg.row(u) /= degree[u];
  }
  return agg;
}

int SbmSpec::num_nodes() const {
  int total = 0;
  for (int s : block_sizes) total += s;
  return total;
}

int SbmSpec::resolved_feature_dim() const {
  return feature_dim > 0 ? feature_dim : static_cast<int>(block_sizes.size());
}

void SbmSpec::validate() const {
  if (block_sizes.empty()) throw ConfigError("sbm: block_sizes must be nonempty");
  for (int s : block_sizes) {
    if (s < 1) throw ConfigError("sbm: every block needs at least one node");
  }
  if (!(p_out >= 0.0 && p_out <= p_in && p_in <= 1.0))
    throw ConfigError("sbm: probabilities must satisfy 0 <= p_out <= p_in <= 1");
  if (feature_noise < 0.0) throw ConfigError("sbm: feature_noise must be >= 0");
  if (resolved_feature_dim() < static_cast<int>(block_sizes.size()))
    throw ConfigError("sbm: feature_dim must be at least the number of blocks");
}

Graph generate_sbm(const SbmSpec& spec) {
  spec.validate();
  const int n = spec.num_nodes();
  const int blocks = static_cast<int>(spec.block_sizes.size());
  const int f = spec.resolved_feature_dim();

  Graph g;
  g.num_nodes = n;
  g.num_classes = blocks;
  g.labels.resize(n);
  int node = 0;
  for (int b = 0; b < blocks; ++b) {
    for (int i = 0; i < spec.block_sizes[b]; ++i) g.labels[node++] = b;
  }

  Rng edge_rng(substream_seed(spec.seed, "sbm.edges"));
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      const double p = g.labels[u] == g.labels[v] ? spec.p_in : spec.p_out;
      if (edge_rng.uniform() < p) g.edges.emplace_back(u, v);
    }
  }

  Rng feature_rng(substream_seed(spec.seed, "sbm.features"));
  g.features = Matrix::Zero(n, f);
  for (int u = 0; u < n; ++u) {
    g.features(u, g.labels[u]) = kFeatureScale;
    for (int j = 0; j < f; ++j) {
      g.features(u, j) += spec.feature_noise * feature_rng.normal();
    }
  }
  return g;
}

namespace {

// Largest-remainder rounding of `weights * total` into integer counts.
std::vector<int> apportion(const Eigen::VectorXd& weights, int total) {
  const int k = static_cast<int>(weights.size());
  std::vector<int> counts(k, 0);
  std::vector<std::pair<double, int>> remainders;
  remainders.reserve(k);
  int assigned = 0;
  for (int i = 0; i < k; ++i) {
    const double exact = weights[i] * total;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - counts[i], i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; i < total - assigned; ++i) counts[remainders[i].second] += 1;
  return counts;
}

// Moves nodes from the largest clients until everyone holds at least
// `min_size` nodes. Moves the donor's highest-index node, deterministically.
void enforce_minimum(std::vector<std::vector<int>>& nodes_of, int min_size) {
  const int k = static_cast<int>(nodes_of.size());
  for (;;) {
    int recipient = -1;
    for (int i = 0; i < k; ++i) {
      if (static_cast<int>(nodes_of[i].size()) < min_size &&
          (recipient == -1 || nodes_of[i].size() < nodes_of[recipient].size())) {
        recipient = i;
      }
    }
    if (recipient == -1) return;
    int donor = -1;
    for (int i = 0; i < k; ++i) {
      if (static_cast<int>(nodes_of[i].size()) > min_size &&
          (donor == -1 || nodes_of[i].size() > nodes_of[donor].size())) {
        donor = i;
      }
    }
    if (donor == -1)
      throw ConfigError("partition: cannot satisfy minimum client size");
    auto it = std::max_element(nodes_of[donor].begin(), nodes_of[donor].end());
    nodes_of[recipient].push_back(*it);
    nodes_of[donor].erase(it);
  }
}

}  // namespace

Partition partition_clients(const Graph& g, int num_clients, double alpha,
                            std::uint64_t seed) {
  g.validate();
  if (num_clients < 1) throw ConfigError("partition: need at least one client");
  if (num_clients > g.num_nodes)
    throw ConfigError("partition: more clients (" + std::to_string(num_clients) +
                      ") than nodes (" + std::to_string(g.num_nodes) + ")");
  if (!(alpha > 0.0)) throw ConfigError("partition: alpha must be positive");

  const int k = num_clients;
  const int c = g.num_classes;

  std::vector<Eigen::VectorXd> proportions(k);
  {
    Rng rng(substream_seed(seed, "partition.proportions"));
    for (int i = 0; i < k; ++i) proportions[i] = rng.dirichlet(alpha, c);
  }

  std::vector<std::vector<int>> nodes_of(k);
  for (int cls = 0; cls < c; ++cls) {
    std::vector<int> members;
    for (int u = 0; u < g.num_nodes; ++u) {
      if (g.labels[u] == cls) members.push_back(u);
    }
    if (members.empty()) continue;
    Rng rng(substream_seed(seed, "partition.class", static_cast<std::uint64_t>(cls)));
    rng.shuffle(members);

    Eigen::VectorXd weight(k);
    for (int i = 0; i < k; ++i) weight[i] = proportions[i][cls];
    const double total = weight.sum();
    if (total > 0.0) {
      weight /= total;
    } else {
      weight.setConstant(1.0 / k);
    }
    const auto counts = apportion(weight, static_cast<int>(members.size()));
    int pos = 0;
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < counts[i]; ++j) nodes_of[i].push_back(members[pos++]);
    }
  }

  const int min_size = std::max(1, std::min(3, g.num_nodes / k));
  enforce_minimum(nodes_of, min_size);

  std::vector<int> owner(g.num_nodes, -1);
  std::vector<int> local_id(g.num_nodes, -1);
  for (int i = 0; i < k; ++i) {
    std::sort(nodes_of[i].begin(), nodes_of[i].end());
    for (std::size_t j = 0; j < nodes_of[i].size(); ++j) {
      owner[nodes_of[i][j]] = i;
      local_id[nodes_of[i][j]] = static_cast<int>(j);
    }
  }

  Partition result;
  result.clients.resize(k);
  for (int i = 0; i < k; ++i) {
    ClientDataset& client = result.clients[i];
    client.client_id = i;
    client.global_index = nodes_of[i];
    const int n_local = static_cast<int>(nodes_of[i].size());
    client.subgraph.num_nodes = n_local;
    client.subgraph.num_classes = g.num_classes;
    client.subgraph.features.resize(n_local, g.feature_dim());
    client.subgraph.labels.resize(n_local);
    for (int j = 0; j < n_local; ++j) {
      client.subgraph.features.row(j) = g.features.row(nodes_of[i][j]);
      client.subgraph.labels[j] = g.labels[nodes_of[i][j]];
    }
  }
  for (const auto& [u, v] : g.edges) {
    if (owner[u] == owner[v]) {
      result.clients[owner[u]].subgraph.edges.emplace_back(local_id[u], local_id[v]);
    } else {
      result.dropped_cross_edges += 1;
    }
  }
  return result;
}

ClientDataset split_masks(ClientDataset client, std::uint64_t seed) {
  const int n = client.num_nodes();
  if (n < 3)
    throw SplitError("split_masks: client " + std::to_string(client.client_id) +
                     " has " + std::to_string(n) + " nodes, need at least 3");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(substream_seed(seed, "split.shuffle"));
  rng.shuffle(order);

  const int n_val = std::max<int>(1, static_cast<int>(std::llround(0.1 * n)));
  const int n_test = std::max<int>(1, static_cast<int>(std::llround(0.1 * n)));
  const int n_train = n - n_val - n_test;

  client.train_mask.assign(order.begin(), order.begin() + n_train);
  client.val_mask.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  client.test_mask.assign(order.begin() + n_train + n_val, order.end());
  std::sort(client.train_mask.begin(), client.train_mask.end());
  std::sort(client.val_mask.begin(), client.val_mask.end());
  std::sort(client.test_mask.begin(), client.test_mask.end());
  client.num_samples = n_train;
  return client;
}

ClientDataset merge_clients(const std::vector<ClientDataset>& clients) {
  if (clients.empty()) throw ProtocolError("merge_clients: empty client list");

  std::vector<const ClientDataset*> ordered;
  ordered.reserve(clients.size());
  for (const auto& c : clients) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientDataset* a, const ClientDataset* b) {
              return a->client_id < b->client_id;
            });

  int total = 0;
  for (const auto* c : ordered) total += c->num_nodes();
  const int f = ordered.front()->subgraph.feature_dim();

  ClientDataset merged;
  merged.client_id = -1;
  merged.subgraph.num_nodes = total;
  merged.subgraph.num_classes = ordered.front()->subgraph.num_classes;
  merged.subgraph.features.resize(total, f);
  merged.subgraph.labels.resize(total);
  merged.global_index.resize(total);

  int offset = 0;
  for (const auto* c : ordered) {
    const int n = c->num_nodes();
    if (c->subgraph.feature_dim() != f)
      throw ShapeError("merge_clients: inconsistent feature dimensions");
    merged.subgraph.features.middleRows(offset, n) = c->subgraph.features;
    merged.subgraph.labels.segment(offset, n) = c->subgraph.labels;
    for (int j = 0; j < n; ++j) merged.global_index[offset + j] = c->global_index[j];
    for (const auto& [u, v] : c->subgraph.edges) {
      merged.subgraph.edges.emplace_back(u + offset, v + offset);
    }
    for (int u : c->train_mask) merged.train_mask.push_back(u + offset);
    for (int u : c->val_mask) merged.val_mask.push_back(u + offset);
    for (int u : c->test_mask) merged.test_mask.push_back(u + offset);
    offset += n;
  }
  merged.num_samples = static_cast<int>(merged.train_mask.size());
  return merged;
}

void save_graph(std::ostream& out, const Graph& g) {
  g.validate();
  out << g.num_nodes << ' ' << g.feature_dim() << ' ' << g.num_classes << '\n';
  for (int u = 0; u < g.num_nodes; ++u) {
    out << "node " << u << ' ' << g.labels[u];
    for (int j = 0; j < g.feature_dim(); ++j) {
      out << ' ' << format_double(g.features(u, j));
    }
    out << '\n';
  }
  for (const auto& [u, v] : g.edges) out << "edge " << u << ' ' << v << '\n';
}

Graph load_graph(std::istream& in) {
  Graph g;
  int f = 0;
  if (!(in >> g.num_nodes >> f >> g.num_classes))
    throw ConfigError("graph load: malformed header, expected 'n f C'");
  g.features.resize(g.num_nodes, f);
  g.labels.resize(g.num_nodes);
  std::vector<bool> seen(g.num_nodes, false);

  std::string tag;
  while (in >> tag) {
    if (tag == "node") {
      int id = 0;
      if (!(in >> id) || id < 0 || id >= g.num_nodes)
        throw ConfigError("graph load: bad node id");
      if (seen[id]) throw ConfigError("graph load: duplicate node " + std::to_string(id));
      seen[id] = true;
      int label = 0;
      if (!(in >> label)) throw ConfigError("graph load: missing label");
      g.labels[id] = label;
      for (int j = 0; j < f; ++j) {
        if (!(in >> g.features(id, j)))
          throw ConfigError("graph load: missing feature value");
      }
    } else if (tag == "edge") {
      int u = 0, v = 0;
      if (!(in >> u >> v)) throw ConfigError("graph load: malformed edge line");
      g.edges.emplace_back(u, v);
    } else {
      throw ConfigError("graph load: unexpected token '" + tag + "'");
    }
  }
  for (int u = 0; u < g.num_nodes; ++u) {
    if (!seen[u]) throw ConfigError("graph load: missing node " + std::to_string(u));
  }
  g.validate();
  return g;
}

void save_graph_file(const std::string& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  save_graph(out, g);
  if (!out) throw ConfigError("write failed: " + path);
}

Graph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  return load_graph(in);
}

}  // namespace fedgraph
