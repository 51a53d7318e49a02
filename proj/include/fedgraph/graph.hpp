#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace fedgraph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Undirected graph with per-node features and class labels.
struct Graph {
  int num_nodes = 0;
  int num_classes = 0;
  std::vector<std::pair<int, int>> edges;  // canonical: u < v, sorted, unique
  Matrix features;                         // num_nodes x feature_dim
  Eigen::VectorXi labels;                  // num_nodes

  int feature_dim() const { return static_cast<int>(features.cols()); }
  void validate() const;
};

// Neighbor lists with both directions of every undirected edge.
std::vector<std::vector<int>> adjacency_lists(const Graph& g);

// Row-normalized adjacency D^{-1} A. Isolated nodes get an all-zero row, so
// mean aggregation never divides by zero.
Matrix mean_adjacency(const Graph& g);

struct SbmSpec {
  std::vector<int> block_sizes;
  double p_in = 0.2;
  double p_out = 0.02;
  int feature_dim = 0;  // 0 resolves to the number of blocks
  double feature_noise = 0.5;
  std::uint64_t seed = 0;

  int num_nodes() const;
  int resolved_feature_dim() const;
  void validate() const;
};

// Stochastic block model with noisy one-hot block-indicator features and
// label = block index. Deterministic for a fixed spec.
Graph generate_sbm(const SbmSpec& spec);

struct ClientDataset {
  int client_id = 0;
  Graph subgraph;                 // locally reindexed
  std::vector<int> global_index;  // local node id -> global node id
  std::vector<int> train_mask;    // local node ids, sorted
  std::vector<int> val_mask;
  std::vector<int> test_mask;
  int num_samples = 0;            // |train_mask|

  int num_nodes() const { return subgraph.num_nodes; }
};

struct Partition {
  std::vector<ClientDataset> clients;
  std::int64_t dropped_cross_edges = 0;  // edges lost between clients
};

// Dirichlet(alpha) label-skewed node assignment. Node sets are disjoint and
// cover the graph; each client owns the induced subgraph on its nodes and
// cross-client edges are dropped (counted in the result). Every client ends
// up with at least min(3, num_nodes / num_clients) nodes.
Partition partition_clients(const Graph& g, int num_clients, double alpha,
                            std::uint64_t seed);

// Seeded shuffle followed by an 80/10/10 train/val/test split. Every split
// is nonempty, which requires at least three nodes.
ClientDataset split_masks(ClientDataset client, std::uint64_t seed);

// Disjoint union of client subgraphs with merged masks, laid out in
// ascending client id. Used by the centralized baseline.
ClientDataset merge_clients(const std::vector<ClientDataset>& clients);

// Line-oriented text format: "n f C" header, then `node <id> <label>
// <floats>` lines, then `edge <u> <v>` lines. Floats carry 17 significant
// digits so save/load round-trips exactly.
void save_graph(std::ostream& out, const Graph& g);
Graph load_graph(std::istream& in);
void save_graph_file(const std::string& path, const Graph& g);
Graph load_graph_file(const std::string& path);

// Shared float formatting (17 significant digits, locale-independent).
std::string format_double(double value);

}  // namespace fedgraph
