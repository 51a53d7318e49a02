#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fedgraph/errors.hpp"
#include "fedgraph/graph.hpp"
#include "fedgraph/rng.hpp"

using namespace fedgraph;

namespace {

SbmSpec two_block_spec() {
  SbmSpec spec;
  spec.block_sizes = {2, 2};
  spec.p_in = 1.0;
  spec.p_out = 0.0;
  spec.feature_noise = 0.0;
  spec.seed = 1;
  return spec;
}

}  // namespace

TEST_CASE("degenerate probabilities force two 2-cliques") {
  const Graph g = generate_sbm(two_block_spec());
  CHECK(g.num_nodes == 4);
  CHECK(g.num_classes == 2);
  REQUIRE(g.edges.size() == 2);
  CHECK(g.edges[0] == std::make_pair(0, 1));
  CHECK(g.edges[1] == std::make_pair(2, 3));
  CHECK(g.labels[0] == 0);
  CHECK(g.labels[1] == 0);
  CHECK(g.labels[2] == 1);
  CHECK(g.labels[3] == 1);
  // noiseless features are exact one-hot block indicators
  CHECK(g.features(0, 0) == 1.0);
  CHECK(g.features(0, 1) == 0.0);
  CHECK(g.features(3, 1) == 1.0);
}

TEST_CASE("single block of one node has no edges") {
  SbmSpec spec;
  spec.block_sizes = {1};
  spec.p_in = 0.7;
  spec.p_out = 0.1;
  const Graph g = generate_sbm(spec);
  CHECK(g.num_nodes == 1);
  CHECK(g.edges.empty());
}

TEST_CASE("invalid sbm specs are rejected") {
  SbmSpec spec = two_block_spec();
  spec.p_out = 0.5;
  spec.p_in = 0.2;  // p_out > p_in
  CHECK_THROWS_AS(generate_sbm(spec), ConfigError);

  spec = two_block_spec();
  spec.block_sizes = {};
  CHECK_THROWS_AS(generate_sbm(spec), ConfigError);

  spec = two_block_spec();
  spec.block_sizes = {2, 0};
  CHECK_THROWS_AS(generate_sbm(spec), ConfigError);

  spec = two_block_spec();
  spec.p_in = 1.5;
  CHECK_THROWS_AS(generate_sbm(spec), ConfigError);

  spec = two_block_spec();
  spec.feature_noise = -0.1;
  CHECK_THROWS_AS(generate_sbm(spec), ConfigError);

  spec = two_block_spec();
  spec.feature_dim = 1;  // below the block count
  CHECK_THROWS_AS(generate_sbm(spec), ConfigError);
}

TEST_CASE("edge count concentrates and is frozen for seed 7") {
  SbmSpec spec;
  spec.block_sizes = {50, 50};
  spec.p_in = 0.2;
  spec.p_out = 0.02;
  spec.seed = 7;
  const Graph g = generate_sbm(spec);

  // Expectation 2*C(50,2)*0.2 + 2500*0.02 = 540, sigma = 21.
  const double expected = 540.0;
  const double sigma = 21.0;
  CHECK(std::abs(static_cast<double>(g.edges.size()) - expected) <= 3.0 * sigma);

  // Oracle: direct Bernoulli enumeration over all node pairs with the same
  // seeded stream the generator uses.
  Rng rng(substream_seed(spec.seed, "sbm.edges"));
  int count = 0;
  for (int u = 0; u < 100; ++u) {
    for (int v = u + 1; v < 100; ++v) {
      const bool same = (u < 50) == (v < 50);
      if (rng.uniform() < (same ? 0.2 : 0.02)) ++count;
    }
  }
  CHECK(static_cast<int>(g.edges.size()) == count);
  CHECK(static_cast<int>(g.edges.size()) == 545);  // regression value for seed 7
}

TEST_CASE("generation is deterministic per spec") {
  SbmSpec spec;
  spec.block_sizes = {10, 10, 10};
  spec.seed = 123;
  const Graph a = generate_sbm(spec);
  const Graph b = generate_sbm(spec);
  CHECK(a.edges == b.edges);
  CHECK(a.features == b.features);
  spec.seed = 124;
  const Graph c = generate_sbm(spec);
  CHECK(a.features != c.features);
}

TEST_CASE("single client owns the whole graph") {
  SbmSpec spec;
  spec.block_sizes = {6, 6};
  spec.seed = 5;
  const Graph g = generate_sbm(spec);
  const Partition part = partition_clients(g, 1, 0.3, 17);
  REQUIRE(part.clients.size() == 1);
  CHECK(part.dropped_cross_edges == 0);
  const auto& c = part.clients[0];
  CHECK(c.num_nodes() == g.num_nodes);
  CHECK(c.subgraph.edges == g.edges);  // identity reindexing
  for (int u = 0; u < g.num_nodes; ++u) CHECK(c.global_index[u] == u);
}

TEST_CASE("partition rejects more clients than nodes") {
  const Graph g = generate_sbm(two_block_spec());
  CHECK_THROWS_AS(partition_clients(g, 5, 0.3, 1), ConfigError);
  CHECK_THROWS_AS(partition_clients(g, 0, 0.3, 1), ConfigError);
  CHECK_THROWS_AS(partition_clients(g, 2, 0.0, 1), ConfigError);
}

TEST_CASE("partition covers the graph with disjoint induced subgraphs") {
  SbmSpec spec;
  spec.block_sizes = {30, 25, 20, 25};
  spec.p_in = 0.3;
  spec.p_out = 0.05;
  spec.seed = 99;
  const Graph g = generate_sbm(spec);
  const std::set<std::pair<int, int>> global_edges(g.edges.begin(), g.edges.end());

  for (int k : {2, 5, 10, 30}) {
    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
      const Partition part = partition_clients(g, k, 0.3, seed);
      REQUIRE(static_cast<int>(part.clients.size()) == k);

      std::set<int> seen;
      std::int64_t kept_edges = 0;
      for (const auto& client : part.clients) {
        CHECK(client.num_nodes() >= 3);
        for (int local = 0; local < client.num_nodes(); ++local) {
          const int u = client.global_index[local];
          CHECK(seen.insert(u).second);  // disjoint
          CHECK(client.subgraph.labels[local] == g.labels[u]);
          CHECK(client.subgraph.features.row(local) == g.features.row(u));
        }
        for (const auto& [a, b] : client.subgraph.edges) {
          int gu = client.global_index[a], gv = client.global_index[b];
          if (gu > gv) std::swap(gu, gv);
          CHECK(global_edges.count({gu, gv}) == 1);  // induced soundness
        }
        kept_edges += static_cast<std::int64_t>(client.subgraph.edges.size());
      }
      CHECK(static_cast<int>(seen.size()) == g.num_nodes);  // coverage
      CHECK(kept_edges + part.dropped_cross_edges ==
            static_cast<std::int64_t>(g.edges.size()));

      // Determinism: same arguments, bit-identical result.
      const Partition again = partition_clients(g, k, 0.3, seed);
      for (int i = 0; i < k; ++i) {
        CHECK(again.clients[i].global_index == part.clients[i].global_index);
        CHECK(again.clients[i].subgraph.edges == part.clients[i].subgraph.edges);
        CHECK(again.clients[i].subgraph.features == part.clients[i].subgraph.features);
      }
    }
  }
}

TEST_CASE("large alpha approaches uniform class proportions") {
  SbmSpec spec;
  spec.block_sizes = {40, 40, 40, 40, 40};
  spec.p_in = 0.1;
  spec.p_out = 0.01;
  spec.seed = 3;
  const Graph g = generate_sbm(spec);

  // Mean chi-square (vs uniform class histogram) over 20 seeds stays below
  // the df=4 0.99 quantile; the statistic itself concentrates near df.
  const double quantile_99 = 13.277;
  double total_stat = 0.0;
  int stats = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Partition part = partition_clients(g, 2, 1e6, seed);
    for (const auto& client : part.clients) {
      Eigen::VectorXd hist = Eigen::VectorXd::Zero(5);
      for (int local = 0; local < client.num_nodes(); ++local) {
        hist[client.subgraph.labels[local]] += 1.0;
      }
      const double expected = hist.sum() / 5.0;
      total_stat += ((hist.array() - expected).square() / expected).sum();
      stats += 1;
    }
  }
  CHECK(total_stat / stats < quantile_99);
}

TEST_CASE("smaller alpha is more heterogeneous") {
  SbmSpec spec;
  spec.block_sizes = {40, 40, 40, 40, 40};
  spec.seed = 3;
  const Graph g = generate_sbm(spec);

  auto mean_chi2 = [&](double alpha) {
    double total = 0.0;
    int stats = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Partition part = partition_clients(g, 4, alpha, seed);
      for (const auto& client : part.clients) {
        Eigen::VectorXd hist = Eigen::VectorXd::Zero(5);
        for (int local = 0; local < client.num_nodes(); ++local) {
          hist[client.subgraph.labels[local]] += 1.0;
        }
        const double expected = hist.sum() / 5.0;
        total += ((hist.array() - expected).square() / expected).sum();
        stats += 1;
      }
    }
    return total / stats;
  };
  CHECK(mean_chi2(0.1) > mean_chi2(100.0));
}

TEST_CASE("split sizes follow the 80/10/10 rule") {
  auto client_of = [](int n) {
    ClientDataset c;
    c.client_id = 0;
    c.subgraph.num_nodes = n;
    c.subgraph.num_classes = 1;
    c.subgraph.features = Matrix::Zero(n, 1);
    c.subgraph.labels = Eigen::VectorXi::Zero(n);
    for (int i = 0; i < n; ++i) c.global_index.push_back(i);
    return c;
  };

  const ClientDataset ten = split_masks(client_of(10), 1);
  CHECK(ten.train_mask.size() == 8);
  CHECK(ten.val_mask.size() == 1);
  CHECK(ten.test_mask.size() == 1);
  CHECK(ten.num_samples == 8);

  const ClientDataset three = split_masks(client_of(3), 1);
  CHECK(three.train_mask.size() == 1);
  CHECK(three.val_mask.size() == 1);
  CHECK(three.test_mask.size() == 1);

  CHECK_THROWS_AS(split_masks(client_of(2), 1), SplitError);

  // Two seeds: identical sizes, different permutations, full disjoint cover.
  const ClientDataset a = split_masks(client_of(100), 1);
  const ClientDataset b = split_masks(client_of(100), 2);
  CHECK(a.train_mask.size() == 80);
  CHECK(a.val_mask.size() == 10);
  CHECK(a.test_mask.size() == 10);
  CHECK(b.train_mask.size() == 80);
  CHECK(a.train_mask != b.train_mask);

  for (const auto& c : {a, b}) {
    std::set<int> all;
    for (int u : c.train_mask) all.insert(u);
    for (int u : c.val_mask) all.insert(u);
    for (int u : c.test_mask) all.insert(u);
    CHECK(all.size() == 100);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 99);
  }

  // Determinism per seed.
  const ClientDataset a2 = split_masks(client_of(100), 1);
  CHECK(a.train_mask == a2.train_mask);
  CHECK(a.val_mask == a2.val_mask);
}

TEST_CASE("split ratio stays within one node of exact for small clients") {
  for (int n = 3; n <= 40; ++n) {
    ClientDataset c;
    c.subgraph.num_nodes = n;
    c.subgraph.num_classes = 1;
    c.subgraph.features = Matrix::Zero(n, 1);
    c.subgraph.labels = Eigen::VectorXi::Zero(n);
    for (int i = 0; i < n; ++i) c.global_index.push_back(i);
    const ClientDataset s = split_masks(std::move(c), 7);
    CHECK(s.train_mask.size() + s.val_mask.size() + s.test_mask.size() ==
          static_cast<std::size_t>(n));
    CHECK(std::abs(static_cast<double>(s.val_mask.size()) - 0.1 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(s.test_mask.size()) - 0.1 * n) <= 1.0);
    CHECK(std::abs(static_cast<double>(s.train_mask.size()) - 0.8 * n) <= 2.0);
    CHECK(s.train_mask.size() >= 1);
  }
}

TEST_CASE("merging one client is the identity") {
  SbmSpec spec;
  spec.block_sizes = {5, 5};
  spec.seed = 21;
  const Graph g = generate_sbm(spec);
  Partition part = partition_clients(g, 1, 1.0, 4);
  const ClientDataset client = split_masks(std::move(part.clients[0]), 9);
  const ClientDataset merged = merge_clients({client});
  CHECK(merged.subgraph.edges == client.subgraph.edges);
  CHECK(merged.subgraph.features == client.subgraph.features);
  CHECK(merged.train_mask == client.train_mask);
  CHECK(merged.test_mask == client.test_mask);
}

TEST_CASE("merge offsets client blocks in id order") {
  SbmSpec spec;
  spec.block_sizes = {12, 12};
  spec.p_in = 0.5;
  spec.p_out = 0.1;
  spec.seed = 2;
  const Graph g = generate_sbm(spec);
  Partition part = partition_clients(g, 3, 0.5, 8);
  std::vector<ClientDataset> clients;
  for (auto& c : part.clients) clients.push_back(split_masks(std::move(c), c.client_id));

  const ClientDataset merged = merge_clients(clients);
  CHECK(merged.num_nodes() == g.num_nodes);
  std::size_t edge_total = 0, train_total = 0;
  for (const auto& c : clients) {
    edge_total += c.subgraph.edges.size();
    train_total += c.train_mask.size();
  }
  CHECK(merged.subgraph.edges.size() == edge_total);
  CHECK(merged.train_mask.size() == train_total);
  // First client occupies the first block unchanged.
  CHECK(merged.subgraph.features.topRows(clients[0].num_nodes()) ==
        clients[0].subgraph.features);
}

TEST_CASE("graph text format round-trips exactly") {
  SbmSpec spec;
  spec.block_sizes = {7, 6};
  spec.p_in = 0.4;
  spec.p_out = 0.1;
  spec.feature_noise = 0.73;
  spec.seed = 77;
  const Graph g = generate_sbm(spec);

  std::stringstream buffer;
  save_graph(buffer, g);
  const Graph back = load_graph(buffer);
  CHECK(back.num_nodes == g.num_nodes);
  CHECK(back.num_classes == g.num_classes);
  CHECK(back.edges == g.edges);
  CHECK(back.labels == g.labels);
  CHECK(back.features == g.features);  // bit-exact via 17 significant digits

  // A second round trip is also exact.
  std::stringstream buffer2;
  save_graph(buffer2, back);
  CHECK(buffer2.str() == buffer.str());
}

TEST_CASE("graph loader rejects malformed input") {
  CHECK_THROWS_AS(([] {
                    std::stringstream ss("nonsense");
                    return load_graph(ss);
                  })(),
                  ConfigError);
  CHECK_THROWS_AS(([] {
                    std::stringstream ss("2 1 1\nnode 0 0 1.0\n");  // missing node 1
                    return load_graph(ss);
                  })(),
                  ConfigError);
  CHECK_THROWS_AS(([] {
                    std::stringstream ss("2 1 1\nnode 0 0 1.0\nnode 1 0 1.0\nedge 0 5\n");
                    return load_graph(ss);
                  })(),
                  ShapeError);
}

TEST_CASE("mean adjacency rows are stochastic or zero") {
  SbmSpec spec;
  spec.block_sizes = {8, 8};
  spec.p_in = 0.4;
  spec.p_out = 0.05;
  spec.seed = 31;
  const Graph g = generate_sbm(spec);
  const Matrix agg = mean_adjacency(g);
  const auto adj = adjacency_lists(g);
  for (int u = 0; u < g.num_nodes; ++u) {
    if (adj[u].empty()) {
      CHECK(agg.row(u).sum() == 0.0);
    } else {
      CHECK(agg.row(u).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}
