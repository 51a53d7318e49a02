#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace fedgraph {

// Seed for a named substream of a root seed. Every source of randomness in
// the simulator draws from its own stream (purpose label plus up to two
// indices), so adding or reordering calls never perturbs unrelated streams.
std::uint64_t substream_seed(std::uint64_t root, std::string_view label,
                             std::uint64_t index_a = 0,
                             std::uint64_t index_b = 0);

// Seeded generator with the handful of distributions the simulator needs.
// Distributions are built on the raw mt19937_64 word stream rather than
// <random> distribution objects, so sampled values are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform();

  // Unbiased uniform integer on [0, n).
  int uniform_int(int n);

  // Standard normal via Box-Muller.
  double normal();

  // Gamma(shape, 1), Marsaglia-Tsang; valid for any shape > 0.
  double gamma(double shape);

  // Symmetric Dirichlet(alpha) over `dim` categories.
  Eigen::VectorXd dirichlet(double alpha, int dim);

  // Index drawn from a probability vector (row of a stochastic matrix).
  int categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs);

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (int i = static_cast<int>(values.size()) - 1; i > 0; --i) {
      std::swap(values[i], values[uniform_int(i + 1)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedgraph
