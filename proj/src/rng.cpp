#include "fedgraph/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fedgraph {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t root, std::string_view label,
                             std::uint64_t index_a, std::uint64_t index_b) {
  std::uint64_t h = splitmix64(root ^ fnv1a(label));
  h = splitmix64(h ^ index_a);
  h = splitmix64(h ^ index_b);
  return h;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t threshold = (0ULL - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return static_cast<int>(r % bound);
  }
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = kTwoPi * u2;
  spare_ = radius * std::sin(angle);
  have_spare_ = true;
  return radius * std::cos(angle);
}

double Rng::gamma(double shape) {
  if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be positive");
  if (shape < 1.0) {
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Eigen::VectorXd Rng::dirichlet(double alpha, int dim) {
  if (dim <= 0) throw std::invalid_argument("dirichlet: dim must be positive");
  Eigen::VectorXd draw(dim);
  for (int i = 0; i < dim; ++i) draw[i] = gamma(alpha);
  const double total = draw.sum();
  if (total <= 0.0) return Eigen::VectorXd::Constant(dim, 1.0 / dim);
  return draw / total;
}

int Rng::categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
  const double u = uniform();
  double cumulative = 0.0;
  int last = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last = i;
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  return last;  // cumulative sum landed a hair below 1
}

}  // namespace fedgraph
