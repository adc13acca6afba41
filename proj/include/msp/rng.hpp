#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace msp {

// Deterministic random source. std::mt19937_64 has a standard-fixed output
// sequence; the value transforms below avoid std distributions, whose output
// is implementation-defined, so byte-identical runs survive stdlib changes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  // Independent substream for (seed, stream), e.g. one per dataset example.
  static Rng substream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix(seed) ^ mix(mix(stream) + 0x9e3779b97f4a7c15ull));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in {0, ..., n-1}. Modulo bias is < 2^-59 for the n used here.
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  // Uniform in {lo, ..., hi} inclusive.
  int uniform_range(int lo, int hi) { return lo + uniform_int(hi - lo + 1); }

  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Index sampled from an (unnormalized is fine) non-negative weight vector.
  int categorical(const Eigen::VectorXd& weights) {
    const double total = weights.sum();
    double u = uniform() * total;
    for (int i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return static_cast<int>(weights.size()) - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  // Random permutation of {0, ..., n-1}.
  std::vector<int> permutation(int n) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    shuffle(perm);
    return perm;
  }

 private:
  // splitmix64 finalizer; spreads low-entropy seeds before they reach the engine.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace msp
