#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tbsim {

// splitmix64 step, used for seed mixing and substream derivation.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded random stream with stable transforms. std::normal_distribution and
// friends are implementation-defined, so the uniform->gaussian mapping is
// done here to keep outputs reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(mix64(seed)) {}

  // Derives an independent substream; used to give each rollout sample its
  // own index-keyed stream regardless of scheduling.
  static Rng substream(uint64_t seed, uint64_t index) {
    return Rng(mix64(seed ^ mix64(index + 0x51ed2701)));
  }

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Box-Muller; draws two uniforms per call so the stream advance does not
  // depend on call parity.
  double gaussian() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double gaussian(double mean, double std) { return mean + std * gaussian(); }

  // Uniform subset of k distinct indices out of n (partial Fisher-Yates).
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    if (k > n) k = n;
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(next_u64() % static_cast<uint64_t>(n - i));
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace tbsim
