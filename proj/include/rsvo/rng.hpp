#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace rsvo {

// SplitMix64 step, used to derive well-separated stream seeds from a master
// seed plus salt words. Stable across platforms.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(master ^ 0x6a09e667f3bcc909ull);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return splitmix64(s ^ c);
}

// Seeded generator with portable draw conversions. std::*_distribution is
// implementation-defined, so uniform/gaussian/laplacian sampling is done by
// hand to keep seeded outputs byte-identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller (cosine branch); consumes two uniforms per sample.
  double gaussian(double sigma = 1.0) {
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform01();
    return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Zero-mean Laplacian with standard deviation sigma (scale b = sigma/sqrt(2)).
  double laplacian(double sigma = 1.0) {
    const double b = sigma / std::sqrt(2.0);
    const double u = uniform01() - 0.5;
    const double mag = std::min(std::abs(u) * 2.0, 1.0 - 0x1.0p-53);
    return (u < 0 ? b : -b) * std::log1p(-mag);
  }

  // k distinct indices drawn uniformly from [0, n), partial Fisher-Yates.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(uniform_index(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rsvo
