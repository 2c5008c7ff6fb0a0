#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gpaudit/error.hpp"

// Deterministic randomness. Every distribution is hand-rolled on top of
// std::mt19937_64 because the standard pins the engine's output but not the
// <random> distributions, and reproducibility here must be bit-exact.

namespace gpaudit {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Stable per-role seed so that unrelated pipeline stages never share a stream.
inline uint64_t derive_seed(uint64_t base, const std::string& role) {
  return splitmix64(base ^ fnv1a64(role));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // 53-bit mantissa uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller with a cached spare draw.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Inverse-CDF Laplace draw with scale beta:
  //   u ~ Uniform(-1/2, 1/2),  x = -beta * sgn(u) * ln(1 - 2|u|)
  double laplace(double beta) {
    check(beta >= 0.0, "laplace: scale must be >= 0");
    if (beta == 0.0) return 0.0;
    double u;
    do {
      u = uniform() - 0.5;
    } while (u == -0.5);
    double s = (u > 0.0) - (u < 0.0);
    return -beta * s * std::log1p(-2.0 * std::fabs(u));
  }

  // Unbiased integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    check(n > 0, "uniform_int: n must be positive");
    uint64_t bound = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t r;
    do {
      r = eng_();
    } while (r >= bound);
    return r % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), in random order.
  std::vector<int> sample_without_replacement(int n, int k) {
    check(k >= 0 && k <= n, "sample_without_replacement: need 0 <= k <= n");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(uniform_int(static_cast<uint64_t>(n - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gpaudit
