#pragma once

// Deterministic random primitives. Everything is built on mt19937_64 plus
// hand-rolled draw functions, so a (seed, stream) pair produces the same
// sequence on every platform and standard library.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace railmarkov {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable sub-stream seed for (seed, stream index) pairs, e.g. one per tree.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ed270b4d2fb0c1ULL));
}

inline std::uint64_t hash_str(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased draw in [0, n) via rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + int(below(std::uint64_t(hi - lo) + 1));
  }

  // Box-Muller, no spare caching so the draw count is predictable.
  double normal(double mean, double sigma) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    return mean + sigma * z;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {  // Fisher-Yates
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = std::size_t(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First m entries of a random permutation of [0, n).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t m) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < m && i + 1 < n; ++i) {
      std::size_t j = i + std::size_t(below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(m);
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace railmarkov
