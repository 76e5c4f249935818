#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace xai {

/// SplitMix64 finalizer. Used to expand user seeds and to derive child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a over bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for a named purpose. Streams derived from distinct tags are
/// independent of the order in which they are created.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  return splitmix64(parent ^ fnv1a64(tag));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) + index);
}

/// PCG32 (XSH-RR output, 64-bit LCG state, O'Neill 2014). All sampling in the
/// library goes through this generator and the helpers below; none of the
/// implementation-defined <random> distributions are used, so sequences are
/// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0x14057b7ef767814fULL) : seed_(seed) {
    inc_ = (stream << 1u) | 1u;
    state_ = 0;
    next_u32();
    state_ += splitmix64(seed);
    next_u32();
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound) by rejection (no modulo bias).
  std::uint32_t below(std::uint32_t bound) {
    std::uint32_t threshold = (0u - bound) % bound;
    for (;;) {
      std::uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal via Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates, iterating from the back.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(static_cast<std::uint32_t>(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// 0..n-1 shuffled under `seed`.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace xai
