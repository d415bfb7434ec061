#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace stabilex {

// FNV-1a over the tag bytes; stable across platforms and compilers.
std::uint64_t hash_tag(std::string_view tag) noexcept;

// Counter-based key derivation: the key of (seed, tag, index) depends on
// nothing else, so streams can be created in any order or thread.
std::uint64_t derive_key(std::uint64_t seed, std::string_view tag, std::uint64_t index) noexcept;

/// Deterministic random stream (xoshiro256**, seeded through SplitMix64).
///
/// All distributions are implemented here rather than taken from <random>,
/// whose distribution algorithms differ between standard libraries.
class Stream {
 public:
  explicit Stream(std::uint64_t key) noexcept;
  Stream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) noexcept
      : Stream(derive_key(seed, tag, index)) {}

  std::uint64_t next_u64() noexcept;

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stabilex
