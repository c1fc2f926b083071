#pragma once

// Portable seeded randomness. Every draw in the pipeline goes through these
// primitives so a seed produces the same stream in any language that
// implements the same four pieces:
//
//   splitmix64        state seeding and stream derivation
//   xoshiro256**      the generator itself (Blackman & Vigna, 2018)
//   uniform_below(n)  Lemire multiply-shift with rejection
//   uniform01()       top 53 bits scaled by 2^-53
//
// std::uniform_int_distribution and std::shuffle are deliberately not used:
// their output is implementation-defined.

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace synthabsa {

std::uint64_t splitmix64_next(std::uint64_t& state) noexcept;

/// FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next() noexcept;

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound) noexcept;

  /// Uniform double in [0, 1).
  double uniform01() noexcept;

  /// Index drawn from a discrete distribution by inverse CDF over `weights`.
  std::size_t categorical(std::span<const double> weights) noexcept;

  /// Fisher-Yates, descending: for i = n-1..1 swap(i, uniform_below(i+1)).
  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::array<std::uint64_t, 4> s_{};
};

/// Seed for a named sub-stream of a master seed. Streams with different
/// labels are independent; the same (master, label) always yields the same seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept;

inline Rng derive_stream(std::uint64_t master, std::string_view label) noexcept {
  return Rng(derive_seed(master, label));
}

}  // namespace synthabsa
