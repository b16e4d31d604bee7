// Copyright 2026 The partsel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string_view>

namespace partsel {

inline constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 finalizer: bijective with full avalanche.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

/// Folds one word into a key, producing an independent stream key. Chained
/// calls derive keyed sub-streams, e.g. (seed, mechanism, iteration, user).
[[nodiscard]] constexpr std::uint64_t derive_key(std::uint64_t key,
                                                 std::uint64_t word) noexcept {
  return mix64((key + kGolden64) ^ mix64(word + kGolden64));
}

/// FNV-1a over raw bytes; stable across platforms and runs, which makes it
/// usable as the identity hash for tokens and user ids in keyed noise streams.
[[nodiscard]] constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Maps 64 random bits to a double strictly inside (0, 1). The lattice
/// (k + 1/2) * 2^-53 is symmetric about 1/2, so sign decisions taken on
/// derived variates are exactly unbiased.
[[nodiscard]] constexpr double unit_from_bits(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Counter-based generator: the i-th output is a pure function of (key, i).
/// Draws can be replayed or computed out of order, independent of thread
/// schedule, which is what makes parallel runs reproducible.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng() = default;
  explicit constexpr CounterRng(std::uint64_t key,
                                std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~0ULL; }

  constexpr result_type operator()() noexcept {
    return mix64(key_ + ++counter_ * kGolden64);
  }

  /// Uniform double in (0, 1).
  constexpr double next_unit() noexcept { return unit_from_bits((*this)()); }

  /// Uniform integer in [0, n); requires n >= 1. Rejection removes the
  /// modulo bias.
  constexpr std::uint64_t next_below(std::uint64_t n) noexcept {
    const std::uint64_t rem = (0 - n) % n;  // 2^64 mod n
    std::uint64_t x = (*this)();
    while (x < rem) x = (*this)();
    return x % n;
  }

  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace partsel
