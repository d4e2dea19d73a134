// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace lfmm {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive well-separated child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for stream `index` of `purpose` under `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t purpose,
                                 std::uint64_t index = 0) {
  return mix_seed(mix_seed(base ^ mix_seed(purpose)) + index);
}

// Stream tags for derive_seed.
namespace stream {
inline constexpr std::uint64_t kHaar = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kTest = 3;
inline constexpr std::uint64_t kTrial = 4;
inline constexpr std::uint64_t kEquivalent = 5;
inline constexpr std::uint64_t kRestart = 6;
}  // namespace stream

}  // namespace lfmm
