// Copyright 2026 The vseg Authors
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
#include <initializer_list>
#include <random>

namespace vseg {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives the seed of a counter-based stream from a base seed and a tuple of
/// stream coordinates, e.g. (seed, kAugmentStream, iteration, slot).
inline std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) noexcept {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t id : ids) h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids = {}) {
  return Rng(stream_seed(seed, ids));
}

/// Stream tags so that different consumers of one seed never share a sequence.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kBatch = 2;
inline constexpr std::uint64_t kAugment = 3;
inline constexpr std::uint64_t kPhantom = 4;
inline constexpr std::uint64_t kSplit = 5;
inline constexpr std::uint64_t kForest = 6;
}  // namespace streams

}  // namespace vseg
