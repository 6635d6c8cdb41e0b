/*
 * Copyright 2026 The shiftcp Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>

namespace shiftcp {

/// Component tags for seed derivation. Values are part of the reproducibility
/// contract; never renumber.
enum class SeedStream : std::uint64_t {
  kData = 1,
  kProbe = 2,
  kVae = 3,
  kScoreNoise = 4,
  kTrial = 5,
  kShift = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed splitting rule:
///   derive_seed(base, stream, index) =
///     splitmix64(splitmix64(base ^ (stream * 0xD1B54A32D192ED03)) + index)
/// Each (stream, index) pair yields an independent 64-bit seed.
inline std::uint64_t derive_seed(std::uint64_t base, SeedStream stream,
                                 std::uint64_t index = 0) {
  const auto tag = static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL;
  return splitmix64(splitmix64(base ^ tag) + index);
}

/// Maps 64 random bits to the open interval (0, 1).
inline double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace shiftcp
