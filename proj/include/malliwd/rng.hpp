/*
 * Copyright 2026 The malliwd Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Counter-based random streams keyed by (master seed, path index, step).
//
// Every draw is a pure function of its key and counter, so a path can be
// regenerated, or a branch propagated, without touching shared generator
// state. The block cipher is Philox4x32-10 (Salmon et al., SC'11).

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace malliwd {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

/// Disjoint substreams of one (seed, path) pair.
enum class StreamTag : std::uint32_t {
  kIncrements = 0,
  kBranch = 1,
  kBranchTime = 2,
  kSeedDerivation = 3,
};

/// One 128-bit block: two uniforms on the open interval (0, 1).
struct UniformPair {
  double first;
  double second;
};

class StreamKey {
 public:
  constexpr StreamKey(std::uint64_t master_seed, std::uint64_t path_index)
      : seed_(master_seed), path_(path_index) {}

  constexpr std::uint64_t master_seed() const { return seed_; }
  constexpr std::uint64_t path_index() const { return path_; }

  constexpr Philox4x32::Counter raw(StreamTag tag, std::uint32_t step,
                                    std::uint32_t block = 0) const {
    const Philox4x32::Counter ctr{
        step, (static_cast<std::uint32_t>(tag) << 24) | (block & 0xFFFFFFu),
        static_cast<std::uint32_t>(path_),
        static_cast<std::uint32_t>(path_ >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                              static_cast<std::uint32_t>(seed_ >> 32)};
    return Philox4x32::generate(ctr, key);
  }

  constexpr UniformPair uniforms(StreamTag tag, std::uint32_t step,
                                 std::uint32_t block = 0) const {
    const auto r = raw(tag, step, block);
    return {to_open_unit(r[0], r[1]), to_open_unit(r[2], r[3])};
  }

  /// Two independent standard normals (Box-Muller on one block).
  std::array<double, 2> normals(StreamTag tag, std::uint32_t step,
                                std::uint32_t block = 0) const {
    const auto [u1, u2] = uniforms(tag, step, block);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  // 52 random bits mapped to the midpoint grid of (0, 1); never 0 or 1.
  static constexpr double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits =
        ((std::uint64_t{hi} << 32) | std::uint64_t{lo}) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t path_;
};

/// Child seed for replication/iteration `index` of a run keyed by `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  const auto r = StreamKey(master, index).raw(StreamTag::kSeedDerivation, 0);
  return (std::uint64_t{r[0]} << 32) | r[1];
}

}  // namespace malliwd
