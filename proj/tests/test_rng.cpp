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

#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "malliwd/numeric.hpp"
#include "malliwd/path.hpp"
#include "malliwd/rng.hpp"

namespace malliwd {
namespace {

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswers) {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  EXPECT_EQ(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}),
            (C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(Philox4x32::generate(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                                 K{0xffffffff, 0xffffffff}),
            (C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(Philox4x32::generate(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                                 K{0xa4093822, 0x299f31d0}),
            (C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Philox, UniformsStayInsideOpenInterval) {
  EXPECT_GT(StreamKey::to_open_unit(0, 0), 0.0);
  EXPECT_LT(StreamKey::to_open_unit(0xffffffff, 0xffffffff), 1.0);
}

TEST(Noise, RegenerationIsBitIdentical) {
  const TimeGrid grid(1.0, 4);
  const auto a = generate_noise<1>(7, 0, grid);
  const auto b = generate_noise<1>(7, 0, grid);
  ASSERT_EQ(a.increments.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(a.increments[k][0], b.increments[k][0]);
}

TEST(Noise, SubstreamsDiffer) {
  const TimeGrid grid(1.0, 4);
  const auto a = generate_noise<1>(7, 0, grid);
  const auto b = generate_noise<1>(7, 1, grid);
  const auto c = generate_noise<1>(8, 0, grid);
  EXPECT_NE(a.increments[0][0], b.increments[0][0]);
  EXPECT_NE(a.increments[0][0], c.increments[0][0]);
}

TEST(Noise, IncrementVarianceMatchesDt) {
  const TimeGrid grid(10.0, 1000);  // dt = 0.01
  std::vector<double> xs;
  xs.reserve(1000000);
  for (std::uint64_t p = 0; p < 1000; ++p) {
    for (const auto& v : generate_noise<1>(11, p, grid).increments) xs.push_back(v[0]);
  }
  const double var = sample_variance(xs);
  // Gaussian sample variance has standard error sqrt(2 / n) * variance.
  const double se = std::sqrt(2.0 / static_cast<double>(xs.size())) * 0.01;
  EXPECT_NEAR(var, 0.01, 3.0 * se);
  EXPECT_NEAR(sample_mean(xs), 0.0, 3.0 * std::sqrt(0.01 / xs.size()));
}

TEST(Noise, NeighbouringPathsAreUncorrelated) {
  const TimeGrid grid(1.0, 100000);
  const auto a = generate_noise<1>(7, 0, grid);
  const auto b = generate_noise<1>(7, 1, grid);
  std::vector<double> xa, xb;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    xa.push_back(a.increments[k][0]);
    xb.push_back(b.increments[k][0]);
  }
  const double corr =
      sample_covariance(xa, xb) / std::sqrt(sample_variance(xa) * sample_variance(xb));
  EXPECT_LT(std::abs(corr), 3.0 / std::sqrt(static_cast<double>(grid.steps())));
}

TEST(Noise, MultiDimensionalComponentsAreDistinct) {
  const TimeGrid grid(1.0, 8);
  const auto n = generate_noise<3>(5, 2, grid);
  for (const auto& v : n.increments) {
    EXPECT_NE(v[0], v[1]);
    EXPECT_NE(v[1], v[2]);
  }
}

TEST(Seeds, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Summation, CompensationRecoversSmallAddends) {
  CompensatedSum acc;
  acc.add(1.0);
  for (int i = 0; i < 1000; ++i) acc.add(1e-16);
  acc.add(-1.0);
  EXPECT_NEAR(acc.value(), 1e-13, 1e-26);
}

TEST(Summation, ParallelForResultIndependentOfWorkers) {
  std::vector<double> one(1000), many(1000);
  parallel_for(1000, [&](std::size_t i) { one[i] = std::sin(double(i)); }, 1);
  parallel_for(1000, [&](std::size_t i) { many[i] = std::sin(double(i)); }, 7);
  EXPECT_EQ(compensated_sum(one), compensated_sum(many));
}

}  // namespace
}  // namespace malliwd
