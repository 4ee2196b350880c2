// Copyright 2026 The SMAE Authors
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

#include <cstring>
#include <set>

#include <gtest/gtest.h>

#include "smae/patch_mask.hpp"

namespace smae {
namespace {

TEST(Patchify, LaysOutRowsAndRoundTrips) {
  std::vector<double> x{1, 2, 3, 4, 5, 6};
  PatchSequence p = patchify(x, 2);
  EXPECT_EQ(p.patches, Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  EXPECT_EQ(unpatchify(p), x);
}

TEST(Patchify, BitwiseRoundTripOnRandomSpectra) {
  Rng rng(11);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> x(1000);
    for (double& v : x) v = rng.normal(0.0, 1e3);
    auto back = unpatchify(patchify(x, 100));
    ASSERT_EQ(std::memcmp(back.data(), x.data(), x.size() * sizeof(double)), 0);
  }
}

TEST(Patchify, DivisibilityErrorNamesBoth) {
  std::vector<double> x(1000);
  try {
    patchify(x, 300);
    FAIL();
  } catch (const DivisibilityError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("300"), std::string::npos) << m;
    EXPECT_NE(m.find("1000"), std::string::npos) << m;
  }
}

TEST(Mask, CountsAreExact) {
  EXPECT_EQ(mask_count(10, 0.5), 5u);
  EXPECT_EQ(mask_count(10, 0.0), 0u);
  EXPECT_EQ(mask_count(10, 1.0), 10u);
  EXPECT_EQ(mask_count(4, 0.75), 3u);
  Rng rng(1);
  for (double r : {0.0, 0.1, 0.25, 0.5, 0.9, 1.0}) {
    for (int k = 0; k < 20; ++k) {
      MaskPlan p = sample_mask(10, r, rng);
      EXPECT_EQ(p.masked.size(), mask_count(10, r));
      EXPECT_TRUE(std::is_sorted(p.masked.begin(), p.masked.end()));
      std::set<std::size_t> all(p.masked.begin(), p.masked.end());
      for (auto v : p.visible()) EXPECT_TRUE(all.insert(v).second);
      EXPECT_EQ(all.size(), 10u);
    }
  }
}

TEST(Mask, SeededAndRangeChecked) {
  Rng a(4), b(4);
  EXPECT_EQ(sample_mask(20, 0.5, a).masked, sample_mask(20, 0.5, b).masked);
  EXPECT_THROW(sample_mask(10, 1.5, a), ContractError);
  EXPECT_THROW(sample_mask(10, -0.1, a), ContractError);
}

TEST(Mask, FromIndicesValidates) {
  EXPECT_THROW(MaskPlan::from_indices(4, {1, 1}), ContractError);
  EXPECT_THROW(MaskPlan::from_indices(4, {4}), ContractError);
  MaskPlan p = MaskPlan::from_indices(4, {3, 1});
  EXPECT_EQ(p.masked, (std::vector<std::size_t>{1, 3}));
  EXPECT_TRUE(p.is_masked(3));
  EXPECT_FALSE(p.is_masked(0));
  EXPECT_EQ(p.visible(), (std::vector<std::size_t>{0, 2}));
}

TEST(Mask, SelectionIsRoughlyUniform) {
  Rng rng(2);
  std::vector<int> hits(10, 0);
  const int trials = 20000;
  for (int k = 0; k < trials; ++k)
    for (auto i : sample_mask(10, 0.3, rng).masked) ++hits[i];
  for (int h : hits) EXPECT_NEAR(h / double(trials), 0.3, 0.02);
}

}  // namespace
}  // namespace smae
