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

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "smae/attribution.hpp"
#include "test_util.hpp"

namespace smae {
namespace {

SmaeModel classifier(std::uint64_t seed = 3) {
  SmaeModel m = SmaeModel::initialize(testing::tiny_config(), seed, false).with_classifier(2, seed + 1);
  // larger head weights so scores depend visibly on the tokens
  for (double& v : m.param("cls_head.weight").data()) v *= 50.0;
  return m;
}

std::vector<double> spectrum(std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<double> x(20);
  for (double& v : x) v = rng.normal();
  return x;
}

TEST(GradCam, RangeAndPatchwiseConstant) {
  // A target can have an all-zero map; the maximum is then 0, otherwise 1.
  std::size_t nonzero = 0;
  for (std::size_t target : {0, 1}) {
    RelevanceMap map = grad_cam(classifier(), spectrum(), target);
    ASSERT_EQ(map.values.size(), 20u);
    const double top = *std::max_element(map.values.begin(), map.values.end());
    EXPECT_TRUE(top == 0.0 || top == 1.0) << top;
    nonzero += top == 1.0;
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_GE(map.values[i], 0.0);
      EXPECT_LE(map.values[i], 1.0);
      EXPECT_EQ(map.values[i], map.values[i - i % 5]);
    }
  }
  EXPECT_GE(nonzero, 1u);
}

TEST(GradCam, ZeroHeadGivesZeroMap) {
  SmaeModel m = classifier();
  for (double& v : m.param("cls_head.weight").data()) v = 0.0;
  for (double v : grad_cam(m, spectrum(), 1).values) EXPECT_EQ(v, 0.0);
}

TEST(GradCam, InvariantToPositiveHeadScaling) {
  SmaeModel m = classifier();
  const auto base = grad_cam(m, spectrum(), 1).values;
  for (double& v : m.param("cls_head.weight").data()) v *= 7.5;
  const auto scaled = grad_cam(m, spectrum(), 1).values;
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base[i], scaled[i], 1e-9);
}

TEST(GradCam, OpposedClassesHaveDisjointSupport) {
  SmaeModel m = classifier();
  Tensor& w = m.param("cls_head.weight");
  for (std::size_t r = 0; r < w.rows(); ++r) w(r, 1) = -w(r, 0);
  const auto a = token_relevance(m, spectrum(), 0), b = token_relevance(m, spectrum(), 1);
  bool any = false;
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a[t] * b[t], 0.0);
    any = any || a[t] > 0 || b[t] > 0;
  }
  EXPECT_TRUE(any);
}

TEST(GradCam, Deterministic) {
  EXPECT_EQ(grad_cam(classifier(), spectrum(), 0).values, grad_cam(classifier(), spectrum(), 0).values);
}

TEST(GradCam, Errors) {
  EXPECT_THROW(grad_cam(SmaeModel::initialize(testing::tiny_config(), 1), spectrum(), 0), ConfigError);
  EXPECT_THROW(grad_cam(classifier(), spectrum(), 2), ContractError);
}

TEST(GradCam, AverageAndCsv) {
  RelevanceMap a{{0.0, 1.0, 0.5}, 0}, b{{1.0, 1.0, 0.0}, 0};
  std::vector<RelevanceMap> maps{a, b};
  RelevanceMap avg = average_maps(maps);
  EXPECT_EQ(avg.values, (std::vector<double>{0.5, 1.0, 0.25}));
  EXPECT_EQ(avg.to_csv().substr(0, 16), "index,relevance\n");
  RelevanceMap c{{1.0}, 0};
  maps.push_back(c);
  EXPECT_THROW(average_maps(maps), ShapeError);
}

}  // namespace
}  // namespace smae
