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

#include "smae/checkpoint.hpp"
#include "test_util.hpp"

namespace smae {
namespace {

using testing::tiny_config;

double max_float_deviation(const SmaeModel& a, const SmaeModel& b) {
  double worst = 0;
  for (const auto& p : a.parameters()) {
    const Tensor& q = b.param(p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double tol = std::abs(p.value[i]) * 6e-8;  // half an ulp of float32
      worst = std::max(worst, std::abs(p.value[i] - q[i]) - tol);
    }
  }
  return worst;
}

TEST(Checkpoint, RoundTripWithinFloatPrecision) {
  SmaeConfig c = tiny_config();
  c.n_classes = 2;
  SmaeModel m = SmaeModel::initialize(c, 3);
  const auto path = testing::temp_dir("ck_rt") / "m.smae";
  save_checkpoint(m, path, {{"note", "x"}});
  Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.model.config(), m.config());
  EXPECT_EQ(ck.metadata.at("note"), "x");
  EXPECT_LE(max_float_deviation(m, ck.model), 0.0);
  // a second save of the loaded model is byte-identical
  EXPECT_EQ(encode_checkpoint(ck.model, ck.metadata), encode_checkpoint(load_checkpoint(path).model, ck.metadata));
}

TEST(Checkpoint, HeaderLayout) {
  const std::string bytes = encode_checkpoint(SmaeModel::initialize(tiny_config(), 1), {});
  EXPECT_EQ(bytes.substr(0, 4), "SMAE");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
}

TEST(Checkpoint, PermutedHeaderOrderLoadsByName) {
  SmaeModel m = SmaeModel::initialize(tiny_config(), 3);
  std::vector<std::string> order;
  for (const auto& p : m.parameters()) order.push_back(p.name);
  std::reverse(order.begin(), order.end());
  Checkpoint ck = decode_checkpoint(encode_checkpoint(m, {}, order));
  EXPECT_LE(max_float_deviation(m, ck.model), 0.0);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const std::string good = encode_checkpoint(SmaeModel::initialize(tiny_config(), 1), {});
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), BadMagicError);
  bad = good;
  bad[4] = 2;
  EXPECT_THROW(decode_checkpoint(bad), UnsupportedVersionError);
  EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 4)), PayloadLengthError);
  EXPECT_THROW(decode_checkpoint(good + "abcd"), PayloadLengthError);
  EXPECT_THROW(decode_checkpoint("SM"), BadMagicError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.smae"), IoError);
}

}  // namespace
}  // namespace smae
