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

#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "smae/autodiff.hpp"
#include "test_util.hpp"

namespace smae {
namespace {

using ad::Tape;
using ad::Var;
using testing::random_tensor;

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t(1, 0), 4.0);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.row(1)[2], 6.0);
}

TEST(Tensor, Reshape) {
  Tensor t = Tensor::matrix({{1, 2}, {3, 4}});
  Tensor r = t.reshaped({4});
  EXPECT_EQ(r.rank(), 1u);
  EXPECT_EQ(r[3], 4.0);
  EXPECT_THROW(t.reshaped({3}), ShapeError);
}

TEST(Autodiff, MatmulValues) {
  Tape t;
  Var a = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = t.constant(Tensor::matrix({{5, 6}, {7, 8}}));
  EXPECT_EQ(ad::matmul(a, b).value(), Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST(Autodiff, MatmulShapeErrorNamesBothShapes) {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({2, 3}));
  try {
    ad::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
}

TEST(Autodiff, BackwardNeedsScalar) {
  Tape t;
  Var a = t.parameter_owned(Tensor({2}, 1.0), 0);
  EXPECT_THROW(t.backward(a), ContractError);
}

TEST(Autodiff, ReusedLeafAccumulates) {
  Tape t;
  Var x = t.parameter_owned(Tensor::vector({1.5, -2.0}), 0);
  auto g = t.backward(ad::sum(ad::mul(x, x)));
  EXPECT_DOUBLE_EQ(g.at(0)[0], 3.0);
  EXPECT_DOUBLE_EQ(g.at(0)[1], -4.0);
}

TEST(Autodiff, UnreachedParameterGetsZeros) {
  Tape t;
  Var x = t.parameter_owned(Tensor::vector({1.0}), 0);
  Var y = t.parameter_owned(Tensor::vector({2.0, 3.0}), 1);
  auto g = t.backward(ad::sum(x));
  ASSERT_EQ(g.count(1), 1u);
  EXPECT_EQ(g.at(1), Tensor({2}));
}

TEST(Autodiff, CheckFiniteRaises) {
  Tape t;
  t.set_check_finite(true);
  Var x = t.constant(Tensor::vector({1e308}));
  EXPECT_THROW(ad::scale(x, 10.0), ContractError);
}

TEST(Autodiff, SoftmaxRowsSumToOneAndResistOverflow) {
  Tape t;
  Var x = t.constant(Tensor::matrix({{1000, 1001, 1002}, {-5, 0, 5}}));
  const Tensor& p = ad::softmax(x, 1).value();
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (double v : p.row(r)) {
      EXPECT_TRUE(std::isfinite(v));
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
  // shift invariance: row 0 equals softmax of {0, 1, 2}
  const double z = 1 + std::exp(1.0) + std::exp(2.0);
  EXPECT_NEAR(p(0, 0), 1.0 / z, 1e-15);
}

TEST(Autodiff, SoftmaxAxisZero) {
  Tape t;
  Var x = t.constant(Tensor::matrix({{0, 1}, {0, 3}}));
  const Tensor& p = ad::softmax(x, 0).value();
  EXPECT_NEAR(p(0, 0) + p(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
}

TEST(Autodiff, GeluMatchesTanhFormula) {
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    const double want = 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
    EXPECT_NEAR(ad::gelu_value(x), want, 1e-15);
  }
}

TEST(Autodiff, LayerNormConstantRowWithZeroEps) {
  Tape t;
  Var x = t.constant(Tensor::matrix({{2, 2, 2}}));
  Var g = t.constant(Tensor({3}, 1.0));
  Var b = t.constant(Tensor({3}, 0.0));
  for (double v : ad::layer_norm(x, g, b, 0.0).value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Autodiff, CrossEntropyExamples) {
  Tape t;
  Var u = t.constant(Tensor::matrix({{0.3, 0.3, 0.3, 0.3}}));
  EXPECT_NEAR(ad::cross_entropy(u, {2}).value()[0], std::log(4.0), 1e-15);
  Var s = t.constant(Tensor::matrix({{10, -10}}));
  // -log sigmoid(20) = log1p(exp(-20))
  EXPECT_NEAR(ad::cross_entropy(s, {0}).value()[0], std::log1p(std::exp(-20.0)), 1e-20);
  EXPECT_THROW(ad::cross_entropy(s, {2}), ContractError);
}

TEST(Autodiff, AttentionMatchesNaiveComputation) {
  Rng rng(3);
  const std::size_t batch = 2, tokens = 3, width = 4, heads = 2, dh = 2;
  Tensor qkv = random_tensor({batch * tokens, 3 * width}, rng);
  Tape t;
  const Tensor& got = ad::multi_head_attention(t.constant(qkv), batch, heads).value();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < tokens; ++i) {
        std::vector<double> w(tokens);
        double z = 0;
        for (std::size_t j = 0; j < tokens; ++j) {
          double s = 0;
          for (std::size_t d = 0; d < dh; ++d) s += qkv(b * tokens + i, h * dh + d) * qkv(b * tokens + j, width + h * dh + d);
          w[j] = std::exp(s / std::sqrt(2.0));
          z += w[j];
        }
        for (std::size_t d = 0; d < dh; ++d) {
          double o = 0;
          for (std::size_t j = 0; j < tokens; ++j) o += w[j] / z * qkv(b * tokens + j, 2 * width + h * dh + d);
          EXPECT_NEAR(got(b * tokens + i, h * dh + d), o, 1e-12);
        }
      }
    }
  }
}

TEST(GradCheck, RejectsNonPositiveEps) {
  auto f = [](Tape&, std::span<const Var> p) { return ad::sum(p[0]); };
  EXPECT_THROW(ad::grad_check(f, {Tensor({1}, 1.0)}, 0.0), ContractError);
}

// Every differentiable op against central differences.
struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  ad::ScalarFn fn;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const OpCase& c = GetParam();
  Rng rng(derive_seed(17, {c.shapes.size()}));
  std::vector<Tensor> params;
  for (const auto& s : c.shapes) params.push_back(random_tensor(s, rng));
  for (double err : ad::grad_check_per_tensor(c.fn, params, 1e-5)) EXPECT_LT(err, 1e-6) << c.name;
}

// A fixed weighting so reductions do not hide wrong gradients.
inline Var weighted(Tape& t, const Var& x) {
  Tensor w(x.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + static_cast<double>(i));
  return ad::sum(ad::mul(x, t.constant(std::move(w))));
}

INSTANTIATE_TEST_SUITE_P(
    Ops, OpGradient,
    ::testing::Values(
        OpCase{"matmul", {{3, 4}, {4, 2}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::matmul(p[0], p[1])); }},
        OpCase{"add_sub", {{2, 3}, {2, 3}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::sub(ad::add(p[0], p[1]), ad::scale(p[1], 3.0))); }},
        OpCase{"mul", {{2, 3}, {2, 3}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::mul(p[0], p[1])); }},
        OpCase{"add_bias", {{3, 4}, {4}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::add_bias(p[0], p[1])); }},
        OpCase{"gelu", {{3, 5}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::gelu(p[0])); }},
        OpCase{"layer_norm", {{3, 6}, {6}, {6}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::layer_norm(p[0], p[1], p[2])); }},
        OpCase{"softmax_rows", {{3, 4}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::softmax(p[0], 1)); }},
        OpCase{"softmax_cols", {{3, 4}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::softmax(p[0], 0)); }},
        OpCase{"transpose", {{2, 5}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::transpose(p[0])); }},
        OpCase{"reshape", {{2, 6}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::reshape(p[0], {3, 4})); }},
        OpCase{"slice_rows", {{5, 3}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::slice_rows(p[0], 1, 4)); }},
        OpCase{"gather_rows", {{4, 3}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::gather_rows(p[0], {3, 0, 3, 2})); }},
        OpCase{"concat_rows", {{2, 3}, {1, 3}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::concat_rows({p[0], p[1], p[0]})); }},
        OpCase{"mean", {{3, 3}}, [](Tape& t, std::span<const Var> p) { return ad::mean(ad::mul(p[0], p[0])); }},
        OpCase{"attention", {{6, 12}}, [](Tape& t, std::span<const Var> p) { return weighted(t, ad::multi_head_attention(p[0], 2, 2)); }},
        OpCase{"cross_entropy", {{3, 4}}, [](Tape&, std::span<const Var> p) { return ad::cross_entropy(p[0], {1, 3, 0}); }}),
    [](const auto& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace smae
