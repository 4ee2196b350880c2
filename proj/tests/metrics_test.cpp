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
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "smae/metrics.hpp"
#include "test_util.hpp"

namespace smae {
namespace {

using Labels = std::vector<std::size_t>;

TEST(Snr, HandExamples) {
  std::vector<double> ref{0, 2, 0, 2}, est{1, 3, 1, 3};
  EXPECT_DOUBLE_EQ(snr(est, ref), 1.0);
  EXPECT_DOUBLE_EQ(mse(est, ref), 1.0);
  std::vector<double> a{1, 2, 3}, b{1, 1, 1};
  EXPECT_DOUBLE_EQ(mse(a, b), 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(mse(a, b), mse(b, a));
  EXPECT_EQ(snr(ref, ref), std::numeric_limits<double>::infinity());
  EXPECT_THROW(snr(a, b), UndefinedSignalError);
  EXPECT_THROW(mse(a, ref), ShapeError);
}

TEST(Snr, ShrinkingResidualRaisesSnr) {
  std::vector<double> ref{0, 1, 4, 2, -1};
  double last = 0;
  for (double s : {1.0, 0.5, 0.1, 0.01}) {
    std::vector<double> est = ref;
    for (std::size_t i = 0; i < est.size(); ++i) est[i] += s * std::sin(static_cast<double>(i) + 1);
    const double v = snr(est, ref);
    EXPECT_GT(v, last);
    last = v;
  }
}

TEST(Evaluate, ConfusionAndGroups) {
  Labels truth{0, 0, 1, 1, 2, 2}, pred{0, 1, 1, 1, 0, 2};
  Grouping g;
  g.group_of_class = {0, 0, 1};
  g.group_names = {"ab", "c"};
  EvalReport r = evaluate_predictions(pred, truth, 3, &g);
  EXPECT_DOUBLE_EQ(r.metrics.at("accuracy"), 4.0 / 6.0);
  EXPECT_EQ((*r.confusion)[0][1], 1u);
  EXPECT_EQ((*r.confusion)[2][0], 1u);
  EXPECT_DOUBLE_EQ((*r.per_class_accuracy)[0], 0.5);
  EXPECT_DOUBLE_EQ((*r.per_class_accuracy)[1], 1.0);
  // the 0<->1 confusion is inside group "ab", the 2->0 one crosses groups
  EXPECT_DOUBLE_EQ(r.metrics.at("group_accuracy"), 5.0 / 6.0);
  EXPECT_EQ(*r.group_confusion, (ConfusionMatrix{{4, 0}, {1, 1}}));
  EXPECT_EQ(confusion_csv(*r.confusion, {"a", "b", "c"}), "truth\\pred,a,b,c\na,1,1,0\nb,0,2,0\nc,1,0,1\n");
}

// Power iteration with deflation on a hand-built covariance.
std::pair<std::vector<double>, std::vector<std::vector<double>>> eigen_oracle(const Tensor& x, std::size_t dims) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> mu(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x(i, j) / static_cast<double>(n);
  std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) c[a][b] += (x(i, a) - mu[a]) * (x(i, b) - mu[b]) / static_cast<double>(n - 1);
  std::vector<double> vals;
  std::vector<std::vector<double>> vecs;
  for (std::size_t k = 0; k < dims; ++k) {
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = 1.0 + 0.1 * static_cast<double>(j);
    double lambda = 0;
    for (int it = 0; it < 5000; ++it) {
      std::vector<double> w(d, 0.0);
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) w[a] += c[a][b] * v[b];
      double norm = 0;
      for (double t : w) norm += t * t;
      norm = std::sqrt(norm);
      lambda = norm;
      for (std::size_t j = 0; j < d; ++j) v[j] = w[j] / norm;
    }
    std::size_t arg = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0)
      for (double& t : v) t = -t;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) c[a][b] -= lambda * v[a] * v[b];
    vals.push_back(lambda);
    vecs.push_back(v);
  }
  return {vals, vecs};
}

TEST(Pca, MatchesPowerIterationOracle) {
  Tensor x = Tensor::matrix({{2.5, 2.4, 0.5}, {0.5, 0.7, 1.1}, {2.2, 2.9, 0.4}, {1.9, 2.2, 0.9},
                             {3.1, 3.0, 0.2}, {2.3, 2.7, 0.8}, {2.0, 1.6, 1.4}, {1.0, 1.1, 0.3}});
  PcaResult r = pca(x, 2);
  auto [vals, vecs] = eigen_oracle(x, 2);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(r.variances[k], vals[k], 1e-9);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(r.components(j, k), vecs[k][j], 1e-7);
  }
  EXPECT_GE(r.variances[0], r.variances[1]);
  // columns orthonormal; projection variance equals eigenvalue
  double dot = 0, n0 = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    dot += r.components(j, 0) * r.components(j, 1);
    n0 += r.components(j, 0) * r.components(j, 0);
  }
  EXPECT_NEAR(dot, 0.0, 1e-12);
  EXPECT_NEAR(n0, 1.0, 1e-12);
  double s = 0;
  for (std::size_t i = 0; i < 8; ++i) s += r.projection(i, 0) * r.projection(i, 0) / 7.0;
  EXPECT_NEAR(s, r.variances[0], 1e-9);
  EXPECT_THROW(pca(x, 4), ContractError);
}

TEST(Pca, PointsOnALine) {
  Tensor x = Tensor::matrix({{0, 0}, {1, 2}, {2, 4}, {3, 6}});
  PcaResult r = pca(x, 2);
  EXPECT_NEAR(r.components(0, 0), 1 / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(r.components(1, 0), 2 / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(r.variances[1], 0.0, 1e-12);
}

double partition_inertia(const Tensor& x, const Labels& lab, std::size_t k) {
  std::vector<std::vector<double>> sum(k, std::vector<double>(x.dim(1), 0.0));
  std::vector<double> cnt(k, 0.0);
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    cnt[lab[i]] += 1;
    for (std::size_t j = 0; j < x.dim(1); ++j) sum[lab[i]][j] += x(i, j);
  }
  double s = 0;
  for (std::size_t i = 0; i < x.dim(0); ++i)
    for (std::size_t j = 0; j < x.dim(1); ++j) {
      const double c = sum[lab[i]][j] / cnt[lab[i]];
      s += (x(i, j) - c) * (x(i, j) - c);
    }
  return s;
}

TEST(KMeans, ReachesBruteForceOptimum) {
  Rng rng(21);
  Tensor x({12, 2});
  const double centers[3][2] = {{0, 0}, {3, 1}, {1, 4}};
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 2; ++j) x(i, j) = centers[i % 3][j] + rng.normal(0.0, 0.8);
  double best = std::numeric_limits<double>::infinity();
  Labels lab(12);
  for (std::size_t code = 0; code < 531441; ++code) {
    std::size_t c = code;
    std::array<bool, 3> used{};
    for (std::size_t i = 0; i < 12; ++i, c /= 3) used[lab[i] = c % 3] = true;
    if (used[0] && used[1] && used[2]) best = std::min(best, partition_inertia(x, lab, 3));
  }
  KMeansResult r = kmeans(x, 3, 5);
  EXPECT_NEAR(r.inertia, best, 1e-9);
  EXPECT_NEAR(partition_inertia(x, r.assignment.labels, 3), r.inertia, 1e-9);
  for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
    EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] + 1e-12);
}

TEST(KMeans, EdgeCases) {
  Tensor x = Tensor::matrix({{0, 0}, {1, 0}, {5, 5}});
  KMeansResult r = kmeans(x, 3, 1);
  EXPECT_EQ(r.inertia, 0.0);
  EXPECT_THROW(kmeans(x, 4, 1), ContractError);
  EXPECT_EQ(kmeans(x, 2, 9).assignment.labels, kmeans(x, 2, 9).assignment.labels);
}

TEST(ClusterAccuracy, BruteForceAgreesWithHungarian) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng.below(6), cols = 1 + rng.below(6);
    Contingency t(rows, std::vector<std::size_t>(cols));
    for (auto& row : t)
      for (auto& v : row) v = rng.below(20);
    EXPECT_EQ(best_matching_bruteforce(t), best_matching_hungarian(t)) << "trial " << trial;
  }
}

TEST(ClusterAccuracy, InvariantToRelabeling) {
  Labels truth{0, 0, 1, 1, 2, 2, 2}, pred{5, 5, 9, 2, 2, 2, 9};
  const double acc = clustering_accuracy(pred, truth);
  EXPECT_DOUBLE_EQ(acc, 5.0 / 7.0);
  Labels renamed = pred;
  for (auto& v : renamed) v = v * 7 + 1;
  EXPECT_DOUBLE_EQ(clustering_accuracy(renamed, truth), acc);
  EXPECT_DOUBLE_EQ(clustering_accuracy(truth, truth), 1.0);
}

double mi_of(const Labels& u, const Labels& v) {
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> pu, pv;
  const double n = static_cast<double>(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    joint[{u[i], v[i]}] += 1 / n;
    pu[u[i]] += 1 / n;
    pv[v[i]] += 1 / n;
  }
  double s = 0;
  for (auto& [k, p] : joint) s += p * std::log(p / (pu[k.first] * pv[k.second]));
  return s;
}

TEST(MutualInformation, HandCaseWithPermutationOracle) {
  Labels pred{0, 0, 0, 1, 1, 1}, truth{0, 0, 1, 1, 1, 1};
  const double mi = std::log(2.0) / 3 + std::log(0.5) / 6 + std::log(1.5) / 2;
  const double hu = std::log(2.0), hv = -(std::log(1.0 / 3) / 3 + 2 * std::log(2.0 / 3) / 3);
  // expected MI as the mean over all 720 orderings of the truth labels
  Labels perm = truth;
  std::sort(perm.begin(), perm.end());
  double emi = 0;
  std::size_t count = 0;
  std::vector<std::size_t> idx(6);
  std::iota(idx.begin(), idx.end(), 0);
  do {
    Labels t(6);
    for (std::size_t i = 0; i < 6; ++i) t[i] = truth[idx[i]];
    emi += mi_of(pred, t);
    ++count;
  } while (std::next_permutation(idx.begin(), idx.end()));
  emi /= static_cast<double>(count);

  MutualInfo m = mutual_information(pred, truth);
  EXPECT_NEAR(m.mi, mi, 1e-14);
  EXPECT_NEAR(m.expected_mi, emi, 1e-12);
  EXPECT_NEAR(nmi(pred, truth), mi / std::sqrt(hu * hv), 1e-14);
  EXPECT_NEAR(ami(pred, truth), (mi - emi) / ((hu + hv) / 2 - emi), 1e-12);
}

TEST(MutualInformation, Extremes) {
  Labels a{0, 0, 1, 1, 2, 2}, b{2, 2, 0, 0, 1, 1}, one(6, 0);
  EXPECT_NEAR(nmi(a, b), 1.0, 1e-14);
  EXPECT_NEAR(ami(a, b), 1.0, 1e-12);
  EXPECT_EQ(nmi(one, one), 1.0);
  EXPECT_EQ(nmi(one, a), 0.0);
  EXPECT_EQ(ami(a, one), 0.0);
  Rng rng(3);
  Labels u(1000), v(1000);
  for (std::size_t i = 0; i < 1000; ++i) u[i] = rng.below(4), v[i] = rng.below(5);
  EXPECT_NEAR(ami(u, v), 0.0, 0.01);
  EXPECT_GT(nmi(u, v), 0.0);
}

TEST(Embeddings, MeanPoolingExcludesClassTokenAndIgnoresThreads) {
  SmaeModel m = SmaeModel::initialize(testing::tiny_config(), 4);
  SynthConfig s;
  s.length = 20;
  s.spectra_per_class = 50;
  s.peaks_per_class = 2;
  s.width_min = 1;
  s.width_max = 3;
  SpectraDataset ds = generate_synthetic(s);
  Tensor one = extract_embeddings(m, ds, Pooling::mean_tokens, 1);
  EXPECT_EQ(one, extract_embeddings(m, ds, Pooling::mean_tokens, 3));
  Tensor lat = encode(m, ds.spectra[7].intensities, MaskPlan::none(4));
  for (std::size_t j = 0; j < 8; ++j) {
    const double want = (lat(1, j) + lat(2, j) + lat(3, j) + lat(4, j)) / 4;
    EXPECT_NEAR(one(7, j), want, 1e-12);
  }
  Tensor cls = extract_embeddings(m, ds, Pooling::class_token);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(cls(7, j), lat(0, j), 1e-12);
}

}  // namespace
}  // namespace smae
