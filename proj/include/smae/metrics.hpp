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

// Denoising, classification and clustering metrics plus the clustering
// pipeline pieces (embedding extraction, PCA, k-means).

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "smae/error.hpp"
#include "smae/inference.hpp"
#include "smae/model.hpp"
#include "smae/rng.hpp"
#include "smae/spectra_io.hpp"
#include "smae/tensor.hpp"

namespace smae {

// ---------------------------------------------------------------------------
// Denoising

inline double mse(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) {
    raise<ShapeError>("mse: lengths ", estimate.size(), " and ", reference.size(), " differ");
  }
  if (estimate.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate[i] - reference[i];
    s += d * d;
  }
  return s / static_cast<double>(estimate.size());
}

/// Amplitude signal-to-noise ratio sqrt(var(reference) / mse(estimate, reference)).
/// Returns +infinity when the residual is exactly zero.
inline double snr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) {
    raise<ShapeError>("snr: lengths ", estimate.size(), " and ", reference.size(), " differ");
  }
  if (reference.empty()) raise<UndefinedSignalError>("snr: empty reference");
  const double n = static_cast<double>(reference.size());
  const double mean = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
  double var = 0.0;
  for (double r : reference) var += (r - mean) * (r - mean);
  var /= n;
  if (var == 0.0) raise<UndefinedSignalError>("snr: reference spectrum is constant");
  const double err = mse(estimate, reference);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(var / err);
}

// ---------------------------------------------------------------------------
// Classification

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [truth][prediction]

inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                                        std::size_t k) {
  if (pred.size() != truth.size()) raise<ShapeError>("confusion: size mismatch");
  ConfusionMatrix m(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= k || truth[i] >= k) raise<ContractError>("confusion: class id out of range");
    ++m[truth[i]][pred[i]];
  }
  return m;
}

struct EvalReport {
  std::string task;
  std::map<std::string, double> metrics;
  std::optional<ConfusionMatrix> confusion;
  std::optional<std::vector<double>> per_class_accuracy;
  std::optional<ConfusionMatrix> group_confusion;
  std::vector<std::string> class_names;
  std::vector<std::string> group_names;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["task"] = task;
    j["metrics"] = nlohmann::json::object();
    for (const auto& [k, v] : metrics) {
      j["metrics"][k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(v > 0 ? "inf" : "nan");
    }
    if (confusion) j["confusion"] = *confusion;
    if (per_class_accuracy) j["per_class_accuracy"] = *per_class_accuracy;
    if (group_confusion) j["group_confusion"] = *group_confusion;
    if (!class_names.empty()) j["class_names"] = class_names;
    if (!group_names.empty()) j["group_names"] = group_names;
    return j;
  }
};

inline std::string confusion_csv(const ConfusionMatrix& m, const std::vector<std::string>& names) {
  auto name = [&](std::size_t i) { return i < names.size() ? names[i] : std::to_string(i); };
  std::string out = "truth\\pred";
  for (std::size_t j = 0; j < m.size(); ++j) out += "," + name(j);
  out += "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out += name(i);
    for (std::size_t v : m[i]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

/// Accuracy, confusion matrix and per-class accuracy; with a grouping, the
/// same again after mapping prediction and truth through it.
inline EvalReport evaluate_predictions(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                                       std::size_t n_classes, const Grouping* grouping = nullptr) {
  if (pred.size() != truth.size() || pred.empty()) raise<ContractError>("evaluate: need equally many predictions and labels");
  EvalReport r;
  r.task = "classify";
  ConfusionMatrix m = confusion_matrix(pred, truth, n_classes);
  std::size_t correct = 0;
  std::vector<double> per(n_classes, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    correct += m[c][c];
    const std::size_t total = std::accumulate(m[c].begin(), m[c].end(), std::size_t{0});
    per[c] = total ? static_cast<double>(m[c][c]) / static_cast<double>(total) : 0.0;
  }
  r.metrics["accuracy"] = static_cast<double>(correct) / static_cast<double>(pred.size());
  r.confusion = std::move(m);
  r.per_class_accuracy = std::move(per);
  if (grouping) {
    if (grouping->group_of_class.size() < n_classes) {
      raise<ConfigError>("grouping covers ", grouping->group_of_class.size(), " classes, need ", n_classes);
    }
    std::vector<std::size_t> gp(pred.size()), gt(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      gp[i] = grouping->group_of_class[pred[i]];
      gt[i] = grouping->group_of_class[truth[i]];
    }
    ConfusionMatrix g = confusion_matrix(gp, gt, grouping->n_groups());
    std::size_t gc = 0;
    for (std::size_t i = 0; i < g.size(); ++i) gc += g[i][i];
    r.metrics["group_accuracy"] = static_cast<double>(gc) / static_cast<double>(pred.size());
    r.group_confusion = std::move(g);
    r.group_names = grouping->group_names;
  }
  return r;
}

inline EvalReport evaluate_classifier(const SmaeModel& model, const SpectraDataset& ds,
                                      const Grouping* grouping = nullptr) {
  if (!ds.all_labeled()) raise<ContractError>("evaluate_classifier needs a fully labeled dataset");
  const std::size_t k = std::max(model.config().n_classes, ds.n_classes());
  EvalReport r = evaluate_predictions(predict_labels(model, ds), ds.labels(), k, grouping);
  for (std::size_t c = 0; c < k; ++c) r.class_names.push_back(ds.class_name(c));
  return r;
}

// ---------------------------------------------------------------------------
// Embeddings

enum class Pooling { class_token, mean_tokens };

/// Unmasked encoder features per spectrum, [n, embed_dim]. `mean_tokens`
/// averages the patch-token latents (class token excluded). Batches are
/// distributed over `threads` workers; results do not depend on the count.
inline Tensor extract_embeddings(const SmaeModel& model, const SpectraDataset& ds, Pooling pooling,
                                 std::size_t threads = 1) {
  const SmaeConfig& cfg = model.config();
  if (ds.length != cfg.length) {
    raise<ConfigError>("encoder expects length ", cfg.length, ", dataset has ", ds.length);
  }
  const std::size_t d = cfg.embed_dim, n = cfg.n_patches();
  Tensor out({ds.size(), d});
  const std::size_t n_batches = (ds.size() + kInferenceBatch - 1) / kInferenceBatch;
  auto run = [&](std::size_t first_batch, std::size_t stride) {
    for (std::size_t bi = first_batch; bi < n_batches; bi += stride) {
      const std::size_t start = bi * kInferenceBatch;
      const std::size_t end = std::min(ds.size(), start + kInferenceBatch);
      std::vector<std::size_t> idx(end - start);
      std::iota(idx.begin(), idx.end(), start);
      ad::Tape tape;
      ForwardPass fp(model, tape, false);
      std::vector<MaskPlan> plans(idx.size(), MaskPlan::none(n));
      const Tensor& lat = fp.encode(stack_spectra(ds, idx), plans).latents.value();
      for (std::size_t b = 0; b < idx.size(); ++b) {
        auto dst = out.row(start + b);
        if (pooling == Pooling::class_token) {
          auto src = lat.row(b * (n + 1));
          std::copy(src.begin(), src.end(), dst.begin());
        } else {
          for (std::size_t t = 1; t <= n; ++t) {
            auto src = lat.row(b * (n + 1) + t);
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
          }
          for (double& v : dst) v /= static_cast<double>(n);
        }
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, n_batches));
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
    for (auto& th : pool) th.join();
  }
  return out;
}

/// Row-per-spectrum matrix of raw intensities.
inline Tensor spectra_matrix(const SpectraDataset& ds) { return stack_spectra(ds, iota_indices(ds.size())); }

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
  Tensor projection;        // [n, dims]
  Tensor components;        // [d, dims], unit columns
  std::vector<double> variances;  // descending, per component
};

/// Projects centered rows onto the top `dims` covariance eigenvectors. Each
/// eigenvector's largest-magnitude entry is made positive.
inline PcaResult pca(const Tensor& x, std::size_t dims) {
  if (x.rank() != 2) raise<ShapeError>("pca expects an n x d matrix");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (dims == 0 || dims > std::min(n, d)) {
    raise<ContractError>("pca: dims ", dims, " must lie in [1, min(n, d) = ", std::min(n, d), "]");
  }
  Eigen::MatrixXd m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x(i, j);
  Eigen::RowVectorXd mu = m.colwise().mean();
  m.rowwise() -= mu;
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  Eigen::MatrixXd cov = (m.transpose() * m) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) raise<Error>("pca: eigendecomposition failed");
  PcaResult r;
  r.components = Tensor({d, dims});
  Eigen::MatrixXd w(d, dims);
  for (std::size_t c = 0; c < dims; ++c) {
    const Eigen::Index src = static_cast<Eigen::Index>(d - 1 - c);  // eigenvalues ascend
    Eigen::VectorXd v = es.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    w.col(static_cast<Eigen::Index>(c)) = v;
    r.variances.push_back(std::max(0.0, es.eigenvalues()(src)));
    for (std::size_t j = 0; j < d; ++j) r.components(j, c) = v(static_cast<Eigen::Index>(j));
  }
  Eigen::MatrixXd proj = m * w;
  r.projection = Tensor({n, dims});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dims; ++c) r.projection(i, c) = proj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  return r;
}

// ---------------------------------------------------------------------------
// K-means

struct ClusterAssignment {
  std::vector<std::size_t> labels;
  std::size_t k = 0;
};

struct KMeansResult {
  ClusterAssignment assignment;
  Tensor centroids;  // [k, d]
  double inertia = 0.0;
  /// Inertia after every Lloyd iteration of the winning restart.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline KMeansResult kmeans_once(const Tensor& x, std::size_t k, Rng& rng, std::size_t max_iter) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  KMeansResult r;
  r.centroids = Tensor({k, d});
  // k-means++ seeding
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::copy(x.row(first).begin(), x.row(first).end(), r.centroids.row(0).begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], sq_dist(x.row(i), r.centroids.row(c - 1)));
      total += best[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= best[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), r.centroids.row(c).begin());
  }

  std::vector<std::size_t> assign(n, k);
  std::vector<double> cost(n, 0.0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = sq_dist(x.row(i), r.centroids.row(c));
        if (dd < bd) {
          bd = dd;
          arg = c;
        }
      }
      if (assign[i] != arg) changed = true;
      assign[i] = arg;
      cost[i] = bd;
    }
    // Repair empty clusters by stealing the point farthest from its centroid.
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assign) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[assign[i]] > 1 && (far == n || cost[i] > cost[far])) far = i;
      }
      if (far == n) break;
      --sizes[assign[far]];
      assign[far] = c;
      ++sizes[c];
      cost[far] = 0.0;
      changed = true;
    }
    r.inertia = std::accumulate(cost.begin(), cost.end(), 0.0);
    r.inertia_history.push_back(r.inertia);
    r.iterations = it + 1;
    if (!changed && it > 0) break;
    Tensor next({k, d});
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = next.row(assign[i]);
      auto src = x.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    for (std::size_t c = 0; c < k; ++c)
      for (double& v : next.row(c)) v /= static_cast<double>(sizes[c]);
    r.centroids = std::move(next);
  }
  // Final inertia against the final centroids.
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) inertia += sq_dist(x.row(i), r.centroids.row(assign[i]));
  r.inertia = inertia;
  r.assignment = {std::move(assign), k};
  return r;
}

}  // namespace detail

/// k-means++ seeding then Lloyd iterations until the assignment stops
/// changing or `max_iter`; the best of `restarts` seeded runs by inertia.
inline KMeansResult kmeans(const Tensor& x, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300,
                           std::size_t restarts = 10) {
  if (x.rank() != 2 || x.dim(0) == 0) raise<ShapeError>("kmeans expects a non-empty n x d matrix");
  if (k == 0 || k > x.dim(0)) raise<ContractError>("kmeans: k = ", k, " must lie in [1, n = ", x.dim(0), "]");
  KMeansResult best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    Rng rng(derive_seed(seed, {0x6B6D, r}));
    KMeansResult cur = detail::kmeans_once(x, k, rng, std::max<std::size_t>(1, max_iter));
    if (!have || cur.inertia < best.inertia) {
      best = std::move(cur);
      have = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Clustering scores

namespace detail {

/// Compacts arbitrary ids to 0..m-1 in order of first appearance.
inline std::vector<std::size_t> compact(std::span<const std::size_t> ids, std::size_t& m) {
  std::map<std::size_t, std::size_t> remap;
  std::vector<std::size_t> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = remap.emplace(ids[i], remap.size()).first->second;
  m = remap.size();
  return out;
}

}  // namespace detail

using Contingency = std::vector<std::vector<std::size_t>>;  // [pred][truth]

inline Contingency contingency(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  if (pred.size() != truth.size()) raise<ShapeError>("contingency: size mismatch");
  std::size_t kp = 0, kt = 0;
  auto p = detail::compact(pred, kp);
  auto t = detail::compact(truth, kt);
  Contingency c(kp, std::vector<std::size_t>(kt, 0));
  for (std::size_t i = 0; i < p.size(); ++i) ++c[p[i]][t[i]];
  return c;
}

/// Maximum total of a one-to-one row->column matching, by enumerating all
/// permutations of the padded square table. Intended for sizes <= 6.
inline std::size_t best_matching_bruteforce(const Contingency& table) {
  std::size_t k = table.size();
  for (const auto& row : table) k = std::max(k, row.size());
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t best = 0;
  do {
    std::size_t s = 0;
    for (std::size_t r = 0; r < table.size(); ++r) {
      if (perm[r] < table[r].size()) s += table[r][perm[r]];
    }
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Same quantity via the Hungarian algorithm (O(k^3)).
inline std::size_t best_matching_hungarian(const Contingency& table) {
  std::size_t k = table.size();
  for (const auto& row : table) k = std::max(k, row.size());
  if (k == 0) return 0;
  std::size_t top = 0;
  for (const auto& row : table)
    for (std::size_t v : row) top = std::max(top, v);
  auto cost = [&](std::size_t r, std::size_t c) -> double {
    const std::size_t v = (r < table.size() && c < table[r].size()) ? table[r][c] : 0;
    return static_cast<double>(top - v);
  };
  // Potentials-based shortest augmenting path, 1-indexed.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
  std::vector<std::size_t> match(k + 1, 0), way(k + 1, 0);
  for (std::size_t i = 1; i <= k; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(k + 1, inf);
    std::vector<bool> used(k + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= k; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= k; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::size_t total = 0;
  for (std::size_t j = 1; j <= k; ++j) {
    const std::size_t r = match[j] - 1, c = j - 1;
    if (r < table.size() && c < table[r].size()) total += table[r][c];
  }
  return total;
}

/// Fraction of samples matched under the optimal cluster -> class assignment.
inline double clustering_accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  if (pred.size() != truth.size() || pred.empty()) raise<ContractError>("clustering_accuracy: need equal, non-empty inputs");
  Contingency c = contingency(pred, truth);
  const std::size_t k = std::max(c.size(), c.empty() ? 0 : c.front().size());
  const std::size_t matched = k <= 6 ? best_matching_bruteforce(c) : best_matching_hungarian(c);
  return static_cast<double>(matched) / static_cast<double>(pred.size());
}

struct MutualInfo {
  double mi = 0.0;
  double h_pred = 0.0;
  double h_truth = 0.0;
  double expected_mi = 0.0;
};

/// Mutual information (nats), both entropies and the expected mutual
/// information under the hypergeometric permutation model.
inline MutualInfo mutual_information(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  Contingency c = contingency(pred, truth);
  const double n = static_cast<double>(pred.size());
  std::vector<double> a(c.size(), 0.0), b(c.empty() ? 0 : c.front().size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      a[i] += static_cast<double>(c[i][j]);
      b[j] += static_cast<double>(c[i][j]);
    }
  MutualInfo r;
  for (double ai : a) r.h_pred -= ai / n * std::log(ai / n);
  for (double bj : b) r.h_truth -= bj / n * std::log(bj / n);
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      if (c[i][j] == 0) continue;
      const double nij = static_cast<double>(c[i][j]);
      r.mi += nij / n * std::log(n * nij / (a[i] * b[j]));
    }
  const double lg_n = std::lgamma(n + 1.0);
  for (double ai : a) {
    for (double bj : b) {
      const double lo = std::max(1.0, ai + bj - n);
      const double hi = std::min(ai, bj);
      const double base = std::lgamma(ai + 1) + std::lgamma(bj + 1) + std::lgamma(n - ai + 1) +
                          std::lgamma(n - bj + 1) - lg_n;
      for (double nij = lo; nij <= hi; nij += 1.0) {
        const double logp = base - std::lgamma(nij + 1) - std::lgamma(ai - nij + 1) -
                            std::lgamma(bj - nij + 1) - std::lgamma(n - ai - bj + nij + 1);
        r.expected_mi += nij / n * std::log(n * nij / (ai * bj)) * std::exp(logp);
      }
    }
  }
  return r;
}

namespace detail {

inline bool same_partition(std::span<const std::size_t> p, std::span<const std::size_t> t) {
  Contingency c = contingency(p, t);
  if (c.size() != (c.empty() ? 0 : c.front().size())) return false;
  for (const auto& row : c) {
    if (std::count_if(row.begin(), row.end(), [](std::size_t v) { return v != 0; }) != 1) return false;
  }
  return true;
}

}  // namespace detail

/// I(U;V) / sqrt(H(U) H(V)). When either partition has zero entropy the
/// score is 1 for identical partitions and 0 otherwise.
inline double nmi(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  if (pred.size() != truth.size() || pred.empty()) raise<ContractError>("nmi: need equal, non-empty inputs");
  MutualInfo m = mutual_information(pred, truth);
  if (m.h_pred == 0.0 || m.h_truth == 0.0) return detail::same_partition(pred, truth) ? 1.0 : 0.0;
  return m.mi / std::sqrt(m.h_pred * m.h_truth);
}

/// (I - E[I]) / (mean(H(U), H(V)) - E[I]) with the arithmetic mean.
inline double ami(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  if (pred.size() != truth.size() || pred.empty()) raise<ContractError>("ami: need equal, non-empty inputs");
  MutualInfo m = mutual_information(pred, truth);
  if (m.h_pred == 0.0 || m.h_truth == 0.0) return detail::same_partition(pred, truth) ? 1.0 : 0.0;
  const double denom = 0.5 * (m.h_pred + m.h_truth) - m.expected_mi;
  if (std::abs(denom) < 1e-15) return detail::same_partition(pred, truth) ? 1.0 : 0.0;
  return (m.mi - m.expected_mi) / denom;
}

struct ClusterScores {
  double acc = 0.0;
  double nmi = 0.0;
  double ami = 0.0;
};

inline ClusterScores score_clustering(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  return {clustering_accuracy(pred, truth), nmi(pred, truth), ami(pred, truth)};
}

}  // namespace smae
