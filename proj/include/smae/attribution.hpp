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

// Grad-CAM over patch tokens. Tokens play the role of spatial positions and
// embedding channels the role of feature maps.

#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "smae/autodiff.hpp"
#include "smae/error.hpp"
#include "smae/model.hpp"
#include "smae/patch_mask.hpp"

namespace smae {

struct RelevanceMap {
  std::vector<double> values;  // one per wavelength, in [0, 1]
  std::size_t target = 0;

  std::string to_csv() const {
    std::string out = "index,relevance\n";
    for (std::size_t i = 0; i < values.size(); ++i) out += std::to_string(i) + "," + std::to_string(values[i]) + "\n";
    return out;
  }
};

/// Per-token relevance max(0, sum_d alpha_d A[t, d]) with alpha the
/// token-averaged gradient of the target score. A holds the patch-token
/// features entering the last encoder block's attention; the encoder's own
/// output patch tokens never reach the class-token score.
inline std::vector<double> token_relevance(const SmaeModel& model, std::span<const double> spectrum,
                                           std::size_t target) {
  const SmaeConfig& cfg = model.config();
  if (!model.has_classifier()) raise<ConfigError>("grad_cam needs a model with a classification head");
  if (target >= cfg.n_classes) raise<ContractError>("target class ", target, " out of range [0, ", cfg.n_classes, ")");
  const std::size_t n = cfg.n_patches(), d = cfg.embed_dim;

  ad::Tape tape;
  ForwardPass fp(model, tape, true);
  Encoded enc = fp.encode(single_row(spectrum), {MaskPlan::none(n)});
  ad::Var scores = fp.class_scores(enc);
  Tensor pick({1, cfg.n_classes});
  pick[target] = 1.0;
  tape.backward(ad::sum(ad::mul(scores, tape.constant(std::move(pick)))));

  const Tensor& a = enc.attention_input.value();
  const Tensor g = tape.grad_of(enc.attention_input);
  std::vector<double> alpha(d, 0.0);
  for (std::size_t t = 1; t <= n; ++t)
    for (std::size_t c = 0; c < d; ++c) alpha[c] += g(t, c) / static_cast<double>(n);
  std::vector<double> rel(n, 0.0);
  for (std::size_t t = 1; t <= n; ++t) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += alpha[c] * a(t, c);
    rel[t - 1] = std::max(0.0, s);
  }
  return rel;
}

/// Token relevance spread piecewise-constant over each patch's wavelengths
/// and divided by its maximum. An all-zero map stays zero.
inline RelevanceMap grad_cam(const SmaeModel& model, std::span<const double> spectrum, std::size_t target) {
  const std::vector<double> rel = token_relevance(model, spectrum, target);
  const std::size_t p = model.config().patch_size;
  const double top = *std::max_element(rel.begin(), rel.end());
  RelevanceMap map;
  map.target = target;
  map.values.resize(rel.size() * p, 0.0);
  for (std::size_t t = 0; t < rel.size(); ++t) {
    const double v = top > 0.0 ? rel[t] / top : 0.0;
    std::fill_n(map.values.begin() + static_cast<std::ptrdiff_t>(t * p), p, v);
  }
  return map;
}

/// Element-wise mean of several maps, renormalized to a maximum of 1.
inline RelevanceMap average_maps(std::span<const RelevanceMap> maps) {
  if (maps.empty()) raise<ContractError>("average_maps: no maps");
  RelevanceMap out;
  out.target = maps.front().target;
  out.values.assign(maps.front().values.size(), 0.0);
  for (const auto& m : maps) {
    if (m.values.size() != out.values.size()) raise<ShapeError>("average_maps: length mismatch");
    for (std::size_t i = 0; i < m.values.size(); ++i) out.values[i] += m.values[i];
  }
  const double top = *std::max_element(out.values.begin(), out.values.end());
  for (double& v : out.values) v = top > 0.0 ? v / top : 0.0;
  return out;
}

}  // namespace smae
