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

#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "smae/model.hpp"
#include "smae/patch_mask.hpp"
#include "smae/rng.hpp"
#include "smae/spectra_io.hpp"

namespace smae {

inline constexpr std::size_t kInferenceBatch = 64;

/// Stacks the intensities of the selected spectra into a [count, L] matrix.
inline Tensor stack_spectra(const SpectraDataset& ds, std::span<const std::size_t> indices) {
  Tensor out({indices.size(), ds.length});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& s = ds.spectra.at(indices[r]).intensities;
    if (s.size() != ds.length) raise<ShapeError>("spectrum ", indices[r], " has wrong length");
    std::copy(s.begin(), s.end(), out.row(r).begin());
  }
  return out;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

/// Class scores for every spectrum, [n, n_classes].
inline Tensor predict_scores(const SmaeModel& model, const SpectraDataset& ds) {
  const std::size_t c = model.config().n_classes;
  Tensor out({ds.size(), c});
  for (std::size_t start = 0; start < ds.size(); start += kInferenceBatch) {
    const std::size_t end = std::min(ds.size(), start + kInferenceBatch);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ad::Tape tape;
    ForwardPass fp(model, tape, false);
    const Tensor& s = fp.classify(stack_spectra(ds, idx)).value();
    std::copy(s.data().begin(), s.data().end(), out.data().begin() + start * c);
  }
  return out;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<std::size_t> predict_labels(const SmaeModel& model, const SpectraDataset& ds) {
  Tensor scores = predict_scores(model, ds);
  std::vector<std::size_t> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = argmax(scores.row(i));
  return out;
}

/// Mask plans that together hide every patch at least once: a random
/// permutation is cut into consecutive groups of round(ratio * N), the last
/// group wrapping to the front so every plan hides equally many patches.
/// `extra` further independent random plans are appended.
inline std::vector<MaskPlan> covering_plans(std::size_t n_patches, double ratio, std::size_t extra,
                                            Rng& rng) {
  const std::size_t m = mask_count(n_patches, ratio);
  std::vector<MaskPlan> plans;
  if (m == 0) {
    plans.push_back(MaskPlan::none(n_patches));
    return plans;
  }
  std::vector<std::size_t> perm = iota_indices(n_patches);
  shuffle(perm, rng);
  const std::size_t groups = (n_patches + m - 1) / m;
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < m; ++k) idx.push_back(perm[(g * m + k) % n_patches]);
    MaskPlan p = MaskPlan::from_indices(n_patches, std::move(idx));
    p.ratio = ratio;
    plans.push_back(std::move(p));
  }
  for (std::size_t e = 0; e < extra; ++e) plans.push_back(sample_mask(n_patches, ratio, rng));
  return plans;
}

/// Masked reconstruction of a whole spectrum: each patch's value is the mean
/// of the decoder's predictions from the passes in which it was hidden.
/// With ratio 0 the unmasked decoder output is returned.
inline std::vector<double> reconstruct_spectrum(const SmaeModel& model, std::span<const double> spectrum,
                                                double ratio, std::size_t extra_passes, Rng& rng) {
  const SmaeConfig& cfg = model.config();
  const std::size_t n = cfg.n_patches(), p = cfg.patch_size;
  std::vector<MaskPlan> plans = covering_plans(n, ratio, extra_passes, rng);
  Tensor batch({plans.size(), cfg.length});
  for (std::size_t b = 0; b < plans.size(); ++b) std::copy(spectrum.begin(), spectrum.end(), batch.row(b).begin());
  ad::Tape tape;
  ForwardPass fp(model, tape, false);
  const Tensor& rec = fp.decode(fp.encode(batch, plans)).value();
  std::vector<double> sum(cfg.length, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t b = 0; b < plans.size(); ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!plans[b].masked.empty() && !plans[b].is_masked(i)) continue;
      ++count[i];
      for (std::size_t j = 0; j < p; ++j) sum[i * p + j] += rec(b, i * p + j);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) sum[i * p + j] /= static_cast<double>(count[i]);
  return sum;
}

}  // namespace smae
