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
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "smae/error.hpp"
#include "smae/rng.hpp"
#include "smae/tensor.hpp"

namespace smae {

/// N x P matrix of consecutive spectral intensities.
struct PatchSequence {
  Tensor patches;
  std::size_t source_length = 0;

  std::size_t count() const { return patches.rows(); }
  std::size_t patch_size() const { return patches.cols(); }
};

/// Which patch indices are hidden from the encoder.
struct MaskPlan {
  std::vector<std::size_t> masked;  // sorted, unique
  std::size_t n_patches = 0;
  double ratio = 0.0;

  bool is_masked(std::size_t i) const {
    return std::binary_search(masked.begin(), masked.end(), i);
  }

  /// Complement of `masked`, ascending.
  std::vector<std::size_t> visible() const {
    std::vector<std::size_t> out;
    out.reserve(n_patches - masked.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_patches; ++i) {
      if (k < masked.size() && masked[k] == i) {
        ++k;
      } else {
        out.push_back(i);
      }
    }
    return out;
  }

  /// Plan masking exactly the given indices (any order, must be unique).
  static MaskPlan from_indices(std::size_t n_patches, std::vector<std::size_t> indices) {
    std::sort(indices.begin(), indices.end());
    if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
      raise<ContractError>("mask plan indices must be unique");
    }
    if (!indices.empty() && indices.back() >= n_patches) {
      raise<ContractError>("mask index ", indices.back(), " out of range for ", n_patches,
                           " patches");
    }
    MaskPlan p;
    p.ratio = n_patches ? static_cast<double>(indices.size()) / static_cast<double>(n_patches) : 0.0;
    p.masked = std::move(indices);
    p.n_patches = n_patches;
    return p;
  }

  static MaskPlan none(std::size_t n_patches) { return from_indices(n_patches, {}); }
};

/// Exact number of masked patches for ratio r: round(r * N).
inline std::size_t mask_count(std::size_t n_patches, double ratio) {
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_patches)));
}

inline PatchSequence patchify(std::span<const double> spectrum, std::size_t patch_size) {
  const std::size_t length = spectrum.size();
  if (patch_size == 0 || length % patch_size != 0) {
    raise<DivisibilityError>("patch size ", patch_size, " does not divide spectrum length ", length);
  }
  const std::size_t n = length / patch_size;
  return {Tensor({n, patch_size}, std::vector<double>(spectrum.begin(), spectrum.end())), length};
}

inline std::vector<double> unpatchify(const Tensor& patches) {
  if (patches.rank() != 2) raise<ShapeError>("unpatchify expects an N x P matrix");
  return patches.values();
}

inline std::vector<double> unpatchify(const PatchSequence& seq) { return unpatchify(seq.patches); }

/// Draws round(ratio * N) distinct indices uniformly (partial Fisher-Yates).
inline MaskPlan sample_mask(std::size_t n_patches, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) raise<ContractError>("mask ratio ", ratio, " not in [0,1]");
  const std::size_t k = mask_count(n_patches, ratio);
  std::vector<std::size_t> idx(n_patches);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n_patches - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  MaskPlan p = MaskPlan::from_indices(n_patches, std::move(idx));
  p.ratio = ratio;
  return p;
}

}  // namespace smae
