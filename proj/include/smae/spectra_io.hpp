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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "smae/error.hpp"
#include "smae/rng.hpp"

namespace smae {

/// One measured spectrum with an optional class label and an optional paired
/// high-SNR reference of the same length.
struct Spectrum {
  std::vector<double> intensities;
  std::optional<std::size_t> label;
  std::optional<std::vector<double>> reference;

  std::size_t length() const { return intensities.size(); }
};

struct SpectraDataset {
  std::vector<Spectrum> spectra;
  std::size_t length = 0;
  std::vector<std::string> class_names;

  std::size_t size() const { return spectra.size(); }
  bool empty() const { return spectra.empty(); }

  bool all_labeled() const {
    return !spectra.empty() &&
           std::all_of(spectra.begin(), spectra.end(), [](const auto& s) { return s.label.has_value(); });
  }
  bool all_referenced() const {
    return !spectra.empty() && std::all_of(spectra.begin(), spectra.end(),
                                           [](const auto& s) { return s.reference.has_value(); });
  }

  /// Number of classes: named classes if present, else 1 + largest label.
  std::size_t n_classes() const {
    std::size_t n = class_names.size();
    for (const auto& s : spectra)
      if (s.label) n = std::max(n, *s.label + 1);
    return n;
  }

  std::string class_name(std::size_t id) const {
    return id < class_names.size() ? class_names[id] : std::to_string(id);
  }

  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> out;
    out.reserve(spectra.size());
    for (std::size_t i = 0; i < spectra.size(); ++i) {
      if (!spectra[i].label) raise<ContractError>("spectrum ", i, " is unlabeled");
      out.push_back(*spectra[i].label);
    }
    return out;
  }

  SpectraDataset subset(std::span<const std::size_t> indices) const {
    SpectraDataset out;
    out.length = length;
    out.class_names = class_names;
    out.spectra.reserve(indices.size());
    for (auto i : indices) out.spectra.push_back(spectra.at(i));
    return out;
  }

  /// Checks the dataset invariants; throws on the first violation.
  void validate() const {
    if (length == 0) raise<ShapeError>("dataset spectral length must be >= 1");
    for (std::size_t i = 0; i < spectra.size(); ++i) {
      const auto& s = spectra[i];
      if (s.intensities.size() != length) {
        raise<ShapeError>("spectrum ", i, " has length ", s.intensities.size(), ", expected ", length);
      }
      if (s.reference && s.reference->size() != length) {
        raise<ShapeError>("reference of spectrum ", i, " has length ", s.reference->size());
      }
      for (double v : s.intensities)
        if (!std::isfinite(v)) raise<ParseError>("spectrum ", i, " has a non-finite intensity");
      if (!class_names.empty() && s.label && *s.label >= class_names.size()) {
        raise<ContractError>("spectrum ", i, " label ", *s.label, " exceeds ", class_names.size(),
                             " classes");
      }
    }
  }
};

/// Class -> group mapping (e.g. isolates -> empiric treatments).
struct Grouping {
  std::vector<std::size_t> group_of_class;
  std::vector<std::string> group_names;

  std::size_t n_groups() const { return group_names.size(); }
};

struct SynthConfig {
  std::size_t n_classes = 3;
  std::size_t spectra_per_class = 200;
  std::size_t length = 200;
  std::size_t peaks_per_class = 5;
  double width_min = 2.0;
  double width_max = 8.0;
  double noise_sigma = 0.05;
  std::uint64_t seed = 7;
  // Per-spectrum nuisance, all off by default.
  double shift_sigma = 0.0;    // peak centre jitter, in points
  double amp_jitter = 0.0;     // peak amplitude factor drawn from [1 - a, 1 + a]
  double baseline_sigma = 0.0; // sd of offset, slope and curvature of a smooth baseline
  std::size_t shared_peaks = 0; // extra peaks common to every class

  void validate() const {
    if (n_classes < 1 || spectra_per_class < 1 || length < 1 || peaks_per_class < 1) {
      raise<ConfigError>("synthetic config counts must all be >= 1");
    }
    if (!(noise_sigma >= 0.0)) raise<ConfigError>("noise_sigma must be >= 0");
    if (!(width_min > 0.0) || width_max < width_min) {
      raise<ConfigError>("peak width range must satisfy 0 < min <= max");
    }
    if (!(shift_sigma >= 0.0) || !(baseline_sigma >= 0.0) || !(amp_jitter >= 0.0 && amp_jitter < 1.0)) {
      raise<ConfigError>("nuisance settings need shift, baseline >= 0 and 0 <= amp_jitter < 1");
    }
  }
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_real(std::string_view cell, std::size_t row, std::size_t col) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    raise<ParseError>("row ", row, " column ", col + 1, ": cannot parse '", cell, "' as a real");
  }
  if (!std::isfinite(v)) {
    raise<ParseError>("row ", row, " column ", col + 1, ": non-finite value '", cell, "'");
  }
  return v;
}

inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Reads a comma-separated spectra table.
///
/// The first line is a header. With `has_labels`, column 1 is an integer class
/// label (an empty cell leaves that spectrum unlabeled). With `has_reference`,
/// the remaining columns split evenly into L intensities followed by L
/// reference values. Row numbers in errors are 1-based file lines.
inline SpectraDataset load_csv(const std::filesystem::path& path, bool has_labels,
                               bool has_reference) {
  std::ifstream in(path);
  if (!in) raise<IoError>("cannot open '", path.string(), "'");
  std::string line;
  if (!std::getline(in, line)) raise<EmptyDatasetError>("'", path.string(), "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const std::size_t header_cells = detail::split_csv_line(line).size();
  const std::size_t value_cols = header_cells - (has_labels ? 1 : 0);
  if (has_labels && header_cells < 2) raise<FormatError>("header needs a label and >= 1 intensity column");
  if (has_reference && value_cols % 2 != 0) {
    raise<FormatError>("reference layout needs an even number of value columns, got ", value_cols);
  }
  SpectraDataset ds;
  ds.length = has_reference ? value_cols / 2 : value_cols;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header_cells) {
      raise<FormatError>("row ", row, " has ", cells.size(), " cells, expected ", header_cells);
    }
    Spectrum s;
    std::size_t c = 0;
    if (has_labels) {
      auto cell = detail::trim(cells[0]);
      if (!cell.empty()) {
        std::size_t label = 0;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
        if (ec != std::errc() || ptr != cell.data() + cell.size()) {
          raise<ParseError>("row ", row, ": label '", cell, "' is not a non-negative integer");
        }
        s.label = label;
      }
      c = 1;
    }
    s.intensities.reserve(ds.length);
    for (std::size_t j = 0; j < ds.length; ++j, ++c) {
      s.intensities.push_back(detail::parse_real(cells[c], row, c));
    }
    if (has_reference) {
      std::vector<double> ref;
      ref.reserve(ds.length);
      for (std::size_t j = 0; j < ds.length; ++j, ++c) ref.push_back(detail::parse_real(cells[c], row, c));
      s.reference = std::move(ref);
    }
    ds.spectra.push_back(std::move(s));
  }
  if (ds.spectra.empty()) raise<EmptyDatasetError>("'", path.string(), "' contains no spectra");
  return ds;
}

/// Writes the layout load_csv reads. Values use the shortest round-trip
/// representation, so a save/load cycle is exact.
inline void save_csv(const SpectraDataset& ds, const std::filesystem::path& path) {
  const bool labels = std::any_of(ds.spectra.begin(), ds.spectra.end(),
                                  [](const auto& s) { return s.label.has_value(); });
  const bool refs = ds.all_referenced();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) raise<IoError>("cannot write '", path.string(), "'");
  std::string header;
  if (labels) header += "label";
  for (std::size_t j = 0; j < ds.length; ++j) {
    if (!header.empty()) header += ',';
    header += "w" + std::to_string(j + 1);
  }
  if (refs)
    for (std::size_t j = 0; j < ds.length; ++j) header += ",r" + std::to_string(j + 1);
  out << header << '\n';
  for (const auto& s : ds.spectra) {
    std::string line;
    if (labels) line += s.label ? std::to_string(*s.label) : std::string();
    for (std::size_t j = 0; j < s.intensities.size(); ++j) {
      if (labels || j) line += ',';
      line += detail::format_real(s.intensities[j]);
    }
    if (refs)
      for (double v : *s.reference) line += ',' + detail::format_real(v);
    out << line << '\n';
  }
  if (!out) raise<IoError>("failed writing '", path.string(), "'");
}

/// Reads a JSON object mapping class name -> group name. Every class of
/// `class_names` must be present.
inline Grouping load_grouping(const std::filesystem::path& path,
                              const std::vector<std::string>& class_names) {
  std::ifstream in(path);
  if (!in) raise<IoError>("cannot open '", path.string(), "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise<FormatError>("grouping file '", path.string(), "': ", e.what());
  }
  if (!j.is_object()) raise<FormatError>("grouping file must hold a JSON object");
  std::map<std::string, std::string> by_class;
  for (auto& [k, v] : j.items()) {
    if (!v.is_string()) raise<FormatError>("grouping entry '", k, "' must map to a string");
    by_class[k] = v.get<std::string>();
  }
  Grouping g;
  std::map<std::string, std::size_t> group_ids;
  for (const auto& [cls, grp] : by_class) group_ids.emplace(grp, 0);
  for (auto& [name, id] : group_ids) {
    id = g.group_names.size();
    g.group_names.push_back(name);
  }
  for (const auto& name : class_names) {
    auto it = by_class.find(name);
    if (it == by_class.end()) raise<ConfigError>("grouping has no entry for class '", name, "'");
    g.group_of_class.push_back(group_ids.at(it->second));
  }
  return g;
}

/// Affine map x -> (x - min) / (max - min); constant inputs map to zeros.
struct MinMax {
  double min = 0.0;
  double max = 1.0;

  static MinMax fit(std::span<const double> x) {
    if (x.empty()) return {};
    auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    return {*lo, *hi};
  }
  double range() const { return max - min; }
  double apply(double v) const { return range() > 0.0 ? (v - min) / range() : 0.0; }
  double invert(double v) const { return range() > 0.0 ? v * range() + min : min; }
};

inline std::vector<double> normalize_minmax(std::span<const double> x) {
  const MinMax mm = MinMax::fit(x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = mm.apply(x[i]);
  return out;
}

/// Normalizes every spectrum; a reference is mapped with its spectrum's
/// affine so the pair stays comparable.
inline SpectraDataset normalize_dataset(const SpectraDataset& ds,
                                        std::vector<MinMax>* transforms = nullptr) {
  SpectraDataset out = ds;
  if (transforms) transforms->clear();
  for (auto& s : out.spectra) {
    const MinMax mm = MinMax::fit(s.intensities);
    for (double& v : s.intensities) v = mm.apply(v);
    if (s.reference)
      for (double& v : *s.reference) v = mm.apply(v);
    if (transforms) transforms->push_back(mm);
  }
  return out;
}

/// Seeded Gaussian-peak-mixture dataset. Spectra are class-major; each
/// spectrum's reference is its noiseless signal (the class template, after
/// any per-spectrum shift, amplitude jitter and baseline).
inline SpectraDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  struct Peak {
    double center, width, amp;
  };
  SpectraDataset ds;
  ds.length = cfg.length;
  const double span = static_cast<double>(cfg.length);
  const bool nuisance = cfg.shift_sigma > 0.0 || cfg.amp_jitter > 0.0 || cfg.baseline_sigma > 0.0;
  std::vector<Peak> shared;
  Rng srng(derive_seed(cfg.seed, {4}));
  for (std::size_t k = 0; k < cfg.shared_peaks; ++k) {
    const double center = srng.uniform(0.0, span);
    const double width = srng.uniform(cfg.width_min, cfg.width_max);
    const double amp = srng.uniform(0.3, 1.0);
    shared.push_back({center, width, amp});
  }
  auto render = [&](const std::vector<Peak>& peaks, std::vector<double>& out) {
    out.assign(cfg.length, 0.0);
    for (const Peak& p : peaks) {
      for (std::size_t j = 0; j < cfg.length; ++j) {
        const double z = (static_cast<double>(j) - p.center) / p.width;
        out[j] += p.amp * std::exp(-0.5 * z * z);
      }
    }
  };
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    ds.class_names.push_back("class" + std::to_string(c));
    Rng trng(derive_seed(cfg.seed, {1, c}));
    std::vector<Peak> peaks;
    for (std::size_t k = 0; k < cfg.peaks_per_class; ++k) {
      const double center = trng.uniform(0.0, span);
      const double width = trng.uniform(cfg.width_min, cfg.width_max);
      const double amp = trng.uniform(0.3, 1.0);
      peaks.push_back({center, width, amp});
    }
    peaks.insert(peaks.end(), shared.begin(), shared.end());
    std::vector<double> tmpl;
    render(peaks, tmpl);
    for (std::size_t i = 0; i < cfg.spectra_per_class; ++i) {
      Rng nrng(derive_seed(cfg.seed, {2, c, i}));
      Spectrum s;
      s.label = c;
      if (nuisance) {
        Rng vrng(derive_seed(cfg.seed, {3, c, i}));
        std::vector<Peak> own = peaks;
        for (Peak& p : own) {
          p.center += vrng.normal(0.0, cfg.shift_sigma);
          p.amp *= vrng.uniform(1.0 - cfg.amp_jitter, 1.0 + cfg.amp_jitter);
        }
        std::vector<double> sig;
        render(own, sig);
        const double b0 = vrng.normal(0.0, cfg.baseline_sigma);
        const double b1 = vrng.normal(0.0, cfg.baseline_sigma);
        const double b2 = vrng.normal(0.0, cfg.baseline_sigma);
        for (std::size_t j = 0; j < cfg.length; ++j) {
          const double u = span > 1.0 ? 2.0 * static_cast<double>(j) / (span - 1.0) - 1.0 : 0.0;
          sig[j] += b0 + b1 * u + b2 * u * u;
        }
        s.reference = std::move(sig);
      } else {
        s.reference = tmpl;
      }
      s.intensities = *s.reference;
      if (cfg.noise_sigma > 0.0)
        for (double& v : s.intensities) v += nrng.normal(0.0, cfg.noise_sigma);
      ds.spectra.push_back(std::move(s));
    }
  }
  return ds;
}

/// load_csv with the layout read from the header: a first column named
/// "label" holds labels, and columns named r1.. hold references.
inline SpectraDataset load_csv_auto(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise<IoError>("cannot open '", path.string(), "'");
  std::string line;
  if (!std::getline(in, line)) raise<EmptyDatasetError>("'", path.string(), "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  auto cells = detail::split_csv_line(line);
  const bool labels = !cells.empty() && detail::trim(cells[0]) == "label";
  const bool refs = !cells.empty() && detail::trim(cells.back()).starts_with('r');
  return load_csv(path, labels, refs);
}

/// Seeded split into (rest, held_out) with round(fraction * n) held out.
inline std::pair<SpectraDataset, SpectraDataset> split_dataset(const SpectraDataset& ds, double fraction,
                                                               std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) raise<ConfigError>("split fraction ", fraction, " outside [0,1]");
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, {0x5350}));
  shuffle(idx, rng);
  const auto n_out = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> held(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_out));
  std::vector<std::size_t> rest(idx.begin() + static_cast<std::ptrdiff_t>(n_out), idx.end());
  std::sort(held.begin(), held.end());
  std::sort(rest.begin(), rest.end());
  return {ds.subset(rest), ds.subset(held)};
}

/// Seeded choice of up to `per_class` labeled spectra of every class, kept in
/// dataset order.
inline SpectraDataset sample_per_class(const SpectraDataset& ds, std::size_t per_class, std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.spectra[i].label) by_class[*ds.spectra[i].label].push_back(i);
  }
  std::vector<std::size_t> keep;
  for (auto& [c, idx] : by_class) {
    Rng rng(derive_seed(seed, {0x5043, c}));
    shuffle(idx, rng);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(per_class, idx.size())));
  }
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

}  // namespace smae
