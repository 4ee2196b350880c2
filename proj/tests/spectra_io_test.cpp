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
#include <set>

#include <gtest/gtest.h>

#include "smae/spectra_io.hpp"
#include "test_util.hpp"

namespace smae {
namespace {

using testing::temp_dir;
using testing::write_file;

TEST(Csv, RoundTripIsExact) {
  SynthConfig cfg;
  cfg.n_classes = 2;
  cfg.spectra_per_class = 5;
  cfg.length = 30;
  SpectraDataset ds = generate_synthetic(cfg);
  const auto path = temp_dir("csv_rt") / "a.csv";
  save_csv(ds, path);
  SpectraDataset back = load_csv(path, true, true);
  ASSERT_EQ(back.size(), ds.size());
  ASSERT_EQ(back.length, ds.length);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.spectra[i].label, ds.spectra[i].label);
    EXPECT_EQ(back.spectra[i].intensities, ds.spectra[i].intensities);
    EXPECT_EQ(*back.spectra[i].reference, *ds.spectra[i].reference);
  }
  SpectraDataset autod = load_csv_auto(path);
  EXPECT_TRUE(autod.all_labeled());
  EXPECT_TRUE(autod.all_referenced());
}

TEST(Csv, RaggedRowNamesRowAndCounts) {
  const auto path = temp_dir("csv_ragged") / "a.csv";
  write_file(path, "label,w1,w2,w3\n0,1,2,3\n1,1,2\n");
  try {
    load_csv(path, true, false);
    FAIL();
  } catch (const FormatError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("row 3"), std::string::npos) << m;
    EXPECT_NE(m.find("3 cells"), std::string::npos) << m;
    EXPECT_NE(m.find("expected 4"), std::string::npos) << m;
  }
}

TEST(Csv, Errors) {
  const auto dir = temp_dir("csv_err");
  write_file(dir / "nan.csv", "w1,w2\n1,nan\n");
  EXPECT_THROW(load_csv(dir / "nan.csv", false, false), ParseError);
  write_file(dir / "text.csv", "w1,w2\n1,abc\n");
  EXPECT_THROW(load_csv(dir / "text.csv", false, false), ParseError);
  write_file(dir / "empty.csv", "");
  EXPECT_THROW(load_csv(dir / "empty.csv", false, false), EmptyDatasetError);
  write_file(dir / "header.csv", "w1,w2\n");
  EXPECT_THROW(load_csv(dir / "header.csv", false, false), EmptyDatasetError);
  EXPECT_THROW(load_csv(dir / "missing.csv", false, false), IoError);
}

TEST(Csv, BomAndUnlabeledRows) {
  const auto path = temp_dir("csv_bom") / "a.csv";
  write_file(path, "\xEF\xBB\xBFlabel,w1,w2\n,1,2\n3,4,5\n");
  SpectraDataset ds = load_csv_auto(path);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_FALSE(ds.spectra[0].label.has_value());
  EXPECT_EQ(*ds.spectra[1].label, 3u);
  EXPECT_FALSE(ds.all_labeled());
  EXPECT_THROW(ds.labels(), ContractError);
}

TEST(Grouping, MapsClassesAndRejectsMissing) {
  const auto dir = temp_dir("grouping");
  write_file(dir / "g.json", R"({"a": "B", "b": "A", "c": "B"})");
  Grouping g = load_grouping(dir / "g.json", {"a", "b", "c"});
  EXPECT_EQ(g.group_names, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(g.group_of_class, (std::vector<std::size_t>{1, 0, 1}));
  EXPECT_THROW(load_grouping(dir / "g.json", {"a", "b", "d"}), ConfigError);
}

TEST(MinMax, MapsToUnitRangeAndInverts) {
  std::vector<double> x{2, 4, 6};
  auto y = normalize_minmax(x);
  EXPECT_EQ(y, (std::vector<double>{0, 0.5, 1}));
  const MinMax mm = MinMax::fit(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(mm.invert(y[i]), x[i]);
  auto c = normalize_minmax(std::vector<double>{3, 3});
  EXPECT_EQ(c, (std::vector<double>{0, 0}));
}

TEST(MinMax, ReferenceFollowsSpectrumAffine) {
  SpectraDataset ds;
  ds.length = 2;
  ds.spectra.push_back({{2, 4}, 0, std::vector<double>{3, 3}});
  SpectraDataset n = normalize_dataset(ds);
  EXPECT_EQ(n.spectra[0].intensities, (std::vector<double>{0, 1}));
  EXPECT_EQ(*n.spectra[0].reference, (std::vector<double>{0.5, 0.5}));
}

TEST(Synthetic, CountsLabelsAndDeterminism) {
  SynthConfig cfg;
  SpectraDataset a = generate_synthetic(cfg), b = generate_synthetic(cfg);
  EXPECT_EQ(a.size(), 600u);
  EXPECT_EQ(a.length, 200u);
  EXPECT_EQ(a.n_classes(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.spectra[i].intensities, b.spectra[i].intensities);
  cfg.seed = 8;
  EXPECT_NE(generate_synthetic(cfg).spectra[0].intensities, a.spectra[0].intensities);
}

TEST(Synthetic, NoiseIsTheOnlyDifferenceFromReference) {
  SynthConfig cfg;
  cfg.noise_sigma = 0.0;
  for (const auto& s : generate_synthetic(cfg).spectra) EXPECT_EQ(s.intensities, *s.reference);
}

TEST(Synthetic, RejectsBadConfig) {
  SynthConfig cfg;
  cfg.noise_sigma = -1;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = {};
  cfg.width_min = 5;
  cfg.width_max = 1;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(Split, PartitionsAndSamplesPerClass) {
  SynthConfig cfg;
  cfg.spectra_per_class = 20;
  SpectraDataset ds = generate_synthetic(cfg);
  auto [rest, held] = split_dataset(ds, 0.25, 3);
  EXPECT_EQ(held.size(), 15u);
  EXPECT_EQ(rest.size(), 45u);
  SpectraDataset few = sample_per_class(ds, 4, 3);
  EXPECT_EQ(few.size(), 12u);
  std::vector<std::size_t> per(3, 0);
  for (auto l : few.labels()) ++per[l];
  EXPECT_EQ(per, (std::vector<std::size_t>{4, 4, 4}));
}

}  // namespace
}  // namespace smae
