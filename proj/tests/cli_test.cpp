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
#include <sstream>

#include <gtest/gtest.h>

#include "smae/cli.hpp"
#include "test_util.hpp"

namespace smae {
namespace {

namespace fs = std::filesystem;
using testing::read_file;
using testing::temp_dir;

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const std::vector<std::string> kTinyModel{"--patch-size", "5", "--embed-dim", "8", "--heads", "2",
                                          "--enc-depth", "1", "--dec-dim", "8", "--batch-size", "8",
                                          "--quiet"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

fs::path tiny_csv(const fs::path& dir) {
  Result r = call({"synth", "--classes", "2", "--per-class", "10", "--length", "20", "--peaks", "2", "--width-min",
                   "1", "--width-max", "3", "--out-dir", dir.string(), "--quiet"});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir / "synth.csv";
}

TEST(Cli, SynthWritesHeaderPlusRows) {
  const fs::path dir = temp_dir("cli_synth");
  Result r = call({"synth", "--classes", "3", "--per-class", "200", "--out-dir", dir.string(), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(read_file(dir / "synth.csv")), 601u);
  EXPECT_TRUE(fs::exists(dir / "run.json"));
  EXPECT_TRUE(fs::exists(dir / "synth_metrics.json"));
}

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(call({"--help"}).code, 0);
  Result h = call({"pretrain", "--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("--mask-ratio"), std::string::npos);
  Result u = call({"pretrain", "--bogus"});
  EXPECT_EQ(u.code, 1);
  EXPECT_NE(u.err.find("--bogus"), std::string::npos) << u.err;
  EXPECT_EQ(call({"eval", "--task", "segment"}).code, 1);
  EXPECT_EQ(call({}).code, 1);
}

TEST(Cli, MissingInputNamesPath) {
  const fs::path dir = temp_dir("cli_missing");
  Result r = call({"pretrain", "--data", "/nonexistent/spectra.csv", "--out-dir", dir.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/nonexistent/spectra.csv"), std::string::npos) << r.err;
}

TEST(Cli, PretrainIsByteReproducible) {
  const fs::path dir = temp_dir("cli_repro");
  const fs::path csv = tiny_csv(dir);
  std::vector<std::string> base{"pretrain", "--data", csv.string(), "--epochs", "2"};
  base = with(base, kTinyModel);
  ASSERT_EQ(call(with(base, {"--out-dir", (dir / "a").string()})).code, 0);
  ASSERT_EQ(call(with(base, {"--out-dir", (dir / "b").string()})).code, 0);
  for (const char* f : {"pretrain.smae", "train_log.jsonl", "pretrain_metrics.json"})
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  EXPECT_EQ(lines(read_file(dir / "a" / "train_log.jsonl")), 2u);
  EXPECT_EQ(read_file(dir / "a" / "train_log.jsonl").find("wall_time"), std::string::npos);
  EXPECT_NE(read_file(dir / "a" / "train_times.jsonl").find("wall_time"), std::string::npos);
}

TEST(Cli, ConfigFileValuesYieldToFlags) {
  const fs::path dir = temp_dir("cli_config");
  testing::write_file(dir / "cfg.json", R"({"classes": 4, "per-class": 3, "length": 50, "quiet": true})");
  ASSERT_EQ(call({"synth", "--config", (dir / "cfg.json").string(), "--per-class", "5", "--out-dir", dir.string()})
                .code,
            0);
  EXPECT_EQ(lines(read_file(dir / "synth.csv")), 21u);
  const auto manifest = nlohmann::json::parse(read_file(dir / "run.json"));
  EXPECT_EQ(manifest["config"]["classes"], "4");
  EXPECT_EQ(manifest["config"]["per-class"], "5");
  EXPECT_EQ(manifest["config"]["quiet"], true);
  testing::write_file(dir / "bad.json", R"({"no-such-option": 1})");
  EXPECT_EQ(call({"synth", "--config", (dir / "bad.json").string()}).code, 2);
}

TEST(Cli, ManifestRerunReproducesMetrics) {
  const fs::path dir = temp_dir("cli_rerun");
  const fs::path csv = tiny_csv(dir);
  std::vector<std::string> args{"pretrain", "--data", csv.string(), "--epochs", "2", "--out-dir", (dir / "a").string()};
  ASSERT_EQ(call(with(args, kTinyModel)).code, 0);
  const fs::path manifest = dir / "a" / "run.json";
  ASSERT_EQ(call({"pretrain", "--config", manifest.string(), "--out-dir", (dir / "b").string()}).code, 0);
  EXPECT_EQ(read_file(dir / "a" / "pretrain_metrics.json"), read_file(dir / "b" / "pretrain_metrics.json"));
  EXPECT_EQ(read_file(dir / "a" / "pretrain.smae"), read_file(dir / "b" / "pretrain.smae"));
}

TEST(Cli, EndToEndPipeline) {
  const fs::path dir = temp_dir("cli_e2e");
  const fs::path csv = tiny_csv(dir);
  const std::string d = dir.string();
  ASSERT_EQ(call(with({"pretrain", "--data", csv.string(), "--epochs", "2", "--out-dir", d}, kTinyModel)).code, 0);
  const std::string ck = (dir / "pretrain.smae").string();
  Result rec = call({"reconstruct", "--ckpt", ck, "--data", csv.string(), "--out-dir", d, "--quiet"});
  ASSERT_EQ(rec.code, 0) << rec.err;
  EXPECT_NE(rec.out.find("snr_gain"), std::string::npos);
  ASSERT_EQ(call({"eval", "--task", "denoise", "--data", csv.string(), "--recon", (dir / "recon.csv").string(),
                  "--out-dir", d, "--quiet"})
                .code,
            0);
  Result ft = call(with({"finetune", "--data", csv.string(), "--ckpt", ck, "--epochs", "2", "--out-dir", d,
                         "--out", "ft.smae"},
                        {"--quiet"}));
  ASSERT_EQ(ft.code, 0) << ft.err;
  const std::string ftck = (dir / "ft.smae").string();
  ASSERT_EQ(call({"eval", "--task", "classify", "--data", csv.string(), "--ckpt", ftck, "--out-dir", d, "--quiet"})
                .code,
            0);
  EXPECT_TRUE(fs::exists(dir / "confusion.csv"));
  Result cl = call({"cluster", "--data", csv.string(), "--ckpt", ck, "--out-dir", d, "--quiet"});
  ASSERT_EQ(cl.code, 0) << cl.err;
  EXPECT_NE(cl.out.find("acc"), std::string::npos);
  ASSERT_EQ(call({"gradcam", "--ckpt", ftck, "--data", csv.string(), "--index", "3", "--out-dir", d, "--quiet"}).code,
            0);
  EXPECT_EQ(lines(read_file(dir / "gradcam.csv")), 21u);
  for (const char* kind : {"recon", "curves", "gradcam", "scatter"}) {
    Result p = call({"plot", "--kind", kind, "--data", csv.string(), "--recon", (dir / "recon.csv").string(), "--log",
                     (dir / "train_log.jsonl").string(), "--relevance", (dir / "gradcam.csv").string(), "--points",
                     (dir / "embedding_pca.csv").string(), "--out-dir", d, "--out", std::string(kind) + ".svg",
                     "--quiet"});
    EXPECT_EQ(p.code, 0) << kind << ": " << p.err;
    EXPECT_EQ(read_file(dir / (std::string(kind) + ".svg")).substr(0, 4), "<svg") << kind;
  }
  // a fine-tuned checkpoint has no decoder
  EXPECT_EQ(call({"reconstruct", "--ckpt", ftck, "--data", csv.string(), "--out-dir", d, "--quiet"}).code, 2);
}

}  // namespace
}  // namespace smae
