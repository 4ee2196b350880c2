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

// The `smae` command line: synth, pretrain, reconstruct, finetune, eval,
// cluster, ablate, gradcam and plot. Exit codes: 0 success, 1 usage error,
// 2 data or configuration error.

#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "smae/attribution.hpp"
#include "smae/checkpoint.hpp"
#include "smae/error.hpp"
#include "smae/inference.hpp"
#include "smae/metrics.hpp"
#include "smae/model.hpp"
#include "smae/spectra_io.hpp"
#include "smae/svg.hpp"
#include "smae/train.hpp"

#ifndef SMAE_VERSION
#define SMAE_VERSION "0.0.0-dev"
#endif

namespace smae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  // common
  std::uint64_t seed = 7;
  std::size_t threads = 0;
  std::string config;
  std::string out_dir = ".";
  std::string out;
  bool quiet = false;
  bool no_normalize = false;

  // data
  std::string data, val, test, noisy, recon, ckpt, grouping;

  // synth
  SynthConfig synth;

  // model and training
  SmaeConfig model;
  TrainConfig train;
  std::size_t labels_per_class = 0;

  // fine-tuning inside ablations
  std::size_t ft_epochs = 50;
  double ft_lr = 1e-3;
  std::size_t ft_batch_size = 16;
  double test_fraction = 0.3;

  // reconstruct / eval / cluster / gradcam / ablate / plot
  double recon_ratio = -1.0;
  std::size_t passes = 0;
  std::string task = "classify";
  std::size_t k = 0;
  std::string pooling = "mean";
  std::size_t pca_dims = 0;
  std::string axis = "mask_ratio";
  std::string values;
  long long index = 0;
  long long klass = -1;
  long long target = -1;
  std::string kind;
  std::string log, table, relevance, points;
};

/// What a command produced, for the manifest and the console.
struct Outcome {
  json metrics = json::object();
  std::vector<std::string> artifacts;
};

namespace detail {

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) raise<IoError>("cannot write '", path.string(), "'");
  out << text;
  if (!out) raise<IoError>("failed writing '", path.string(), "'");
}

/// Write-then-rename so readers never see a half-written file.
inline void write_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_text(tmp, text);
  fs::rename(tmp, path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise<IoError>("cannot open '", path.string(), "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto cell = smae::detail::trim(item);
    if (cell.empty()) continue;
    out.push_back(smae::detail::parse_real(cell, 1, out.size() + 1));
  }
  return out;
}

inline std::string fixed4(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream o;
  o << std::fixed << std::setprecision(4) << v;
  return o.str();
}

/// Turns a JSON config object into `--key value` arguments. A run manifest
/// is accepted too, in which case its "config" member is used.
inline std::vector<std::string> config_args(const json& j, const CLI::App& sub) {
  const json& cfg = (j.contains("command") && j.contains("config")) ? j.at("config") : j;
  if (!cfg.is_object()) raise<ConfigError>("config file must hold a JSON object");
  std::vector<std::string> args;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "config") continue;
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt) raise<ConfigError>("config key '", key, "' is not an option of '", sub.get_name(), "'");
    const bool is_flag = opt->get_expected_max() == 0;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_array()) {
      for (const auto& v : value) text += (text.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      text = value.dump();
    }
    if (is_flag) {
      if (text == "true" || text == "1") args.push_back("--" + key);
      continue;
    }
    args.push_back("--" + key);
    args.push_back(text);
  }
  return args;
}

/// Resolved value of every option of a subcommand, by long name.
inline json resolved_config(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_max() == 0) {
      j[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      j[name] = opt->results().back();
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

}  // namespace detail

class Runner {
 public:
  Runner(Options& o, std::ostream& out, std::ostream& err) : o_(o), out_(out), err_(err) {}

  Outcome run(const std::string& command) {
    if (command == "synth") return synth();
    if (command == "pretrain") return pretrain_cmd();
    if (command == "reconstruct") return reconstruct();
    if (command == "finetune") return finetune_cmd();
    if (command == "eval") return eval();
    if (command == "cluster") return cluster();
    if (command == "ablate") return ablate();
    if (command == "gradcam") return gradcam();
    if (command == "plot") return plot();
    raise<ConfigError>("unknown command '", command, "'");
  }

  std::size_t threads() const {
    if (o_.threads > 0) return o_.threads;
    if (const char* env = std::getenv("SMAE_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v > 0) return static_cast<std::size_t>(v);
    }
    return 1;
  }

 private:
  fs::path output(const std::string& fallback) const {
    const fs::path name = o_.out.empty() ? fs::path(fallback) : fs::path(o_.out);
    return name.is_absolute() ? name : fs::path(o_.out_dir) / name;
  }
  fs::path artifact(const std::string& name) const { return fs::path(o_.out_dir) / name; }

  void note(Outcome& r, const fs::path& p) { r.artifacts.push_back(p.string()); }

  static void require(const std::string& value, const char* flag) {
    if (value.empty()) raise<ConfigError>("missing required option ", flag);
  }

  SpectraDataset load(const std::string& path, bool normalize) const {
    require(path, "--data");
    SpectraDataset ds = load_csv_auto(path);
    return normalize ? normalize_dataset(ds) : ds;
  }

  static bool ckpt_normalizes(const Checkpoint& ck) { return ck.metadata.value("normalize", true); }

  void progress(const EpochRecord& r, std::size_t total) {
    if (o_.quiet) return;
    err_ << "epoch " << r.epoch << "/" << total << " train_loss " << detail::fixed4(r.train_loss);
    if (r.val_loss) err_ << " val_loss " << detail::fixed4(*r.val_loss);
    if (r.val_accuracy) err_ << " val_acc " << detail::fixed4(*r.val_accuracy);
    err_ << "\n";
  }

  void write_log(Outcome& r, const TrainLog& log) {
    // The log is deterministic; wall times go to a separate file.
    const fs::path lp = artifact("train_log.jsonl");
    detail::write_text(lp, log.to_jsonl(false));
    note(r, lp);
    std::string times;
    for (const auto& rec : log.records) {
      times += json{{"epoch", rec.epoch}, {"wall_time_s", rec.wall_time_s}}.dump() + "\n";
    }
    const fs::path tp = artifact("train_times.jsonl");
    detail::write_text(tp, times);
    note(r, tp);
  }

  Outcome synth() {
    SynthConfig cfg = o_.synth;
    cfg.seed = o_.seed;
    SpectraDataset ds = generate_synthetic(cfg);
    Outcome r;
    const fs::path p = output("synth.csv");
    save_csv(ds, p);
    note(r, p);
    r.metrics["n_spectra"] = ds.size();
    r.metrics["length"] = ds.length;
    return r;
  }

  Outcome pretrain_cmd() {
    const bool normalize = !o_.no_normalize;
    SpectraDataset ds = load(o_.data, normalize);
    TrainConfig tc = o_.train;
    tc.seed = o_.seed;
    tc.mode = TrainMode::pretrain;
    PretrainResult res = pretrain(ds, o_.model, tc, [&](const EpochRecord& e) { progress(e, tc.epochs); });
    Outcome r;
    const fs::path p = output("pretrain.smae");
    save_checkpoint(res.model, p, {{"normalize", normalize}, {"train", tc}, {"best_epoch", res.best_epoch}});
    note(r, p);
    write_log(r, res.log);
    r.metrics["best_epoch"] = res.best_epoch;
    r.metrics["best_val_loss"] = *res.log.records.at(res.best_epoch - 1).val_loss;
    r.metrics["final_train_loss"] = res.log.records.back().train_loss;
    r.metrics["degenerate"] = res.log.degenerate;
    return r;
  }

  /// Normalizes each noisy spectrum, reconstructs it and maps the result back
  /// through the same affine.
  SpectraDataset reconstruct_dataset(const Checkpoint& ck, const SpectraDataset& noisy, double ratio) const {
    const bool normalize = ckpt_normalizes(ck);
    SpectraDataset out = noisy;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      const auto& x = noisy.spectra[i].intensities;
      const MinMax mm = normalize ? MinMax::fit(x) : MinMax{0.0, 1.0};
      std::vector<double> in(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) in[j] = mm.apply(x[j]);
      Rng rng(derive_seed(o_.seed, {0x5245, i}));
      std::vector<double> rec = reconstruct_spectrum(ck.model, in, ratio, o_.passes, rng);
      for (double& v : rec) v = mm.invert(v);
      out.spectra[i].intensities = std::move(rec);
    }
    return out;
  }

  double recon_ratio(const Checkpoint& ck) const {
    if (o_.recon_ratio >= 0.0) return o_.recon_ratio;
    if (ck.metadata.contains("train")) return ck.metadata["train"].value("mask_ratio", 0.5);
    return 0.5;
  }

  static void denoise_metrics(const SpectraDataset& noisy, const SpectraDataset& recon, json& m) {
    if (!noisy.all_referenced()) raise<ConfigError>("denoising metrics need reference columns (r1..rL)");
    if (noisy.size() != recon.size()) raise<ConfigError>("noisy and reconstructed sets differ in size");
    double sb = 0, sa = 0, mb = 0, ma = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      const auto& ref = *noisy.spectra[i].reference;
      sb += snr(noisy.spectra[i].intensities, ref);
      sa += snr(recon.spectra[i].intensities, ref);
      mb += mse(noisy.spectra[i].intensities, ref);
      ma += mse(recon.spectra[i].intensities, ref);
    }
    const double n = static_cast<double>(noisy.size());
    m["snr_before"] = sb / n;
    m["snr_after"] = sa / n;
    m["snr_gain"] = sa / sb;
    m["mse_before"] = mb / n;
    m["mse_after"] = ma / n;
  }

  Outcome reconstruct() {
    require(o_.ckpt, "--ckpt");
    Checkpoint ck = load_checkpoint(o_.ckpt);
    SpectraDataset noisy = load(o_.data, false);
    if (noisy.length != ck.model.config().length) {
      raise<ConfigError>("checkpoint expects length ", ck.model.config().length, ", data has ", noisy.length);
    }
    SpectraDataset rec = reconstruct_dataset(ck, noisy, recon_ratio(ck));
    Outcome r;
    const fs::path p = output("recon.csv");
    save_csv(rec, p);
    note(r, p);
    r.metrics["n_spectra"] = rec.size();
    if (noisy.all_referenced()) denoise_metrics(noisy, rec, r.metrics);
    return r;
  }

  SpectraDataset labeled_subset(const SpectraDataset& ds) const {
    return o_.labels_per_class > 0 ? sample_per_class(ds, o_.labels_per_class, o_.seed) : ds;
  }

  Outcome finetune_cmd() {
    std::optional<Checkpoint> ck;
    if (!o_.ckpt.empty()) ck = load_checkpoint(o_.ckpt);
    const bool normalize = ck ? ckpt_normalizes(*ck) : !o_.no_normalize;
    SpectraDataset train = labeled_subset(load(o_.data, normalize));
    std::optional<SpectraDataset> val;
    if (!o_.val.empty()) val = load(o_.val, normalize);
    TrainConfig tc = o_.train;
    tc.seed = o_.seed;
    tc.mode = ck ? TrainMode::finetune : TrainMode::scratch;
    FinetuneResult res = finetune(ck ? &ck->model : nullptr, o_.model, train, val ? &*val : nullptr, tc,
                                  [&](const EpochRecord& e) { progress(e, tc.epochs); });
    Outcome r;
    const fs::path p = output("finetune.smae");
    save_checkpoint(res.model, p, {{"normalize", normalize}, {"train", tc}, {"best_epoch", res.best_epoch}});
    note(r, p);
    write_log(r, res.log);
    r.metrics["best_epoch"] = res.best_epoch;
    r.metrics["n_train"] = train.size();
    r.metrics["train_accuracy"] = accuracy(predict_labels(res.model, train), train.labels());
    if (val) r.metrics["val_accuracy"] = *res.log.records.at(res.best_epoch - 1).val_accuracy;
    if (!o_.test.empty()) {
      SpectraDataset test = load(o_.test, normalize);
      r.metrics["test_accuracy"] = accuracy(predict_labels(res.model, test), test.labels());
    }
    return r;
  }

  Outcome eval() {
    Outcome r;
    if (o_.task == "denoise") {
      SpectraDataset noisy = load(o_.data, false);
      SpectraDataset rec;
      if (!o_.recon.empty()) {
        rec = load_csv_auto(o_.recon);
      } else {
        require(o_.ckpt, "--ckpt or --recon");
        Checkpoint ck = load_checkpoint(o_.ckpt);
        rec = reconstruct_dataset(ck, noisy, recon_ratio(ck));
      }
      denoise_metrics(noisy, rec, r.metrics);
      EvalReport rep;
      rep.task = "denoise";
      for (const auto& [k, v] : r.metrics.items()) rep.metrics[k] = v.get<double>();
      const fs::path p = artifact("eval.json");
      detail::write_text(p, rep.to_json().dump(2) + "\n");
      note(r, p);
      return r;
    }
    require(o_.ckpt, "--ckpt");
    Checkpoint ck = load_checkpoint(o_.ckpt);
    SpectraDataset ds = load(o_.data, ckpt_normalizes(ck));
    std::optional<Grouping> g;
    if (!o_.grouping.empty()) {
      std::vector<std::string> names;
      const std::size_t k = std::max(ds.n_classes(), ck.model.config().n_classes);
      for (std::size_t c = 0; c < k; ++c) names.push_back(ds.class_name(c));
      g = load_grouping(o_.grouping, names);
    }
    EvalReport rep = evaluate_classifier(ck.model, ds, g ? &*g : nullptr);
    for (const auto& [k, v] : rep.metrics) r.metrics[k] = v;
    const fs::path p = artifact("eval.json");
    detail::write_text(p, rep.to_json().dump(2) + "\n");
    note(r, p);
    const fs::path cp = artifact("confusion.csv");
    detail::write_text(cp, confusion_csv(*rep.confusion, rep.class_names));
    note(r, cp);
    if (rep.group_confusion) {
      const fs::path gp = artifact("group_confusion.csv");
      detail::write_text(gp, confusion_csv(*rep.group_confusion, rep.group_names));
      note(r, gp);
    }
    return r;
  }

  Outcome cluster() {
    Outcome r;
    std::optional<Checkpoint> ck;
    if (!o_.ckpt.empty()) ck = load_checkpoint(o_.ckpt);
    SpectraDataset ds = load(o_.data, ck ? ckpt_normalizes(*ck) : !o_.no_normalize);
    Tensor features = ck ? extract_embeddings(ck->model, ds,
                                              o_.pooling == "cls" ? Pooling::class_token : Pooling::mean_tokens,
                                              threads())
                         : spectra_matrix(ds);
    if (o_.pca_dims > 0) features = pca(features, o_.pca_dims).projection;
    const std::size_t k = o_.k > 0 ? o_.k : ds.n_classes();
    if (k == 0) raise<ConfigError>("cluster count unknown: pass --k or use labeled data");
    KMeansResult km = kmeans(features, k, derive_seed(o_.seed, {0x434C}));
    r.metrics["k"] = k;
    r.metrics["inertia"] = km.inertia;
    std::vector<std::size_t> truth;
    if (ds.all_labeled()) {
      truth = ds.labels();
      const ClusterScores s = score_clustering(km.assignment.labels, truth);
      r.metrics["acc"] = s.acc;
      r.metrics["nmi"] = s.nmi;
      r.metrics["ami"] = s.ami;
    }
    std::string csv = "index,cluster,label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      csv += std::to_string(i) + "," + std::to_string(km.assignment.labels[i]) + "," +
             (truth.empty() ? std::string() : std::to_string(truth[i])) + "\n";
    }
    const fs::path cp = artifact("clusters.csv");
    detail::write_text(cp, csv);
    note(r, cp);
    if (features.dim(1) >= 2 && features.dim(0) >= 2) {
      PcaResult p2 = pca(features, 2);
      std::string pts = "pc1,pc2,group\n";
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        xs.push_back(p2.projection(i, 0));
        ys.push_back(p2.projection(i, 1));
        pts += smae::detail::format_real(xs.back()) + "," + smae::detail::format_real(ys.back()) + "," +
               std::to_string(km.assignment.labels[i]) + "\n";
      }
      const fs::path pp = artifact("embedding_pca.csv");
      detail::write_text(pp, pts);
      note(r, pp);
      std::vector<std::string> names;
      for (std::size_t c = 0; c < k; ++c) names.push_back("cluster " + std::to_string(c));
      const fs::path sp = artifact("clusters.svg");
      detail::write_text(sp, svg::scatter(xs, ys, km.assignment.labels, names, "k-means clusters (2D PCA)"));
      note(r, sp);
    }
    return r;
  }

  Outcome ablate() {
    const bool normalize = !o_.no_normalize;
    SpectraDataset ds = load(o_.data, normalize);
    if (!ds.all_labeled()) raise<ConfigError>("ablation needs a labeled dataset");
    auto [rest, test] = split_dataset(ds, o_.test_fraction, o_.seed);
    SpectraDataset labeled = labeled_subset(rest);
    TrainConfig pc = o_.train;
    pc.seed = o_.seed;
    pc.mode = TrainMode::pretrain;
    TrainConfig fc = o_.train;
    fc.seed = o_.seed;
    fc.mode = TrainMode::finetune;
    fc.epochs = o_.ft_epochs;
    fc.learning_rate = o_.ft_lr;
    fc.batch_size = o_.ft_batch_size;
    const AblationAxis axis = parse_axis(o_.axis);
    std::vector<double> values = detail::parse_list(o_.values);
    if (values.empty()) raise<ConfigError>("--values must list at least one value");
    AblationTable table = ablation_sweep(axis, values, {&rest, &labeled, nullptr, &test}, o_.model, pc, fc);
    Outcome r;
    const fs::path jp = artifact("ablation.json");
    detail::write_text(jp, table.to_json().dump(2) + "\n");
    note(r, jp);
    const fs::path cp = artifact("ablation.csv");
    detail::write_text(cp, table.to_csv());
    note(r, cp);
    const fs::path sp = artifact("ablation.svg");
    detail::write_text(sp, ablation_svg(table.to_json()));
    note(r, sp);
    r.metrics["valid_rows"] = table.valid_rows();
    for (const auto& row : table.rows) {
      if (!row.skipped) r.metrics["accuracy@" + smae::detail::format_real(row.value)] = row.accuracy;
    }
    return r;
  }

  static std::string ablation_svg(const json& table) {
    std::vector<std::string> labels;
    std::vector<double> acc;
    for (const auto& row : table.at("rows")) {
      if (row.at("status") != "ok") continue;
      labels.push_back(smae::detail::format_real(row.at("value").get<double>()));
      acc.push_back(row.at("accuracy").get<double>());
    }
    return svg::bars(labels, acc, "ablation: " + table.at("axis").get<std::string>(), "test accuracy");
  }

  Outcome gradcam() {
    require(o_.ckpt, "--ckpt");
    Checkpoint ck = load_checkpoint(o_.ckpt);
    SpectraDataset ds = load(o_.data, ckpt_normalizes(ck));
    RelevanceMap map;
    std::vector<double> shown;
    if (o_.klass >= 0) {
      const auto c = static_cast<std::size_t>(o_.klass);
      const std::size_t target = o_.target >= 0 ? static_cast<std::size_t>(o_.target) : c;
      std::vector<RelevanceMap> maps;
      shown.assign(ds.length, 0.0);
      for (const auto& s : ds.spectra) {
        if (!s.label || *s.label != c) continue;
        maps.push_back(grad_cam(ck.model, s.intensities, target));
        for (std::size_t j = 0; j < ds.length; ++j) shown[j] += s.intensities[j];
      }
      if (maps.empty()) raise<ConfigError>("no spectra with label ", c);
      for (double& v : shown) v /= static_cast<double>(maps.size());
      map = average_maps(maps);
    } else {
      if (o_.index < 0 || static_cast<std::size_t>(o_.index) >= ds.size()) {
        raise<ConfigError>("--index ", o_.index, " outside [0, ", ds.size(), ")");
      }
      shown = ds.spectra[static_cast<std::size_t>(o_.index)].intensities;
      const std::size_t target =
          o_.target >= 0 ? static_cast<std::size_t>(o_.target) : argmax(classify(ck.model, shown));
      map = grad_cam(ck.model, shown, target);
    }
    Outcome r;
    const fs::path cp = output("gradcam.csv");
    detail::write_text(cp, map.to_csv());
    note(r, cp);
    const fs::path sp = artifact(cp.stem().string() + ".svg");
    detail::write_text(sp, svg::heat_strip(shown, map.values, "Grad-CAM, class " + std::to_string(map.target)));
    note(r, sp);
    r.metrics["target"] = map.target;
    return r;
  }

  Outcome plot() {
    Outcome r;
    std::string text;
    if (o_.kind == "recon") {
      SpectraDataset noisy = load(o_.data, false);
      require(o_.recon, "--recon");
      SpectraDataset rec = load_csv_auto(o_.recon);
      const auto i = static_cast<std::size_t>(std::max<long long>(0, o_.index));
      if (i >= noisy.size() || i >= rec.size()) raise<ConfigError>("--index ", i, " out of range");
      std::vector<svg::Series> s{{"noisy", noisy.spectra[i].intensities, {}},
                                 {"reconstruction", rec.spectra[i].intensities, {}}};
      if (noisy.spectra[i].reference) s.push_back({"reference", *noisy.spectra[i].reference, {}});
      text = svg::line_plot(s, "spectrum " + std::to_string(i), "wavelength index", "intensity");
    } else if (o_.kind == "curves") {
      require(o_.log, "--log");
      svg::Series train{"train loss", {}, {}}, val{"val loss", {}, {}}, acc{"val accuracy", {}, {}};
      std::istringstream in(detail::read_text(o_.log));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const double e = j.at("epoch").get<double>();
        train.x.push_back(e);
        train.y.push_back(j.at("train_loss").get<double>());
        if (j.contains("val_loss") && !j["val_loss"].is_null()) {
          val.x.push_back(e);
          val.y.push_back(j["val_loss"].get<double>());
        }
        if (j.contains("val_accuracy") && !j["val_accuracy"].is_null()) {
          acc.x.push_back(e);
          acc.y.push_back(j["val_accuracy"].get<double>());
        }
      }
      std::vector<svg::Series> s{train};
      if (!val.y.empty()) s.push_back(val);
      if (!acc.y.empty()) s.push_back(acc);
      text = svg::line_plot(s, "training curves", "epoch", "value");
    } else if (o_.kind == "ablation") {
      require(o_.table, "--table");
      text = ablation_svg(json::parse(detail::read_text(o_.table)));
    } else if (o_.kind == "gradcam") {
      SpectraDataset ds = load(o_.data, false);
      require(o_.relevance, "--relevance");
      const SpectraDataset rel = load_csv(o_.relevance, false, false);
      std::vector<double> values;
      for (const auto& row : rel.spectra) values.push_back(row.intensities.at(1));
      const auto i = static_cast<std::size_t>(std::max<long long>(0, o_.index));
      if (i >= ds.size()) raise<ConfigError>("--index ", i, " out of range");
      text = svg::heat_strip(ds.spectra[i].intensities, values, "Grad-CAM relevance");
    } else if (o_.kind == "scatter") {
      require(o_.points, "--points");
      const SpectraDataset pts = load_csv(o_.points, false, false);
      std::vector<double> xs, ys;
      std::vector<std::size_t> g;
      std::size_t k = 0;
      for (const auto& row : pts.spectra) {
        xs.push_back(row.intensities.at(0));
        ys.push_back(row.intensities.at(1));
        g.push_back(static_cast<std::size_t>(row.intensities.at(2)));
        k = std::max(k, g.back() + 1);
      }
      std::vector<std::string> names;
      for (std::size_t c = 0; c < k; ++c) names.push_back("group " + std::to_string(c));
      text = svg::scatter(xs, ys, g, names, "2D PCA");
    } else {
      raise<ConfigError>("unknown plot kind '", o_.kind, "'");
    }
    const fs::path p = output(o_.kind + ".svg");
    detail::write_text(p, text);
    note(r, p);
    return r;
  }

  Options& o_;
  std::ostream& out_;
  std::ostream& err_;
};

namespace detail {

inline void common(CLI::App* s, Options& o) {
  s->add_option("--seed", o.seed, "Seed for every random choice");
  s->add_option("--threads", o.threads, "Worker threads (0: SMAE_THREADS or 1)");
  s->add_option("--config", o.config, "JSON file of option values (or a run.json); flags override it");
  s->add_option("--out-dir", o.out_dir, "Directory for all outputs");
  s->add_flag("--quiet", o.quiet, "Suppress progress output");
}

inline void model_flags(CLI::App* s, Options& o) {
  s->add_option("--patch-size", o.model.patch_size, "Points per patch");
  s->add_option("--embed-dim", o.model.embed_dim, "Encoder width");
  s->add_option("--heads", o.model.heads, "Attention heads");
  s->add_option("--enc-depth", o.model.encoder_depth, "Encoder blocks");
  s->add_option("--dec-depth", o.model.decoder_depth, "Decoder blocks");
  s->add_option("--dec-dim", o.model.decoder_dim, "Decoder width");
  s->add_option("--mlp-ratio", o.model.mlp_ratio, "MLP hidden width / model width");
}

inline void train_flags(CLI::App* s, Options& o) {
  s->add_option("--epochs", o.train.epochs, "Training epochs");
  s->add_option("--batch-size", o.train.batch_size, "Mini-batch size");
  s->add_option("--lr", o.train.learning_rate, "Peak learning rate");
  s->add_option("--warmup", o.train.warmup_epochs, "Warmup epochs (negative: 5% of epochs)");
  s->add_option("--weight-decay", o.train.weight_decay, "Decoupled weight decay");
  s->add_option("--val-fraction", o.train.val_fraction, "Held-out fraction for pretraining validation");
  s->add_flag("--no-normalize", o.no_normalize, "Skip per-spectrum min-max scaling");
}

}  // namespace detail

/// Parses `args` (without the program name) and runs the selected command.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Masked autoencoder pretraining, denoising, classification and clustering of 1D spectra", "smae"};
  app.set_version_flag("--version", std::string(SMAE_VERSION));
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1, 1);

  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic spectra CSV with references");
  detail::common(synth, o);
  synth->add_option("--classes", o.synth.n_classes, "Number of classes");
  synth->add_option("--per-class", o.synth.spectra_per_class, "Spectra per class");
  synth->add_option("--length", o.synth.length, "Points per spectrum");
  synth->add_option("--peaks", o.synth.peaks_per_class, "Gaussian peaks per class template");
  synth->add_option("--width-min", o.synth.width_min, "Smallest peak width");
  synth->add_option("--width-max", o.synth.width_max, "Largest peak width");
  synth->add_option("--noise", o.synth.noise_sigma, "Gaussian noise sd");
  synth->add_option("--shift", o.synth.shift_sigma, "Per-spectrum peak position jitter sd");
  synth->add_option("--amp-jitter", o.synth.amp_jitter, "Per-spectrum relative peak amplitude jitter");
  synth->add_option("--baseline", o.synth.baseline_sigma, "Per-spectrum smooth baseline sd");
  synth->add_option("--shared-peaks", o.synth.shared_peaks, "Extra peaks common to all classes");
  synth->add_option("--out", o.out, "Output CSV (relative to --out-dir)");

  auto* pre = app.add_subcommand("pretrain", "Masked-reconstruction pretraining");
  detail::common(pre, o);
  pre->add_option("--data", o.data, "Training CSV");
  detail::model_flags(pre, o);
  detail::train_flags(pre, o);
  pre->add_option("--mask-ratio", o.train.mask_ratio, "Fraction of patches hidden");
  pre->add_option("--out", o.out, "Checkpoint path (relative to --out-dir)");

  auto* rec = app.add_subcommand("reconstruct", "Denoise spectra by masked reconstruction");
  detail::common(rec, o);
  rec->add_option("--ckpt", o.ckpt, "Pretrained checkpoint");
  rec->add_option("--data", o.data, "Noisy spectra CSV");
  rec->add_option("--mask-ratio", o.recon_ratio, "Mask ratio per pass (negative: the pretraining ratio)");
  rec->add_option("--passes", o.passes, "Extra random passes beyond full coverage");
  rec->add_option("--out", o.out, "Reconstructed CSV (relative to --out-dir)");

  auto* ft = app.add_subcommand("finetune", "Train a classifier, from a checkpoint or from scratch");
  detail::common(ft, o);
  ft->add_option("--data", o.data, "Labeled training CSV");
  ft->add_option("--val", o.val, "Labeled validation CSV (best epoch by accuracy)");
  ft->add_option("--test", o.test, "Labeled test CSV, reported only");
  ft->add_option("--ckpt", o.ckpt, "Pretrained checkpoint (omit for scratch training)");
  ft->add_option("--labels-per-class", o.labels_per_class, "Use only this many labeled spectra per class (0: all)");
  ft->add_flag("--head-only", o.train.head_only, "Train only the classification head");
  detail::model_flags(ft, o);
  detail::train_flags(ft, o);
  ft->add_option("--out", o.out, "Checkpoint path (relative to --out-dir)");

  auto* ev = app.add_subcommand("eval", "Evaluate denoising or classification");
  detail::common(ev, o);
  ev->add_option("--task", o.task, "denoise or classify")->check(CLI::IsMember({"denoise", "classify"}));
  ev->add_option("--data", o.data, "Noisy CSV with references (denoise) or labeled CSV (classify)");
  ev->add_option("--recon", o.recon, "Reconstructed CSV (denoise)");
  ev->add_option("--ckpt", o.ckpt, "Checkpoint");
  ev->add_option("--grouping", o.grouping, "JSON class -> group mapping (classify)");

  auto* cl = app.add_subcommand("cluster", "K-means on encoder embeddings or raw spectra");
  detail::common(cl, o);
  cl->add_option("--data", o.data, "Spectra CSV (labels enable ACC/NMI/AMI)");
  cl->add_option("--ckpt", o.ckpt, "Encoder checkpoint (omit to cluster raw spectra)");
  cl->add_option("--k", o.k, "Clusters (0: number of labeled classes)");
  cl->add_option("--pooling", o.pooling, "mean or cls")->check(CLI::IsMember({"mean", "cls"}));
  cl->add_option("--pca", o.pca_dims, "Project features to this many PCA dims first (0: off)");
  cl->add_flag("--no-normalize", o.no_normalize, "Skip per-spectrum min-max scaling (raw features)");

  auto* ab = app.add_subcommand("ablate", "Pretrain + fine-tune sweep over one setting");
  detail::common(ab, o);
  ab->add_option("--data", o.data, "Labeled CSV, split into pretrain/fine-tune and test");
  ab->add_option("--axis", o.axis, "mask_ratio, patch_size, enc_depth, dec_depth or epochs")
      ->check(CLI::IsMember({"mask_ratio", "patch_size", "enc_depth", "dec_depth", "epochs"}));
  ab->add_option("--values", o.values, "Comma-separated values");
  ab->add_option("--test-fraction", o.test_fraction, "Held-out test fraction");
  ab->add_option("--labels-per-class", o.labels_per_class, "Labeled spectra per class for fine-tuning (0: all)");
  detail::model_flags(ab, o);
  detail::train_flags(ab, o);
  ab->add_option("--mask-ratio", o.train.mask_ratio, "Pretraining mask ratio");
  ab->add_option("--ft-epochs", o.ft_epochs, "Fine-tuning epochs");
  ab->add_option("--ft-lr", o.ft_lr, "Fine-tuning learning rate");
  ab->add_option("--ft-batch-size", o.ft_batch_size, "Fine-tuning batch size");

  auto* gc = app.add_subcommand("gradcam", "Grad-CAM relevance map");
  detail::common(gc, o);
  gc->add_option("--ckpt", o.ckpt, "Fine-tuned checkpoint");
  gc->add_option("--data", o.data, "Spectra CSV");
  gc->add_option("--index", o.index, "Spectrum to explain");
  gc->add_option("--class", o.klass, "Average maps over all spectra of this label instead (-1: off)");
  gc->add_option("--target", o.target, "Class score to explain (-1: predicted, or --class)");
  gc->add_option("--out", o.out, "Relevance CSV (relative to --out-dir)");

  auto* pl = app.add_subcommand("plot", "Render an SVG figure from earlier outputs");
  detail::common(pl, o);
  pl->add_option("--kind", o.kind, "recon, curves, ablation, gradcam or scatter")
      ->check(CLI::IsMember({"recon", "curves", "ablation", "gradcam", "scatter"}))
      ->required();
  pl->add_option("--data", o.data, "Spectra CSV (recon, gradcam)");
  pl->add_option("--recon", o.recon, "Reconstructed CSV (recon)");
  pl->add_option("--log", o.log, "train_log.jsonl (curves)");
  pl->add_option("--table", o.table, "ablation.json (ablation)");
  pl->add_option("--relevance", o.relevance, "gradcam.csv (gradcam)");
  pl->add_option("--points", o.points, "embedding_pca.csv (scatter)");
  pl->add_option("--index", o.index, "Spectrum index");
  pl->add_option("--out", o.out, "SVG path (relative to --out-dir)");

  // Config file values go in front of the user's flags; TakeLast lets flags win.
  std::vector<std::string> full = args;
  CLI::App* chosen = nullptr;
  std::size_t sub_pos = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i].starts_with('-')) continue;
    chosen = app.get_subcommand_no_throw(args[i]);
    sub_pos = i;
    break;
  }
  try {
    if (chosen) {
      for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].starts_with("--config=")) path = args[i].substr(9);
        if (path.empty()) continue;
        std::vector<std::string> extra = detail::config_args(json::parse(detail::read_text(path)), *chosen);
        full.insert(full.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1), extra.begin(), extra.end());
        break;
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    err << "error: config file: " << e.what() << "\n";
    return kExitData;
  }

  std::vector<std::string> reversed(full.rbegin(), full.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::ostringstream help;
      app.exit(e, help, help);
      out << help.str();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const std::string started = detail::utc_now();
  try {
    Runner runner(o, out, err);
    o.threads = runner.threads();
    Outcome result = runner.run(command);
    json manifest;
    manifest["command"] = command;
    manifest["config"] = detail::resolved_config(*sub);
    manifest["config"]["threads"] = std::to_string(o.threads);
    manifest["seed"] = o.seed;
    manifest["version"] = SMAE_VERSION;
    manifest["started_at"] = started;
    manifest["finished_at"] = detail::utc_now();
    manifest["artifacts"] = result.artifacts;
    manifest["metrics"] = result.metrics;
    fs::create_directories(o.out_dir);
    detail::write_atomic(fs::path(o.out_dir) / "run.json", manifest.dump(2) + "\n");
    const fs::path mp = fs::path(o.out_dir) / (command + "_metrics.json");
    detail::write_atomic(mp, result.metrics.dump(2) + "\n");
    for (const auto& [k, v] : result.metrics.items()) {
      out << k << ": " << (v.is_number_float() ? detail::fixed4(v.get<double>()) : v.dump()) << "\n";
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitData;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace smae::cli
