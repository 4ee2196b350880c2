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
#include <chrono>
#include <deque>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smae/autodiff.hpp"
#include "smae/inference.hpp"
#include "smae/model.hpp"
#include "smae/patch_mask.hpp"
#include "smae/rng.hpp"
#include "smae/spectra_io.hpp"

namespace smae {

enum class TrainMode { pretrain, finetune, scratch };

NLOHMANN_JSON_SERIALIZE_ENUM(TrainMode, {{TrainMode::pretrain, "pretrain"},
                                         {TrainMode::finetune, "finetune"},
                                         {TrainMode::scratch, "scratch"}})

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  /// Linear warmup length; negative selects 5% of `epochs` (rounded).
  double warmup_epochs = -1.0;
  double weight_decay = 0.01;
  double mask_ratio = 0.5;
  std::uint64_t seed = 7;
  TrainMode mode = TrainMode::pretrain;
  /// Fraction of the pretraining data held out for validation loss.
  double val_fraction = 0.1;
  /// Fine-tuning updates only the classification head.
  bool head_only = false;

  double resolved_warmup_epochs() const {
    return warmup_epochs >= 0.0 ? warmup_epochs : std::round(0.05 * static_cast<double>(epochs));
  }

  void validate() const {
    if (epochs < 1) raise<ConfigError>("epochs must be >= 1");
    if (batch_size < 1) raise<ConfigError>("batch_size must be >= 1");
    if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) raise<ConfigError>("mask_ratio must lie in [0,1]");
    if (!(learning_rate > 0.0)) raise<ConfigError>("learning_rate must be positive");
    if (!(weight_decay >= 0.0)) raise<ConfigError>("weight_decay must be >= 0");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) raise<ConfigError>("val_fraction must lie in [0,1)");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"warmup_epochs", c.warmup_epochs},
       {"weight_decay", c.weight_decay},
       {"mask_ratio", c.mask_ratio},
       {"seed", c.seed},
       {"mode", c.mode},
       {"val_fraction", c.val_fraction},
       {"head_only", c.head_only}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  detail::read_field(j, "epochs", c.epochs);
  detail::read_field(j, "batch_size", c.batch_size);
  detail::read_field(j, "learning_rate", c.learning_rate);
  detail::read_field(j, "warmup_epochs", c.warmup_epochs);
  detail::read_field(j, "weight_decay", c.weight_decay);
  detail::read_field(j, "mask_ratio", c.mask_ratio);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "mode", c.mode);
  detail::read_field(j, "val_fraction", c.val_fraction);
  detail::read_field(j, "head_only", c.head_only);
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
  double learning_rate = 0.0;
  double wall_time_s = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  /// Set when the pretext task hides nothing (ratio 0): every loss is 0.
  bool degenerate = false;

  static nlohmann::json record_json(const EpochRecord& r, bool with_time) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss ? nlohmann::json(*r.val_loss) : nlohmann::json(nullptr);
    j["val_accuracy"] = r.val_accuracy ? nlohmann::json(*r.val_accuracy) : nlohmann::json(nullptr);
    j["learning_rate"] = r.learning_rate;
    if (with_time) j["wall_time_s"] = r.wall_time_s;
    return j;
  }

  /// One JSON object per epoch. Wall time is the only non-deterministic field.
  std::string to_jsonl(bool with_time = true) const {
    std::string out;
    for (const auto& r : records) {
      nlohmann::json j = record_json(r, with_time);
      if (degenerate) j["degenerate"] = true;
      out += j.dump() + "\n";
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Losses

/// Mean squared error over the points of masked patches only. `recon` is
/// [batch, L]; visible patches get weight exactly zero. An empty mask yields
/// a constant zero loss.
inline ad::Var masked_mse_loss(const ad::Var& recon, const Tensor& target,
                               const std::vector<MaskPlan>& plans, std::size_t patch_size) {
  ad::Tape& tape = *recon.tape();
  if (recon.shape() != target.shape() || recon.value().rank() != 2) {
    raise<ShapeError>("masked_mse_loss: reconstruction ", shape_str(recon.shape()), " vs target ",
                      shape_str(target.shape()));
  }
  const std::size_t batch = target.dim(0), length = target.dim(1);
  if (plans.size() != batch) raise<ContractError>("masked_mse_loss: one plan per spectrum required");
  std::size_t masked_points = 0;
  for (const auto& p : plans) masked_points += p.masked.size() * patch_size;
  if (masked_points == 0) return tape.constant(Tensor::scalar(0.0));
  Tensor weights({batch, length});
  const double w = 1.0 / static_cast<double>(masked_points);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i : plans[b].masked) {
      if ((i + 1) * patch_size > length) raise<ContractError>("mask index ", i, " beyond spectrum");
      for (std::size_t j = 0; j < patch_size; ++j) weights(b, i * patch_size + j) = w;
    }
  }
  ad::Var diff = recon - tape.constant(target);
  return ad::sum(ad::mul(ad::mul(diff, diff), tape.constant(std::move(weights))));
}

/// Plain-value form for a single spectrum.
inline double masked_mse_loss(std::span<const double> recon, std::span<const double> target,
                              const MaskPlan& plan, std::size_t patch_size) {
  if (recon.size() != target.size()) raise<ShapeError>("masked_mse_loss: length mismatch");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i : plan.masked) {
    for (std::size_t j = 0; j < patch_size; ++j) {
      const std::size_t k = i * patch_size + j;
      if (k >= recon.size()) raise<ContractError>("mask index ", i, " beyond spectrum");
      s += (recon[k] - target[k]) * (recon[k] - target[k]);
      ++count;
    }
  }
  return count ? s / static_cast<double>(count) : 0.0;
}

/// -log softmax(scores)[label].
inline double cross_entropy_loss(std::span<const double> scores, std::size_t label) {
  if (label >= scores.size()) {
    raise<ContractError>("label ", label, " out of range for ", scores.size(), " classes");
  }
  return ad::negative_log_softmax(scores, label);
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamWHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

/// One adaptive-moment step with decoupled weight decay:
///   p <- p * (1 - lr * wd)             (only where decay[i] is set)
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// with bias-corrected moments m_hat, v_hat.
inline void optimizer_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                           AdamState& state, const AdamWHyper& h, const std::vector<bool>& decay = {}) {
  if (params.size() != grads.size()) raise<ShapeError>("optimizer: ", params.size(), " params vs ", grads.size(), " grads");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) raise<ShapeError>("optimizer state built for a different parameter set");
  ++state.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (p.shape() != g.shape() || p.shape() != state.m[k].shape()) {
      raise<ShapeError>("optimizer: parameter ", k, " shape ", shape_str(p.shape()), " vs gradient ",
                        shape_str(g.shape()));
    }
    const bool wd = h.weight_decay > 0.0 && (decay.empty() || decay[k]);
    auto pv = p.data();
    auto gv = g.data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (wd) pv[i] *= 1.0 - h.learning_rate * h.weight_decay;
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gv[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gv[i] * gv[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      pv[i] -= h.learning_rate * mh / (std::sqrt(vh) + h.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Loops

namespace detail {

enum StreamTag : std::uint64_t {
  kSplitStream = 11,
  kShuffleStream = 12,
  kMaskStream = 13,
  kValMaskStream = 14,
  kInitStream = 15,
  kHeadStream = 16,
};

/// Trains a subset of a model's parameters with AdamW and a linear warmup.
class Trainer {
 public:
  Trainer(SmaeModel& model, const TrainConfig& cfg, std::vector<bool> trainable,
          std::size_t steps_per_epoch)
      : model_(model), cfg_(cfg), trainable_(std::move(trainable)) {
    warmup_steps_ = static_cast<std::size_t>(
        std::llround(cfg.resolved_warmup_epochs() * static_cast<double>(steps_per_epoch)));
    for (std::size_t i = 0; i < model_.parameters().size(); ++i) {
      if (!trainable_[i]) continue;
      const auto& name = model_.parameters()[i].name;
      decay_.push_back(model_.parameters()[i].value.rank() >= 2 && ends_with(name, ".weight"));
    }
  }

  double current_lr() const {
    if (warmup_steps_ == 0) return cfg_.learning_rate;
    const double f = std::min(1.0, static_cast<double>(step_ + 1) / static_cast<double>(warmup_steps_));
    return cfg_.learning_rate * f;
  }

  void apply(const ad::GradientMap& grads) {
    std::vector<Tensor*> params;
    std::vector<const Tensor*> gs;
    for (std::size_t i = 0; i < model_.parameters().size(); ++i) {
      if (!trainable_[i]) continue;
      params.push_back(&model_.parameters()[i].value);
      auto it = grads.find(i);
      if (it == grads.end()) {
        zero_.emplace_back(model_.parameters()[i].value.shape());
        gs.push_back(&zero_.back());
      } else {
        gs.push_back(&it->second);
      }
    }
    AdamWHyper h{current_lr(), 0.9, 0.999, 1e-8, cfg_.weight_decay};
    optimizer_step(params, gs, state_, h, decay_);
    zero_.clear();
    ++step_;
  }

 private:
  SmaeModel& model_;
  const TrainConfig& cfg_;
  std::vector<bool> trainable_;
  std::vector<bool> decay_;
  AdamState state_;
  std::size_t step_ = 0;
  std::size_t warmup_steps_ = 0;
  std::deque<Tensor> zero_;
};

inline std::vector<std::vector<std::size_t>> batches(std::vector<std::size_t> order, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < order.size(); s += size) {
    out.emplace_back(order.begin() + s, order.begin() + std::min(order.size(), s + size));
  }
  return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Called after every epoch with the record just appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

struct PretrainResult {
  SmaeModel model;  // best by validation loss (ties -> earlier epoch)
  TrainLog log;
  std::size_t best_epoch = 0;
};

/// Masked-reconstruction pretraining. Labels are ignored.
///
/// Every epoch reshuffles the training split and draws a fresh mask per
/// spectrum; validation masks come from a fixed stream so epochs compare.
inline PretrainResult pretrain(const SpectraDataset& data, const SmaeConfig& model_cfg,
                               const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  SmaeConfig mc = model_cfg;
  mc.length = data.length;
  mc.n_classes = 0;
  mc.validate(true);
  if (data.empty()) raise<EmptyDatasetError>("pretraining dataset is empty");
  data.validate();

  std::vector<std::size_t> all = iota_indices(data.size());
  Rng split_rng(derive_seed(cfg.seed, {detail::kSplitStream}));
  shuffle(all, split_rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(data.size())));
  if (n_val >= data.size()) n_val = 0;
  std::vector<std::size_t> val(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  if (val.empty()) val = train;

  const std::size_t n = mc.n_patches();
  std::vector<MaskPlan> val_plans;
  for (std::size_t i : val) {
    Rng r(derive_seed(cfg.seed, {detail::kValMaskStream, i}));
    val_plans.push_back(sample_mask(n, cfg.mask_ratio, r));
  }

  PretrainResult result;
  SmaeModel model = SmaeModel::initialize(mc, derive_seed(cfg.seed, {detail::kInitStream}), true);
  result.log.degenerate = mask_count(n, cfg.mask_ratio) == 0;
  const std::size_t steps = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  detail::Trainer trainer(model, cfg, std::vector<bool>(model.parameters().size(), true), steps);
  std::optional<double> best;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train;
    Rng srng(derive_seed(cfg.seed, {detail::kShuffleStream, epoch}));
    shuffle(order, srng);
    double loss_sum = 0.0;
    const double lr = trainer.current_lr();
    for (const auto& batch : detail::batches(order, cfg.batch_size)) {
      std::vector<MaskPlan> plans;
      for (std::size_t i : batch) {
        Rng r(derive_seed(cfg.seed, {detail::kMaskStream, epoch, i}));
        plans.push_back(sample_mask(n, cfg.mask_ratio, r));
      }
      Tensor x = stack_spectra(data, batch);
      ad::Tape tape;
      ForwardPass fp(model, tape, true);
      ad::Var loss = masked_mse_loss(fp.decode(fp.encode(x, plans)), x, plans, mc.patch_size);
      loss_sum += loss.value()[0] * static_cast<double>(batch.size());
      trainer.apply(tape.backward(loss));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train_loss = loss_sum / static_cast<double>(train.size());

    double val_sum = 0.0;
    for (std::size_t s = 0; s < val.size(); s += kInferenceBatch) {
      const std::size_t e = std::min(val.size(), s + kInferenceBatch);
      std::vector<std::size_t> idx(val.begin() + static_cast<std::ptrdiff_t>(s), val.begin() + static_cast<std::ptrdiff_t>(e));
      std::vector<MaskPlan> plans(val_plans.begin() + static_cast<std::ptrdiff_t>(s), val_plans.begin() + static_cast<std::ptrdiff_t>(e));
      Tensor x = stack_spectra(data, idx);
      ad::Tape tape;
      ForwardPass fp(model, tape, false);
      val_sum += masked_mse_loss(fp.decode(fp.encode(x, plans)), x, plans, mc.patch_size).value()[0] *
                 static_cast<double>(idx.size());
    }
    rec.val_loss = val_sum / static_cast<double>(val.size());
    rec.wall_time_s = detail::seconds_since(t0);
    if (!best || *rec.val_loss < *best) {
      best = rec.val_loss;
      result.model = model;
      result.best_epoch = epoch;
    }
    result.log.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

struct FinetuneResult {
  SmaeModel model;
  TrainLog log;
  std::size_t best_epoch = 0;
};

inline double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  if (pred.size() != truth.size() || pred.empty()) raise<ContractError>("accuracy: size mismatch");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == truth[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

/// Supervised training of encoder + classification head.
///
/// With `pretrained`, its encoder weights initialize the model (any decoder is
/// dropped); otherwise `scratch_cfg` defines a freshly initialized encoder.
/// With a validation set the best epoch by validation accuracy is returned
/// (ties -> earlier); without one, the final epoch.
inline FinetuneResult finetune(const SmaeModel* pretrained, const SmaeConfig& scratch_cfg,
                               const SpectraDataset& train_data, const SpectraDataset* val_data,
                               const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_data.empty()) raise<EmptyDatasetError>("fine-tuning dataset is empty");
  train_data.validate();
  const std::vector<std::size_t> labels = train_data.labels();
  std::size_t n_classes = train_data.n_classes();
  if (val_data) {
    val_data->validate();
    n_classes = std::max(n_classes, val_data->n_classes());
    if (val_data->length != train_data.length) raise<ConfigError>("validation length differs from training length");
  }

  SmaeModel model;
  if (pretrained) {
    const auto& pc = pretrained->config();
    if (pc.length != train_data.length || pc.length % pc.patch_size != 0) {
      raise<ConfigError>("checkpoint expects spectra of length ", pc.length, " (patch ", pc.patch_size,
                         "), dataset has length ", train_data.length);
    }
    model = pretrained->with_classifier(n_classes, derive_seed(cfg.seed, {detail::kHeadStream}));
  } else {
    SmaeConfig mc = scratch_cfg;
    mc.length = train_data.length;
    mc.n_classes = n_classes;
    model = SmaeModel::initialize(mc, derive_seed(cfg.seed, {detail::kInitStream}), false);
  }

  std::vector<bool> trainable(model.parameters().size(), true);
  if (cfg.head_only) {
    for (std::size_t i = 0; i < trainable.size(); ++i) trainable[i] = is_head_parameter(model.parameters()[i].name);
  }
  const std::vector<std::size_t> train_idx = iota_indices(train_data.size());
  const std::size_t steps = (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;
  detail::Trainer trainer(model, cfg, trainable, steps);

  FinetuneResult result;
  std::optional<double> best;
  std::vector<std::size_t> val_labels;
  if (val_data) val_labels = val_data->labels();
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    Rng srng(derive_seed(cfg.seed, {detail::kShuffleStream, epoch}));
    shuffle(order, srng);
    const double lr = trainer.current_lr();
    double loss_sum = 0.0;
    for (const auto& batch : detail::batches(order, cfg.batch_size)) {
      std::vector<std::size_t> y;
      for (std::size_t i : batch) y.push_back(labels[i]);
      ad::Tape tape;
      ForwardPass fp(model, tape, true);
      ad::Var loss = ad::cross_entropy(fp.classify(stack_spectra(train_data, batch)), y);
      loss_sum += loss.value()[0] * static_cast<double>(batch.size());
      trainer.apply(tape.backward(loss));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train_loss = loss_sum / static_cast<double>(train_idx.size());
    if (val_data) {
      Tensor scores = predict_scores(model, *val_data);
      double vl = 0.0;
      std::vector<std::size_t> pred(val_data->size());
      for (std::size_t i = 0; i < val_data->size(); ++i) {
        vl += cross_entropy_loss(scores.row(i), val_labels[i]);
        pred[i] = argmax(scores.row(i));
      }
      rec.val_loss = vl / static_cast<double>(val_data->size());
      rec.val_accuracy = accuracy(pred, val_labels);
      if (!best || *rec.val_accuracy > *best) {
        best = rec.val_accuracy;
        result.model = model;
        result.best_epoch = epoch;
      }
    }
    rec.wall_time_s = detail::seconds_since(t0);
    result.log.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (!val_data) {
    result.model = model;
    result.best_epoch = cfg.epochs;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ablations

enum class AblationAxis { mask_ratio, patch_size, enc_depth, dec_depth, epochs };

NLOHMANN_JSON_SERIALIZE_ENUM(AblationAxis, {{AblationAxis::mask_ratio, "mask_ratio"},
                                            {AblationAxis::patch_size, "patch_size"},
                                            {AblationAxis::enc_depth, "enc_depth"},
                                            {AblationAxis::dec_depth, "dec_depth"},
                                            {AblationAxis::epochs, "epochs"}})

inline AblationAxis parse_axis(std::string_view s) {
  if (s == "mask_ratio") return AblationAxis::mask_ratio;
  if (s == "patch_size") return AblationAxis::patch_size;
  if (s == "enc_depth") return AblationAxis::enc_depth;
  if (s == "dec_depth") return AblationAxis::dec_depth;
  if (s == "epochs") return AblationAxis::epochs;
  raise<ConfigError>("unknown ablation axis '", s, "'");
}

struct AblationData {
  const SpectraDataset* pretrain = nullptr;  // unlabeled use
  const SpectraDataset* finetune = nullptr;  // labeled
  const SpectraDataset* validation = nullptr;  // optional
  const SpectraDataset* test = nullptr;      // labeled
};

struct AblationRow {
  double value = 0.0;
  bool skipped = false;
  std::string reason;
  double accuracy = 0.0;
  double pretrain_loss = 0.0;  // final-epoch validation loss
};

struct AblationTable {
  AblationAxis axis = AblationAxis::mask_ratio;
  std::vector<AblationRow> rows;

  std::size_t valid_rows() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.skipped; }));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["axis"] = axis;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json row{{"value", r.value}, {"status", r.skipped ? "skipped" : "ok"}};
      if (r.skipped) {
        row["reason"] = r.reason;
      } else {
        row["accuracy"] = r.accuracy;
        row["pretrain_loss"] = r.pretrain_loss;
      }
      j["rows"].push_back(row);
    }
    return j;
  }

  /// Valid rows only: value,accuracy,pretrain_loss.
  std::string to_csv() const {
    std::ostringstream oss;
    oss.precision(17);
    oss << nlohmann::json(axis).get<std::string>() << ",accuracy,pretrain_loss\n";
    for (const auto& r : rows) {
      if (!r.skipped) oss << r.value << ',' << r.accuracy << ',' << r.pretrain_loss << '\n';
    }
    return oss.str();
  }
};

/// Pretrain + fine-tune once per axis value with a shared seed; values that
/// are invalid for the axis are recorded as skipped.
inline AblationTable ablation_sweep(AblationAxis axis, const std::vector<double>& values,
                                    const AblationData& data, const SmaeConfig& base_model,
                                    const TrainConfig& base_pretrain, const TrainConfig& base_finetune) {
  if (!data.pretrain || !data.finetune || !data.test) raise<ContractError>("ablation needs pretrain, finetune and test data");
  AblationTable table;
  table.axis = axis;
  for (double value : values) {
    AblationRow row;
    row.value = value;
    SmaeConfig mc = base_model;
    mc.length = data.pretrain->length;
    TrainConfig pc = base_pretrain;
    const bool integral = value >= 0.0 && std::floor(value) == value;
    try {
      switch (axis) {
        case AblationAxis::mask_ratio:
          if (!(value >= 0.0 && value <= 1.0)) raise<ConfigError>("mask ratio ", value, " outside [0,1]");
          pc.mask_ratio = value;
          break;
        case AblationAxis::patch_size:
          if (!integral || value < 1.0) raise<ConfigError>("patch size must be a positive integer");
          mc.patch_size = static_cast<std::size_t>(value);
          break;
        case AblationAxis::enc_depth:
          if (!integral || value < 1.0) raise<ConfigError>("encoder depth must be a positive integer");
          mc.encoder_depth = static_cast<std::size_t>(value);
          break;
        case AblationAxis::dec_depth:
          if (!integral || value < 1.0) raise<ConfigError>("decoder depth must be a positive integer");
          mc.decoder_depth = static_cast<std::size_t>(value);
          break;
        case AblationAxis::epochs:
          if (!integral || value < 1.0) raise<ConfigError>("epochs must be a positive integer");
          pc.epochs = static_cast<std::size_t>(value);
          break;
      }
      mc.validate(true);
      pc.validate();
    } catch (const Error& e) {
      row.skipped = true;
      row.reason = e.what();
      table.rows.push_back(row);
      continue;
    }
    PretrainResult pre = pretrain(*data.pretrain, mc, pc);
    FinetuneResult ft = finetune(&pre.model, mc, *data.finetune, data.validation, base_finetune);
    row.accuracy = accuracy(predict_labels(ft.model, *data.test), data.test->labels());
    row.pretrain_loss = *pre.log.records.back().val_loss;
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace smae
