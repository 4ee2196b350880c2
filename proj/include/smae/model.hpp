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

// Masked spectral autoencoder: patch embedding, class token, an encoder that
// only sees visible patches, a lighter decoder over the full token sequence,
// a per-patch reconstruction head and an optional classification head.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "smae/autodiff.hpp"
#include "smae/error.hpp"
#include "smae/patch_mask.hpp"
#include "smae/rng.hpp"
#include "smae/tensor.hpp"

namespace smae {

struct SmaeConfig {
  std::size_t length = 1000;
  std::size_t patch_size = 100;
  std::size_t embed_dim = 64;
  std::size_t heads = 4;
  std::size_t encoder_depth = 8;
  std::size_t decoder_depth = 1;
  std::size_t decoder_dim = 32;
  std::size_t mlp_ratio = 4;
  std::size_t n_classes = 0;  // 0 = no classification head
  double norm_eps = 1e-5;

  std::size_t n_patches() const { return patch_size ? length / patch_size : 0; }

  void validate(bool with_decoder) const {
    if (length == 0 || patch_size == 0 || length % patch_size != 0) {
      raise<DivisibilityError>("patch size ", patch_size, " does not divide spectrum length ", length);
    }
    if (heads == 0 || embed_dim == 0 || embed_dim % heads != 0) {
      raise<ConfigError>("embed_dim ", embed_dim, " must be a positive multiple of heads ", heads);
    }
    if (encoder_depth < 1) raise<ConfigError>("encoder_depth must be >= 1");
    if (mlp_ratio < 1) raise<ConfigError>("mlp_ratio must be >= 1");
    if (with_decoder) {
      if (decoder_depth < 1) raise<ConfigError>("decoder_depth must be >= 1 for pretraining");
      if (decoder_dim == 0 || decoder_dim % heads != 0) {
        raise<ConfigError>("decoder_dim ", decoder_dim, " must be a positive multiple of heads ",
                           heads);
      }
    }
  }

  bool operator==(const SmaeConfig&) const = default;
};

namespace detail {

/// Reads `key` into `field` when present; absent keys keep the default.
template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const SmaeConfig& c) {
  j = {{"length", c.length},           {"patch_size", c.patch_size},       {"embed_dim", c.embed_dim},
       {"heads", c.heads},             {"encoder_depth", c.encoder_depth}, {"decoder_depth", c.decoder_depth},
       {"decoder_dim", c.decoder_dim}, {"mlp_ratio", c.mlp_ratio},         {"n_classes", c.n_classes},
       {"norm_eps", c.norm_eps}};
}

inline void from_json(const nlohmann::json& j, SmaeConfig& c) {
  detail::read_field(j, "length", c.length);
  detail::read_field(j, "patch_size", c.patch_size);
  detail::read_field(j, "embed_dim", c.embed_dim);
  detail::read_field(j, "heads", c.heads);
  detail::read_field(j, "encoder_depth", c.encoder_depth);
  detail::read_field(j, "decoder_depth", c.decoder_depth);
  detail::read_field(j, "decoder_dim", c.decoder_dim);
  detail::read_field(j, "mlp_ratio", c.mlp_ratio);
  detail::read_field(j, "n_classes", c.n_classes);
  detail::read_field(j, "norm_eps", c.norm_eps);
}

struct ParameterSpec {
  std::string name;
  Shape shape;
};

namespace detail {

inline void block_specs(std::vector<ParameterSpec>& out, const std::string& prefix, std::size_t dim,
                        std::size_t hidden) {
  out.push_back({prefix + ".norm1.gain", {dim}});
  out.push_back({prefix + ".norm1.bias", {dim}});
  out.push_back({prefix + ".attn.qkv.weight", {dim, 3 * dim}});
  out.push_back({prefix + ".attn.qkv.bias", {3 * dim}});
  out.push_back({prefix + ".attn.proj.weight", {dim, dim}});
  out.push_back({prefix + ".attn.proj.bias", {dim}});
  out.push_back({prefix + ".norm2.gain", {dim}});
  out.push_back({prefix + ".norm2.bias", {dim}});
  out.push_back({prefix + ".mlp.fc1.weight", {dim, hidden}});
  out.push_back({prefix + ".mlp.fc1.bias", {hidden}});
  out.push_back({prefix + ".mlp.fc2.weight", {hidden, dim}});
  out.push_back({prefix + ".mlp.fc2.bias", {dim}});
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace detail

/// Ordered parameter listing implied by a config. Encoder parameters come
/// first, then (optionally) the decoder, then (optionally) the classifier.
inline std::vector<ParameterSpec> parameter_specs(const SmaeConfig& cfg, bool with_decoder) {
  const std::size_t n = cfg.n_patches();
  const std::size_t d = cfg.embed_dim;
  const std::size_t dd = cfg.decoder_dim;
  std::vector<ParameterSpec> out;
  out.push_back({"patch_embed.weight", {cfg.patch_size, d}});
  out.push_back({"patch_embed.bias", {d}});
  out.push_back({"class_token", {d}});
  out.push_back({"pos_embed", {n + 1, d}});
  for (std::size_t i = 0; i < cfg.encoder_depth; ++i) {
    detail::block_specs(out, "encoder." + std::to_string(i), d, d * cfg.mlp_ratio);
  }
  out.push_back({"encoder.norm.gain", {d}});
  out.push_back({"encoder.norm.bias", {d}});
  if (with_decoder) {
    out.push_back({"decoder.embed.weight", {d, dd}});
    out.push_back({"decoder.embed.bias", {dd}});
    out.push_back({"mask_token", {dd}});
    out.push_back({"decoder.pos_embed", {n + 1, dd}});
    for (std::size_t i = 0; i < cfg.decoder_depth; ++i) {
      detail::block_specs(out, "decoder." + std::to_string(i), dd, dd * cfg.mlp_ratio);
    }
    out.push_back({"decoder.norm.gain", {dd}});
    out.push_back({"decoder.norm.bias", {dd}});
    out.push_back({"decoder.head.weight", {dd, cfg.patch_size}});
    out.push_back({"decoder.head.bias", {cfg.patch_size}});
  }
  if (cfg.n_classes > 0) {
    out.push_back({"cls_head.weight", {d, cfg.n_classes}});
    out.push_back({"cls_head.bias", {cfg.n_classes}});
  }
  return out;
}

inline bool is_decoder_parameter(std::string_view name) {
  return name.starts_with("decoder.") || name == "mask_token";
}

inline bool is_head_parameter(std::string_view name) { return name.starts_with("cls_head."); }

/// Deterministic sinusoidal table used to initialize positional embeddings.
inline Tensor sinusoidal_table(std::size_t rows, std::size_t dim) {
  Tensor t({rows, dim});
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double a = static_cast<double>(p) * freq;
      t(p, i) = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  }
  return t;
}

class SmaeModel {
 public:
  struct Parameter {
    std::string name;
    Tensor value;
  };

  SmaeModel() = default;

  /// Fresh model: truncated-normal(0.02) maps and tokens, zero biases, unit
  /// norm gains, sinusoidal positional tables.
  static SmaeModel initialize(const SmaeConfig& cfg, std::uint64_t seed, bool with_decoder = true) {
    cfg.validate(with_decoder);
    SmaeModel m;
    m.config_ = cfg;
    for (auto& spec : parameter_specs(cfg, with_decoder)) {
      Rng rng(derive_seed(seed, {detail::fnv1a(spec.name)}));
      m.add(spec.name, init_tensor(spec, rng));
    }
    return m;
  }

  /// Builds a model from explicit parameter tensors; names/shapes must match
  /// the listing implied by `cfg` exactly (order may differ).
  static SmaeModel from_parameters(const SmaeConfig& cfg, std::vector<Parameter> params) {
    std::unordered_map<std::string, Tensor> by_name;
    for (auto& p : params) by_name.emplace(p.name, std::move(p.value));
    const bool with_decoder = by_name.count("mask_token") > 0;
    cfg.validate(with_decoder);
    SmaeModel m;
    m.config_ = cfg;
    for (auto& spec : parameter_specs(cfg, with_decoder)) {
      auto it = by_name.find(spec.name);
      if (it == by_name.end()) raise<ConfigError>("missing parameter '", spec.name, "'");
      if (it->second.shape() != spec.shape) {
        raise<ShapeError>("parameter '", spec.name, "' has shape ", shape_str(it->second.shape()),
                          ", config implies ", shape_str(spec.shape));
      }
      m.add(spec.name, std::move(it->second));
      by_name.erase(it);
    }
    if (!by_name.empty()) raise<ConfigError>("unexpected parameter '", by_name.begin()->first, "'");
    return m;
  }

  const SmaeConfig& config() const { return config_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Tensor& param(std::string_view name) const { return params_[require(name)].value; }
  Tensor& param(std::string_view name) { return params_[require(name)].value; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  bool has_decoder() const { return find("mask_token").has_value(); }
  bool has_classifier() const { return find("cls_head.weight").has_value(); }

  /// Encoder-only copy with a freshly initialized classification head.
  SmaeModel with_classifier(std::size_t n_classes, std::uint64_t seed) const {
    if (n_classes == 0) raise<ConfigError>("classifier needs at least one class");
    SmaeConfig cfg = config_;
    cfg.n_classes = n_classes;
    SmaeModel fresh = initialize(cfg, seed, false);
    for (auto& p : fresh.params_) {
      if (is_head_parameter(p.name)) continue;
      p.value = param(p.name);
    }
    return fresh;
  }

 private:
  static Tensor init_tensor(const ParameterSpec& spec, Rng& rng) {
    const std::string_view name = spec.name;
    if (name == "pos_embed" || name == "decoder.pos_embed") {
      return sinusoidal_table(spec.shape[0], spec.shape[1]);
    }
    if (detail::ends_with(name, ".gain")) return Tensor(spec.shape, 1.0);
    if (detail::ends_with(name, ".bias")) return Tensor(spec.shape, 0.0);
    Tensor t(spec.shape);
    for (double& v : t.data()) v = rng.truncated_normal(0.02);
    return t;
  }

  std::size_t require(std::string_view name) const {
    auto i = find(name);
    if (!i) raise<ConfigError>("model has no parameter '", name, "'");
    return *i;
  }

  void add(std::string name, Tensor value) {
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), std::move(value)});
  }

  SmaeConfig config_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Output of the encoder for a batch of spectra.
struct Encoded {
  ad::Var latents;  // [batch * tokens, embed_dim], class token first per spectrum
  std::size_t batch = 0;
  std::size_t tokens = 0;  // visible patches + 1
  std::vector<MaskPlan> plans;
  /// Normalized input of the last encoder block's attention (Grad-CAM features).
  ad::Var attention_input;
};

/// Binds a model to a tape and builds forward graphs. Parameters become
/// differentiable leaves (id = parameter index) when `differentiable` is set,
/// otherwise non-differentiable references.
class ForwardPass {
 public:
  ForwardPass(const SmaeModel& model, ad::Tape& tape, bool differentiable = true)
      : model_(model), tape_(tape), differentiable_(differentiable),
        leaves_(model.parameters().size()) {}

  ad::Tape& tape() { return tape_; }

  ad::Var param(std::string_view name) {
    auto idx = model_.find(name);
    if (!idx) raise<ConfigError>("model has no parameter '", name, "'");
    auto& slot = leaves_[*idx];
    if (!slot) {
      const Tensor& v = model_.parameters()[*idx].value;
      slot = differentiable_ ? tape_.parameter(v, *idx) : tape_.reference(v);
    }
    return *slot;
  }

  /// Encodes `spectra` ([batch, L]); every plan must hide the same number of
  /// patches so the batch shares one token count.
  Encoded encode(const Tensor& spectra, const std::vector<MaskPlan>& plans) {
    const SmaeConfig& cfg = model_.config();
    const std::size_t n = cfg.n_patches();
    if (spectra.rank() != 2 || spectra.dim(1) != cfg.length) {
      raise<ShapeError>("encode: spectra ", shape_str(spectra.shape()), " do not have length ",
                        cfg.length);
    }
    const std::size_t batch = spectra.dim(0);
    if (plans.size() != batch) raise<ContractError>("encode: ", plans.size(), " plans for ", batch, " spectra");
    const std::size_t hidden = plans.empty() ? 0 : plans.front().masked.size();
    for (const auto& p : plans) {
      if (p.n_patches != n) raise<ContractError>("mask plan built for ", p.n_patches, " patches, model has ", n);
      if (p.masked.size() != hidden) raise<ContractError>("mask plans in a batch must hide equally many patches");
    }
    const std::size_t nv = n - hidden;
    const std::size_t tokens = nv + 1;

    std::vector<std::size_t> patch_rows, pos_rows;
    patch_rows.reserve(batch * nv);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t v : plans[b].visible()) {
        patch_rows.push_back(b * n + v);
        pos_rows.push_back(v + 1);
      }
    }
    ad::Var patches = tape_.constant(spectra.reshaped({batch * n, cfg.patch_size}));
    ad::Var visible = ad::gather_rows(patches, std::move(patch_rows));
    ad::Var emb = ad::add_bias(ad::matmul(visible, param("patch_embed.weight")), param("patch_embed.bias"));
    ad::Var pos = param("pos_embed");
    emb = emb + ad::gather_rows(pos, std::move(pos_rows));
    ad::Var cls = ad::reshape(param("class_token"), {1, cfg.embed_dim}) + ad::slice_rows(pos, 0, 1);

    // Row 0 of the stack is the class token; visible embeddings follow.
    std::vector<std::size_t> order;
    order.reserve(batch * tokens);
    for (std::size_t b = 0; b < batch; ++b) {
      order.push_back(0);
      for (std::size_t s = 0; s < nv; ++s) order.push_back(1 + b * nv + s);
    }
    ad::Var x = ad::gather_rows(ad::concat_rows({cls, emb}), std::move(order));

    Encoded out;
    for (std::size_t i = 0; i < cfg.encoder_depth; ++i) {
      x = block(x, "encoder." + std::to_string(i), batch,
                i + 1 == cfg.encoder_depth ? &out.attention_input : nullptr);
    }
    out.latents = ad::layer_norm(x, param("encoder.norm.gain"), param("encoder.norm.bias"), cfg.norm_eps);
    out.batch = batch;
    out.tokens = tokens;
    out.plans = plans;
    return out;
  }

  /// Reconstructs full spectra [batch, L] from encoder latents.
  ad::Var decode(const Encoded& enc) {
    const SmaeConfig& cfg = model_.config();
    const std::size_t n = cfg.n_patches();
    if (enc.latents.shape() != Shape{enc.batch * enc.tokens, cfg.embed_dim} ||
        enc.plans.size() != enc.batch) {
      raise<ContractError>("decode: latents ", shape_str(enc.latents.shape()),
                           " inconsistent with batch ", enc.batch, " x tokens ", enc.tokens);
    }
    ad::Var y = ad::add_bias(ad::matmul(enc.latents, param("decoder.embed.weight")),
                             param("decoder.embed.bias"));
    const std::size_t mask_row = enc.batch * enc.tokens;
    std::vector<std::size_t> order, pos_rows;
    order.reserve(enc.batch * (n + 1));
    for (std::size_t b = 0; b < enc.batch; ++b) {
      const MaskPlan& plan = enc.plans[b];
      if (plan.n_patches != n || n - plan.masked.size() + 1 != enc.tokens) {
        raise<ContractError>("decode: mask plan ", b, " inconsistent with latents");
      }
      order.push_back(b * enc.tokens);
      pos_rows.push_back(0);
      std::size_t slot = 0;
      for (std::size_t i = 0; i < n; ++i) {
        pos_rows.push_back(i + 1);
        if (plan.is_masked(i)) {
          order.push_back(mask_row);
        } else {
          order.push_back(b * enc.tokens + 1 + slot++);
        }
      }
    }
    ad::Var mask = ad::reshape(param("mask_token"), {1, cfg.decoder_dim});
    ad::Var x = ad::gather_rows(ad::concat_rows({y, mask}), std::move(order));
    x = x + ad::gather_rows(param("decoder.pos_embed"), std::move(pos_rows));
    for (std::size_t i = 0; i < cfg.decoder_depth; ++i) {
      x = block(x, "decoder." + std::to_string(i), enc.batch, nullptr);
    }
    x = ad::layer_norm(x, param("decoder.norm.gain"), param("decoder.norm.bias"), cfg.norm_eps);
    ad::Var patches = ad::add_bias(ad::matmul(x, param("decoder.head.weight")), param("decoder.head.bias"));
    std::vector<std::size_t> keep;
    keep.reserve(enc.batch * n);
    for (std::size_t b = 0; b < enc.batch; ++b)
      for (std::size_t i = 0; i < n; ++i) keep.push_back(b * (n + 1) + 1 + i);
    return ad::reshape(ad::gather_rows(patches, std::move(keep)), {enc.batch, cfg.length});
  }

  /// Raw class scores [batch, n_classes] from the class-token latent.
  ad::Var class_scores(const Encoded& enc) {
    if (!model_.has_classifier()) raise<ConfigError>("model has no classification head");
    std::vector<std::size_t> rows;
    for (std::size_t b = 0; b < enc.batch; ++b) rows.push_back(b * enc.tokens);
    ad::Var cls = ad::gather_rows(enc.latents, std::move(rows));
    return ad::add_bias(ad::matmul(cls, param("cls_head.weight")), param("cls_head.bias"));
  }

  /// Unmasked encode followed by the classification head.
  ad::Var classify(const Tensor& spectra) {
    if (!model_.has_classifier()) raise<ConfigError>("model has no classification head");
    std::vector<MaskPlan> plans(spectra.rows(), MaskPlan::none(model_.config().n_patches()));
    return class_scores(encode(spectra, plans));
  }

 private:
  // Pre-norm transformer block: x + attn(norm1(x)), then x + mlp(norm2(x)).
  ad::Var block(ad::Var x, const std::string& prefix, std::size_t batch, ad::Var* attention_input) {
    const double eps = model_.config().norm_eps;
    ad::Var h = ad::layer_norm(x, param(prefix + ".norm1.gain"), param(prefix + ".norm1.bias"), eps);
    if (attention_input) *attention_input = h;
    ad::Var qkv = ad::add_bias(ad::matmul(h, param(prefix + ".attn.qkv.weight")), param(prefix + ".attn.qkv.bias"));
    ad::Var a = ad::multi_head_attention(qkv, batch, model_.config().heads);
    a = ad::add_bias(ad::matmul(a, param(prefix + ".attn.proj.weight")), param(prefix + ".attn.proj.bias"));
    x = x + a;
    h = ad::layer_norm(x, param(prefix + ".norm2.gain"), param(prefix + ".norm2.bias"), eps);
    h = ad::gelu(ad::add_bias(ad::matmul(h, param(prefix + ".mlp.fc1.weight")), param(prefix + ".mlp.fc1.bias")));
    h = ad::add_bias(ad::matmul(h, param(prefix + ".mlp.fc2.weight")), param(prefix + ".mlp.fc2.bias"));
    return x + h;
  }

  const SmaeModel& model_;
  ad::Tape& tape_;
  bool differentiable_;
  std::vector<std::optional<ad::Var>> leaves_;
};

inline Tensor single_row(std::span<const double> spectrum) {
  return Tensor({1, spectrum.size()}, std::vector<double>(spectrum.begin(), spectrum.end()));
}

/// Encoder latents for one spectrum: (visible + 1) x embed_dim, class token first.
inline Tensor encode(const SmaeModel& model, std::span<const double> spectrum, const MaskPlan& plan) {
  ad::Tape tape;
  ForwardPass fp(model, tape, false);
  return fp.encode(single_row(spectrum), {plan}).latents.value();
}

/// Reconstruction of one spectrum from its encoder latents and mask plan.
inline std::vector<double> decode(const SmaeModel& model, const Tensor& latents, const MaskPlan& plan) {
  ad::Tape tape;
  ForwardPass fp(model, tape, false);
  Encoded enc;
  enc.latents = tape.constant(latents);
  enc.batch = 1;
  enc.tokens = latents.rows();
  enc.plans = {plan};
  return fp.decode(enc).value().values();
}

inline std::vector<double> classify(const SmaeModel& model, std::span<const double> spectrum) {
  ad::Tape tape;
  ForwardPass fp(model, tape, false);
  return fp.classify(single_row(spectrum)).value().values();
}

}  // namespace smae
