// confp/encoder.hpp

// Copyright 2026  confp authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "confp/autodiff.hpp"
#include "confp/common.hpp"
#include "confp/dsp.hpp"
#include "confp/rng.hpp"
#include "confp/tensor.hpp"

namespace confp {

/// Unit-norm fingerprint vector. Cosine similarity between embeddings is the
/// plain dot product.
using Embedding = std::vector<float>;

inline double Dot(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size())
    throw ShapeError("embedding dot: dimensions differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

inline double Norm(const Embedding& a) {
  double ss = 0.0;
  for (float v : a) ss += static_cast<double>(v) * v;
  return std::sqrt(ss);
}

struct ConformerConfig {
  int encoder_dim = 256;
  int n_layers = 2;
  int n_heads = 4;
  int conv_kernel_size = 5;
  int embedding_dim = 128;
  int n_mels = 80;
  int max_frames = 368;       // positional table length; 3 s at 16 kHz, fft 1024, hop 128
  double dropout_rate = 0.5;
  int ffn_expansion = 1;      // macaron halves; 1 matches the preset parameter budgets

  void Validate() const {
    if (encoder_dim <= 0) throw ConfigError("model: encoder_dim must be positive");
    if (n_layers <= 0) throw ConfigError("model: n_layers must be positive");
    if (n_heads <= 0 || encoder_dim % n_heads != 0)
      throw ConfigError("model: encoder_dim (" + std::to_string(encoder_dim) +
                        ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    if (conv_kernel_size <= 0 || conv_kernel_size % 2 == 0)
      throw ConfigError("model: conv_kernel_size must be odd");
    if (embedding_dim <= 0) throw ConfigError("model: embedding_dim must be positive");
    if (n_mels <= 0) throw ConfigError("model: n_mels must be positive");
    if (max_frames <= 0) throw ConfigError("model: max_frames must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("model: dropout_rate must be in [0, 1)");
    if (ffn_expansion <= 0) throw ConfigError("model: ffn_expansion must be positive");
  }

  static ConformerConfig Small() { return {}; }
  static ConformerConfig Medium() {
    ConformerConfig c;
    c.encoder_dim = 512;
    c.n_layers = 3;
    c.n_heads = 8;
    return c;
  }
  static ConformerConfig Large() {
    ConformerConfig c;
    c.encoder_dim = 768;
    c.n_layers = 4;
    c.n_heads = 12;
    c.n_mels = 96;
    return c;
  }
  /// Reduced preset for gradient checks and fast tests.
  static ConformerConfig Tiny() {
    ConformerConfig c;
    c.encoder_dim = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.n_mels = 8;
    return c;
  }
};

enum class Mode { kTrain, kEval };

/// Conformer fingerprint encoder: input projection + learned positional
/// embeddings, N conformer blocks (half-step FFN, self-attention, conv
/// module, half-step FFN, final layer norm, all residual), mean pooling over
/// frames, affine output projection, l2 normalization.
template <typename Real>
class ConformerModel {
 public:
  struct NamedTensor {
    std::string name;
    ad::Tensor<Real> value;
  };

  ConformerModel(ConformerConfig cfg, std::uint64_t seed) : cfg_(cfg), init_seed_(seed) {
    cfg_.Validate();
    BuildLayout();
    for (auto& p : params_) InitTensor(p, seed);
  }

  const ConformerConfig& config() const { return cfg_; }
  std::uint64_t init_seed() const { return init_seed_; }

  std::size_t ParamCount() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  std::vector<NamedTensor>& params() { return params_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  ad::Tensor<Real>& param(const std::string& name) {
    return params_[IndexOf(name)].value;
  }
  const ad::Tensor<Real>& param(const std::string& name) const {
    return params_[IndexOf(name)].value;
  }

  /// Leaf nodes for one training step; gradients accumulate on these.
  struct Bound {
    std::vector<ad::Var<Real>> nodes;  // aligned with params() order
    const ad::Var<Real>& at(std::size_t i) const { return nodes[i]; }
  };

  Bound BindTrainable() const {
    Bound b;
    b.nodes.reserve(params_.size());
    for (const auto& p : params_) b.nodes.push_back(ad::Parameter(p.value, p.name));
    return b;
  }

  Bound BindFrozen() const {
    Bound b;
    b.nodes.reserve(params_.size());
    for (const auto& p : params_) b.nodes.push_back(ad::Constant(p.value));
    return b;
  }

  /// Forward pass over one spectrogram; returns the [1 x embedding_dim]
  /// unit-norm output node.
  ad::Var<Real> Forward(const MelSpectrogram& spec, const Bound& bound, Mode mode,
                        Rng* dropout_rng) const {
    if (spec.n_mels != cfg_.n_mels)
      throw ShapeError("embed: spectrogram has " + std::to_string(spec.n_mels) +
                       " mel bands, model expects " + std::to_string(cfg_.n_mels));
    if (spec.n_frames < 1 || spec.n_frames > cfg_.max_frames)
      throw ShapeError("embed: frame count " + std::to_string(spec.n_frames) +
                       " outside [1, " + std::to_string(cfg_.max_frames) + "]");
    if (mode == Mode::kTrain && dropout_rng == nullptr)
      throw DomainError("embed: training mode requires a dropout rng");

    ad::Tensor<Real> input({spec.n_frames, spec.n_mels});
    for (std::size_t i = 0; i < input.data.size(); ++i)
      input.data[i] = static_cast<Real>(spec.values[i]);
    auto x = ad::Constant(std::move(input));

    x = ad::Add(ad::MatMul(x, P(bound, "input_proj.w")), P(bound, "input_proj.b"));
    x = ad::Add(x, ad::Slice(P(bound, "pos_emb"), 0, 0, spec.n_frames));
    for (int i = 0; i < cfg_.n_layers; ++i)
      x = BlockForward(i, x, bound, mode, dropout_rng);
    auto pooled = ad::Mean(x, 0);
    auto e = ad::Add(ad::MatMul(pooled, P(bound, "output_proj.w")), P(bound, "output_proj.b"));
    return ad::L2Normalize(e, 1);
  }

  /// One conformer block; exposed so tests can probe block structure.
  ad::Var<Real> BlockForward(int block, ad::Var<Real> x, const Bound& bound, Mode mode,
                             Rng* dropout_rng) const {
    const std::string p = "block" + std::to_string(block) + ".";
    auto ffn = [&](const std::string& which, ad::Var<Real> in) {
      auto h = Ln(bound, p + which + ".ln", in);
      h = ad::Add(ad::MatMul(h, P(bound, p + which + ".w1")), P(bound, p + which + ".b1"));
      h = ad::Swish(h);
      h = Drop(h, mode, dropout_rng);
      h = ad::Add(ad::MatMul(h, P(bound, p + which + ".w2")), P(bound, p + which + ".b2"));
      return Drop(h, mode, dropout_rng);
    };

    x = ad::Add(x, ad::Scale(ffn("ffn1", x), 0.5));

    {
      auto h = Ln(bound, p + "attn.ln", x);
      auto q = ad::Add(ad::MatMul(h, P(bound, p + "attn.wq")), P(bound, p + "attn.bq"));
      auto k = ad::Add(ad::MatMul(h, P(bound, p + "attn.wk")), P(bound, p + "attn.bk"));
      auto v = ad::Add(ad::MatMul(h, P(bound, p + "attn.wv")), P(bound, p + "attn.bv"));
      h = ad::ScaledDotProductAttention(q, k, v, cfg_.n_heads);
      h = ad::Add(ad::MatMul(h, P(bound, p + "attn.wo")), P(bound, p + "attn.bo"));
      x = ad::Add(x, Drop(h, mode, dropout_rng));
    }

    {
      auto h = Ln(bound, p + "conv.ln", x);
      h = ad::Add(ad::MatMul(h, P(bound, p + "conv.pw1.w")), P(bound, p + "conv.pw1.b"));
      h = ad::Glu(h, 1);
      h = ad::DepthwiseConv1d(h, P(bound, p + "conv.dw.w"), P(bound, p + "conv.dw.b"));
      h = ad::Swish(h);
      h = ad::Add(ad::MatMul(h, P(bound, p + "conv.pw2.w")), P(bound, p + "conv.pw2.b"));
      x = ad::Add(x, Drop(h, mode, dropout_rng));
    }

    x = ad::Add(x, ad::Scale(ffn("ffn2", x), 0.5));
    return Ln(bound, p + "final_ln", x);
  }

  /// Deterministic eval-mode embedding.
  Embedding Embed(const MelSpectrogram& spec) const {
    auto bound = BindFrozen();
    auto node = Forward(spec, bound, Mode::kEval, nullptr);
    Embedding e(static_cast<std::size_t>(cfg_.embedding_dim));
    for (int j = 0; j < cfg_.embedding_dim; ++j)
      e[static_cast<std::size_t>(j)] = static_cast<float>(node->value.data[static_cast<std::size_t>(j)]);
    return e;
  }

  /// Elementwise equal to Embed() per item; all inputs must share one shape.
  std::vector<Embedding> EmbedBatch(const std::vector<MelSpectrogram>& specs) const {
    std::vector<Embedding> out;
    out.reserve(specs.size());
    for (const auto& s : specs) {
      if (s.n_frames != specs[0].n_frames || s.n_mels != specs[0].n_mels)
        throw ShapeError("embed_batch: heterogeneous spectrogram shapes");
      out.push_back(Embed(s));
    }
    return out;
  }

  std::size_t IndexOf(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DomainError("model: unknown parameter " + name);
    return it->second;
  }

 private:
  ad::Var<Real> P(const Bound& bound, const std::string& name) const {
    return bound.nodes[IndexOf(name)];
  }

  ad::Var<Real> Ln(const Bound& bound, const std::string& prefix, ad::Var<Real> x) const {
    return ad::LayerNorm(x, P(bound, prefix + ".g"), P(bound, prefix + ".b"));
  }

  ad::Var<Real> Drop(ad::Var<Real> x, Mode mode, Rng* rng) const {
    if (mode == Mode::kEval || cfg_.dropout_rate == 0.0) return x;
    return ad::Dropout(x, cfg_.dropout_rate, *rng, true);
  }

  void Register(const std::string& name, std::vector<int> shape) {
    index_[name] = params_.size();
    params_.push_back({name, ad::Tensor<Real>::Zeros(std::move(shape))});
  }

  void BuildLayout() {
    const int d = cfg_.encoder_dim;
    const int e = cfg_.ffn_expansion * d;
    Register("input_proj.w", {cfg_.n_mels, d});
    Register("input_proj.b", {1, d});
    Register("pos_emb", {cfg_.max_frames, d});
    for (int i = 0; i < cfg_.n_layers; ++i) {
      const std::string p = "block" + std::to_string(i) + ".";
      for (const char* which : {"ffn1", "ffn2"}) {
        Register(p + which + ".ln.g", {1, d});
        Register(p + which + ".ln.b", {1, d});
        Register(p + which + ".w1", {d, e});
        Register(p + which + ".b1", {1, e});
        Register(p + which + ".w2", {e, d});
        Register(p + which + ".b2", {1, d});
      }
      Register(p + "attn.ln.g", {1, d});
      Register(p + "attn.ln.b", {1, d});
      for (const char* w : {"wq", "wk", "wv", "wo"}) Register(p + "attn." + std::string(w), {d, d});
      for (const char* b : {"bq", "bk", "bv", "bo"}) Register(p + "attn." + std::string(b), {1, d});
      Register(p + "conv.ln.g", {1, d});
      Register(p + "conv.ln.b", {1, d});
      Register(p + "conv.pw1.w", {d, 2 * d});
      Register(p + "conv.pw1.b", {1, 2 * d});
      Register(p + "conv.dw.w", {cfg_.conv_kernel_size, d});
      Register(p + "conv.dw.b", {1, d});
      Register(p + "conv.pw2.w", {d, d});
      Register(p + "conv.pw2.b", {1, d});
      Register(p + "final_ln.g", {1, d});
      Register(p + "final_ln.b", {1, d});
    }
    Register("output_proj.w", {d, cfg_.embedding_dim});
    Register("output_proj.b", {1, cfg_.embedding_dim});
  }

  // Weights: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); layer-norm scale 1,
  // offset 0; biases 0. Each tensor draws from its own named stream so the
  // initialization is independent of registration order.
  void InitTensor(NamedTensor& p, std::uint64_t seed) {
    const std::string& n = p.name;
    const std::size_t dot = n.rfind('.');
    const std::string leaf = dot == std::string::npos ? n : n.substr(dot + 1);
    if (leaf == "g") {  // layer-norm scale
      for (auto& v : p.value.data) v = Real(1);
      return;
    }
    if (!leaf.empty() && leaf[0] == 'b') return;  // biases and offsets stay zero
    int fan_in = p.value.shape[0];
    if (n == "pos_emb") fan_in = cfg_.encoder_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng = Rng::Derive(seed, "init/" + n);
    for (auto& v : p.value.data) v = static_cast<Real>(rng.Uniform(-bound, bound));
  }

  ConformerConfig cfg_;
  std::uint64_t init_seed_ = 0;
  std::vector<NamedTensor> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Anything that can turn a spectrogram into a fingerprint embedding. The key
/// identifies the segment or query; the model embedder ignores it.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual Embedding Embed(const MelSpectrogram& spec, std::string_view key) const = 0;
};

template <typename Real>
class ModelEmbedder : public Embedder {
 public:
  explicit ModelEmbedder(const ConformerModel<Real>* model) : model_(model) {}
  int dim() const override { return model_->config().embedding_dim; }
  Embedding Embed(const MelSpectrogram& spec, std::string_view) const override {
    return model_->Embed(spec);
  }

 private:
  const ConformerModel<Real>* model_;
};

/// Content-independent unit vectors derived from the key alone; the
/// chance-level baseline for retrieval evaluation.
class RandomEmbedder : public Embedder {
 public:
  RandomEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  int dim() const override { return dim_; }
  Embedding Embed(const MelSpectrogram&, std::string_view key) const override {
    Rng rng = Rng::Derive(seed_, std::string("random_embedder/") + std::string(key));
    Embedding e(static_cast<std::size_t>(dim_));
    double ss = 0.0;
    for (auto& v : e) {
      const double x = rng.Normal();
      v = static_cast<float>(x);
      ss += x * x;
    }
    const double inv = 1.0 / std::sqrt(std::max(ss, 1e-30));
    for (auto& v : e) v = static_cast<float>(v * inv);
    return e;
  }

 private:
  int dim_;
  std::uint64_t seed_;
};

}  // namespace confp
