// tests/test_encoder.cpp

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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "confp/checkpoint.hpp"
#include "confp/encoder.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace confp;
using Catch::Approx;

namespace {

MelSpectrogram RandomMel(int n_frames, int n_mels, Rng& rng) {
  MelSpectrogram mel;
  mel.n_frames = n_frames;
  mel.n_mels = n_mels;
  mel.values.resize(static_cast<std::size_t>(n_frames) * n_mels);
  for (auto& v : mel.values) v = static_cast<float>(rng.Uniform(-8.0, 4.0));
  return mel;
}

ConformerConfig TinyFor(int max_frames) {
  auto cfg = ConformerConfig::Tiny();
  cfg.max_frames = max_frames;
  cfg.dropout_rate = 0.0;
  return cfg;
}

}  // namespace

// Exact parameter counts for this block layout, asserted against Table-style
// budgets of 1.5M / 8.8M / 26.2M.
TEST_CASE("preset parameter counts sit within 15% of their budgets") {
  struct Case {
    ConformerConfig cfg;
    std::size_t exact;
    double budget;
  };
  const Case cases[] = {
      {ConformerConfig::Small(), 1603456, 1.5e6},
      {ConformerConfig::Medium(), 8987776, 8.8e6},
      {ConformerConfig::Large(), 26490752, 26.2e6},
  };
  for (const auto& c : cases) {
    ConformerModel<float> model(c.cfg, 1);
    REQUIRE(model.ParamCount() == c.exact);
    REQUIRE(std::abs(static_cast<double>(model.ParamCount()) - c.budget) / c.budget < 0.15);
  }
}

TEST_CASE("same seed builds bit-identical parameters") {
  ConformerModel<float> a(TinyFor(64), 42);
  ConformerModel<float> b(TinyFor(64), 42);
  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    REQUIRE(a.params()[i].name == b.params()[i].name);
    REQUIRE(a.params()[i].value.data == b.params()[i].value.data);
  }
  ConformerModel<float> c(TinyFor(64), 43);
  REQUIRE(a.param("input_proj.w").data != c.param("input_proj.w").data);
}

TEST_CASE("invalid configurations name the violated invariant") {
  auto cfg = ConformerConfig::Small();
  cfg.n_heads = 3;  // 256 % 3 != 0
  try {
    ConformerModel<float> m(cfg, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("n_heads") != std::string::npos);
  }
  cfg = ConformerConfig::Small();
  cfg.conv_kernel_size = 4;
  REQUIRE_THROWS_AS(ConformerModel<float>(cfg, 1), Error);
}

TEST_CASE("conformer block with zeroed output weights reduces to its final layer norm") {
  auto cfg = TinyFor(32);
  ConformerModel<double> model(cfg, 7);
  for (auto& p : model.params()) {
    // Zero every weight that writes into a residual branch.
    if (p.name.find(".w2") != std::string::npos || p.name.find(".b2") != std::string::npos ||
        p.name.find("attn.wo") != std::string::npos ||
        p.name.find("attn.bo") != std::string::npos ||
        p.name.find("conv.pw2") != std::string::npos)
      for (auto& v : p.value.data) v = 0.0;
  }
  Rng rng(5);
  ad::Tensor<double> x({10, cfg.encoder_dim});
  for (auto& v : x.data) v = rng.Uniform(-1.0, 1.0);

  auto bound = model.BindFrozen();
  auto y = model.BlockForward(0, ad::Constant(x), bound, Mode::kEval, nullptr);

  auto ln = ad::LayerNorm(ad::Constant(x),
                          ad::Constant(model.param("block0.final_ln.g")),
                          ad::Constant(model.param("block0.final_ln.b")));
  for (std::size_t i = 0; i < ln->value.data.size(); ++i)
    REQUIRE(y->value.data[i] == Approx(ln->value.data[i]).margin(1e-12));
}

TEST_CASE("conformer block preserves shape for arbitrary frame counts") {
  auto cfg = TinyFor(128);
  ConformerModel<float> model(cfg, 3);
  auto bound = model.BindFrozen();
  Rng rng(6);
  for (int frames : {5, 17, 50, 100}) {
    ad::Tensor<float> x({frames, cfg.encoder_dim});
    for (auto& v : x.data) v = static_cast<float>(rng.Uniform(-1.0, 1.0));
    auto y = model.BlockForward(0, ad::Constant(x), bound, Mode::kEval, nullptr);
    REQUIRE(y->value.shape == std::vector<int>{frames, cfg.encoder_dim});
  }
}

TEST_CASE("gradients flow through a one-block model (finite differences)") {
  auto cfg = TinyFor(6);
  ConformerModel<double> model(cfg, 11);
  Rng rng(8);
  MelSpectrogram mel = RandomMel(6, cfg.n_mels, rng);

  // Differentiate a probe-weighted embedding sum w.r.t. a few parameters.
  Rng probe_rng(9);
  ad::Tensor<double> probe({1, cfg.embedding_dim});
  for (auto& v : probe.data) v = probe_rng.Uniform(-1.0, 1.0);

  auto bound = model.BindTrainable();
  auto out = model.Forward(mel, bound, Mode::kEval, nullptr);
  auto loss = ad::SumAll(ad::Mul(out, ad::Constant(probe)));
  ad::Backward(loss);

  auto eval_with = [&](const std::string& name, std::size_t elem, double delta) {
    ConformerModel<double> copy = model;
    copy.param(name).data[elem] += delta;
    auto b = copy.BindFrozen();
    auto o = copy.Forward(mel, b, Mode::kEval, nullptr);
    return ad::SumAll(ad::Mul(o, ad::Constant(probe)))->value.data[0];
  };

  const double h = 1e-5;
  for (const std::string name :
       {"input_proj.w", "block0.attn.wq", "block0.conv.dw.w", "block0.ffn2.w1", "output_proj.w"}) {
    const auto& grad = bound.nodes[model.IndexOf(name)]->Grad();
    REQUIRE(!grad.data.empty());
    for (std::size_t elem : {std::size_t(0), grad.data.size() / 2, grad.data.size() - 1}) {
      const double fd = (eval_with(name, elem, h) - eval_with(name, elem, -h)) / (2 * h);
      const double an = grad.data[elem];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      INFO(name << "[" << elem << "] fd=" << fd << " ad=" << an);
      REQUIRE(std::abs(fd - an) / denom < 1e-4);
    }
  }
}

TEST_CASE("embeddings are unit-norm, finite and deterministic in eval mode") {
  auto cfg = TinyFor(32);
  ConformerModel<float> model(cfg, 21);
  Rng rng(22);
  for (int i = 0; i < 100; ++i) {
    const auto mel = RandomMel(32, cfg.n_mels, rng);
    const auto e = model.Embed(mel);
    REQUIRE(e.size() == 128);
    REQUIRE(std::abs(Norm(e) - 1.0) < 1e-5);
    for (float v : e) REQUIRE(std::isfinite(v));
    REQUIRE(model.Embed(mel) == e);
  }
}

TEST_CASE("cosine similarity of embeddings equals their dot product") {
  auto cfg = TinyFor(32);
  ConformerModel<float> model(cfg, 31);
  Rng rng(32);
  const auto a = model.Embed(RandomMel(32, cfg.n_mels, rng));
  const auto b = model.Embed(RandomMel(32, cfg.n_mels, rng));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  const double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  REQUIRE(Dot(a, b) == Approx(cosine).margin(1e-6));
}

TEST_CASE("embed rejects mel-band mismatches") {
  auto cfg = TinyFor(32);
  ConformerModel<float> model(cfg, 41);
  Rng rng(42);
  const auto wrong = RandomMel(32, cfg.n_mels + 1, rng);
  REQUIRE_THROWS_AS(model.Embed(wrong), Error);
}

TEST_CASE("embed_batch equals per-item embed bit-exactly") {
  auto cfg = TinyFor(16);
  ConformerModel<float> model(cfg, 51);
  Rng rng(52);
  std::vector<MelSpectrogram> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(RandomMel(16, cfg.n_mels, rng));

  const auto out = model.EmbedBatch(batch);
  REQUIRE(out.size() == 8);
  for (int i = 0; i < 8; ++i) REQUIRE(out[static_cast<std::size_t>(i)] == model.Embed(batch[static_cast<std::size_t>(i)]));

  REQUIRE(model.EmbedBatch({}).empty());
  REQUIRE(model.EmbedBatch({batch[0]})[0] == model.Embed(batch[0]));

  auto odd = batch;
  odd.push_back(RandomMel(15, cfg.n_mels, rng));
  REQUIRE_THROWS_AS(model.EmbedBatch(odd), Error);
}

TEST_CASE("mean pooling is the arithmetic mean and permutation-invariant") {
  Rng rng(61);
  ad::Tensor<float> x({7, 5});
  for (auto& v : x.data) v = static_cast<float>(rng.Uniform(-2.0, 2.0));
  auto pooled = ad::Mean(ad::Constant(x), 0);
  for (int j = 0; j < 5; ++j) {
    double acc = 0.0;
    for (int i = 0; i < 7; ++i) acc += x.at(i, j);
    REQUIRE(pooled->value.data[static_cast<std::size_t>(j)] == Approx(acc / 7).margin(1e-6));
  }

  // Frame permutation leaves the pooled value untouched.
  ad::Tensor<float> perm({7, 5});
  const int order[] = {3, 1, 6, 0, 2, 5, 4};
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 5; ++j) perm.at(i, j) = x.at(order[i], j);
  auto pooled_perm = ad::Mean(ad::Constant(perm), 0);
  for (int j = 0; j < 5; ++j)
    REQUIRE(pooled_perm->value.data[static_cast<std::size_t>(j)] ==
            pooled->value.data[static_cast<std::size_t>(j)]);

  // Single frame: pooling is the identity.
  ad::Tensor<float> one({1, 5});
  for (auto& v : one.data) v = static_cast<float>(rng.Uniform(-2.0, 2.0));
  auto pooled_one = ad::Mean(ad::Constant(one), 0);
  REQUIRE(pooled_one->value.data == one.data);
}

TEST_CASE("checkpoint round trip preserves embeddings bit-exactly") {
  synth::TempDir tmp("ckpt");
  auto cfg = TinyFor(24);
  cfg.dropout_rate = 0.3;
  ConformerModel<float> model(cfg, 71);
  SpectralConfig spectral;
  spectral.n_mels = cfg.n_mels;
  CheckpointMeta meta;
  meta.seed = 71;
  meta.steps = 123;
  meta.epoch = 4;
  meta.best_loss = 1.75;

  const std::string path = tmp.path() + "/model.ckpt";
  SaveCheckpoint(path, model, spectral, meta);
  auto loaded = LoadCheckpoint<float>(path);

  REQUIRE(loaded.meta.steps == 123);
  REQUIRE(loaded.meta.epoch == 4);
  REQUIRE(loaded.meta.best_loss == 1.75);
  REQUIRE(loaded.spectral.n_mels == cfg.n_mels);
  REQUIRE_FALSE(loaded.optim.has_value());

  Rng rng(72);
  for (int i = 0; i < 10; ++i) {
    const auto mel = RandomMel(24, cfg.n_mels, rng);
    REQUIRE(loaded.model.Embed(mel) == model.Embed(mel));
  }
}

TEST_CASE("checkpoint round trip preserves optimizer state") {
  synth::TempDir tmp("ckpt2");
  auto cfg = TinyFor(8);
  ConformerModel<float> model(cfg, 81);
  OptimizerSnapshot<float> snap;
  Rng rng(82);
  for (const auto& p : model.params()) {
    AdamState<float> st;
    st.Reset(p.value.shape);
    for (auto& v : st.m.data) v = static_cast<float>(rng.Uniform(-1, 1));
    for (auto& v : st.v.data) v = static_cast<float>(rng.Uniform(0, 1));
    snap.states.push_back(std::move(st));
  }
  SpectralConfig spectral;
  spectral.n_mels = cfg.n_mels;
  CheckpointMeta meta;
  meta.steps = 55;

  const std::string path = tmp.path() + "/opt.ckpt";
  SaveCheckpoint(path, model, spectral, meta, &snap);
  auto loaded = LoadCheckpoint<float>(path);
  REQUIRE(loaded.optim.has_value());
  REQUIRE(loaded.optim->states.size() == snap.states.size());
  for (std::size_t i = 0; i < snap.states.size(); ++i) {
    REQUIRE(loaded.optim->states[i].m.data == snap.states[i].m.data);
    REQUIRE(loaded.optim->states[i].v.data == snap.states[i].v.data);
    REQUIRE(loaded.optim->states[i].step == 55);
  }
}

TEST_CASE("checkpoint loader rejects bad magic and truncated files") {
  synth::TempDir tmp("ckpt3");
  const std::string path = tmp.path() + "/bad.ckpt";
  {
    auto os = OpenOutput(path);
    os << "garbage";
  }
  REQUIRE_THROWS_AS(LoadCheckpoint<float>(path), Error);
}
