// confp/trainer.hpp

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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "confp/augment.hpp"
#include "confp/autodiff.hpp"
#include "confp/checkpoint.hpp"
#include "confp/common.hpp"
#include "confp/dataset.hpp"
#include "confp/encoder.hpp"
#include "confp/optim.hpp"
#include "confp/rng.hpp"

namespace confp {

// ---------------------------------------------------------------------------
// NT-Xent

/// Normalized temperature-scaled cross entropy over a batch of 2B unit
/// vectors ordered [orig_1..orig_B, rep_1..rep_B]. For each ordered positive
/// pair (i, j):
///   l_ij = -log( exp(sim(z_i, z_j)/tau) / sum_{k != i} exp(sim(z_i, z_k)/tau) )
/// and the total is the mean over all 2B ordered pairs.
template <typename Real>
ad::Var<Real> NtXentLoss(const std::vector<ad::Var<Real>>& embeddings, double tau) {
  const int n = static_cast<int>(embeddings.size());
  if (n < 4 || n % 2 != 0)
    throw DomainError("nt_xent: need an even batch of at least 4 embeddings (B >= 2), got " +
                      std::to_string(n));
  if (tau <= 0) throw DomainError("nt_xent: temperature must be positive");
  const int b = n / 2;
  for (int i = 0; i < n; ++i) {
    const auto& t = embeddings[static_cast<std::size_t>(i)]->value;
    if (t.rank() != 2 || t.rows() != 1)
      throw ShapeError("nt_xent: embeddings must be [1 x d] rows");
    double ss = 0.0;
    for (Real v : t.data) ss += static_cast<double>(v) * v;
    if (std::abs(std::sqrt(ss) - 1.0) > 1e-4)
      throw DomainError("nt_xent: embedding " + std::to_string(i) +
                        " is not unit-norm (|z| = " + std::to_string(std::sqrt(ss)) + ")");
  }

  auto z = ad::Concat(0, embeddings);                       // [2B x d]
  auto logits = ad::Scale(ad::MatMul(z, ad::Transpose(z)), 1.0 / tau);

  // Self-similarities are excluded from every denominator; positives select
  // the replica (or original) of the same sample.
  ad::Tensor<Real> mask({n, n});
  ad::Tensor<Real> onehot({n, n});
  for (int i = 0; i < n; ++i) {
    mask.at(i, i) = static_cast<Real>(-1e9);
    const int j = i < b ? i + b : i - b;
    onehot.at(i, j) = Real(1);
  }
  auto log_probs = ad::LogSoftmax(ad::Add(logits, ad::Constant(std::move(mask))), 1);
  auto picked = ad::Mul(log_probs, ad::Constant(std::move(onehot)));
  return ad::Scale(ad::SumAll(picked), -1.0 / n);
}

/// Value-level convenience over plain vectors.
template <typename Real>
double NtXent(const std::vector<std::vector<Real>>& embeddings, double tau) {
  std::vector<ad::Var<Real>> rows;
  rows.reserve(embeddings.size());
  for (const auto& e : embeddings) {
    ad::Tensor<Real> t({1, static_cast<int>(e.size())});
    t.data.assign(e.begin(), e.end());
    rows.push_back(ad::Constant(std::move(t)));
  }
  return static_cast<double>(NtXentLoss(rows, tau)->value.data[0]);
}

// ---------------------------------------------------------------------------
// Training configuration and schedule

enum class LrSchedule { kConstant, kStep };

struct TrainConfig {
  int batch_size = 64;
  double temperature = 0.07;
  double learning_rate = 1e-4;
  double weight_decay = 5e-4;
  int epochs = 100;
  double dropout = 0.5;
  std::uint64_t seed = 1;
  LrSchedule schedule = LrSchedule::kConstant;
  std::vector<int> milestones;  // epochs at which lr halves and batch doubles
  int batch_cap = 256;
  bool abort_on_unreadable = true;
  int checkpoint_every = 1;     // epochs

  void Validate() const {
    if (batch_size < 2) throw ConfigError("training: batch_size must be >= 2");
    if (temperature <= 0) throw ConfigError("training: temperature must be positive");
    if (learning_rate < 0) throw ConfigError("training: learning_rate must be >= 0");
    if (weight_decay < 0) throw ConfigError("training: weight_decay must be >= 0");
    if (epochs <= 0) throw ConfigError("training: epochs must be positive");
    if (dropout < 0 || dropout >= 1) throw ConfigError("training: dropout must be in [0, 1)");
    if (checkpoint_every <= 0) throw ConfigError("training: checkpoint_every must be positive");
    for (std::size_t i = 1; i < milestones.size(); ++i)
      if (milestones[i] <= milestones[i - 1])
        throw ConfigError("training: milestones must be strictly increasing");
  }
};

struct ScheduledParams {
  double lr;
  int batch_size;
};

/// Constant mode returns the configured values; step mode halves the learning
/// rate and doubles the batch (up to batch_cap) at each passed milestone.
inline ScheduledParams ScheduleStep(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw DomainError("schedule: epoch must be >= 0");
  ScheduledParams out{cfg.learning_rate, cfg.batch_size};
  if (cfg.schedule == LrSchedule::kConstant) return out;
  for (int m : cfg.milestones) {
    if (epoch < m) break;
    out.lr /= 2.0;
    out.batch_size *= 2;
  }
  if (cfg.batch_cap > 0) out.batch_size = std::min(out.batch_size, cfg.batch_cap);
  return out;
}

// ---------------------------------------------------------------------------
// Train step

template <typename Real>
struct Optimizer {
  AdamConfig cfg;
  std::vector<AdamState<Real>> states;  // aligned with model parameter order
};

/// One forward/backward/Adam step over a batch of (track, segment start)
/// pairs. Returns the finite loss; aborts with diagnostics otherwise.
template <typename Real>
double TrainStep(ConformerModel<Real>& model, Optimizer<Real>& opt,
                 const std::vector<std::pair<const AudioBuffer*, double>>& batch,
                 const SpectralConfig& spectral, const AugmentationSpec& aug, double tau,
                 Rng& aug_rng, Rng& dropout_rng, const WavCorpus* noise_corpus = nullptr,
                 const WavCorpus* ir_corpus = nullptr) {
  const int b = static_cast<int>(batch.size());
  if (b < 2) throw DomainError("train_step: batch size must be >= 2");
  if (opt.states.size() != model.params().size())
    opt.states.resize(model.params().size());

  std::vector<MelSpectrogram> originals, replicas;
  originals.reserve(static_cast<std::size_t>(b));
  replicas.reserve(static_cast<std::size_t>(b));
  for (const auto& [track, start] : batch) {
    auto pair = MakeReplica(*track, start, spectral, aug, aug_rng, noise_corpus, ir_corpus);
    originals.push_back(std::move(pair.original));
    replicas.push_back(std::move(pair.replica));
  }

  auto bound = model.BindTrainable();
  std::vector<ad::Var<Real>> rows;
  rows.reserve(static_cast<std::size_t>(2 * b));
  for (const auto& spec : originals)
    rows.push_back(model.Forward(spec, bound, Mode::kTrain, &dropout_rng));
  for (const auto& spec : replicas)
    rows.push_back(model.Forward(spec, bound, Mode::kTrain, &dropout_rng));

  auto loss = NtXentLoss(rows, tau);
  const double loss_value = static_cast<double>(loss->value.data[0]);
  if (!std::isfinite(loss_value)) {
    double max_abs = 0.0;
    for (const auto& row : rows)
      for (Real v : row->value.data)
        max_abs = std::max(max_abs, std::abs(static_cast<double>(v)));
    throw DomainError("train_step: non-finite loss over batch of " + std::to_string(b) +
                      " (max |embedding| = " + std::to_string(max_abs) + ")");
  }

  ad::Backward(loss);
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    auto& p = model.params()[i];
    const auto& leaf = *bound.nodes[i];
    if (!leaf.grad_alloc) continue;  // parameter unused by this graph
    AdamStep(p.value, leaf.Grad(), opt.states[i], opt.cfg, p.name);
  }
  return loss_value;
}

// ---------------------------------------------------------------------------
// Full training loop

struct TrainResult {
  std::string last_checkpoint;
  std::string best_checkpoint;
  double best_loss = HUGE_VAL;
  std::uint64_t steps = 0;
  int epochs_run = 0;
};

/// SimCLR-style training: per epoch, one fresh random segment per track,
/// batches of positive pairs, NT-Xent + Adam. Checkpoints every
/// `checkpoint_every` epochs plus a best-loss checkpoint. The metrics stream
/// receives one JSON line per step.
template <typename Real>
TrainResult Train(const std::vector<TrackEntry>& manifest, const TrainConfig& tcfg,
                  ConformerConfig mcfg, const SpectralConfig& spectral, const AugmentationSpec& aug,
                  const std::string& out_dir, std::ostream* metrics = nullptr,
                  std::ostream* warnings = nullptr, const std::string& resume_from = "") {
  tcfg.Validate();
  spectral.Validate();
  aug.Validate();
  mcfg.dropout_rate = tcfg.dropout;
  mcfg.n_mels = spectral.n_mels;
  mcfg.Validate();
  std::filesystem::create_directories(out_dir);

  const double margin = aug.time_shift.max_offset;
  const double min_duration = spectral.segment_len + 2.0 * margin +
                              (aug.time_stretch ? spectral.segment_len : 0.0);
  auto tracks = LoadTracks(manifest, spectral, tcfg.abort_on_unreadable, min_duration, warnings);

  std::unique_ptr<WavCorpus> noise_corpus, ir_corpus;
  if (aug.background_noise) noise_corpus = std::make_unique<WavCorpus>(aug.bg_corpus_dir);
  if (aug.reverb) ir_corpus = std::make_unique<WavCorpus>(aug.ir_corpus_dir);

  ConformerModel<Real> model(mcfg, tcfg.seed);
  Optimizer<Real> opt;
  opt.cfg.weight_decay = tcfg.weight_decay;
  opt.states.resize(model.params().size());
  std::uint64_t steps = 0;
  int start_epoch = 0;
  double best_loss = HUGE_VAL;
  if (!resume_from.empty()) {
    auto loaded = LoadCheckpoint<Real>(resume_from);
    model = std::move(loaded.model);
    if (loaded.optim) opt.states = std::move(loaded.optim->states);
    steps = loaded.meta.steps;
    start_epoch = static_cast<int>(loaded.meta.epoch);
    best_loss = loaded.meta.best_loss;
    if (best_loss == 0.0 && steps == 0) best_loss = HUGE_VAL;
  }

  TrainResult result;
  result.best_loss = best_loss;
  const std::string best_path = out_dir + "/best.ckpt";

  for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    const ScheduledParams sched = ScheduleStep(epoch, tcfg);
    opt.cfg.lr = sched.lr;
    const int b = std::min<int>(sched.batch_size, static_cast<int>(tracks.size()));
    if (b < 2) throw DomainError("train: need at least 2 usable tracks per batch");

    Rng order_rng = Rng::Derive(tcfg.seed, "train/order", static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(tracks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(order_rng.UniformInt(0, static_cast<std::int64_t>(i) - 1))]);

    Rng crop_rng = Rng::Derive(tcfg.seed, "train/crop", static_cast<std::uint64_t>(epoch));
    Rng aug_rng = Rng::Derive(tcfg.seed, "train/augment", static_cast<std::uint64_t>(epoch));
    Rng drop_rng = Rng::Derive(tcfg.seed, "train/dropout", static_cast<std::uint64_t>(epoch));

    double epoch_loss = 0.0;
    int epoch_steps = 0;
    const std::size_t n_batches = tracks.size() / static_cast<std::size_t>(b);
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      std::vector<std::pair<const AudioBuffer*, double>> batch;
      batch.reserve(static_cast<std::size_t>(b));
      for (int k = 0; k < b; ++k) {
        const auto& track = tracks[order[bi * static_cast<std::size_t>(b) + static_cast<std::size_t>(k)]];
        const double hi = track.audio.duration() - spectral.segment_len - margin;
        const double start = crop_rng.Uniform(margin, std::max(margin, hi));
        batch.emplace_back(&track.audio, start);
      }
      const auto t0 = std::chrono::steady_clock::now();
      const double loss = TrainStep(model, opt, batch, spectral, aug, tcfg.temperature, aug_rng,
                                    drop_rng, noise_corpus.get(), ir_corpus.get());
      const auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
      ++steps;
      epoch_loss += loss;
      ++epoch_steps;
      if (metrics != nullptr) {
        char line[256];
        std::snprintf(line, sizeof(line),
                      "{\"step\":%llu,\"epoch\":%d,\"loss\":%.9g,\"lr\":%.9g,"
                      "\"batch_size\":%d,\"wall_ms\":%lld}",
                      static_cast<unsigned long long>(steps), epoch, loss, sched.lr, b,
                      static_cast<long long>(wall_ms));
        *metrics << line << "\n";
      }
    }
    if (epoch_steps == 0) throw DomainError("train: no full batch could be formed");

    CheckpointMeta meta;
    meta.seed = tcfg.seed;
    meta.steps = steps;
    meta.epoch = static_cast<std::uint32_t>(epoch + 1);
    const double mean_loss = epoch_loss / epoch_steps;
    meta.best_loss = std::min(result.best_loss, mean_loss);
    OptimizerSnapshot<Real> snap{opt.states};
    if ((epoch + 1) % tcfg.checkpoint_every == 0 || epoch + 1 == tcfg.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "/epoch_%04d.ckpt", epoch + 1);
      result.last_checkpoint = out_dir + name;
      SaveCheckpoint(result.last_checkpoint, model, spectral, meta, &snap);
    }
    if (mean_loss < result.best_loss) {
      result.best_loss = mean_loss;
      SaveCheckpoint(best_path, model, spectral, meta, &snap);
      result.best_checkpoint = best_path;
    }
    result.epochs_run = epoch + 1;
    result.steps = steps;
  }
  return result;
}

}  // namespace confp
