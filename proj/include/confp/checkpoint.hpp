// confp/checkpoint.hpp

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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "confp/common.hpp"
#include "confp/dsp.hpp"
#include "confp/encoder.hpp"
#include "confp/io.hpp"
#include "confp/optim.hpp"

namespace confp {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::uint32_t epoch = 0;
  double best_loss = 0.0;
};

template <typename Real>
struct OptimizerSnapshot {
  // Aligned with the model's parameter order.
  std::vector<AdamState<Real>> states;
};

namespace detail {

inline void WriteModelConfig(BinaryWriter& w, const ConformerConfig& c) {
  w.U32(static_cast<std::uint32_t>(c.encoder_dim));
  w.U32(static_cast<std::uint32_t>(c.n_layers));
  w.U32(static_cast<std::uint32_t>(c.n_heads));
  w.U32(static_cast<std::uint32_t>(c.conv_kernel_size));
  w.U32(static_cast<std::uint32_t>(c.embedding_dim));
  w.U32(static_cast<std::uint32_t>(c.n_mels));
  w.U32(static_cast<std::uint32_t>(c.max_frames));
  w.F64(c.dropout_rate);
  w.U32(static_cast<std::uint32_t>(c.ffn_expansion));
}

inline ConformerConfig ReadModelConfig(BinaryReader& r) {
  ConformerConfig c;
  c.encoder_dim = static_cast<int>(r.U32());
  c.n_layers = static_cast<int>(r.U32());
  c.n_heads = static_cast<int>(r.U32());
  c.conv_kernel_size = static_cast<int>(r.U32());
  c.embedding_dim = static_cast<int>(r.U32());
  c.n_mels = static_cast<int>(r.U32());
  c.max_frames = static_cast<int>(r.U32());
  c.dropout_rate = r.F64();
  c.ffn_expansion = static_cast<int>(r.U32());
  return c;
}

inline void WriteSpectralConfig(BinaryWriter& w, const SpectralConfig& c) {
  w.U32(static_cast<std::uint32_t>(c.sample_rate));
  w.F64(c.segment_len);
  w.U32(static_cast<std::uint32_t>(c.fft_len));
  w.U32(static_cast<std::uint32_t>(c.hop_len));
  w.U32(static_cast<std::uint32_t>(c.n_mels));
  w.F64(c.mel_fmin);
  w.F64(c.mel_fmax);
  w.F64(c.log_epsilon);
}

inline SpectralConfig ReadSpectralConfig(BinaryReader& r) {
  SpectralConfig c;
  c.sample_rate = static_cast<int>(r.U32());
  c.segment_len = r.F64();
  c.fft_len = static_cast<int>(r.U32());
  c.hop_len = static_cast<int>(r.U32());
  c.n_mels = static_cast<int>(r.U32());
  c.mel_fmin = r.F64();
  c.mel_fmax = r.F64();
  c.log_epsilon = r.F64();
  return c;
}

template <typename Real>
void WriteTensor(BinaryWriter& w, const std::string& name, const ad::Tensor<Real>& t) {
  w.Str(name);
  w.U32(static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) w.U32(static_cast<std::uint32_t>(d));
  if constexpr (sizeof(Real) == 4)
    w.F32Array(reinterpret_cast<const float*>(t.data.data()), t.data.size());
  else
    w.F64Array(reinterpret_cast<const double*>(t.data.data()), t.data.size());
}

template <typename Real>
std::pair<std::string, ad::Tensor<Real>> ReadTensor(BinaryReader& r) {
  std::string name = r.Str();
  const std::uint32_t rank = r.U32();
  if (rank > 4) throw FormatError("checkpoint: tensor rank out of range");
  std::vector<int> shape(rank);
  for (auto& d : shape) d = static_cast<int>(r.U32());
  ad::Tensor<Real> t(shape);
  if constexpr (sizeof(Real) == 4)
    r.F32Array(reinterpret_cast<float*>(t.data.data()), t.data.size());
  else
    r.F64Array(reinterpret_cast<double*>(t.data.data()), t.data.size());
  return {std::move(name), std::move(t)};
}

}  // namespace detail

/// Container: "CFPC" | version | dtype | model config | spectral config |
/// metadata | named tensors (parameters, then optional optimizer state).
template <typename Real>
void SaveCheckpoint(const std::string& path, const ConformerModel<Real>& model,
                    const SpectralConfig& spectral, const CheckpointMeta& meta,
                    const OptimizerSnapshot<Real>* optim = nullptr) {
  auto os = OpenOutput(path);
  BinaryWriter w(os);
  w.Magic("CFPC");
  w.U32(kCheckpointFormatVersion);
  w.U8(sizeof(Real));
  detail::WriteModelConfig(w, model.config());
  detail::WriteSpectralConfig(w, spectral);
  w.U64(meta.seed);
  w.U64(meta.steps);
  w.U32(meta.epoch);
  w.F64(meta.best_loss);
  const auto& params = model.params();
  std::uint32_t n_tensors = static_cast<std::uint32_t>(params.size());
  if (optim != nullptr) n_tensors += 2 * static_cast<std::uint32_t>(params.size());
  w.U32(n_tensors);
  for (const auto& p : params) detail::WriteTensor(w, p.name, p.value);
  if (optim != nullptr) {
    if (optim->states.size() != params.size())
      throw ShapeError("checkpoint: optimizer state count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& st = optim->states[i];
      const auto zeros = ad::Tensor<Real>::Zeros(params[i].value.shape);
      detail::WriteTensor(w, "adam.m." + params[i].name, st.m.data.empty() ? zeros : st.m);
      detail::WriteTensor(w, "adam.v." + params[i].name, st.v.data.empty() ? zeros : st.v);
    }
  }
  if (!os) throw IoError("failed writing " + path);
}

template <typename Real>
struct LoadedCheckpoint {
  ConformerModel<Real> model;
  SpectralConfig spectral;
  CheckpointMeta meta;
  std::optional<OptimizerSnapshot<Real>> optim;
};

/// Loads and validates a checkpoint: every parameter the config dictates must
/// be present with the exact shape, and nothing else.
template <typename Real>
LoadedCheckpoint<Real> LoadCheckpoint(const std::string& path) {
  auto is = OpenInput(path);
  BinaryReader r(is, path);
  r.ExpectMagic("CFPC", "checkpoint");
  const std::uint32_t version = r.U32();
  if (version != kCheckpointFormatVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint8_t dtype = r.U8();
  if (dtype != sizeof(Real))
    throw FormatError(path + ": checkpoint stores " + std::to_string(dtype * 8) +
                      "-bit floats, loader expects " + std::to_string(sizeof(Real) * 8) + "-bit");
  const ConformerConfig model_cfg = detail::ReadModelConfig(r);
  const SpectralConfig spectral = detail::ReadSpectralConfig(r);
  CheckpointMeta meta;
  meta.seed = r.U64();
  meta.steps = r.U64();
  meta.epoch = r.U32();
  meta.best_loss = r.F64();
  const std::uint32_t n_tensors = r.U32();

  LoadedCheckpoint<Real> out{ConformerModel<Real>(model_cfg, meta.seed), spectral, meta, {}};
  auto& model = out.model;
  std::map<std::string, ad::Tensor<Real>> extra;
  std::size_t params_seen = 0;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto [name, tensor] = detail::ReadTensor<Real>(r);
    if (name.rfind("adam.", 0) == 0) {
      extra.emplace(std::move(name), std::move(tensor));
      continue;
    }
    auto& dst = model.param(name);  // throws on unknown name
    if (dst.shape != tensor.shape)
      throw FormatError(path + ": shape mismatch for " + name + " (" + tensor.ShapeStr() +
                        " vs expected " + dst.ShapeStr() + ")");
    dst = std::move(tensor);
    ++params_seen;
  }
  if (params_seen != model.params().size())
    throw FormatError(path + ": checkpoint has " + std::to_string(params_seen) +
                      " parameters, config requires " + std::to_string(model.params().size()));

  if (!extra.empty()) {
    OptimizerSnapshot<Real> snap;
    const std::int64_t step = static_cast<std::int64_t>(meta.steps);
    for (const auto& p : model.params()) {
      auto m_it = extra.find("adam.m." + p.name);
      auto v_it = extra.find("adam.v." + p.name);
      if (m_it == extra.end() || v_it == extra.end())
        throw FormatError(path + ": optimizer state incomplete for " + p.name);
      AdamState<Real> st;
      st.m = std::move(m_it->second);
      st.v = std::move(v_it->second);
      st.step = step;
      snap.states.push_back(std::move(st));
    }
    out.optim = std::move(snap);
  }
  return out;
}

}  // namespace confp
