// confp/dsp.hpp

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
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "confp/audio.hpp"
#include "confp/common.hpp"
#include "confp/fft.hpp"
#include "confp/io.hpp"

namespace confp {

/// Spectral front-end parameters. Defaults are the small/medium preset; the
/// large preset uses 96 mel bands.
struct SpectralConfig {
  int sample_rate = 16000;
  double segment_len = 3.0;   // seconds
  int fft_len = 1024;
  int hop_len = 128;
  int n_mels = 80;
  double mel_fmin = 0.0;
  double mel_fmax = 8000.0;   // sample_rate / 2
  double log_epsilon = 1e-8;

  int segment_samples() const {
    return static_cast<int>(std::llround(segment_len * sample_rate));
  }
  int n_bins() const { return fft_len / 2 + 1; }
  int frames_per_segment() const {
    return (segment_samples() - fft_len) / hop_len + 1;
  }

  void Validate() const {
    if (sample_rate <= 0) throw ConfigError("spectral: sample_rate must be positive");
    if (!IsPowerOfTwo(static_cast<std::size_t>(fft_len)))
      throw ConfigError("spectral: fft_len must be a power of two");
    if (hop_len <= 0 || hop_len > fft_len)
      throw ConfigError("spectral: hop_len must be in (0, fft_len]");
    if (n_mels <= 0 || n_mels >= n_bins())
      throw ConfigError("spectral: n_mels must be < fft_len/2 + 1");
    if (segment_len <= 0) throw ConfigError("spectral: segment_len must be positive");
    const double exact = segment_len * sample_rate;
    if (std::abs(exact - std::llround(exact)) > 1e-9)
      throw ConfigError("spectral: segment_len * sample_rate must be an integer sample count");
    if (segment_samples() < fft_len)
      throw ConfigError("spectral: segment shorter than one FFT frame");
    if (log_epsilon <= 0) throw ConfigError("spectral: log_epsilon must be positive");
    if (mel_fmin < 0 || mel_fmax <= mel_fmin || mel_fmax > sample_rate / 2.0 + 1e-9)
      throw ConfigError("spectral: need 0 <= mel_fmin < mel_fmax <= sample_rate/2");
  }
};

/// Stabilized log-mel energies, frames in rows. Values are finite by
/// construction (log(power + epsilon)).
struct MelSpectrogram {
  int n_frames = 0;
  int n_mels = 0;
  std::vector<float> values;  // row-major [n_frames x n_mels]
  SpectralConfig config;

  float& at(int f, int m) { return values[static_cast<std::size_t>(f) * n_mels + m]; }
  float at(int f, int m) const { return values[static_cast<std::size_t>(f) * n_mels + m]; }
};

inline std::vector<double> HannWindow(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

/// Hann-windowed one-sided STFT; frames fully inside the buffer, no padding.
inline std::vector<std::vector<std::complex<double>>> Stft(const AudioBuffer& buf,
                                                           const SpectralConfig& cfg) {
  if (buf.sample_rate != cfg.sample_rate)
    throw DomainError("Stft: buffer rate " + std::to_string(buf.sample_rate) +
                      " != config rate " + std::to_string(cfg.sample_rate));
  if (static_cast<int>(buf.samples.size()) < cfg.fft_len)
    throw DomainError("Stft: buffer shorter than fft_len (" +
                      std::to_string(buf.samples.size()) + " < " +
                      std::to_string(cfg.fft_len) + ")");
  const int n_frames =
      static_cast<int>((buf.samples.size() - cfg.fft_len) / cfg.hop_len) + 1;
  const auto window = HannWindow(cfg.fft_len);
  std::vector<std::vector<std::complex<double>>> out(static_cast<std::size_t>(n_frames));
  std::vector<double> frame(static_cast<std::size_t>(cfg.fft_len));
  for (int f = 0; f < n_frames; ++f) {
    const std::size_t start = static_cast<std::size_t>(f) * cfg.hop_len;
    for (int i = 0; i < cfg.fft_len; ++i)
      frame[static_cast<std::size_t>(i)] = window[i] * buf.samples[start + i];
    out[static_cast<std::size_t>(f)] = RealFftOneSided(frame);
  }
  return out;
}

// The mel scale used throughout this project (HTK convention):
//   m = 2595 * log10(1 + f / 700)
inline double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular mel filterbank, rows are filters over the one-sided spectrum.
/// Filter centers are equally spaced on the mel scale in [mel_fmin, mel_fmax].
inline std::vector<std::vector<double>> MelFilterbank(const SpectralConfig& cfg) {
  cfg.Validate();
  const int n_bins = cfg.n_bins();
  const double mel_lo = HzToMel(cfg.mel_fmin);
  const double mel_hi = HzToMel(cfg.mel_fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] =
        MelToHz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

  std::vector<std::vector<double>> bank(
      static_cast<std::size_t>(cfg.n_mels),
      std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_len;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    double sum = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f < center)
        w = (f - lo) / (center - lo);
      else if (f >= center && f < hi)
        w = (hi - f) / (hi - center);
      bank[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] = w;
      sum += w;
    }
    if (sum <= 0.0)
      throw ConfigError("mel filterbank: filter " + std::to_string(m) +
                        " has empty support; reduce n_mels or increase fft_len");
  }
  return bank;
}

/// log(mel . |stft|^2 + epsilon) for exactly one segment of audio.
inline MelSpectrogram LogMel(const AudioBuffer& buf, const SpectralConfig& cfg) {
  cfg.Validate();
  if (buf.sample_rate != cfg.sample_rate)
    throw DomainError("LogMel: buffer rate " + std::to_string(buf.sample_rate) +
                      " != config rate " + std::to_string(cfg.sample_rate));
  if (static_cast<int>(buf.samples.size()) != cfg.segment_samples())
    throw DomainError("LogMel: expected exactly " + std::to_string(cfg.segment_samples()) +
                      " samples, got " + std::to_string(buf.samples.size()));

  const auto spectrum = Stft(buf, cfg);
  const auto bank = MelFilterbank(cfg);
  MelSpectrogram out;
  out.config = cfg;
  out.n_frames = static_cast<int>(spectrum.size());
  out.n_mels = cfg.n_mels;
  out.values.resize(static_cast<std::size_t>(out.n_frames) * out.n_mels);

  std::vector<double> power(static_cast<std::size_t>(cfg.n_bins()));
  for (int f = 0; f < out.n_frames; ++f) {
    const auto& spec = spectrum[static_cast<std::size_t>(f)];
    for (int k = 0; k < cfg.n_bins(); ++k) power[static_cast<std::size_t>(k)] = std::norm(spec[static_cast<std::size_t>(k)]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      const auto& filter = bank[static_cast<std::size_t>(m)];
      double acc = 0.0;
      for (int k = 0; k < cfg.n_bins(); ++k) acc += filter[static_cast<std::size_t>(k)] * power[static_cast<std::size_t>(k)];
      out.at(f, m) = static_cast<float>(std::log(acc + cfg.log_epsilon));
    }
  }
  return out;
}

/// One fingerprint segment: where it starts and the audio it covers.
struct Segment {
  double start = 0.0;  // seconds
  AudioBuffer audio;
};

/// Windows of exactly segment_len starting at 0, hop, 2*hop, ...; the last
/// partial window is dropped. Arithmetic is done in samples so segment counts
/// are exact.
inline std::vector<Segment> SegmentAudio(const AudioBuffer& buf, const SpectralConfig& cfg,
                                         double hop_seconds) {
  if (hop_seconds <= 0) throw DomainError("SegmentAudio: hop must be positive");
  if (buf.sample_rate != cfg.sample_rate)
    throw DomainError("SegmentAudio: buffer rate != config rate");
  const std::int64_t seg = cfg.segment_samples();
  const std::int64_t hop = std::llround(hop_seconds * cfg.sample_rate);
  if (hop <= 0) throw DomainError("SegmentAudio: hop under one sample");
  const std::int64_t len = static_cast<std::int64_t>(buf.samples.size());
  if (len < seg)
    throw DomainError("SegmentAudio: audio has " + std::to_string(len) +
                      " samples, need at least " + std::to_string(seg));
  const std::int64_t count = (len - seg) / hop + 1;
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    Segment s;
    s.start = static_cast<double>(k * hop) / cfg.sample_rate;
    s.audio = Cut(buf, static_cast<std::size_t>(k * hop), static_cast<std::size_t>(seg));
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel container: "CFPM" | version | spectral config | dims | f32 values.

inline void SaveMel(const std::string& path, const MelSpectrogram& mel) {
  auto os = OpenOutput(path);
  BinaryWriter w(os);
  w.Magic("CFPM");
  w.U32(kMelFormatVersion);
  w.U32(static_cast<std::uint32_t>(mel.config.sample_rate));
  w.F64(mel.config.segment_len);
  w.U32(static_cast<std::uint32_t>(mel.config.fft_len));
  w.U32(static_cast<std::uint32_t>(mel.config.hop_len));
  w.U32(static_cast<std::uint32_t>(mel.config.n_mels));
  w.F64(mel.config.mel_fmin);
  w.F64(mel.config.mel_fmax);
  w.F64(mel.config.log_epsilon);
  w.U32(static_cast<std::uint32_t>(mel.n_frames));
  w.U32(static_cast<std::uint32_t>(mel.n_mels));
  w.F32Array(mel.values.data(), mel.values.size());
  if (!os) throw IoError("failed writing " + path);
}

inline MelSpectrogram LoadMel(const std::string& path) {
  auto is = OpenInput(path);
  BinaryReader r(is, path);
  r.ExpectMagic("CFPM", "mel spectrogram");
  const std::uint32_t version = r.U32();
  if (version != kMelFormatVersion)
    throw FormatError(path + ": unsupported mel format version " + std::to_string(version));
  MelSpectrogram mel;
  mel.config.sample_rate = static_cast<int>(r.U32());
  mel.config.segment_len = r.F64();
  mel.config.fft_len = static_cast<int>(r.U32());
  mel.config.hop_len = static_cast<int>(r.U32());
  mel.config.n_mels = static_cast<int>(r.U32());
  mel.config.mel_fmin = r.F64();
  mel.config.mel_fmax = r.F64();
  mel.config.log_epsilon = r.F64();
  mel.n_frames = static_cast<int>(r.U32());
  mel.n_mels = static_cast<int>(r.U32());
  if (mel.n_frames < 0 || mel.n_mels <= 0)
    throw FormatError(path + ": invalid dimensions");
  mel.values.resize(static_cast<std::size_t>(mel.n_frames) * mel.n_mels);
  r.F32Array(mel.values.data(), mel.values.size());
  return mel;
}

}  // namespace confp
