// confp/augment.hpp

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
#include <cmath>
#include <complex>
#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "confp/audio.hpp"
#include "confp/common.hpp"
#include "confp/dsp.hpp"
#include "confp/fft.hpp"
#include "confp/rng.hpp"

namespace confp {

// ---------------------------------------------------------------------------
// Waveform helpers

/// Mixing/distortion clipping policy: samples inside [-1, 1] are untouched,
/// anything beyond is mapped through tanh.
inline float SoftClip(float x) {
  return std::abs(x) <= 1.0f ? x : static_cast<float>(std::tanh(static_cast<double>(x)));
}

inline double MeanPower(const AudioBuffer& buf) {
  double acc = 0.0;
  for (float s : buf.samples) acc += static_cast<double>(s) * s;
  return buf.samples.empty() ? 0.0 : acc / static_cast<double>(buf.samples.size());
}

/// Crops or circularly tiles `noise` to exactly `length` samples, with a
/// random start position.
inline AudioBuffer FitLength(const AudioBuffer& noise, std::size_t length, Rng& rng) {
  if (noise.samples.empty()) throw DomainError("FitLength: empty noise buffer");
  AudioBuffer out;
  out.sample_rate = noise.sample_rate;
  out.samples.resize(length);
  const std::size_t n = noise.samples.size();
  const std::size_t start =
      static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(n) - 1));
  for (std::size_t i = 0; i < length; ++i) out.samples[i] = noise.samples[(start + i) % n];
  return out;
}

// ---------------------------------------------------------------------------
// Beta-distributed temporal shift

struct BetaShiftSpec {
  double alpha = 8.0;
  double beta = 2.0;
  double min_offset = 0.0;    // seconds
  double max_offset = 0.150;  // seconds

  void Validate() const {
    if (alpha <= 0 || beta <= 0) throw ConfigError("time_shift: alpha and beta must be positive");
    if (min_offset < 0 || max_offset < min_offset)
      throw ConfigError("time_shift: need 0 <= min_offset <= max_offset");
  }
};

/// Draws an offset in seconds: min + Beta(alpha, beta) * (max - min).
inline double SampleShift(const BetaShiftSpec& spec, Rng& rng) {
  if (spec.max_offset == spec.min_offset) return spec.min_offset;
  return spec.min_offset + rng.Beta(spec.alpha, spec.beta) * (spec.max_offset - spec.min_offset);
}

/// Re-cuts a segment of `segment_len` seconds at (start +- offset) from the
/// surrounding track. The caller must provide enough context for the shift.
inline AudioBuffer ApplyTimeShift(const AudioBuffer& track, double start_s, double segment_len_s,
                                  double offset_s, int direction) {
  if (direction != 1 && direction != -1)
    throw DomainError("ApplyTimeShift: direction must be +1 or -1");
  const int sr = track.sample_rate;
  const std::int64_t seg = std::llround(segment_len_s * sr);
  const std::int64_t shifted =
      std::llround(start_s * sr) + direction * std::llround(offset_s * sr);
  if (shifted < 0 || shifted + seg > static_cast<std::int64_t>(track.samples.size()))
    throw DomainError("ApplyTimeShift: insufficient context for a " +
                      std::to_string(offset_s) + " s shift at " + std::to_string(start_s) + " s");
  return Cut(track, static_cast<std::size_t>(shifted), static_cast<std::size_t>(seg));
}

// ---------------------------------------------------------------------------
// Noise

/// Mixes noise into clean at an exact SNR (dB). An infinite snr_db disables
/// the noise entirely.
inline AudioBuffer AddNoiseAtSnr(const AudioBuffer& clean, const AudioBuffer& noise,
                                 double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return clean;
  if (clean.samples.size() != noise.samples.size())
    throw DomainError("AddNoiseAtSnr: length mismatch (" + std::to_string(clean.samples.size()) +
                      " vs " + std::to_string(noise.samples.size()) + ")");
  const double p_clean = MeanPower(clean);
  if (p_clean <= 0.0) throw DomainError("AddNoiseAtSnr: silent clean segment, SNR undefined");
  const double p_noise = MeanPower(noise);
  if (p_noise <= 0.0) throw DomainError("AddNoiseAtSnr: silent noise buffer");
  const double scale = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  AudioBuffer out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(clean.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = SoftClip(static_cast<float>(clean.samples[i] + scale * noise.samples[i]));
  return out;
}

/// Noise with power spectral density proportional to 1/f^decay_exponent
/// (0 = white, 1 = pink, 2 = brown), unit RMS.
inline AudioBuffer ColoredNoise(std::size_t length, double decay_exponent, int sample_rate,
                                Rng& rng) {
  if (length == 0) throw DomainError("ColoredNoise: zero length");
  std::size_t n = 1;
  while (n < length) n <<= 1;
  std::vector<std::complex<double>> spec(n, {0.0, 0.0});
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double amp = std::pow(static_cast<double>(k), -decay_exponent / 2.0);
    if (k == n / 2) {
      spec[k] = {rng.Normal() * amp, 0.0};
    } else {
      spec[k] = {rng.Normal() * amp, rng.Normal() * amp};
      spec[n - k] = std::conj(spec[k]);
    }
  }
  Fft(spec, /*inverse=*/true);
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.resize(length);
  double rms = 0.0;
  for (std::size_t i = 0; i < length; ++i) rms += spec[i].real() * spec[i].real();
  rms = std::sqrt(rms / static_cast<double>(length));
  const double inv = rms > 0 ? 1.0 / rms : 0.0;
  for (std::size_t i = 0; i < length; ++i)
    out.samples[i] = static_cast<float>(spec[i].real() * inv);
  return out;
}

// ---------------------------------------------------------------------------
// Reverb

/// Full linear convolution truncated to out_len (FFT overlap-free, one shot).
inline std::vector<double> Convolve(const std::vector<float>& x, const std::vector<float>& h,
                                    std::size_t out_len) {
  if (h.empty()) throw DomainError("Convolve: empty impulse response");
  std::size_t n = 1;
  while (n < x.size() + h.size()) n <<= 1;
  std::vector<std::complex<double>> fx(n), fh(n);
  for (std::size_t i = 0; i < x.size(); ++i) fx[i] = {static_cast<double>(x[i]), 0.0};
  for (std::size_t i = 0; i < h.size(); ++i) fh[i] = {static_cast<double>(h[i]), 0.0};
  Fft(fx);
  Fft(fh);
  for (std::size_t i = 0; i < n; ++i) fx[i] *= fh[i];
  Fft(fx, /*inverse=*/true);
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < out_len && i < n; ++i) out[i] = fx[i].real();
  return out;
}

/// Convolves with an impulse response, truncates to the input length and
/// rescales so the output peak matches the input peak.
inline AudioBuffer ApplyReverb(const AudioBuffer& buf, const AudioBuffer& ir) {
  if (ir.samples.empty()) throw DomainError("ApplyReverb: empty impulse response");
  const auto wet = Convolve(buf.samples, ir.samples, buf.samples.size());
  double in_peak = 0.0, out_peak = 0.0;
  for (float s : buf.samples) in_peak = std::max(in_peak, std::abs(static_cast<double>(s)));
  for (double s : wet) out_peak = std::max(out_peak, std::abs(s));
  const double scale = out_peak > 0.0 ? in_peak / out_peak : 0.0;
  AudioBuffer out;
  out.sample_rate = buf.sample_rate;
  out.samples.resize(buf.samples.size());
  for (std::size_t i = 0; i < wet.size(); ++i)
    out.samples[i] = static_cast<float>(wet[i] * scale);
  return out;
}

// ---------------------------------------------------------------------------
// Phase vocoder: time stretch and pitch shift

namespace detail {

inline double PrincArg(double phase) {
  return phase - 2.0 * M_PI * std::round(phase / (2.0 * M_PI));
}

}  // namespace detail

/// Pitch-preserving time stretch. Output duration is the input duration
/// divided by `rate` (rate 0.7 slows down, 1.3 speeds up), exact to within
/// one synthesis hop.
inline AudioBuffer TimeStretch(const AudioBuffer& buf, double rate) {
  if (rate < 0.5 || rate > 2.0)
    throw DomainError("TimeStretch: rate " + std::to_string(rate) + " outside [0.5, 2.0]");
  if (buf.samples.size() < 64) throw DomainError("TimeStretch: input too short");

  std::size_t fft_len = 2048;
  while (fft_len > buf.samples.size() / 2) fft_len >>= 1;  // degrade for short inputs
  const std::size_t syn_hop = fft_len / 4;
  const std::size_t ana_hop =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(syn_hop * rate)));
  const std::size_t n_in = buf.samples.size();
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * syn_hop / ana_hop));
  const std::size_t n_bins = fft_len / 2 + 1;

  // The signal is framed with a leading pad of one full window so every real
  // sample gets complete overlap coverage.
  const std::size_t pad = fft_len;
  const std::size_t n_frames = (pad + n_in) / ana_hop + 2;
  const auto window = HannWindow(static_cast<int>(fft_len));

  auto sample_at = [&](std::int64_t i) -> double {
    const std::int64_t j = i - static_cast<std::int64_t>(pad);
    return (j >= 0 && j < static_cast<std::int64_t>(n_in)) ? buf.samples[static_cast<std::size_t>(j)] : 0.0;
  };

  std::vector<double> out_acc(n_frames * syn_hop + fft_len, 0.0);
  std::vector<double> norm_acc(out_acc.size(), 0.0);
  std::vector<double> prev_phase(n_bins, 0.0), syn_phase(n_bins, 0.0);
  std::vector<std::complex<double>> frame(fft_len);

  for (std::size_t m = 0; m < n_frames; ++m) {
    const std::int64_t ana_pos = static_cast<std::int64_t>(m * ana_hop);
    for (std::size_t i = 0; i < fft_len; ++i)
      frame[i] = {window[i] * sample_at(ana_pos + static_cast<std::int64_t>(i)), 0.0};
    Fft(frame);

    for (std::size_t k = 0; k < n_bins; ++k) {
      const double mag = std::abs(frame[k]);
      const double phase = std::arg(frame[k]);
      const double omega = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(fft_len);
      if (m == 0) {
        syn_phase[k] = phase;
      } else {
        const double expected = omega * static_cast<double>(ana_hop);
        const double deviation = detail::PrincArg(phase - prev_phase[k] - expected);
        const double per_sample = omega + deviation / static_cast<double>(ana_hop);
        syn_phase[k] += per_sample * static_cast<double>(syn_hop);
      }
      prev_phase[k] = phase;
      frame[k] = std::polar(mag, syn_phase[k]);
    }
    for (std::size_t k = n_bins; k < fft_len; ++k) frame[k] = std::conj(frame[fft_len - k]);
    Fft(frame, /*inverse=*/true);

    const std::size_t syn_pos = m * syn_hop;
    for (std::size_t i = 0; i < fft_len; ++i) {
      out_acc[syn_pos + i] += window[i] * frame[i].real();
      norm_acc[syn_pos + i] += window[i] * window[i];
    }
  }

  const std::size_t out_offset = static_cast<std::size_t>(
      std::llround(static_cast<double>(pad) * syn_hop / ana_hop));
  AudioBuffer out;
  out.sample_rate = buf.sample_rate;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const std::size_t j = out_offset + i;
    const double v = j < out_acc.size() && norm_acc[j] > 1e-9 ? out_acc[j] / norm_acc[j] : 0.0;
    out.samples[i] = static_cast<float>(v);
  }
  return out;
}

/// Pitch shift by semitones at constant duration: phase-vocoder stretch
/// followed by playback-rate resampling. Output length equals input length
/// exactly.
inline AudioBuffer PitchShift(const AudioBuffer& buf, double semitones, double max_semitones = 12.0) {
  if (std::abs(semitones) > max_semitones)
    throw DomainError("PitchShift: " + std::to_string(semitones) + " semitones outside +-" +
                      std::to_string(max_semitones));
  const double factor = std::pow(2.0, semitones / 12.0);
  AudioBuffer stretched = TimeStretch(buf, 1.0 / factor);
  AudioBuffer shifted = Resample(stretched, static_cast<int>(std::llround(buf.sample_rate / factor)));
  shifted.sample_rate = buf.sample_rate;
  shifted.samples.resize(buf.samples.size(), 0.0f);  // enforce exact length
  return shifted;
}

// ---------------------------------------------------------------------------
// Polarity and distortion

inline AudioBuffer PolarityInvert(const AudioBuffer& buf) {
  AudioBuffer out = buf;
  for (auto& s : out.samples) s = -s;
  return out;
}

/// tanh(drive * x) / drive: unity small-signal gain, saturating toward
/// 1/drive. For in-range audio (|x| <= 1) the output stays within (-1, 1).
inline AudioBuffer TanhDistort(const AudioBuffer& buf, double drive) {
  if (drive <= 0) throw DomainError("TanhDistort: drive must be positive");
  AudioBuffer out = buf;
  for (auto& s : out.samples)
    s = static_cast<float>(std::tanh(drive * static_cast<double>(s)) / drive);
  return out;
}

// ---------------------------------------------------------------------------
// SpecAugment

struct SpecAugmentParams {
  int n_freq_masks = 2;
  int max_freq_width = 8;
  int n_time_masks = 2;
  int max_time_width = 24;
};

/// Masks random frequency bands and time spans with the spectrogram mean.
inline MelSpectrogram SpecAugment(const MelSpectrogram& spec, const SpecAugmentParams& params,
                                  Rng& rng) {
  if (params.max_freq_width > spec.n_mels || params.max_time_width > spec.n_frames)
    throw DomainError("SpecAugment: mask widths exceed spectrogram dimensions");
  MelSpectrogram out = spec;
  double mean = 0.0;
  for (float v : spec.values) mean += v;
  mean /= static_cast<double>(spec.values.size());
  const float fill = static_cast<float>(mean);

  for (int i = 0; i < params.n_freq_masks; ++i) {
    const int w = static_cast<int>(rng.UniformInt(0, params.max_freq_width));
    if (w == 0) continue;
    const int start = static_cast<int>(rng.UniformInt(0, spec.n_mels - w));
    for (int f = 0; f < spec.n_frames; ++f)
      for (int m = start; m < start + w; ++m) out.at(f, m) = fill;
  }
  for (int i = 0; i < params.n_time_masks; ++i) {
    const int w = static_cast<int>(rng.UniformInt(0, params.max_time_width));
    if (w == 0) continue;
    const int start = static_cast<int>(rng.UniformInt(0, spec.n_frames - w));
    for (int f = start; f < start + w; ++f)
      for (int m = 0; m < spec.n_mels; ++m) out.at(f, m) = fill;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpora: directories of WAV files, enumerated in sorted order.

class WavCorpus {
 public:
  explicit WavCorpus(const std::string& dir) : dir_(dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("corpus directory not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        paths_.push_back(entry.path().string());
    }
    std::sort(paths_.begin(), paths_.end());
    if (paths_.empty()) throw IoError("corpus directory has no .wav files: " + dir);
  }

  std::size_t size() const { return paths_.size(); }
  const std::string& path(std::size_t i) const { return paths_.at(i); }

  /// Loads entry i resampled to target_rate (cached).
  AudioBuffer Load(std::size_t i, int target_rate) const {
    const std::string key = paths_.at(i) + "@" + std::to_string(target_rate);
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    AudioBuffer buf = Resample(ReadWav(paths_.at(i)), target_rate);
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(key, buf);
    return buf;
  }

  /// Random entry cropped/tiled to `length` samples.
  AudioBuffer Sample(Rng& rng, int target_rate, std::size_t length) const {
    const std::size_t i =
        static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(paths_.size()) - 1));
    return FitLength(Load(i, target_rate), length, rng);
  }

 private:
  std::string dir_;
  std::vector<std::string> paths_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, AudioBuffer> cache_;
};

// ---------------------------------------------------------------------------
// Full augmentation pipeline

struct AugmentationSpec {
  // Waveform augmentations; each enabled one fires independently with
  // apply_prob, except the temporal shift which always fires.
  bool background_noise = false;
  double bg_snr_min_db = 0.0, bg_snr_max_db = 15.0;
  std::string bg_corpus_dir;

  bool colored_noise = true;
  double color_snr_min_db = 5.0, color_snr_max_db = 20.0;
  double decay_min = 0.0, decay_max = 2.0;

  bool reverb = false;
  std::string ir_corpus_dir;

  bool pitch_shift = false;
  double max_semitones = 2.0;

  bool polarity_inversion = true;
  double polarity_prob = 0.5;

  bool tanh_distortion = true;
  double drive_min = 0.5, drive_max = 2.0;

  bool time_stretch = false;
  double stretch_min = 0.9, stretch_max = 1.1;

  BetaShiftSpec time_shift;

  bool spec_augment = true;
  SpecAugmentParams sa;

  double apply_prob = 0.5;

  void Validate() const {
    time_shift.Validate();
    if (bg_snr_max_db < bg_snr_min_db || color_snr_max_db < color_snr_min_db)
      throw ConfigError("augment: SNR ranges must be non-empty");
    if (decay_max < decay_min) throw ConfigError("augment: decay range must be non-empty");
    if (max_semitones < 0 || max_semitones > 12)
      throw ConfigError("augment: max_semitones must be in [0, 12]");
    if (polarity_prob < 0 || polarity_prob > 1)
      throw ConfigError("augment: polarity_prob must be in [0, 1]");
    if (drive_max < drive_min || drive_min <= 0)
      throw ConfigError("augment: drive range must be positive and non-empty");
    if (stretch_min < 0.5 || stretch_max > 2.0 || stretch_max < stretch_min)
      throw ConfigError("augment: stretch range must lie in [0.5, 2.0]");
    if (apply_prob < 0 || apply_prob > 1)
      throw ConfigError("augment: apply_prob must be in [0, 1]");
    if (background_noise && bg_corpus_dir.empty())
      throw ConfigError("augment: background_noise enabled without a corpus directory");
    if (reverb && ir_corpus_dir.empty())
      throw ConfigError("augment: reverb enabled without an impulse-response corpus");
  }
};

struct ReplicaPair {
  MelSpectrogram original;
  MelSpectrogram replica;
};

/// Applies the waveform chain to a segment cut at `start_s` from `track`:
/// shift, stretch, pitch, reverb, noises, polarity, distortion. Returns a
/// buffer of exactly one segment length.
inline AudioBuffer AugmentWaveform(const AudioBuffer& track, double start_s,
                                   const SpectralConfig& cfg, const AugmentationSpec& spec,
                                   Rng& rng, const WavCorpus* noise_corpus = nullptr,
                                   const WavCorpus* ir_corpus = nullptr) {
  spec.Validate();
  const std::int64_t seg = cfg.segment_samples();
  const std::int64_t track_len = static_cast<std::int64_t>(track.samples.size());

  // Temporal shift always fires; flip direction if one side lacks context.
  const double offset = SampleShift(spec.time_shift, rng);
  int direction = rng.Bernoulli(0.5) ? 1 : -1;
  std::int64_t shifted = std::llround(start_s * cfg.sample_rate) +
                         direction * std::llround(offset * cfg.sample_rate);
  if (shifted < 0 || shifted + seg > track_len) {
    direction = -direction;
    shifted = std::llround(start_s * cfg.sample_rate) +
              direction * std::llround(offset * cfg.sample_rate);
  }
  if (shifted < 0 || shifted + seg > track_len)
    throw DomainError("AugmentWaveform: track context too small for a " +
                      std::to_string(offset) + " s shift");

  AudioBuffer out;
  if (spec.time_stretch && rng.Bernoulli(spec.apply_prob)) {
    const double rate = rng.Uniform(spec.stretch_min, spec.stretch_max);
    // Cut enough source material that the stretched result covers a segment.
    std::int64_t need = std::llround(static_cast<double>(seg) * rate) + 4096;
    std::int64_t cut_start = shifted;
    if (cut_start + need > track_len) cut_start = std::max<std::int64_t>(0, track_len - need);
    need = std::min(need, track_len - cut_start);
    AudioBuffer stretched = TimeStretch(
        Cut(track, static_cast<std::size_t>(cut_start), static_cast<std::size_t>(need)), rate);
    stretched.samples.resize(static_cast<std::size_t>(seg), 0.0f);
    out = std::move(stretched);
  } else {
    out = Cut(track, static_cast<std::size_t>(shifted), static_cast<std::size_t>(seg));
  }

  if (spec.pitch_shift && rng.Bernoulli(spec.apply_prob)) {
    const double st = rng.Uniform(-spec.max_semitones, spec.max_semitones);
    out = PitchShift(out, st, spec.max_semitones);
  }
  if (spec.reverb && rng.Bernoulli(spec.apply_prob)) {
    if (ir_corpus == nullptr) throw DomainError("AugmentWaveform: reverb needs an IR corpus");
    const std::size_t i = static_cast<std::size_t>(
        rng.UniformInt(0, static_cast<std::int64_t>(ir_corpus->size()) - 1));
    out = ApplyReverb(out, ir_corpus->Load(i, cfg.sample_rate));
  }
  if (spec.colored_noise && rng.Bernoulli(spec.apply_prob)) {
    const double decay = rng.Uniform(spec.decay_min, spec.decay_max);
    const double snr = rng.Uniform(spec.color_snr_min_db, spec.color_snr_max_db);
    const AudioBuffer noise =
        ColoredNoise(out.samples.size(), decay, cfg.sample_rate, rng);
    out = AddNoiseAtSnr(out, noise, snr);
  }
  if (spec.background_noise && rng.Bernoulli(spec.apply_prob)) {
    if (noise_corpus == nullptr)
      throw DomainError("AugmentWaveform: background_noise needs a noise corpus");
    const double snr = rng.Uniform(spec.bg_snr_min_db, spec.bg_snr_max_db);
    out = AddNoiseAtSnr(out, noise_corpus->Sample(rng, cfg.sample_rate, out.samples.size()), snr);
  }
  if (spec.polarity_inversion && rng.Bernoulli(spec.polarity_prob)) out = PolarityInvert(out);
  if (spec.tanh_distortion && rng.Bernoulli(spec.apply_prob)) {
    const double drive = rng.Uniform(spec.drive_min, spec.drive_max);
    out = TanhDistort(out, drive);
  }
  return out;
}

/// Produces the (original, replica) positive pair for one training sample:
/// the untouched featurized segment and its augmented, featurized,
/// SpecAugment-masked counterpart.
inline ReplicaPair MakeReplica(const AudioBuffer& track, double start_s,
                               const SpectralConfig& cfg, const AugmentationSpec& spec, Rng& rng,
                               const WavCorpus* noise_corpus = nullptr,
                               const WavCorpus* ir_corpus = nullptr) {
  const std::int64_t seg = cfg.segment_samples();
  const AudioBuffer original_cut =
      Cut(track, static_cast<std::size_t>(std::llround(start_s * cfg.sample_rate)),
          static_cast<std::size_t>(seg));
  AudioBuffer replica_wave =
      AugmentWaveform(track, start_s, cfg, spec, rng, noise_corpus, ir_corpus);

  ReplicaPair pair;
  pair.original = LogMel(original_cut, cfg);
  pair.replica = LogMel(replica_wave, cfg);
  if (spec.spec_augment && rng.Bernoulli(spec.apply_prob))
    pair.replica = SpecAugment(pair.replica, spec.sa, rng);
  return pair;
}

}  // namespace confp
