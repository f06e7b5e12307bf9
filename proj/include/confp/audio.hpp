// confp/audio.hpp

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
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "confp/common.hpp"
#include "confp/io.hpp"

namespace confp {

/// Mono audio at a declared sample rate. Samples are finite and ingestion
/// normalizes PCM16 into [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 0;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

namespace detail {

inline std::uint32_t ReadLeU32(const char* p) {
  return static_cast<std::uint8_t>(p[0]) | (static_cast<std::uint8_t>(p[1]) << 8) |
         (static_cast<std::uint8_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[3])) << 24);
}

inline std::uint16_t ReadLeU16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<std::uint8_t>(p[0]) |
                                    (static_cast<std::uint8_t>(p[1]) << 8));
}

}  // namespace detail

/// Reads a RIFF/WAVE PCM16 file. Stereo is downmixed by channel averaging;
/// any other codec or bit depth is rejected.
inline AudioBuffer ReadWav(const std::string& path) {
  auto is = OpenInput(path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError(path + ": not a RIFF/WAVE file");

  int channels = 0;
  int sample_rate = 0;
  int bits = 0;
  int format = 0;
  const char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    const std::uint32_t len = detail::ReadLeU32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw FormatError(path + ": truncated chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError(path + ": fmt chunk too short");
      format = detail::ReadLeU16(bytes.data() + body);
      channels = detail::ReadLeU16(bytes.data() + body + 2);
      sample_rate = static_cast<int>(detail::ReadLeU32(bytes.data() + body + 4));
      bits = detail::ReadLeU16(bytes.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (format != 1 || bits != 16)
    throw FormatError(path + ": only PCM16 WAV is supported");
  if (channels < 1 || channels > 2)
    throw FormatError(path + ": expected mono or stereo, got " + std::to_string(channels));
  if (data == nullptr) throw FormatError(path + ": missing data chunk");
  if (sample_rate <= 0) throw FormatError(path + ": invalid sample rate");

  const std::size_t n_frames = data_len / (2 * channels);
  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const char* p = data + 2 * (i * channels + c);
      const std::int16_t s = static_cast<std::int16_t>(detail::ReadLeU16(p));
      acc += static_cast<double>(s) / 32768.0;
    }
    buf.samples[i] = static_cast<float>(acc / channels);
  }
  return buf;
}

/// Writes mono PCM16. Samples are clamped to [-1, 1] and rounded.
inline void WriteWav(const std::string& path, const AudioBuffer& buf) {
  if (buf.sample_rate <= 0) throw DomainError("WriteWav: invalid sample rate");
  auto os = OpenOutput(path);
  BinaryWriter w(os);
  const std::uint32_t data_len = static_cast<std::uint32_t>(buf.samples.size() * 2);
  w.Magic("RIFF");
  w.U32(36 + data_len);
  w.Magic("WAVE");
  w.Magic("fmt ");
  w.U32(16);
  w.U32(1u | (1u << 16));                                     // PCM, mono
  w.U32(static_cast<std::uint32_t>(buf.sample_rate));
  w.U32(static_cast<std::uint32_t>(buf.sample_rate * 2));     // byte rate
  w.U32(2u | (16u << 16));                                    // block align, bits
  w.Magic("data");
  w.U32(data_len);
  for (float s : buf.samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const std::int16_t v = static_cast<std::int16_t>(std::lround(c * 32767.0));
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
  }
  if (!os) throw IoError("failed writing " + path);
}

/// Band-limited arbitrary-ratio resampler (Kaiser-windowed sinc, per-phase
/// unity DC gain).
inline AudioBuffer Resample(const AudioBuffer& buf, int target_rate) {
  if (buf.samples.empty()) throw DomainError("Resample: empty input");
  if (buf.sample_rate <= 0 || target_rate <= 0)
    throw DomainError("Resample: sample rates must be positive");
  if (target_rate == buf.sample_rate) return buf;

  const double ratio = static_cast<double>(target_rate) / buf.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // of source Nyquist
  constexpr int kHalfTaps = 32;
  constexpr double kKaiserBeta = 10.0;

  auto bessel_i0 = [](double x) {
    double sum = 1.0, term = 1.0;
    for (int k = 1; k < 64; ++k) {
      term *= (x / (2.0 * k)) * (x / (2.0 * k));
      sum += term;
      if (term < 1e-18 * sum) break;
    }
    return sum;
  };
  const double i0_beta = bessel_i0(kKaiserBeta);

  const std::size_t n_in = buf.samples.size();
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * ratio));
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);

  const double half_width = kHalfTaps / cutoff;
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) / ratio;  // position in source
    const long k_lo = static_cast<long>(std::ceil(t - half_width));
    const long k_hi = static_cast<long>(std::floor(t + half_width));
    double acc = 0.0, wsum = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) {
      const double dx = (static_cast<double>(k) - t) * cutoff;
      const double sinc = dx == 0.0 ? 1.0 : std::sin(M_PI * dx) / (M_PI * dx);
      const double u = dx / kHalfTaps;
      if (std::abs(u) >= 1.0) continue;
      const double kaiser = bessel_i0(kKaiserBeta * std::sqrt(1.0 - u * u)) / i0_beta;
      const double wgt = sinc * kaiser;
      wsum += wgt;
      if (k >= 0 && k < static_cast<long>(n_in)) acc += wgt * buf.samples[static_cast<std::size_t>(k)];
    }
    out.samples[n] = static_cast<float>(wsum != 0.0 ? acc / wsum : 0.0);
  }
  return out;
}

/// Cuts [start, start + length) samples, zero error if out of range.
inline AudioBuffer Cut(const AudioBuffer& buf, std::size_t start_sample, std::size_t length) {
  if (start_sample + length > buf.samples.size())
    throw DomainError("Cut: window [" + std::to_string(start_sample) + ", " +
                      std::to_string(start_sample + length) + ") exceeds " +
                      std::to_string(buf.samples.size()) + " samples");
  AudioBuffer out;
  out.sample_rate = buf.sample_rate;
  out.samples.assign(buf.samples.begin() + static_cast<std::ptrdiff_t>(start_sample),
                     buf.samples.begin() + static_cast<std::ptrdiff_t>(start_sample + length));
  return out;
}

}  // namespace confp
