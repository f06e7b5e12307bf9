// tests/support/oracles.hpp

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

// Independent reference implementations used as test oracles. Everything here
// is deliberately written as plain loops, separate from the library's
// fast paths.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include "confp/audio.hpp"
#include "confp/autodiff.hpp"
#include "confp/dsp.hpp"

namespace oracle {

// --- signals -----------------------------------------------------------------

inline confp::AudioBuffer Sine(double freq_hz, double duration_s, int sample_rate,
                               double amplitude = 0.5, double phase = 0.0) {
  confp::AudioBuffer buf;
  buf.sample_rate = sample_rate;
  const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  buf.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    buf.samples[i] = static_cast<float>(
        amplitude * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / sample_rate + phase));
  return buf;
}

inline confp::AudioBuffer WhiteNoise(std::size_t n, int sample_rate, confp::Rng& rng,
                                     double amplitude = 0.5) {
  confp::AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.resize(n);
  for (auto& s : buf.samples) s = static_cast<float>(amplitude * (2.0 * rng.Uniform() - 1.0));
  return buf;
}

// --- naive spectral references -------------------------------------------------

/// Textbook O(n^2) one-sided DFT.
inline std::vector<std::complex<double>> NaiveDftOneSided(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(i) /
                         static_cast<double>(n);
      re += x[i] * std::cos(ang);
      im += x[i] * std::sin(ang);
    }
    out[k] = {re, im};
  }
  return out;
}

/// Brute-force stabilized log-mel over one segment: Hann window + naive DFT +
/// filterbank matrix-vector products, all in double.
inline std::vector<double> NaiveLogMel(const confp::AudioBuffer& buf,
                                       const confp::SpectralConfig& cfg) {
  const auto bank = confp::MelFilterbank(cfg);
  const int n_frames = (static_cast<int>(buf.samples.size()) - cfg.fft_len) / cfg.hop_len + 1;
  std::vector<double> out(static_cast<std::size_t>(n_frames) * cfg.n_mels);
  std::vector<double> frame(static_cast<std::size_t>(cfg.fft_len));
  for (int f = 0; f < n_frames; ++f) {
    for (int i = 0; i < cfg.fft_len; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.fft_len);
      frame[static_cast<std::size_t>(i)] =
          w * buf.samples[static_cast<std::size_t>(f * cfg.hop_len + i)];
    }
    const auto spec = NaiveDftOneSided(frame);
    for (int m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < spec.size(); ++k)
        acc += bank[static_cast<std::size_t>(m)][k] * std::norm(spec[k]);
      out[static_cast<std::size_t>(f) * cfg.n_mels + m] = std::log(acc + cfg.log_epsilon);
    }
  }
  return out;
}

/// Dominant frequency of a buffer via zero-padded FFT magnitude peak.
inline double DftPeakHz(const confp::AudioBuffer& buf) {
  std::size_t n = 1;
  while (n < buf.samples.size()) n <<= 1;
  n <<= 2;  // pad for finer bin spacing
  std::vector<std::complex<double>> spec(n, {0.0, 0.0});
  for (std::size_t i = 0; i < buf.samples.size(); ++i)
    spec[i] = {static_cast<double>(buf.samples[i]), 0.0};
  confp::Fft(spec);
  std::size_t best = 1;
  double best_mag = 0.0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    const double mag = std::abs(spec[k]);
    if (mag > best_mag) {
      best_mag = mag;
      best = k;
    }
  }
  return static_cast<double>(best) * buf.sample_rate / static_cast<double>(n);
}

/// O(n*m) direct convolution.
inline std::vector<double> NaiveConvolve(const std::vector<float>& x, const std::vector<float>& h,
                                         std::size_t out_len) {
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < out_len; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < h.size() && j <= i; ++j)
      if (i - j < x.size()) acc += static_cast<double>(x[i - j]) * h[j];
    out[i] = acc;
  }
  return out;
}

/// Measured SNR in dB of (mix - clean) against clean.
inline double MeasuredSnrDb(const confp::AudioBuffer& clean, const confp::AudioBuffer& mix) {
  double p_clean = 0.0, p_noise = 0.0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    const double c = clean.samples[i];
    const double n = static_cast<double>(mix.samples[i]) - c;
    p_clean += c * c;
    p_noise += n * n;
  }
  return 10.0 * std::log10(p_clean / p_noise);
}

/// log10-log10 least-squares slope of the averaged periodogram over a mid
/// band, for colored-noise spectra.
inline double PeriodogramSlope(const std::function<confp::AudioBuffer()>& gen, int n_avg,
                               std::size_t n_fft) {
  std::vector<double> psd(n_fft / 2 + 1, 0.0);
  for (int a = 0; a < n_avg; ++a) {
    const auto buf = gen();
    std::vector<std::complex<double>> spec(n_fft, {0.0, 0.0});
    for (std::size_t i = 0; i < n_fft && i < buf.samples.size(); ++i)
      spec[i] = {static_cast<double>(buf.samples[i]), 0.0};
    confp::Fft(spec);
    for (std::size_t k = 0; k <= n_fft / 2; ++k) psd[k] += std::norm(spec[k]);
  }
  // Fit over k in [8, n_fft/4] to stay clear of DC and Nyquist.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 8; k <= n_fft / 4; ++k) {
    const double x = std::log10(static_cast<double>(k));
    const double y = std::log10(psd[k] / n_avg);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// --- NT-Xent -------------------------------------------------------------------

/// Dense-loop NT-Xent: every term written out, no matrix ops, no sharing with
/// the library implementation.
inline double BruteForceNtXent(const std::vector<std::vector<double>>& z, double tau) {
  const int n = static_cast<int>(z.size());
  const int b = n / 2;
  auto sim = [&](int i, int j) {
    double dot = 0.0, ni = 0.0, nj = 0.0;
    for (std::size_t d = 0; d < z[static_cast<std::size_t>(i)].size(); ++d) {
      dot += z[static_cast<std::size_t>(i)][d] * z[static_cast<std::size_t>(j)][d];
      ni += z[static_cast<std::size_t>(i)][d] * z[static_cast<std::size_t>(i)][d];
      nj += z[static_cast<std::size_t>(j)][d] * z[static_cast<std::size_t>(j)][d];
    }
    return dot / (std::sqrt(ni) * std::sqrt(nj));
  };
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = i < b ? i + b : i - b;
    double denom = 0.0;
    for (int k = 0; k < n; ++k)
      if (k != i) denom += std::exp(sim(i, k) / tau);
    total += -std::log(std::exp(sim(i, j) / tau) / denom);
  }
  return total / n;
}

// --- gradient checking -----------------------------------------------------------

/// Central finite differences against reverse-mode gradients. `build` must be
/// a pure function of the leaf values (re-seed any rng inside).
struct GradCheck {
  using BuildFn =
      std::function<confp::ad::Var<double>(const std::vector<confp::ad::Var<double>>&)>;

  static double MaxRelError(std::vector<confp::ad::Tensor<double>> leaves, const BuildFn& build,
                            double h = 1e-5) {
    std::vector<confp::ad::Var<double>> bound;
    bound.reserve(leaves.size());
    for (auto& t : leaves) bound.push_back(confp::ad::Parameter(t, "leaf"));
    auto root = build(bound);
    confp::ad::Backward(root);

    auto eval = [&](const std::vector<confp::ad::Tensor<double>>& values) {
      std::vector<confp::ad::Var<double>> consts;
      consts.reserve(values.size());
      for (const auto& t : values) consts.push_back(confp::ad::Constant(t));
      return static_cast<double>(build(consts)->value.data[0]);
    };

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
      const auto& grad = bound[li]->Grad();
      for (std::size_t e = 0; e < leaves[li].data.size(); ++e) {
        auto plus = leaves;
        auto minus = leaves;
        plus[li].data[e] += h;
        minus[li].data[e] -= h;
        const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
        const double an = grad.data.empty() ? 0.0 : grad.data[e];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, std::abs(fd - an) / denom);
      }
    }
    return worst;
  }
};

// --- statistics ------------------------------------------------------------------

/// Regularized incomplete beta function I_x(a, b) by continued fraction.
inline double BetaIncomplete(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  auto betacf = [](double a, double b, double x) {
    const int kMaxIter = 200;
    const double kEps = 3e-14, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
      const int m2 = 2 * m;
      double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < kFpMin) d = kFpMin;
      c = 1.0 + aa / c;
      if (std::abs(c) < kFpMin) c = kFpMin;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < kFpMin) d = kFpMin;
      c = 1.0 + aa / c;
      if (std::abs(c) < kFpMin) c = kFpMin;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
  };
  const double ln_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - ln_beta);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - std::exp(b * std::log(1.0 - x) + a * std::log(x) - ln_beta) * betacf(b, a, 1.0 - x) / b;
}

/// Kolmogorov-Smirnov statistic of samples against an analytic CDF.
inline double KsStatistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

}  // namespace oracle
