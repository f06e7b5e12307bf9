// tests/support/synth.hpp

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

// Synthetic toy corpus: sinusoid mixtures with slow amplitude envelopes plus
// noise bursts, distinct per track. Used by the end-to-end training and
// retrieval tests.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "confp/audio.hpp"
#include "confp/dataset.hpp"
#include "confp/rng.hpp"

namespace synth {

/// Piecewise-linear envelope with nodes every 0.4 - 1.2 s.
inline std::vector<float> RandomEnvelope(std::size_t n, int sample_rate, confp::Rng& rng) {
  std::vector<double> node_pos{0.0};
  std::vector<double> node_val{rng.Uniform(0.15, 1.0)};
  while (node_pos.back() < static_cast<double>(n)) {
    node_pos.push_back(node_pos.back() + rng.Uniform(0.4, 1.2) * sample_rate);
    node_val.push_back(rng.Uniform(0.05, 1.0));
  }
  std::vector<float> env(n);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (node_pos[seg + 1] < static_cast<double>(i)) ++seg;
    const double t = (static_cast<double>(i) - node_pos[seg]) / (node_pos[seg + 1] - node_pos[seg]);
    env[i] = static_cast<float>(node_val[seg] * (1.0 - t) + node_val[seg + 1] * t);
  }
  return env;
}

/// One toy clip: 4-8 enveloped partials, 2-4 noise bursts, a noise floor,
/// peak-normalized to 0.6.
inline confp::AudioBuffer Clip(confp::Rng& rng, double duration_s, int sample_rate) {
  const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  std::vector<double> acc(n, 0.0);

  const int n_partials = static_cast<int>(rng.UniformInt(4, 8));
  for (int p = 0; p < n_partials; ++p) {
    const double freq = std::exp(rng.Uniform(std::log(150.0), std::log(6500.0)));
    const double phase = rng.Uniform(0.0, 2.0 * M_PI);
    const double amp = rng.Uniform(0.2, 1.0);
    const auto env = RandomEnvelope(n, sample_rate, rng);
    for (std::size_t i = 0; i < n; ++i)
      acc[i] += amp * env[i] *
                std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sample_rate + phase);
  }

  const int n_bursts = static_cast<int>(rng.UniformInt(2, 4));
  for (int b = 0; b < n_bursts; ++b) {
    const std::size_t len =
        static_cast<std::size_t>(rng.Uniform(0.2, 0.6) * sample_rate);
    const std::size_t start =
        static_cast<std::size_t>(rng.Uniform(0.0, std::max(1.0, static_cast<double>(n - len))));
    const double amp = rng.Uniform(0.3, 0.8);
    for (std::size_t i = start; i < std::min(n, start + len); ++i) {
      const double fade = std::sin(M_PI * static_cast<double>(i - start) / len);
      acc[i] += amp * fade * (2.0 * rng.Uniform() - 1.0);
    }
  }

  for (std::size_t i = 0; i < n; ++i) acc[i] += 0.02 * (2.0 * rng.Uniform() - 1.0);

  double peak = 0.0;
  for (double v : acc) peak = std::max(peak, std::abs(v));
  const double scale = peak > 0 ? 0.6 / peak : 0.0;
  confp::AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) buf.samples[i] = static_cast<float>(acc[i] * scale);
  return buf;
}

struct Corpus {
  std::vector<confp::LoadedTrack> tracks;
  std::vector<confp::TrackEntry> manifest;  // filled when written to disk
};

inline Corpus MakeCorpus(int n_tracks, double duration_s, int sample_rate, std::uint64_t seed) {
  Corpus corpus;
  for (int i = 0; i < n_tracks; ++i) {
    confp::Rng rng = confp::Rng::Derive(seed, "synth/clip", static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof(id), "track%03d", i);
    corpus.tracks.push_back({id, Clip(rng, duration_s, sample_rate)});
  }
  return corpus;
}

/// Writes the corpus as WAVs plus a manifest file under dir.
inline Corpus WriteCorpus(const std::string& dir, int n_tracks, double duration_s, int sample_rate,
                          std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Corpus corpus = MakeCorpus(n_tracks, duration_s, sample_rate, seed);
  std::string manifest_text;
  for (const auto& t : corpus.tracks) {
    const std::string path = dir + "/" + t.track_id + ".wav";
    confp::WriteWav(path, t.audio);
    corpus.manifest.push_back({t.track_id, path});
    manifest_text += t.track_id + "\t" + path + "\n";
  }
  auto os = confp::OpenOutput(dir + "/manifest.tsv");
  os << manifest_text;
  return corpus;
}

/// Scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    namespace fs = std::filesystem;
    const auto base = fs::temp_directory_path() / ("confp_" + tag + "_XXXXXX");
    std::string templ = base.string();
    if (mkdtemp(templ.data()) == nullptr) throw confp::IoError("mkdtemp failed for " + templ);
    path_ = templ;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace synth
