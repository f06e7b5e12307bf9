// confp/eval.hpp

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
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "confp/augment.hpp"
#include "confp/common.hpp"
#include "confp/dataset.hpp"
#include "confp/dsp.hpp"
#include "confp/encoder.hpp"
#include "confp/index.hpp"
#include "confp/rng.hpp"

namespace confp {

// ---------------------------------------------------------------------------
// Protocol

enum class DistortionKind {
  kNone,
  kTimeShift,        // parameter: percent of the shift unit (300 ms)
  kBackgroundNoise,  // parameter: SNR dB
  kColoredNoise,     // parameter: SNR dB
  kReverb,           // parameter unused
  kTimeStretch,      // parameter: stretch rate
};

inline const char* DistortionKindName(DistortionKind k) {
  switch (k) {
    case DistortionKind::kNone: return "none";
    case DistortionKind::kTimeShift: return "time_shift";
    case DistortionKind::kBackgroundNoise: return "background_noise";
    case DistortionKind::kColoredNoise: return "colored_noise";
    case DistortionKind::kReverb: return "reverb";
    case DistortionKind::kTimeStretch: return "time_stretch";
  }
  return "?";
}

inline DistortionKind DistortionKindFromName(const std::string& name) {
  for (DistortionKind k :
       {DistortionKind::kNone, DistortionKind::kTimeShift, DistortionKind::kBackgroundNoise,
        DistortionKind::kColoredNoise, DistortionKind::kReverb, DistortionKind::kTimeStretch})
    if (name == DistortionKindName(k)) return k;
  throw FormatError("unknown distortion kind: " + name);
}

struct DistortionCase {
  DistortionKind kind = DistortionKind::kNone;
  double parameter = 0.0;

  void Validate() const {
    switch (kind) {
      case DistortionKind::kNone:
      case DistortionKind::kReverb:
        break;
      case DistortionKind::kTimeShift:
        if (parameter < 0 || parameter > 100)
          throw ConfigError("eval: time_shift percentage must be in [0, 100]");
        break;
      case DistortionKind::kBackgroundNoise:
      case DistortionKind::kColoredNoise:
        if (parameter < -20 || parameter > 60)
          throw ConfigError("eval: SNR must be in [-20, 60] dB");
        break;
      case DistortionKind::kTimeStretch:
        if (parameter < 0.5 || parameter > 2.0)
          throw ConfigError("eval: stretch rate must be in [0.5, 2.0]");
        break;
    }
  }

  std::string Label() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s:%.9g", DistortionKindName(kind), parameter);
    return buf;
  }
};

struct EvalProtocol {
  int queries_per_track = 5;
  int runs = 5;
  std::vector<int> k_values = {1, 5};
  double shift_unit = 0.3;  // seconds; time-shift parameters are a percent of this
  std::vector<DistortionCase> cases = {{DistortionKind::kNone, 0.0}};
  bool missing_track_is_miss = false;  // query track absent from the db: error or miss
  int shift_series_probes = 0;         // tracks probed for the similarity-vs-shift series
  double shift_series_max_ms = 300.0;
  double shift_series_step_ms = 10.0;

  void Validate() const {
    if (queries_per_track < 1) throw ConfigError("eval: queries_per_track must be >= 1");
    if (runs < 1) throw ConfigError("eval: runs must be >= 1");
    if (k_values.empty()) throw ConfigError("eval: at least one k value required");
    for (int k : k_values)
      if (k < 1) throw ConfigError("eval: k values must be >= 1");
    if (shift_unit <= 0) throw ConfigError("eval: shift_unit must be positive");
    if (cases.empty()) throw ConfigError("eval: empty distortion suite");
    for (const auto& c : cases) c.Validate();
    if (shift_series_probes < 0) throw ConfigError("eval: shift_series_probes must be >= 0");
    if (shift_series_step_ms <= 0 || shift_series_max_ms < 0)
      throw ConfigError("eval: invalid shift series grid");
  }
};

// ---------------------------------------------------------------------------
// Excerpt selection

/// n excerpt starts linearly spaced over [0, duration - segment_len], both
/// endpoints included; n = 1 picks the centered start. Start positions are
/// computed in samples.
inline std::vector<Segment> SelectExcerpts(const AudioBuffer& track, int n,
                                           const SpectralConfig& cfg) {
  if (n < 1) throw DomainError("select_excerpts: n must be >= 1");
  const std::int64_t seg = cfg.segment_samples();
  const std::int64_t len = static_cast<std::int64_t>(track.samples.size());
  if (len < seg)
    throw DomainError("select_excerpts: track shorter than one segment (" + std::to_string(len) +
                      " < " + std::to_string(seg) + " samples)");
  const std::int64_t span = len - seg;
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::int64_t start =
        n == 1 ? span / 2
               : std::llround(static_cast<double>(span) * i / (n - 1));
    Segment s;
    s.start = static_cast<double>(start) / cfg.sample_rate;
    s.audio = Cut(track, static_cast<std::size_t>(start), static_cast<std::size_t>(seg));
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct CaseRunResult {
  DistortionKind kind = DistortionKind::kNone;
  double parameter = 0.0;
  int run = 0;
  std::uint64_t seed = 0;
  int n_queries = 0;
  int skipped_tracks = 0;
  std::map<int, int> track_hits;    // k -> queries whose track ranked in top-k tracks
  std::map<int, int> segment_hits;  // k -> queries whose track appeared in top-k segments

  bool operator==(const CaseRunResult&) const = default;
};

struct ShiftSeriesPoint {
  double delta_ms = 0.0;
  double sim_original = 0.0;  // mean similarity of shifted cut to the original segment
  double sim_next = 0.0;      // mean similarity to the segment one fingerprint hop later
};

struct EvalReport {
  std::vector<int> k_values;
  std::vector<CaseRunResult> rows;
  std::vector<ShiftSeriesPoint> shift_series;

  /// Mean hit rate over runs for one case; track or segment granularity.
  double MeanRate(DistortionKind kind, double parameter, int k, bool track_granular) const {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.kind != kind || r.parameter != parameter) continue;
      const auto& hits = track_granular ? r.track_hits : r.segment_hits;
      auto it = hits.find(k);
      if (it == hits.end() || r.n_queries == 0) continue;
      acc += static_cast<double>(it->second) / r.n_queries;
      ++n;
    }
    if (n == 0) throw DomainError("eval report: no rows for requested case");
    return acc / n;
  }
};

// ---------------------------------------------------------------------------
// Query evaluation against the full record set

struct QueryOutcome {
  std::map<int, bool> track_hit;
  std::map<int, bool> segment_hit;
};

/// Ranks every record for the query embedding and reports, per k, whether the
/// true track appears among the top-k segments and among the top-k tracks.
inline QueryOutcome EvaluateQuery(const FingerprintIndex& index, const Embedding& query,
                                  const std::string& truth, const std::vector<int>& k_values) {
  const auto& records = index.records();
  std::vector<std::pair<double, std::size_t>> scored(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    scored[i] = {Dot(query, records[i].embedding), i};
  std::sort(scored.begin(), scored.end(),
            [&](const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
              if (a.first != b.first) return a.first > b.first;
              const auto& ra = records[a.second];
              const auto& rb = records[b.second];
              if (ra.track_id != rb.track_id) return ra.track_id < rb.track_id;
              return ra.offset < rb.offset;
            });

  QueryOutcome out;
  for (int k : k_values) {
    bool seg_hit = false;
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    for (std::size_t i = 0; i < kk; ++i)
      if (records[scored[i].second].track_id == truth) {
        seg_hit = true;
        break;
      }
    out.segment_hit[k] = seg_hit;

    bool track_hit = false;
    std::unordered_set<std::string> seen;
    for (const auto& [score, idx] : scored) {
      const auto& id = records[idx].track_id;
      if (seen.insert(id).second) {
        if (id == truth) {
          track_hit = true;
          break;
        }
        if (seen.size() >= static_cast<std::size_t>(k)) break;
      }
    }
    out.track_hit[k] = track_hit;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distortions

namespace detail {

/// Re-cuts the query excerpt shifted by +-offset; the direction alternates by
/// query index and flips when the track boundary is too close.
inline AudioBuffer ShiftedExcerpt(const AudioBuffer& track, std::int64_t start,
                                  std::int64_t seg_samples, double offset_s, int query_index) {
  const std::int64_t offset = std::llround(offset_s * track.sample_rate);
  int dir = query_index % 2 == 0 ? 1 : -1;
  std::int64_t s = start + dir * offset;
  if (s < 0 || s + seg_samples > static_cast<std::int64_t>(track.samples.size())) {
    dir = -dir;
    s = start + dir * offset;
  }
  s = std::clamp<std::int64_t>(s, 0,
                               static_cast<std::int64_t>(track.samples.size()) - seg_samples);
  return Cut(track, static_cast<std::size_t>(s), static_cast<std::size_t>(seg_samples));
}

}  // namespace detail

struct EvalCorpora {
  const WavCorpus* noise = nullptr;
  const WavCorpus* ir = nullptr;
};

/// Runs the full protocol: for every distortion case and run, queries_per_track
/// linearly spaced excerpts per track, distorted, embedded and matched against
/// the index. Hits are counted at both track and segment granularity.
inline EvalReport RunEval(const FingerprintIndex& index, const Embedder& embedder,
                          const std::vector<LoadedTrack>& tracks, const SpectralConfig& spectral,
                          const EvalProtocol& protocol, std::uint64_t seed,
                          const EvalCorpora& corpora = {}) {
  protocol.Validate();
  spectral.Validate();
  if (index.size() == 0) throw DomainError("run_eval: empty index");

  std::unordered_set<std::string> indexed_tracks;
  for (const auto& r : index.records()) indexed_tracks.insert(r.track_id);
  for (const auto& t : tracks) {
    if (indexed_tracks.count(t.track_id)) continue;
    if (!protocol.missing_track_is_miss)
      throw DomainError("run_eval: query track '" + t.track_id +
                        "' is not in the database (set missing_track_is_miss to count as miss)");
  }
  for (const auto& c : protocol.cases) {
    if (c.kind == DistortionKind::kBackgroundNoise && corpora.noise == nullptr)
      throw DomainError("run_eval: background_noise case needs a noise corpus");
    if (c.kind == DistortionKind::kReverb && corpora.ir == nullptr)
      throw DomainError("run_eval: reverb case needs an impulse-response corpus");
  }

  const std::int64_t seg = spectral.segment_samples();
  EvalReport report;
  report.k_values = protocol.k_values;

  for (std::size_t ci = 0; ci < protocol.cases.size(); ++ci) {
    const auto& dcase = protocol.cases[ci];

    // Stretch is deterministic per case: pre-stretch each track once.
    std::vector<const AudioBuffer*> case_audio(tracks.size());
    std::vector<AudioBuffer> stretched;
    if (dcase.kind == DistortionKind::kTimeStretch) {
      stretched.reserve(tracks.size());
      for (const auto& t : tracks) {
        stretched.push_back(TimeStretch(t.audio, dcase.parameter));
        case_audio[stretched.size() - 1] = &stretched.back();
      }
    } else {
      for (std::size_t i = 0; i < tracks.size(); ++i) case_audio[i] = &tracks[i].audio;
    }

    for (int run = 0; run < protocol.runs; ++run) {
      CaseRunResult row;
      row.kind = dcase.kind;
      row.parameter = dcase.parameter;
      row.run = run;
      row.seed = Rng::Derive(seed, "eval/" + dcase.Label(), static_cast<std::uint64_t>(run)).NextU64();
      for (int k : protocol.k_values) {
        row.track_hits[k] = 0;
        row.segment_hits[k] = 0;
      }

      for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
        const AudioBuffer& audio = *case_audio[ti];
        if (static_cast<std::int64_t>(audio.samples.size()) < seg) {
          ++row.skipped_tracks;
          continue;
        }
        const bool in_db = indexed_tracks.count(tracks[ti].track_id) > 0;
        const auto excerpts = SelectExcerpts(audio, protocol.queries_per_track, spectral);
        for (int qi = 0; qi < static_cast<int>(excerpts.size()); ++qi) {
          ++row.n_queries;
          if (!in_db) continue;  // counted as a miss for every k

          Rng qrng = Rng::Derive(seed, "eval/query/" + dcase.Label(),
                                 (static_cast<std::uint64_t>(run) * 1000003 + ti) * 1009 +
                                     static_cast<std::uint64_t>(qi));
          AudioBuffer query;
          switch (dcase.kind) {
            case DistortionKind::kNone:
            case DistortionKind::kTimeStretch:
              query = excerpts[static_cast<std::size_t>(qi)].audio;
              break;
            case DistortionKind::kTimeShift: {
              const double offset = dcase.parameter / 100.0 * protocol.shift_unit;
              query = detail::ShiftedExcerpt(
                  audio, std::llround(excerpts[static_cast<std::size_t>(qi)].start * spectral.sample_rate),
                  seg, offset, qi);
              break;
            }
            case DistortionKind::kBackgroundNoise: {
              const auto noise = corpora.noise->Sample(qrng, spectral.sample_rate,
                                                       static_cast<std::size_t>(seg));
              query = AddNoiseAtSnr(excerpts[static_cast<std::size_t>(qi)].audio, noise,
                                    dcase.parameter);
              break;
            }
            case DistortionKind::kColoredNoise: {
              const double decay = qrng.Uniform(0.0, 2.0);
              const auto noise = ColoredNoise(static_cast<std::size_t>(seg), decay,
                                              spectral.sample_rate, qrng);
              query = AddNoiseAtSnr(excerpts[static_cast<std::size_t>(qi)].audio, noise,
                                    dcase.parameter);
              break;
            }
            case DistortionKind::kReverb: {
              const std::size_t ii = static_cast<std::size_t>(
                  qrng.UniformInt(0, static_cast<std::int64_t>(corpora.ir->size()) - 1));
              query = ApplyReverb(excerpts[static_cast<std::size_t>(qi)].audio,
                                  corpora.ir->Load(ii, spectral.sample_rate));
              break;
            }
          }

          const std::string key = "eval/" + dcase.Label() + "/" + std::to_string(run) + "/" +
                                  tracks[ti].track_id + "/" + std::to_string(qi);
          const Embedding q = embedder.Embed(LogMel(query, spectral), key);
          const auto outcome = EvaluateQuery(index, q, tracks[ti].track_id, protocol.k_values);
          for (int k : protocol.k_values) {
            row.track_hits[k] += outcome.track_hit.at(k) ? 1 : 0;
            row.segment_hits[k] += outcome.segment_hit.at(k) ? 1 : 0;
          }
        }
      }
      report.rows.push_back(std::move(row));
    }
  }

  // Similarity-vs-shift series over the first few probe tracks.
  if (protocol.shift_series_probes > 0) {
    const double hop = protocol.shift_unit;
    const std::int64_t hop_samples = std::llround(hop * spectral.sample_rate);
    std::vector<double> deltas;
    for (double d = 0.0; d <= protocol.shift_series_max_ms + 1e-9; d += protocol.shift_series_step_ms)
      deltas.push_back(d);
    std::vector<ShiftSeriesPoint> series(deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i) series[i].delta_ms = deltas[i];
    int probes = 0;
    for (std::size_t ti = 0; ti < tracks.size() && probes < protocol.shift_series_probes; ++ti) {
      const auto& audio = tracks[ti].audio;
      const std::int64_t max_delta =
          std::llround(protocol.shift_series_max_ms / 1000.0 * spectral.sample_rate);
      const std::int64_t t0 = hop_samples;  // second fingerprint position
      if (t0 + hop_samples + seg + max_delta > static_cast<std::int64_t>(audio.samples.size()))
        continue;
      const Embedding orig = embedder.Embed(
          LogMel(Cut(audio, static_cast<std::size_t>(t0), static_cast<std::size_t>(seg)), spectral),
          tracks[ti].track_id + "/series/orig");
      const Embedding next = embedder.Embed(
          LogMel(Cut(audio, static_cast<std::size_t>(t0 + hop_samples), static_cast<std::size_t>(seg)),
                 spectral),
          tracks[ti].track_id + "/series/next");
      for (std::size_t di = 0; di < deltas.size(); ++di) {
        const std::int64_t shift = std::llround(deltas[di] / 1000.0 * spectral.sample_rate);
        const Embedding replica = embedder.Embed(
            LogMel(Cut(audio, static_cast<std::size_t>(t0 + shift), static_cast<std::size_t>(seg)),
                   spectral),
            tracks[ti].track_id + "/series/" + std::to_string(di));
        series[di].sim_original += Dot(replica, orig);
        series[di].sim_next += Dot(replica, next);
      }
      ++probes;
    }
    if (probes > 0) {
      for (auto& p : series) {
        p.sim_original /= probes;
        p.sim_next /= probes;
      }
      report.shift_series = std::move(series);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV emit / parse

/// Long-format CSV, one row per (case, run, k). If a shift series is present
/// it is written next to the main table as `<path>.series.csv`.
inline void EmitReport(const EvalReport& report, const std::string& path) {
  auto os = OpenOutput(path);
  os << "case,parameter,run,seed,n_queries,skipped_tracks,k,track_hits,segment_hits\n";
  char line[256];
  for (const auto& r : report.rows) {
    for (int k : report.k_values) {
      std::snprintf(line, sizeof(line), "%s,%.9g,%d,%llu,%d,%d,%d,%d,%d\n",
                    DistortionKindName(r.kind), r.parameter, r.run,
                    static_cast<unsigned long long>(r.seed), r.n_queries, r.skipped_tracks, k,
                    r.track_hits.at(k), r.segment_hits.at(k));
      os << line;
    }
  }
  if (!os) throw IoError("failed writing " + path);
  if (!report.shift_series.empty()) {
    auto ss = OpenOutput(path + ".series.csv");
    ss << "delta_ms,sim_original,sim_next\n";
    for (const auto& p : report.shift_series) {
      std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g\n", p.delta_ms, p.sim_original,
                    p.sim_next);
      ss << line;
    }
    if (!ss) throw IoError("failed writing " + path + ".series.csv");
  }
}

inline EvalReport ParseReport(const std::string& path) {
  auto is = OpenInput(path);
  std::string line;
  if (!std::getline(is, line) ||
      line != "case,parameter,run,seed,n_queries,skipped_tracks,k,track_hits,segment_hits")
    throw FormatError(path + ": unexpected report header");
  EvalReport report;
  std::map<std::pair<std::string, int>, std::size_t> row_index;  // (label, run) -> row
  std::set<int> ks;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 9 fields");
    CaseRunResult tmp;
    tmp.kind = DistortionKindFromName(fields[0]);
    tmp.parameter = std::stod(fields[1]);
    tmp.run = std::stoi(fields[2]);
    tmp.seed = std::stoull(fields[3]);
    tmp.n_queries = std::stoi(fields[4]);
    tmp.skipped_tracks = std::stoi(fields[5]);
    const int k = std::stoi(fields[6]);
    ks.insert(k);
    const auto key = std::make_pair(DistortionCase{tmp.kind, tmp.parameter}.Label(), tmp.run);
    auto it = row_index.find(key);
    if (it == row_index.end()) {
      row_index.emplace(key, report.rows.size());
      report.rows.push_back(tmp);
      it = row_index.find(key);
    }
    auto& row = report.rows[it->second];
    row.track_hits[k] = std::stoi(fields[7]);
    row.segment_hits[k] = std::stoi(fields[8]);
  }
  report.k_values.assign(ks.begin(), ks.end());
  return report;
}

}  // namespace confp
