// confp/index.hpp

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
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "confp/audio.hpp"
#include "confp/common.hpp"
#include "confp/dsp.hpp"
#include "confp/encoder.hpp"
#include "confp/io.hpp"
#include "confp/threading.hpp"

namespace confp {

/// One database row: which track, where in it, and the fingerprint vector.
struct FingerprintRecord {
  std::string track_id;
  double offset = 0.0;  // seconds from track start
  Embedding embedding;
};

struct SearchHit {
  std::string track_id;
  double offset = 0.0;
  double score = 0.0;
};

using QueryResult = std::vector<SearchHit>;

/// Exact flat cosine index over unit-norm embeddings. Build-then-freeze:
/// inserts need exclusive access, searches over a frozen index are safe from
/// any number of threads.
class FingerprintIndex {
 public:
  explicit FingerprintIndex(int dim) : dim_(dim) {
    if (dim <= 0) throw DomainError("index: embedding dimension must be positive");
  }

  int dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<FingerprintRecord>& records() const { return records_; }

  void Insert(FingerprintRecord record) {
    if (static_cast<int>(record.embedding.size()) != dim_)
      throw ShapeError("index insert: embedding dimension " +
                       std::to_string(record.embedding.size()) + " != index dimension " +
                       std::to_string(dim_));
    const double norm = Norm(record.embedding);
    if (std::abs(norm - 1.0) > 1e-4)
      throw DomainError("index insert: embedding is not unit-norm (|z| = " +
                        std::to_string(norm) + ")");
    if (record.offset < 0) throw DomainError("index insert: negative offset");
    const auto key = std::make_pair(record.track_id, record.offset);
    if (!keys_.insert(key).second)
      throw DomainError("index insert: duplicate record for track '" + record.track_id +
                        "' at offset " + std::to_string(record.offset));
    records_.push_back(std::move(record));
  }

  void Insert(std::vector<FingerprintRecord> records) {
    for (auto& r : records) Insert(std::move(r));
  }

  /// Exact top-k by dot product; ties break by (track_id, offset) ascending.
  QueryResult Search(const Embedding& query, std::size_t k) const {
    if (records_.empty()) throw DomainError("index search: database is empty");
    if (static_cast<int>(query.size()) != dim_)
      throw ShapeError("index search: query dimension " + std::to_string(query.size()) +
                       " != index dimension " + std::to_string(dim_));
    if (k < 1 || k > records_.size())
      throw DomainError("index search: k must be in [1, " + std::to_string(records_.size()) +
                        "]");
    std::vector<std::pair<double, std::size_t>> scored(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i)
      scored[i] = {Dot(query, records_[i].embedding), i};
    auto better = [this](const std::pair<double, std::size_t>& a,
                         const std::pair<double, std::size_t>& b) {
      if (a.first != b.first) return a.first > b.first;
      const auto& ra = records_[a.second];
      const auto& rb = records_[b.second];
      if (ra.track_id != rb.track_id) return ra.track_id < rb.track_id;
      return ra.offset < rb.offset;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                      scored.end(), better);
    QueryResult out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      const auto& r = records_[scored[i].second];
      out.push_back({r.track_id, r.offset, scored[i].first});
    }
    return out;
  }

 private:
  int dim_;
  std::vector<FingerprintRecord> records_;
  std::set<std::pair<std::string, double>> keys_;
};

/// Fingerprints one track: segments at the given hop, embeds each segment in
/// eval mode, and inserts the records. Returns the record count.
inline std::size_t BuildTrackFingerprints(FingerprintIndex& index, const std::string& track_id,
                                          const AudioBuffer& audio, const SpectralConfig& spectral,
                                          double hop_seconds, const Embedder& embedder,
                                          int threads = 1) {
  const auto segments = SegmentAudio(audio, spectral, hop_seconds);
  std::vector<FingerprintRecord> records(segments.size());
  ParallelFor(segments.size(), threads, [&](std::size_t i) {
    const auto& seg = segments[i];
    const std::string key = track_id + "@" + std::to_string(std::llround(seg.start * 1e6));
    records[i] = {track_id, seg.start, embedder.Embed(LogMel(seg.audio, spectral), key)};
  });
  for (auto& r : records) index.Insert(std::move(r));
  return segments.size();
}

/// Per-segment search aggregated to tracks: a track's score is its best
/// segment similarity; tracks are ranked by score with deterministic
/// tie-breaks.
inline QueryResult MatchTrack(const FingerprintIndex& index, const AudioBuffer& query,
                              const SpectralConfig& spectral, const Embedder& embedder,
                              std::size_t k) {
  if (static_cast<int>(query.samples.size()) < spectral.segment_samples())
    throw DomainError("match_track: query has " + std::to_string(query.samples.size()) +
                      " samples, need at least " + std::to_string(spectral.segment_samples()));
  const auto segments = SegmentAudio(query, spectral, spectral.segment_len);
  std::map<std::string, SearchHit> best_per_track;
  const std::size_t per_segment_k = std::min(index.size(), std::max<std::size_t>(k, 16));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::string key = "query@" + std::to_string(i);
    const auto hits =
        index.Search(embedder.Embed(LogMel(segments[i].audio, spectral), key), per_segment_k);
    for (const auto& h : hits) {
      auto it = best_per_track.find(h.track_id);
      if (it == best_per_track.end() || h.score > it->second.score)
        best_per_track[h.track_id] = h;
    }
  }
  QueryResult ranked;
  ranked.reserve(best_per_track.size());
  for (const auto& [id, hit] : best_per_track) ranked.push_back(hit);
  std::sort(ranked.begin(), ranked.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.track_id != b.track_id) return a.track_id < b.track_id;
    return a.offset < b.offset;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

// ---------------------------------------------------------------------------
// Database container: "CFPI" | version | dim | count | records.

inline void SaveIndex(const std::string& path, const FingerprintIndex& index) {
  auto os = OpenOutput(path);
  BinaryWriter w(os);
  w.Magic("CFPI");
  w.U32(kIndexFormatVersion);
  w.U32(static_cast<std::uint32_t>(index.dim()));
  w.U64(index.size());
  for (const auto& r : index.records()) {
    w.Str(r.track_id);
    w.F64(r.offset);
    w.F32Array(r.embedding.data(), r.embedding.size());
  }
  if (!os) throw IoError("failed writing " + path);
}

inline FingerprintIndex LoadIndex(const std::string& path) {
  auto is = OpenInput(path);
  BinaryReader r(is, path);
  r.ExpectMagic("CFPI", "fingerprint index");
  const std::uint32_t version = r.U32();
  if (version != kIndexFormatVersion)
    throw FormatError(path + ": unsupported index version " + std::to_string(version));
  const int dim = static_cast<int>(r.U32());
  const std::uint64_t count = r.U64();
  FingerprintIndex index(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    FingerprintRecord rec;
    rec.track_id = r.Str();
    rec.offset = r.F64();
    rec.embedding.resize(static_cast<std::size_t>(dim));
    r.F32Array(rec.embedding.data(), rec.embedding.size());
    index.Insert(std::move(rec));
  }
  return index;
}

}  // namespace confp
