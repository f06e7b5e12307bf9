// confp/dataset.hpp

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

#include <ostream>
#include <string>
#include <vector>

#include "confp/audio.hpp"
#include "confp/common.hpp"
#include "confp/dsp.hpp"
#include "confp/io.hpp"

namespace confp {

/// One manifest row: newline-delimited "track_id<TAB>path", UTF-8.
struct TrackEntry {
  std::string track_id;
  std::string path;
};

inline std::vector<TrackEntry> LoadManifest(const std::string& path) {
  auto is = OpenInput(path);
  std::vector<TrackEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 'track_id<TAB>path'");
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  if (out.empty()) throw FormatError(path + ": empty manifest");
  return out;
}

struct LoadedTrack {
  std::string track_id;
  AudioBuffer audio;
};

/// Reads every manifest entry, resampled to the spectral rate. Entries that
/// fail to load or are shorter than min_duration abort or are skipped with a
/// warning, per abort_on_error.
inline std::vector<LoadedTrack> LoadTracks(const std::vector<TrackEntry>& manifest,
                                           const SpectralConfig& spectral, bool abort_on_error,
                                           double min_duration, std::ostream* warnings) {
  std::vector<LoadedTrack> tracks;
  for (const auto& entry : manifest) {
    try {
      AudioBuffer buf = Resample(ReadWav(entry.path), spectral.sample_rate);
      if (buf.duration() < min_duration)
        throw DomainError(entry.path + ": track shorter than " + std::to_string(min_duration) +
                          " s");
      tracks.push_back({entry.track_id, std::move(buf)});
    } catch (const Error& e) {
      if (abort_on_error) throw;
      if (warnings != nullptr)
        *warnings << "warning: skipping " << entry.track_id << ": " << e.what() << "\n";
    }
  }
  if (tracks.empty()) throw DomainError("no usable tracks in manifest");
  return tracks;
}

}  // namespace confp
