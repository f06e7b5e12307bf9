// confp/config.hpp

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
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "confp/augment.hpp"
#include "confp/common.hpp"
#include "confp/dsp.hpp"
#include "confp/encoder.hpp"
#include "confp/eval.hpp"
#include "confp/io.hpp"
#include "confp/trainer.hpp"

namespace confp {

// ---------------------------------------------------------------------------
// Raw key-value layer: INI-style sections, '#' comments, strict keys.

class ConfigMap {
 public:
  static ConfigMap ParseString(const std::string& text, const std::string& origin) {
    ConfigMap out;
    std::istringstream is(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = Trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
        section = Trim(line.substr(1, line.size() - 2));
        if (section.empty())
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
      const std::string key = Trim(line.substr(0, eq));
      const std::string value = Trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      if (section.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": key outside any section");
      out.Set(section, key, value);
    }
    return out;
  }

  static ConfigMap ParseFile(const std::string& path) {
    auto is = OpenInput(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ParseString(ss.str(), path);
  }

  void Set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
  }

  /// Sets from a dotted "section.key" reference (CLI override form).
  void SetDotted(const std::string& dotted, const std::string& value) {
    const std::size_t dot = dotted.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= dotted.size())
      throw ConfigError("override '" + dotted + "' must be of the form section.key");
    Set(dotted.substr(0, dot), dotted.substr(dot + 1), value);
  }

  /// Layers `overrides` on top of this map (overrides win).
  void Merge(const ConfigMap& overrides) {
    for (const auto& [section, kv] : overrides.sections_)
      for (const auto& [key, value] : kv) sections_[section][key] = value;
  }

  const std::string* Find(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  static std::string Trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  std::map<std::string, std::map<std::string, std::string>> sections_;
};

// ---------------------------------------------------------------------------
// Typed reading with strict key checking

namespace detail {

class SectionReader {
 public:
  SectionReader(const ConfigMap& map, std::string section) : map_(map), section_(std::move(section)) {}

  bool Has(const std::string& key) {
    consumed_.insert(key);
    return map_.Find(section_, key) != nullptr;
  }

  std::string GetString(const std::string& key, const std::string& fallback) {
    consumed_.insert(key);
    const std::string* v = map_.Find(section_, key);
    return v == nullptr ? fallback : *v;
  }

  double GetDouble(const std::string& key, double fallback) {
    consumed_.insert(key);
    const std::string* v = map_.Find(section_, key);
    if (v == nullptr) return fallback;
    try {
      std::size_t pos = 0;
      const double d = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return d;
    } catch (...) {
      throw ConfigError(Where(key) + ": expected a number, got '" + *v + "'");
    }
  }

  int GetInt(const std::string& key, int fallback) {
    consumed_.insert(key);
    const std::string* v = map_.Find(section_, key);
    if (v == nullptr) return fallback;
    try {
      std::size_t pos = 0;
      const long d = std::stol(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return static_cast<int>(d);
    } catch (...) {
      throw ConfigError(Where(key) + ": expected an integer, got '" + *v + "'");
    }
  }

  std::uint64_t GetU64(const std::string& key, std::uint64_t fallback) {
    consumed_.insert(key);
    const std::string* v = map_.Find(section_, key);
    if (v == nullptr) return fallback;
    try {
      std::size_t pos = 0;
      const unsigned long long d = std::stoull(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return d;
    } catch (...) {
      throw ConfigError(Where(key) + ": expected an unsigned integer, got '" + *v + "'");
    }
  }

  bool GetBool(const std::string& key, bool fallback) {
    consumed_.insert(key);
    const std::string* v = map_.Find(section_, key);
    if (v == nullptr) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(Where(key) + ": expected a boolean, got '" + *v + "'");
  }

  std::vector<int> GetIntList(const std::string& key, std::vector<int> fallback) {
    consumed_.insert(key);
    const std::string* v = map_.Find(section_, key);
    if (v == nullptr) return fallback;
    std::vector<int> out;
    if (v->empty()) return out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stoi(item));
      } catch (...) {
        throw ConfigError(Where(key) + ": expected a comma-separated integer list");
      }
    }
    return out;
  }

  std::vector<double> GetDoubleList(const std::string& key, std::vector<double> fallback) {
    consumed_.insert(key);
    const std::string* v = map_.Find(section_, key);
    if (v == nullptr) return fallback;
    std::vector<double> out;
    if (v->empty()) return out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (...) {
        throw ConfigError(Where(key) + ": expected a comma-separated number list");
      }
    }
    return out;
  }

  /// Rejects any key in this section that no getter asked about.
  void VerifyNoUnknownKeys() const {
    auto s = map_.sections().find(section_);
    if (s == map_.sections().end()) return;
    for (const auto& [key, value] : s->second)
      if (!consumed_.count(key))
        throw ConfigError("unknown key '" + key + "' in section [" + section_ + "]");
  }

 private:
  std::string Where(const std::string& key) const { return "[" + section_ + "] " + key; }

  const ConfigMap& map_;
  std::string section_;
  std::set<std::string> consumed_;
};

}  // namespace detail

struct FullConfig {
  SpectralConfig spectral;
  ConformerConfig model;
  TrainConfig training;
  AugmentationSpec augment;
  double index_hop = 0.3;  // fingerprint spacing (seconds)
  EvalProtocol eval;
};

/// Parses the distortion suite, e.g.
///   "none; time_shift=10,20,30,40; colored_noise=5,10,15; time_stretch=0.7,1.3"
inline std::vector<DistortionCase> ParseDistortionSuite(const std::string& text) {
  std::vector<DistortionCase> cases;
  std::stringstream ss(text);
  std::string entry;
  while (std::getline(ss, entry, ';')) {
    std::size_t a = entry.find_first_not_of(" \t");
    std::size_t b = entry.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    entry = entry.substr(a, b - a + 1);
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) {
      cases.push_back({DistortionKindFromName(entry), 0.0});
      continue;
    }
    const DistortionKind kind = DistortionKindFromName(entry.substr(0, eq));
    std::stringstream ps(entry.substr(eq + 1));
    std::string p;
    while (std::getline(ps, p, ',')) {
      try {
        cases.push_back({kind, std::stod(p)});
      } catch (...) {
        throw ConfigError("eval cases: bad parameter '" + p + "'");
      }
    }
  }
  if (cases.empty()) throw ConfigError("eval cases: empty suite");
  return cases;
}

inline std::string FormatDistortionSuite(const std::vector<DistortionCase>& cases) {
  std::string out;
  for (const auto& c : cases) {
    if (!out.empty()) out += ";";
    out += c.Label();
  }
  return out;
}

/// Builds the full typed configuration from a merged key-value map. Every
/// value defaults to the small-preset setup; unknown sections or keys are
/// rejected.
inline FullConfig BuildConfig(const ConfigMap& map) {
  static const std::set<std::string> kKnownSections = {"spectral", "model",  "training",
                                                       "augment",  "index", "eval"};
  for (const auto& [section, kv] : map.sections())
    if (!kKnownSections.count(section))
      throw ConfigError("unknown config section [" + section + "]");

  FullConfig cfg;

  {
    detail::SectionReader r(map, "spectral");
    auto& s = cfg.spectral;
    s.sample_rate = r.GetInt("sample_rate", s.sample_rate);
    s.segment_len = r.GetDouble("segment_len", s.segment_len);
    s.fft_len = r.GetInt("fft_len", s.fft_len);
    s.hop_len = r.GetInt("hop_len", s.hop_len);
    s.n_mels = r.GetInt("n_mels", s.n_mels);
    s.mel_fmin = r.GetDouble("mel_fmin", s.mel_fmin);
    s.mel_fmax = r.GetDouble("mel_fmax", s.sample_rate / 2.0);
    s.log_epsilon = r.GetDouble("log_epsilon", s.log_epsilon);
    r.VerifyNoUnknownKeys();
    s.Validate();
  }

  {
    detail::SectionReader r(map, "model");
    const std::string preset = r.GetString("preset", "small");
    if (preset == "small")
      cfg.model = ConformerConfig::Small();
    else if (preset == "medium")
      cfg.model = ConformerConfig::Medium();
    else if (preset == "large")
      cfg.model = ConformerConfig::Large();
    else if (preset == "tiny")
      cfg.model = ConformerConfig::Tiny();
    else
      throw ConfigError("[model] preset: expected small|medium|large|tiny, got '" + preset + "'");
    auto& m = cfg.model;
    m.encoder_dim = r.GetInt("encoder_dim", m.encoder_dim);
    m.n_layers = r.GetInt("n_layers", m.n_layers);
    m.n_heads = r.GetInt("n_heads", m.n_heads);
    m.conv_kernel_size = r.GetInt("conv_kernel_size", m.conv_kernel_size);
    m.embedding_dim = r.GetInt("embedding_dim", m.embedding_dim);
    m.ffn_expansion = r.GetInt("ffn_expansion", m.ffn_expansion);
    // The spectral front-end determines the input geometry.
    m.n_mels = cfg.spectral.n_mels;
    m.max_frames = r.GetInt("max_frames", cfg.spectral.frames_per_segment());
    r.VerifyNoUnknownKeys();
  }

  {
    detail::SectionReader r(map, "training");
    auto& t = cfg.training;
    t.batch_size = r.GetInt("batch_size", t.batch_size);
    t.temperature = r.GetDouble("temperature", t.temperature);
    t.learning_rate = r.GetDouble("learning_rate", t.learning_rate);
    t.weight_decay = r.GetDouble("weight_decay", t.weight_decay);
    t.epochs = r.GetInt("epochs", t.epochs);
    t.dropout = r.GetDouble("dropout", t.dropout);
    t.seed = r.GetU64("seed", t.seed);
    const std::string sched = r.GetString("schedule", "constant");
    if (sched == "constant")
      t.schedule = LrSchedule::kConstant;
    else if (sched == "step")
      t.schedule = LrSchedule::kStep;
    else
      throw ConfigError("[training] schedule: expected constant|step, got '" + sched + "'");
    t.milestones = r.GetIntList("milestones", t.milestones);
    t.batch_cap = r.GetInt("batch_cap", t.batch_cap);
    t.abort_on_unreadable = r.GetBool("abort_on_unreadable", t.abort_on_unreadable);
    t.checkpoint_every = r.GetInt("checkpoint_every", t.checkpoint_every);
    r.VerifyNoUnknownKeys();
    t.Validate();
    cfg.model.dropout_rate = t.dropout;
    cfg.model.Validate();
  }

  {
    detail::SectionReader r(map, "augment");
    auto& a = cfg.augment;
    a.time_shift.alpha = r.GetDouble("time_shift_alpha", a.time_shift.alpha);
    a.time_shift.beta = r.GetDouble("time_shift_beta", a.time_shift.beta);
    a.time_shift.min_offset = r.GetDouble("time_shift_min_ms", a.time_shift.min_offset * 1000.0) / 1000.0;
    a.time_shift.max_offset = r.GetDouble("time_shift_max_ms", a.time_shift.max_offset * 1000.0) / 1000.0;
    a.background_noise = r.GetBool("background_noise", a.background_noise);
    a.bg_snr_min_db = r.GetDouble("bg_snr_min_db", a.bg_snr_min_db);
    a.bg_snr_max_db = r.GetDouble("bg_snr_max_db", a.bg_snr_max_db);
    a.bg_corpus_dir = r.GetString("bg_corpus", a.bg_corpus_dir);
    a.colored_noise = r.GetBool("colored_noise", a.colored_noise);
    a.color_snr_min_db = r.GetDouble("color_snr_min_db", a.color_snr_min_db);
    a.color_snr_max_db = r.GetDouble("color_snr_max_db", a.color_snr_max_db);
    a.decay_min = r.GetDouble("decay_min", a.decay_min);
    a.decay_max = r.GetDouble("decay_max", a.decay_max);
    a.reverb = r.GetBool("reverb", a.reverb);
    a.ir_corpus_dir = r.GetString("ir_corpus", a.ir_corpus_dir);
    a.pitch_shift = r.GetBool("pitch_shift", a.pitch_shift);
    a.max_semitones = r.GetDouble("max_semitones", a.max_semitones);
    a.polarity_inversion = r.GetBool("polarity_inversion", a.polarity_inversion);
    a.polarity_prob = r.GetDouble("polarity_prob", a.polarity_prob);
    a.tanh_distortion = r.GetBool("tanh_distortion", a.tanh_distortion);
    a.drive_min = r.GetDouble("drive_min", a.drive_min);
    a.drive_max = r.GetDouble("drive_max", a.drive_max);
    a.time_stretch = r.GetBool("time_stretch", a.time_stretch);
    a.stretch_min = r.GetDouble("stretch_min", a.stretch_min);
    a.stretch_max = r.GetDouble("stretch_max", a.stretch_max);
    a.spec_augment = r.GetBool("spec_augment", a.spec_augment);
    a.sa.n_freq_masks = r.GetInt("freq_masks", a.sa.n_freq_masks);
    a.sa.max_freq_width = r.GetInt("max_freq_width", a.sa.max_freq_width);
    a.sa.n_time_masks = r.GetInt("time_masks", a.sa.n_time_masks);
    a.sa.max_time_width = r.GetInt("max_time_width", a.sa.max_time_width);
    a.apply_prob = r.GetDouble("apply_prob", a.apply_prob);
    r.VerifyNoUnknownKeys();
    a.Validate();
  }

  {
    detail::SectionReader r(map, "index");
    cfg.index_hop = r.GetDouble("hop", cfg.index_hop);
    if (cfg.index_hop <= 0) throw ConfigError("[index] hop must be positive");
    r.VerifyNoUnknownKeys();
  }

  {
    detail::SectionReader r(map, "eval");
    auto& e = cfg.eval;
    e.queries_per_track = r.GetInt("queries_per_track", e.queries_per_track);
    e.runs = r.GetInt("runs", e.runs);
    e.k_values = r.GetIntList("k_values", e.k_values);
    e.shift_unit = r.GetDouble("shift_unit", e.shift_unit);
    if (r.Has("cases")) e.cases = ParseDistortionSuite(r.GetString("cases", ""));
    e.missing_track_is_miss = r.GetBool("missing_track_is_miss", e.missing_track_is_miss);
    e.shift_series_probes = r.GetInt("shift_series_probes", e.shift_series_probes);
    e.shift_series_max_ms = r.GetDouble("shift_series_max_ms", e.shift_series_max_ms);
    e.shift_series_step_ms = r.GetDouble("shift_series_step_ms", e.shift_series_step_ms);
    r.VerifyNoUnknownKeys();
    e.Validate();
  }

  return cfg;
}

}  // namespace confp
