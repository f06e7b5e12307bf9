// tools/confp_main.cpp

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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "confp/confp.hpp"

namespace {

using Real = float;

int ExitCode(confp::ErrorCode code) { return static_cast<int>(code); }

struct CommonOpts {
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;  // section.key=value
  int threads = confp::DefaultThreads();
};

void AddCommon(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_files,
                  "Config file(s); later files override earlier ones")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides,
                  "Override a config value as section.key=value (beats config files)");
  cmd->add_option("--threads", opts.threads, "Worker threads for batch featurization");
}

confp::FullConfig ResolveConfig(const CommonOpts& opts) {
  confp::ConfigMap merged;
  for (const auto& path : opts.config_files) merged.Merge(confp::ConfigMap::ParseFile(path));
  for (const auto& kv : opts.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw confp::ConfigError("--set expects section.key=value, got '" + kv + "'");
    confp::ConfigMap flags;
    flags.SetDotted(kv.substr(0, eq), kv.substr(eq + 1));
    merged.Merge(flags);
  }
  return confp::BuildConfig(merged);
}

confp::AudioBuffer ReadAudioAt(const std::string& path, int sample_rate) {
  return confp::Resample(confp::ReadWav(path), sample_rate);
}

bool LooksLikeWav(const std::string& path) {
  auto is = confp::OpenInput(path);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  return std::memcmp(magic, "RIFF", 4) == 0;
}

void WriteEmbedding(const std::string& path, const confp::Embedding& e) {
  auto os = confp::OpenOutput(path);
  for (std::size_t i = 0; i < e.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%.9g", i == 0 ? "" : " ", static_cast<double>(e[i]));
    os << buf;
  }
  os << "\n";
  if (!os) throw confp::IoError("failed writing " + path);
}

// --- subcommand bodies ------------------------------------------------------

int RunFeaturize(const CommonOpts& common, const std::string& input, const std::string& output,
                 double start) {
  const auto cfg = ResolveConfig(common);
  const auto audio = ReadAudioAt(input, cfg.spectral.sample_rate);
  const std::size_t start_sample =
      static_cast<std::size_t>(std::llround(start * cfg.spectral.sample_rate));
  const auto segment = confp::Cut(audio, start_sample,
                                  static_cast<std::size_t>(cfg.spectral.segment_samples()));
  confp::SaveMel(output, confp::LogMel(segment, cfg.spectral));
  std::cout << "featurized " << input << " [" << start << " s, +" << cfg.spectral.segment_len
            << " s] -> " << output << "\n";
  return 0;
}

int RunAugment(const CommonOpts& common, const std::string& input, const std::string& output,
               std::uint64_t seed) {
  const auto cfg = ResolveConfig(common);
  const auto audio = ReadAudioAt(input, cfg.spectral.sample_rate);
  std::unique_ptr<confp::WavCorpus> noise, ir;
  if (cfg.augment.background_noise)
    noise = std::make_unique<confp::WavCorpus>(cfg.augment.bg_corpus_dir);
  if (cfg.augment.reverb) ir = std::make_unique<confp::WavCorpus>(cfg.augment.ir_corpus_dir);
  confp::Rng rng = confp::Rng::Derive(seed, "cli/augment");
  // Segment from the start with shift context taken from within the file.
  const double margin = cfg.augment.time_shift.max_offset;
  const double start = std::min(margin, std::max(0.0, audio.duration() - cfg.spectral.segment_len - margin));
  const auto out = confp::AugmentWaveform(audio, start, cfg.spectral, cfg.augment, rng,
                                          noise.get(), ir.get());
  confp::WriteWav(output, out);
  std::cout << "augmented " << input << " -> " << output << " (seed " << seed << ")\n";
  return 0;
}

int RunTrain(const CommonOpts& common, const std::string& manifest_path,
             const std::string& out_dir, std::optional<std::uint64_t> seed,
             const std::string& resume) {
  auto cfg = ResolveConfig(common);
  if (seed) cfg.training.seed = *seed;
  const auto manifest = confp::LoadManifest(manifest_path);
  std::filesystem::create_directories(out_dir);
  std::ofstream metrics(out_dir + "/metrics.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw confp::IoError("cannot open metrics log in " + out_dir);
  const auto result = confp::Train<Real>(manifest, cfg.training, cfg.model, cfg.spectral,
                                         cfg.augment, out_dir, &metrics, &std::cerr, resume);
  std::cout << "trained " << result.epochs_run << " epochs, " << result.steps
            << " steps; best loss " << result.best_loss << "\n"
            << "last checkpoint: " << result.last_checkpoint << "\n"
            << "best checkpoint: " << result.best_checkpoint << "\n";
  return 0;
}

int RunEmbedCmd(const std::string& checkpoint, const std::string& input,
                const std::string& output) {
  const auto loaded = confp::LoadCheckpoint<Real>(checkpoint);
  confp::MelSpectrogram mel;
  if (LooksLikeWav(input)) {
    const auto audio = ReadAudioAt(input, loaded.spectral.sample_rate);
    const auto segment =
        confp::Cut(audio, 0, static_cast<std::size_t>(loaded.spectral.segment_samples()));
    mel = confp::LogMel(segment, loaded.spectral);
  } else {
    mel = confp::LoadMel(input);
  }
  WriteEmbedding(output, loaded.model.Embed(mel));
  std::cout << "embedded " << input << " -> " << output << "\n";
  return 0;
}

int RunFingerprint(const CommonOpts& common, const std::string& manifest_path,
                   const std::string& checkpoint, std::optional<double> hop,
                   const std::string& out_db) {
  const auto cfg = ResolveConfig(common);
  const double hop_s = hop.value_or(cfg.index_hop);
  const auto loaded = confp::LoadCheckpoint<Real>(checkpoint);
  const auto manifest = confp::LoadManifest(manifest_path);
  const auto tracks = confp::LoadTracks(manifest, loaded.spectral, /*abort_on_error=*/true,
                                        loaded.spectral.segment_len, &std::cerr);
  confp::ModelEmbedder<Real> embedder(&loaded.model);
  confp::FingerprintIndex index(embedder.dim());
  std::size_t n = 0;
  for (const auto& t : tracks)
    n += confp::BuildTrackFingerprints(index, t.track_id, t.audio, loaded.spectral, hop_s,
                                       embedder, common.threads);
  confp::SaveIndex(out_db, index);
  std::cout << "fingerprinted " << tracks.size() << " tracks, " << n << " records (hop " << hop_s
            << " s) -> " << out_db << "\n";
  return 0;
}

int RunQuery(const std::string& db_path, const std::string& checkpoint, const std::string& input,
             std::size_t k) {
  const auto index = confp::LoadIndex(db_path);
  const auto loaded = confp::LoadCheckpoint<Real>(checkpoint);
  const auto audio = ReadAudioAt(input, loaded.spectral.sample_rate);
  confp::ModelEmbedder<Real> embedder(&loaded.model);
  const auto hits = confp::MatchTrack(index, audio, loaded.spectral, embedder,
                                      std::min(k, index.size()));
  for (std::size_t i = 0; i < hits.size(); ++i) {
    char line[256];
    std::snprintf(line, sizeof(line), "%2zu  %-24s  offset %8.3f s  score %.6f\n", i + 1,
                  hits[i].track_id.c_str(), hits[i].offset, hits[i].score);
    std::cout << line;
  }
  return 0;
}

int RunEvaluate(const CommonOpts& common, const std::string& db_path,
                const std::string& checkpoint, const std::string& manifest_path,
                std::uint64_t seed, const std::string& out_csv, bool random_baseline) {
  const auto cfg = ResolveConfig(common);
  const auto index = confp::LoadIndex(db_path);
  const auto manifest = confp::LoadManifest(manifest_path);

  std::unique_ptr<confp::Embedder> embedder;
  confp::SpectralConfig spectral = cfg.spectral;
  std::optional<confp::LoadedCheckpoint<Real>> loaded;
  if (random_baseline) {
    embedder = std::make_unique<confp::RandomEmbedder>(index.dim(), seed);
  } else {
    loaded = confp::LoadCheckpoint<Real>(checkpoint);
    spectral = loaded->spectral;
    embedder = std::make_unique<confp::ModelEmbedder<Real>>(&loaded->model);
  }
  const auto tracks =
      confp::LoadTracks(manifest, spectral, /*abort_on_error=*/true, 0.0, &std::cerr);

  std::unique_ptr<confp::WavCorpus> noise, ir;
  confp::EvalCorpora corpora;
  if (cfg.augment.background_noise) {
    noise = std::make_unique<confp::WavCorpus>(cfg.augment.bg_corpus_dir);
    corpora.noise = noise.get();
  }
  if (cfg.augment.reverb) {
    ir = std::make_unique<confp::WavCorpus>(cfg.augment.ir_corpus_dir);
    corpora.ir = ir.get();
  }

  const auto report =
      confp::RunEval(index, *embedder, tracks, spectral, cfg.eval, seed, corpora);
  confp::EmitReport(report, out_csv);

  std::cout << "case                    param    k   top-k track   top-k segment\n";
  for (const auto& c : cfg.eval.cases) {
    for (int k : cfg.eval.k_values) {
      char line[160];
      std::snprintf(line, sizeof(line), "%-22s  %6.9g  %3d     %7.3f%%      %7.3f%%\n",
                    confp::DistortionKindName(c.kind), c.parameter, k,
                    100.0 * report.MeanRate(c.kind, c.parameter, k, true),
                    100.0 * report.MeanRate(c.kind, c.parameter, k, false));
      std::cout << line;
    }
  }
  std::cout << "report -> " << out_csv << "\n";
  return 0;
}

int RunInspect(const std::string& checkpoint) {
  const auto loaded = confp::LoadCheckpoint<Real>(checkpoint);
  const auto& m = loaded.model.config();
  const auto& s = loaded.spectral;
  std::cout << "checkpoint: " << checkpoint << "\n"
            << "  format version: " << confp::kCheckpointFormatVersion << "\n"
            << "  model: dim " << m.encoder_dim << ", layers " << m.n_layers << ", heads "
            << m.n_heads << ", conv kernel " << m.conv_kernel_size << ", embedding dim "
            << m.embedding_dim << ", ffn expansion " << m.ffn_expansion << ", dropout "
            << m.dropout_rate << "\n"
            << "  spectral: " << s.sample_rate << " Hz, segment " << s.segment_len << " s, fft "
            << s.fft_len << ", hop " << s.hop_len << ", mels " << s.n_mels << "\n"
            << "  parameters: " << loaded.model.ParamCount() << "\n"
            << "  trained: seed " << loaded.meta.seed << ", steps " << loaded.meta.steps
            << ", epochs " << loaded.meta.epoch << ", best loss " << loaded.meta.best_loss << "\n"
            << "  optimizer state: " << (loaded.optim ? "present" : "absent") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confp: conformer audio fingerprinting toolkit"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "Print artifact and file-format versions");

  CommonOpts featurize_opts, augment_opts, train_opts, fingerprint_opts, evaluate_opts;

  auto* featurize = app.add_subcommand("featurize", "WAV segment -> stabilized log-mel container");
  std::string f_input, f_output;
  double f_start = 0.0;
  featurize->add_option("--input", f_input, "Input WAV file")->required()->check(CLI::ExistingFile);
  featurize->add_option("--output", f_output, "Output mel container path")->required();
  featurize->add_option("--start", f_start, "Segment start within the file (seconds)");
  AddCommon(featurize, featurize_opts);

  auto* augment = app.add_subcommand("augment", "Apply the augmentation chain to a WAV file");
  std::string a_input, a_output;
  std::uint64_t a_seed = 0;
  augment->add_option("--input", a_input, "Input WAV file")->required()->check(CLI::ExistingFile);
  augment->add_option("--output", a_output, "Output WAV path")->required();
  augment->add_option("--seed", a_seed, "Augmentation seed")->required();
  augment->add_option("--spec", augment_opts.config_files, "Augmentation config file")
      ->check(CLI::ExistingFile);
  AddCommon(augment, augment_opts);

  auto* train = app.add_subcommand("train", "Contrastive training over a dataset manifest");
  std::string t_manifest, t_out_dir, t_resume;
  std::optional<std::uint64_t> t_seed;
  train->add_option("--manifest", t_manifest, "Dataset manifest (track_id<TAB>path)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out-dir", t_out_dir, "Checkpoint/metrics output directory")->required();
  train->add_option("--seed", t_seed, "Training seed (overrides config)");
  train->add_option("--resume", t_resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--model-config", train_opts.config_files, "Model config file")
      ->check(CLI::ExistingFile);
  train->add_option("--train-config", train_opts.config_files, "Training config file")
      ->check(CLI::ExistingFile);
  train->add_option("--aug-config", train_opts.config_files, "Augmentation config file")
      ->check(CLI::ExistingFile);
  AddCommon(train, train_opts);

  auto* embed = app.add_subcommand("embed", "Embed a WAV segment or mel container");
  std::string e_checkpoint, e_input, e_output;
  embed->add_option("--checkpoint", e_checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  embed->add_option("--input", e_input, "WAV or mel container")->required()->check(CLI::ExistingFile);
  embed->add_option("--output", e_output, "Output embedding path (text)")->required();

  auto* fingerprint = app.add_subcommand("fingerprint", "Build a fingerprint database");
  std::string fp_manifest, fp_checkpoint, fp_out;
  std::optional<double> fp_hop;
  fingerprint->add_option("--manifest", fp_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  fingerprint->add_option("--checkpoint", fp_checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  fingerprint->add_option("--hop", fp_hop, "Fingerprint spacing in seconds (default 0.3)");
  fingerprint->add_option("--out", fp_out, "Output database path")->required();
  AddCommon(fingerprint, fingerprint_opts);

  auto* query = app.add_subcommand("query", "Identify a query WAV against a database");
  std::string q_db, q_checkpoint, q_input;
  std::size_t q_k = 5;
  query->add_option("--db", q_db, "Fingerprint database")->required()->check(CLI::ExistingFile);
  query->add_option("--checkpoint", q_checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  query->add_option("--input", q_input, "Query WAV")->required()->check(CLI::ExistingFile);
  query->add_option("--k", q_k, "Number of results");

  auto* evaluate = app.add_subcommand("evaluate", "Run the retrieval evaluation protocol");
  std::string v_db, v_checkpoint, v_manifest, v_out = "report.csv";
  std::uint64_t v_seed = 0;
  bool v_random = false;
  evaluate->add_option("--db", v_db, "Fingerprint database")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", v_checkpoint, "Model checkpoint");
  evaluate->add_option("--manifest", v_manifest, "Test manifest")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--protocol", evaluate_opts.config_files, "Protocol config file")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--seed", v_seed, "Evaluation seed");
  evaluate->add_option("--out", v_out, "Report CSV path");
  evaluate->add_flag("--random-baseline", v_random,
                     "Replace the encoder with input-independent random embeddings");
  AddCommon(evaluate, evaluate_opts);

  auto* inspect = app.add_subcommand("inspect", "Describe a checkpoint");
  std::string i_checkpoint;
  inspect->add_option("--checkpoint", i_checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  if (show_version) {
    std::cout << "confp " << confp::kVersion << " (mel format v" << confp::kMelFormatVersion
              << ", checkpoint format v" << confp::kCheckpointFormatVersion << ", index format v"
              << confp::kIndexFormatVersion << ")\n";
    return 0;
  }

  try {
    if (featurize->parsed()) return RunFeaturize(featurize_opts, f_input, f_output, f_start);
    if (augment->parsed()) return RunAugment(augment_opts, a_input, a_output, a_seed);
    if (train->parsed()) return RunTrain(train_opts, t_manifest, t_out_dir, t_seed, t_resume);
    if (embed->parsed()) return RunEmbedCmd(e_checkpoint, e_input, e_output);
    if (fingerprint->parsed())
      return RunFingerprint(fingerprint_opts, fp_manifest, fp_checkpoint, fp_hop, fp_out);
    if (query->parsed()) return RunQuery(q_db, q_checkpoint, q_input, q_k);
    if (evaluate->parsed()) {
      if (!v_random && v_checkpoint.empty())
        throw confp::ConfigError("evaluate: --checkpoint required unless --random-baseline");
      return RunEvaluate(evaluate_opts, v_db, v_checkpoint, v_manifest, v_seed, v_out, v_random);
    }
    if (inspect->parsed()) return RunInspect(i_checkpoint);
    std::cout << app.help() << "\n";
    return 0;
  } catch (const confp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCode(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
