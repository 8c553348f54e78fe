#pragma once

// Experiment runner: configuration plus the implementation of every CLI verb.
//
// Run layout (fixed names, so `report` needs no manifest):
//   <out>/<encoding>_seed<k>/config.txt
//                           /metrics.csv
//                           /checkpoints/step_<8 digits>.ckpt
//                           /final.ckpt
//   <out>/eval_<task>_<encoding>.csv, <out>/comparison_<task>.csv

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hopelab/io.hpp"
#include "hopelab/model.hpp"
#include "hopelab/probe.hpp"
#include "hopelab/tasks.hpp"
#include "hopelab/train.hpp"

namespace hope {

struct DataConfig {
  int markov_order = 1;
  int markov_support = 4;
  std::uint64_t markov_seed = 1234;
  MixtureWeights mixture{};
  // Curriculum: the first early_steps draw rows from early_mixture.
  int early_steps = 0;
  MixtureWeights early_mixture{0.0, 1.0, 0.0};
};

struct EvalConfig {
  std::vector<int> copy_counts{4, 8, 9, 10};
  int copy_samples = 100;
  std::vector<int> follow_lengths{64, 96, 128};
  int follow_samples = 100;
  std::vector<int> ppl_lengths{64, 128};
  int ppl_tail = 32;
  int ppl_samples = 64;
  std::uint64_t seed = 7;
};

struct ProbeSettings {
  int samples = 512;
  int length = 0;       // 0: model train_length
  int test_length = 0;  // 0: twice the probe length
  QueryMode query = QueryMode::Last;
  std::uint64_t seed = 11;
};

struct ExperimentConfig {
  ModelConfig model;  // model.encoding is the first entry of `encodings`
  std::vector<EncodingTag> encodings;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  ProbeSettings probe;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = "runs";

  /// Field-level ConfigError for missing, malformed, unknown or inconsistent keys.
  /// Required: model.encoding, train.total_steps.
  static ExperimentConfig from_flat(const FlatConfig& flat);
  /// Defaults only; used by analysis verbs run without --config.
  static ExperimentConfig defaults();

  /// Canonical flat text; from_flat(parse(to_text())) reproduces the config.
  std::string to_text() const;
  Vocabulary vocab() const;
  MarkovSource markov() const;
  ModelConfig model_for(EncodingTag tag) const;
};

std::string run_name(EncodingTag tag, std::uint64_t seed);

/// FNV-1a of the canonical model-config JSON, hex.
std::string config_digest(const ModelConfig& config);

/// Trains every (encoding, seed) pair into its own run directory. With
/// `resume`, continues that checkpoint's run instead (appending to metrics.csv).
void cmd_train(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& resume,
               std::ostream& log);

struct ProbeOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path out;
};

void cmd_probe(const ExperimentConfig& cfg, const ProbeOptions& opt, std::ostream& log);

struct DecomposeOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::optional<int> layer;
  std::optional<std::filesystem::path> series_dir;  // run dir for VAF over training
};

void cmd_decompose(const ExperimentConfig& cfg, const DecomposeOptions& opt, std::ostream& log);

/// Either a checkpoint or (base, head_dim, train_length[, encoding]).
struct SpectrumSource {
  std::optional<std::filesystem::path> checkpoint;
  double base = 10000.0;
  int head_dim = 64;
  int train_length = 512;
  EncodingTag encoding = EncodingTag::RoPE;
};

void cmd_classify(const SpectrumSource& src, const std::filesystem::path& out, std::ostream& os,
                  std::ostream& log);
void cmd_phase(const SpectrumSource& src, int test_length, const std::filesystem::path& out,
               std::ostream& os, std::ostream& log);

enum class EvalTask { Copy, Follow, Ppl };
std::string to_string(EvalTask task);

/// Evaluates `<runs>/<encoding>_seed<k>/final.ckpt` for every configured run.
void cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& runs,
              const std::vector<EvalTask>& tasks, const std::filesystem::path& out,
              std::ostream& log);

/// Evaluation rows for one model: one per sweep point.
std::vector<EvalRow> evaluate_model(const Transformer<float>& model, const ExperimentConfig& cfg,
                                    EvalTask task, const std::string& seed_label,
                                    std::ostream& log);

/// Aggregates a run directory into summary.json plus charts.
void cmd_report(const std::filesystem::path& runs, const std::filesystem::path& out,
                std::ostream& log);

}  // namespace hope
