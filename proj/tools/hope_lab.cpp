// hope_lab: train, probe and evaluate toy positional-encoding models.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hopelab/error.hpp"
#include "hopelab/experiment.hpp"
#include "hopelab/kernels.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Positional-encoding lab: rotary spectra, toy transformers, probes and evals"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = false;
  app.add_option("--config", config_path, "Experiment config (flat 'section.key = value' file)");
  app.add_option("--seed", seed, "Run a single seed instead of run.seeds");
  app.add_option("--out", out, "Output directory");
  app.add_flag("--deterministic", deterministic, "Single-threaded kernels");

  auto* train = app.add_subcommand("train", "Train every (encoding, seed) run in the config");
  std::string resume;
  train->add_option("--resume", resume, "Continue from this checkpoint");

  auto* probe = app.add_subcommand("probe", "Mean attention-logit curves of a checkpoint");
  std::string probe_ckpt;
  probe->add_option("--checkpoint", probe_ckpt, "Checkpoint file")->required();

  auto* decompose = app.add_subcommand("decompose", "Per-component logit curves, VAF and OOD flags");
  std::string dec_ckpt, series;
  std::optional<int> layer;
  decompose->add_option("--checkpoint", dec_ckpt, "Checkpoint file")->required();
  decompose->add_option("--layer", layer, "Restrict to one layer (default: all)");
  decompose->add_option("--series", series, "Run directory: also compute VAF over its checkpoints");

  hope::SpectrumSource spectrum;
  std::string spec_ckpt, spec_encoding = "rope";
  auto add_spectrum = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", spec_ckpt, "Read (base, head_dim, L) from a checkpoint");
    cmd->add_option("--base", spectrum.base, "Rotary base")->capture_default_str();
    cmd->add_option("--head-dim", spectrum.head_dim, "Head dimension")->capture_default_str();
    cmd->add_option("--train-length", spectrum.train_length, "Training length")
        ->capture_default_str();
    cmd->add_option("--encoding", spec_encoding, "Rotary-family encoding")->capture_default_str();
  };
  auto* classify = app.add_subcommand("classify", "Frequency bands of a rotary spectrum");
  add_spectrum(classify);
  auto* phase = app.add_subcommand("phase", "Phase coverage and OOD flags");
  add_spectrum(phase);
  int test_length = 0;
  phase->add_option("--test-length", test_length, "Evaluation length")->required();

  auto* eval = app.add_subcommand("eval", "Copy / follow / perplexity sweeps over trained runs");
  std::string runs_dir;
  std::vector<std::string> task_names{"copy", "follow", "ppl"};
  eval->add_option("--runs", runs_dir, "Directory holding <encoding>_seed<k> runs");
  eval->add_option("--task", task_names, "copy, follow, ppl (repeatable)")
      ->check(CLI::IsMember({"copy", "follow", "ppl"}));

  auto* report = app.add_subcommand("report", "Summarize a run directory");
  std::string report_dir;
  report->add_option("--runs", report_dir, "Run directory (default: --out or run.out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    hope::ExperimentConfig cfg = hope::ExperimentConfig::defaults();
    if (!config_path.empty()) {
      cfg = hope::ExperimentConfig::from_flat(hope::FlatConfig::load(config_path));
    } else if (train->parsed()) {
      throw hope::ConfigError("--config", "train needs a config file");
    }
    if (seed) cfg.seeds = {*seed};
    if (!out.empty()) cfg.out_dir = out;
    if (deterministic) hope::kernels::set_threads(1);
    if (!spec_ckpt.empty()) spectrum.checkpoint = spec_ckpt;
    try {
      spectrum.encoding = hope::parse_encoding(spec_encoding);
    } catch (const hope::InvalidArgument&) {
      throw hope::ConfigError("--encoding", "unknown encoding '" + spec_encoding + "'");
    }
    const fs::path out_dir = cfg.out_dir;

    if (train->parsed()) {
      hope::cmd_train(cfg, resume.empty() ? std::nullopt : std::optional<fs::path>(resume),
                      std::cerr);
    } else if (probe->parsed()) {
      hope::cmd_probe(cfg, {probe_ckpt, out_dir}, std::cerr);
    } else if (decompose->parsed()) {
      hope::DecomposeOptions opt{dec_ckpt, out_dir, layer, std::nullopt};
      if (!series.empty()) opt.series_dir = series;
      hope::cmd_decompose(cfg, opt, std::cerr);
    } else if (classify->parsed()) {
      hope::cmd_classify(spectrum, out_dir, std::cout, std::cerr);
    } else if (phase->parsed()) {
      hope::cmd_phase(spectrum, test_length, out_dir, std::cout, std::cerr);
    } else if (eval->parsed()) {
      std::vector<hope::EvalTask> tasks;
      for (const auto& t : task_names) {
        tasks.push_back(t == "copy"     ? hope::EvalTask::Copy
                        : t == "follow" ? hope::EvalTask::Follow
                                        : hope::EvalTask::Ppl);
      }
      const fs::path runs = runs_dir.empty() ? out_dir : fs::path(runs_dir);
      hope::cmd_eval(cfg, runs, tasks, out_dir, std::cerr);
    } else if (report->parsed()) {
      const fs::path runs = report_dir.empty() ? out_dir : fs::path(report_dir);
      hope::cmd_report(runs, out.empty() ? runs : out_dir, std::cerr);
    }
  } catch (const hope::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
