#include "hopelab/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hopelab/checkpoint.hpp"
#include "hopelab/decomp.hpp"
#include "hopelab/error.hpp"
#include "hopelab/vaf_training.hpp"

namespace fs = std::filesystem;

namespace hope {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "model.num_layers",  "model.num_heads",     "model.d_model",      "model.d_head",
      "model.vocab_size",  "model.train_length",  "model.mlp_hidden",   "model.encoding",
      "model.rope_base",   "model.position_scale", "train.learning_rate", "train.warmup_steps",
      "train.total_steps", "train.batch_size",    "train.gradient_clip", "train.weight_decay",
      "train.beta1",       "train.beta2",         "train.adam_eps",     "train.schedule",
      "train.checkpoint_every", "data.markov_order", "data.markov_support", "data.markov_seed",
      "data.mix_markov",   "data.mix_copy",       "data.mix_follow",    "data.early_steps",
      "data.early_mix_markov", "data.early_mix_copy", "data.early_mix_follow", "eval.copy_counts",
      "eval.copy_samples", "eval.follow_lengths", "eval.follow_samples", "eval.ppl_lengths",
      "eval.ppl_tail",     "eval.ppl_samples",    "eval.seed",          "probe.samples",
      "probe.length",      "probe.test_length",   "probe.query",        "probe.seed",
      "run.seeds",         "run.out"};
  return keys;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& items) {
  std::vector<std::string> s;
  for (const auto& v : items) s.push_back(std::to_string(v));
  return join(s);
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

std::string step_file(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%08" PRId64 ".ckpt", step);
  return buf;
}

std::string csv_curve(const ProbeCurve& c) {
  std::string out = "position,value\n";
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    out += std::to_string(c.positions[i]) + "," + fmt_double(c.values[i], 17) + "\n";
  }
  return out;
}

ChartSeries series_of(const ProbeCurve& c, std::string label) {
  ChartSeries s;
  s.label = std::move(label);
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    s.x.push_back(c.positions[i]);
    s.y.push_back(c.values[i]);
  }
  return s;
}

nlohmann::json curve_meta(const ProbeCurve& c, const std::string& file) {
  return {{"file", file},          {"scope", to_string(c.scope)}, {"layer", c.layer},
          {"head", c.head},        {"query", to_string(c.mode)},  {"samples", c.sample_count}};
}

int probe_length(const ExperimentConfig& cfg, const ModelConfig& model) {
  return cfg.probe.length > 0 ? cfg.probe.length : model.train_length;
}

}  // namespace

// ------------------------------------------------------------ configuration

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.encodings = {EncodingTag::RoPE};
  return c;
}

ExperimentConfig ExperimentConfig::from_flat(const FlatConfig& f) {
  for (const auto& [key, value] : f.values()) {
    if (!known_keys().count(key)) throw ConfigError(key, "unknown key");
  }
  ExperimentConfig c;
  auto& m = c.model;
  m.num_layers = f.integer_or("model.num_layers", m.num_layers);
  m.num_heads = f.integer_or("model.num_heads", m.num_heads);
  m.d_model = f.integer_or("model.d_model", m.d_model);
  m.d_head = f.integer_or("model.d_head", m.d_head);
  m.vocab_size = f.integer_or("model.vocab_size", m.vocab_size);
  m.train_length = f.integer_or("model.train_length", m.train_length);
  m.mlp_hidden = f.integer_or("model.mlp_hidden", m.mlp_hidden);
  m.encoding.rope_base = f.real_or("model.rope_base", m.encoding.rope_base);
  m.position_scale = f.real_or("model.position_scale", m.position_scale);
  for (const auto& name : f.list("model.encoding")) {
    try {
      const auto tag = parse_encoding(name);
      if (std::find(c.encodings.begin(), c.encodings.end(), tag) == c.encodings.end()) {
        c.encodings.push_back(tag);
      }
    } catch (const InvalidArgument&) {
      throw ConfigError("model.encoding", "unknown encoding '" + name + "'");
    }
  }
  m.encoding.tag = c.encodings.front();

  auto& t = c.train;
  t.total_steps = f.integer("train.total_steps");
  t.learning_rate = f.real_or("train.learning_rate", t.learning_rate);
  t.warmup_steps = f.integer_or("train.warmup_steps", std::min(t.warmup_steps, t.total_steps));
  t.batch_size = f.integer_or("train.batch_size", t.batch_size);
  t.gradient_clip = f.real_or("train.gradient_clip", t.gradient_clip);
  t.weight_decay = f.real_or("train.weight_decay", t.weight_decay);
  t.beta1 = f.real_or("train.beta1", t.beta1);
  t.beta2 = f.real_or("train.beta2", t.beta2);
  t.adam_eps = f.real_or("train.adam_eps", t.adam_eps);
  t.checkpoint_every = f.integer_or("train.checkpoint_every", t.checkpoint_every);
  const auto schedule = f.str_or("train.schedule", "constant");
  require(schedule == "constant" || schedule == "cosine", "train.schedule",
          "expected constant or cosine");
  t.schedule = schedule == "cosine" ? LrSchedule::Cosine : LrSchedule::Constant;

  auto& d = c.data;
  d.markov_order = f.integer_or("data.markov_order", d.markov_order);
  d.markov_support = f.integer_or("data.markov_support", d.markov_support);
  if (f.has("data.markov_seed")) d.markov_seed = f.u64("data.markov_seed");
  d.mixture.markov = f.real_or("data.mix_markov", d.mixture.markov);
  d.mixture.copy = f.real_or("data.mix_copy", d.mixture.copy);
  d.mixture.follow = f.real_or("data.mix_follow", d.mixture.follow);
  d.early_steps = f.integer_or("data.early_steps", d.early_steps);
  d.early_mixture.markov = f.real_or("data.early_mix_markov", d.early_mixture.markov);
  d.early_mixture.copy = f.real_or("data.early_mix_copy", d.early_mixture.copy);
  d.early_mixture.follow = f.real_or("data.early_mix_follow", d.early_mixture.follow);

  auto& e = c.eval;
  if (f.has("eval.copy_counts")) e.copy_counts = f.int_list("eval.copy_counts");
  e.copy_samples = f.integer_or("eval.copy_samples", e.copy_samples);
  if (f.has("eval.follow_lengths")) e.follow_lengths = f.int_list("eval.follow_lengths");
  e.follow_samples = f.integer_or("eval.follow_samples", e.follow_samples);
  if (f.has("eval.ppl_lengths")) e.ppl_lengths = f.int_list("eval.ppl_lengths");
  e.ppl_tail = f.integer_or("eval.ppl_tail", e.ppl_tail);
  e.ppl_samples = f.integer_or("eval.ppl_samples", e.ppl_samples);
  if (f.has("eval.seed")) e.seed = f.u64("eval.seed");

  auto& p = c.probe;
  p.samples = f.integer_or("probe.samples", p.samples);
  p.length = f.integer_or("probe.length", p.length);
  p.test_length = f.integer_or("probe.test_length", p.test_length);
  if (f.has("probe.seed")) p.seed = f.u64("probe.seed");
  const auto query = f.str_or("probe.query", "last");
  require(query == "last" || query == "relative", "probe.query", "expected last or relative");
  p.query = query == "last" ? QueryMode::Last : QueryMode::AllRelative;

  if (f.has("run.seeds")) c.seeds = f.u64_list("run.seeds");
  c.out_dir = f.str_or("run.out", c.out_dir.string());

  // Cross-field checks, reported against the most specific key.
  // validate() messages read "<section> config: <field> ...".
  auto field_from = [](const std::string& section, const std::string& msg) {
    const auto colon = msg.find(": ");
    std::string key = msg.substr(colon + 2, msg.find(' ', colon + 2) - colon - 2);
    if (key == "betas") key = "beta1";
    return section + "." + key;
  };
  try {
    m.validate();
  } catch (const InvalidArgument& ex) {
    throw ConfigError(field_from("model", ex.what()), ex.what());
  }
  try {
    t.validate();
  } catch (const InvalidArgument& ex) {
    throw ConfigError(field_from("train", ex.what()), ex.what());
  }
  require(m.vocab_size >= Vocabulary{}.content_begin + 2, "model.vocab_size",
          "must be >= " + std::to_string(Vocabulary{}.content_begin + 2) +
              " to hold the task token regions");
  require(d.markov_order >= 1 && d.markov_order <= 3, "data.markov_order", "must be in [1, 3]");
  require(d.markov_support >= 1 && d.markov_support <= Vocabulary{}.markov_size,
          "data.markov_support", "must be in [1, 32]");
  require(d.mixture.markov >= 0 && d.mixture.copy >= 0 && d.mixture.follow >= 0 &&
              d.mixture.markov + d.mixture.copy + d.mixture.follow > 0,
          "data.mix_markov", "mixture weights must be >= 0 with a positive sum");
  require(d.early_steps >= 0, "data.early_steps", "must be >= 0");
  require(d.early_mixture.markov >= 0 && d.early_mixture.copy >= 0 && d.early_mixture.follow >= 0 &&
              d.early_mixture.markov + d.early_mixture.copy + d.early_mixture.follow > 0,
          "data.early_mix_markov", "mixture weights must be >= 0 with a positive sum");
  if (d.mixture.follow > 0) {
    FollowTaskSpec fs;
    require(fs.fixed_length() + 1 <= m.train_length, "data.mix_follow",
            "train_length too short for few-shot rows");
  }
  if (d.early_steps > 0 && d.early_mixture.follow > 0) {
    require(FollowTaskSpec{}.fixed_length() + 1 <= m.train_length, "data.early_mix_follow",
            "train_length too short for few-shot rows");
  }
  for (int n : e.copy_counts) require(n >= 1, "eval.copy_counts", "counts must be >= 1");
  for (int l : e.follow_lengths) {
    require(l >= FollowTaskSpec{}.fixed_length(), "eval.follow_lengths",
            "lengths must be >= " + std::to_string(FollowTaskSpec{}.fixed_length()));
  }
  for (int l : e.ppl_lengths) {
    require(l > e.ppl_tail, "eval.ppl_lengths", "lengths must exceed eval.ppl_tail");
  }
  require(e.ppl_tail >= 1, "eval.ppl_tail", "must be >= 1");
  require(e.copy_samples >= 1, "eval.copy_samples", "must be >= 1");
  require(e.follow_samples >= 1, "eval.follow_samples", "must be >= 1");
  require(e.ppl_samples >= 1, "eval.ppl_samples", "must be >= 1");
  require(p.samples >= 1, "probe.samples", "must be >= 1");
  require(p.length == 0 || p.length >= 2, "probe.length", "must be 0 (train_length) or >= 2");
  const int plen = p.length > 0 ? p.length : m.train_length;
  require(p.test_length == 0 || p.test_length >= plen, "probe.test_length",
          "must be 0 or >= the probe length");
  require(!c.seeds.empty(), "run.seeds", "empty seed list");
  if (std::find(c.encodings.begin(), c.encodings.end(), EncodingTag::LearnableAPE) !=
      c.encodings.end()) {
    require(plen <= m.train_length, "probe.length",
            "learnable absolute positions cannot probe past model.train_length");
  }
  return c;
}

std::string ExperimentConfig::to_text() const {
  std::vector<std::string> enc;
  for (auto t : encodings) enc.emplace_back(to_string(t));
  std::ostringstream o;
  auto kv = [&](const std::string& k, const std::string& v) { o << k << " = " << v << '\n'; };
  kv("model.num_layers", std::to_string(model.num_layers));
  kv("model.num_heads", std::to_string(model.num_heads));
  kv("model.d_model", std::to_string(model.d_model));
  kv("model.d_head", std::to_string(model.d_head));
  kv("model.vocab_size", std::to_string(model.vocab_size));
  kv("model.train_length", std::to_string(model.train_length));
  kv("model.mlp_hidden", std::to_string(model.mlp_hidden));
  kv("model.encoding", join(enc));
  kv("model.rope_base", fmt_double(model.encoding.rope_base, 17));
  kv("model.position_scale", fmt_double(model.position_scale, 17));
  kv("train.learning_rate", fmt_double(train.learning_rate, 17));
  kv("train.warmup_steps", std::to_string(train.warmup_steps));
  kv("train.total_steps", std::to_string(train.total_steps));
  kv("train.batch_size", std::to_string(train.batch_size));
  kv("train.gradient_clip", fmt_double(train.gradient_clip, 17));
  kv("train.weight_decay", fmt_double(train.weight_decay, 17));
  kv("train.beta1", fmt_double(train.beta1, 17));
  kv("train.beta2", fmt_double(train.beta2, 17));
  kv("train.adam_eps", fmt_double(train.adam_eps, 17));
  kv("train.schedule", train.schedule == LrSchedule::Cosine ? "cosine" : "constant");
  kv("train.checkpoint_every", std::to_string(train.checkpoint_every));
  kv("data.markov_order", std::to_string(data.markov_order));
  kv("data.markov_support", std::to_string(data.markov_support));
  kv("data.markov_seed", std::to_string(data.markov_seed));
  kv("data.mix_markov", fmt_double(data.mixture.markov, 17));
  kv("data.mix_copy", fmt_double(data.mixture.copy, 17));
  kv("data.mix_follow", fmt_double(data.mixture.follow, 17));
  kv("data.early_steps", std::to_string(data.early_steps));
  kv("data.early_mix_markov", fmt_double(data.early_mixture.markov, 17));
  kv("data.early_mix_copy", fmt_double(data.early_mixture.copy, 17));
  kv("data.early_mix_follow", fmt_double(data.early_mixture.follow, 17));
  kv("eval.copy_counts", join_numbers(eval.copy_counts));
  kv("eval.copy_samples", std::to_string(eval.copy_samples));
  kv("eval.follow_lengths", join_numbers(eval.follow_lengths));
  kv("eval.follow_samples", std::to_string(eval.follow_samples));
  kv("eval.ppl_lengths", join_numbers(eval.ppl_lengths));
  kv("eval.ppl_tail", std::to_string(eval.ppl_tail));
  kv("eval.ppl_samples", std::to_string(eval.ppl_samples));
  kv("eval.seed", std::to_string(eval.seed));
  kv("probe.samples", std::to_string(probe.samples));
  kv("probe.length", std::to_string(probe.length));
  kv("probe.test_length", std::to_string(probe.test_length));
  kv("probe.query", probe.query == QueryMode::Last ? "last" : "relative");
  kv("probe.seed", std::to_string(probe.seed));
  kv("run.seeds", join_numbers(seeds));
  kv("run.out", out_dir.string());
  return o.str();
}

Vocabulary ExperimentConfig::vocab() const {
  Vocabulary v;
  v.size = model.vocab_size;
  return v;
}

MarkovSource ExperimentConfig::markov() const {
  const auto v = vocab();
  return MarkovSource(v.markov_size, data.markov_order, data.markov_seed, v.markov_begin,
                      data.markov_support);
}

ModelConfig ExperimentConfig::model_for(EncodingTag tag) const {
  ModelConfig m = model;
  m.encoding.tag = tag;
  return m;
}

std::string run_name(EncodingTag tag, std::uint64_t seed) {
  return std::string(to_string(tag)) + "_seed" + std::to_string(seed);
}

std::string config_digest(const ModelConfig& config) {
  const std::string s = to_json(config).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

// --------------------------------------------------------------------- train

namespace {

// Keeps metrics rows up to and including `last_step`.
void truncate_metrics(const fs::path& path, std::int64_t last_step) {
  if (!fs::exists(path)) {
    std::ofstream out(path, std::ios::binary);
    write_metrics_csv_header(out);
    return;
  }
  std::ifstream in(path, std::ios::binary);
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    try {
      if (std::stoll(line.substr(0, comma)) <= last_step) kept += line + "\n";
    } catch (const std::exception&) {
    }
  }
  in.close();
  write_text_file(path, kept);
}

void train_one(const ExperimentConfig& cfg, EncodingTag tag, std::uint64_t seed,
               const Checkpoint* resume, std::ostream& log) {
  const fs::path dir = cfg.out_dir / run_name(tag, seed);
  fs::create_directories(dir / "checkpoints");
  const ModelConfig mc = cfg.model_for(tag);
  TrainConfig tc = cfg.train;
  tc.seed = seed;

  const MarkovSource source = cfg.markov();
  TaskMixtureStream stream(source, cfg.vocab(), mc.train_length, cfg.data.mixture,
                           cfg.data.early_steps, cfg.data.early_mixture);

  const fs::path metrics_path = dir / "metrics.csv";
  if (resume) {
    truncate_metrics(metrics_path, resume->step);
  } else {
    write_text_file(dir / "config.txt", cfg.to_text());
    std::ofstream hdr(metrics_path, std::ios::binary | std::ios::trunc);
    write_metrics_csv_header(hdr);
  }
  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::app);
  if (!metrics) throw std::runtime_error("cannot open " + metrics_path.string());

  log << "train " << run_name(tag, seed) << ": " << tc.total_steps << " steps"
      << (resume ? " (resuming at step " + std::to_string(resume->step) + ")" : "") << '\n';
  TrainHooks hooks;
  hooks.on_step = [&](const StepMetrics& m) {
    write_metrics_csv_row(metrics, m);
    if (m.step % 100 == 0 || m.step == tc.total_steps) {
      log << "  step " << m.step << " loss " << fmt_double(m.loss, 5) << '\n';
    }
  };
  hooks.on_checkpoint = [&](const Checkpoint& c) {
    save_checkpoint(c, (dir / "checkpoints" / step_file(c.step)).string());
  };
  const Checkpoint final_ckpt = train(mc, tc, stream, hooks, resume);
  metrics.flush();
  save_checkpoint(final_ckpt, (dir / "checkpoints" / step_file(final_ckpt.step)).string());
  save_checkpoint(final_ckpt, (dir / "final.ckpt").string());
}

}  // namespace

void cmd_train(const ExperimentConfig& cfg, const std::optional<fs::path>& resume,
               std::ostream& log) {
  if (resume) {
    const Checkpoint ckpt = load_checkpoint(resume->string());
    const auto tag = ckpt.model.encoding.tag;
    if (!cfg.model_for(tag).same_shape(ckpt.model)) {
      throw ShapeMismatch("checkpoint architecture differs from the configured model");
    }
    if (ckpt.step >= cfg.train.total_steps) {
      throw InvalidArgument("checkpoint is already at step " + std::to_string(ckpt.step));
    }
    train_one(cfg, tag, ckpt.train.seed, &ckpt, log);
    return;
  }
  for (auto tag : cfg.encodings) {
    for (auto seed : cfg.seeds) train_one(cfg, tag, seed, nullptr, log);
  }
}

// --------------------------------------------------------------------- probe

void cmd_probe(const ExperimentConfig& cfg, const ProbeOptions& opt, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint.string());
  const auto model = restore_model<double>(ckpt);
  const auto& mc = model.config();
  const int length = probe_length(cfg, mc);
  if (mc.encoding.tag == EncodingTag::LearnableAPE && length > mc.train_length) {
    throw InvalidArgument("probe length " + std::to_string(length) +
                          " exceeds the learnable-APE range of " +
                          std::to_string(mc.train_length));
  }
  const auto batch = gen_probe_batch(mc.vocab_size, length, cfg.probe.samples, cfg.probe.seed);
  const auto pattern = attention_pattern(model, batch, cfg.probe.query);

  fs::create_directories(opt.out);
  nlohmann::json curves = nlohmann::json::array();
  auto emit = [&](const ProbeCurve& c, const std::string& file) {
    write_text_file(opt.out / file, csv_curve(c));
    curves.push_back(curve_meta(c, file));
  };
  emit(pattern.all, "probe_all.csv");
  std::vector<ChartSeries> chart{series_of(pattern.all, "all layers/heads")};
  for (const auto& c : pattern.per_layer) {
    emit(c, "probe_layer" + std::to_string(c.layer) + ".csv");
    chart.push_back(series_of(c, "layer " + std::to_string(c.layer)));
  }
  for (const auto& c : pattern.per_head) {
    emit(c, "probe_layer" + std::to_string(c.layer) + "_head" + std::to_string(c.head) + ".csv");
  }
  const nlohmann::json manifest{{"model", to_json(mc)},
                                {"config_digest", config_digest(mc)},
                                {"checkpoint_step", ckpt.step},
                                {"seed", cfg.probe.seed},
                                {"samples", cfg.probe.samples},
                                {"length", length},
                                {"query", to_string(cfg.probe.query)},
                                {"curves", curves}};
  write_text_file(opt.out / "probe_manifest.json", manifest.dump(2) + "\n");
  write_text_file(opt.out / "probe_all.svg",
                  svg_line_chart(chart, "Mean attention logit (" + std::string(to_string(mc.encoding.tag)) + ")",
                                 cfg.probe.query == QueryMode::Last ? "key position"
                                                                    : "relative distance",
                                 "logit"));
  log << "probe: wrote " << curves.size() << " curves to " << opt.out.string() << '\n';
}

// ----------------------------------------------------------------- decompose

void cmd_decompose(const ExperimentConfig& cfg, const DecomposeOptions& opt, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint.string());
  const auto model = restore_model<double>(ckpt);
  const auto& mc = model.config();
  const int length = probe_length(cfg, mc);
  const auto batch = gen_probe_batch(mc.vocab_size, length, cfg.probe.samples, cfg.probe.seed);
  const auto cp = component_pattern(model, batch, opt.layer);

  const int test_length = cfg.probe.test_length > 0 ? cfg.probe.test_length : 2 * length;
  const auto extra =
      extrapolation_report(model, length, test_length, cfg.probe.samples, cfg.probe.seed);
  const std::set<int> flagged(extra.flagged.begin(), extra.flagged.end());

  fs::create_directories(opt.out);
  const auto spectrum = build_spectrum(mc.encoding.rope_base, mc.d_head);
  std::vector<ComponentReportRow> rows;
  std::vector<ChartSeries> chart{series_of(cp.total, "total")};
  write_text_file(opt.out / "component_total.csv", csv_curve(cp.total));
  for (std::size_t i = 0; i < cp.components.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "component_%02zu.csv", i);
    write_text_file(opt.out / name, csv_curve(cp.components[i]));
    ComponentReportRow row;
    row.index = static_cast<int>(i);
    row.theta = cp.freqs[i];
    row.band = classify_theta(spectrum.thetas[i], mc.train_length);
    row.curve_file = name;
    try {
      row.vaf = vaf(cp.total.values, cp.components[i].values);
    } catch (const DegenerateInput&) {
      row.vaf.reset();
    }
    row.ood_flag = flagged.count(static_cast<int>(i)) > 0;
    rows.push_back(row);
    chart.push_back(series_of(cp.components[i], "c" + std::to_string(i)));
  }
  {
    std::ostringstream csv;
    write_component_report_csv(csv, rows);
    write_text_file(opt.out / "components.csv", csv.str());
  }
  write_text_file(opt.out / "components.svg",
                  svg_line_chart(chart, "Component contributions", "key position", "logit"));

  nlohmann::json ex{{"train_length", extra.train_length},
                    {"test_length", extra.test_length},
                    {"phase_flags", extra.phase_flags},
                    {"envelope_flags", extra.envelope_flags},
                    {"flagged", extra.flagged},
                    {"config_digest", config_digest(mc)},
                    {"seed", cfg.probe.seed},
                    {"samples", cfg.probe.samples}};
  write_text_file(opt.out / "extrapolation.json", ex.dump(2) + "\n");

  if (opt.series_dir) {
    std::vector<fs::path> files;
    const fs::path dir = *opt.series_dir / "checkpoints";
    if (!fs::is_directory(dir)) throw FormatError("no checkpoints directory in " + opt.series_dir->string());
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".ckpt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Checkpoint> ckpts;
    for (const auto& p : files) ckpts.push_back(load_checkpoint(p.string()));
    const auto series = vaf_over_training(ckpts, batch);
    std::string csv = "step,component,vaf\n";
    for (const auto& pt : series) {
      for (std::size_t i = 0; i < pt.components.size(); ++i) {
        csv += std::to_string(pt.step) + "," + std::to_string(pt.components[i]) + "," +
               fmt_double(pt.vaf[i], 17) + "\n";
      }
    }
    write_text_file(opt.out / "vaf_series.csv", csv);
  }
  log << "decompose: " << rows.size() << " components, " << extra.flagged.size()
      << " flagged at test length " << test_length << '\n';
}

// ---------------------------------------------------------- classify / phase

namespace {

struct ResolvedSpectrum {
  RotarySpectrum spectrum;
  int train_length;
  std::vector<double> freqs;
};

ResolvedSpectrum resolve(const SpectrumSource& src) {
  if (src.checkpoint) {
    const Checkpoint ckpt = load_checkpoint(src.checkpoint->string());
    const auto model = restore_model<double>(ckpt);
    const auto& mc = model.config();
    if (!is_rotary_family(mc.encoding.tag)) {
      throw InvalidArgument("spectrum analysis needs a rotary-family checkpoint");
    }
    return {build_spectrum(mc.encoding.rope_base, mc.d_head), mc.train_length,
            model.frequencies()};
  }
  if (!is_rotary_family(src.encoding)) {
    throw InvalidArgument("spectrum analysis needs a rotary-family encoding");
  }
  if (src.train_length < 1) throw InvalidArgument("train length must be >= 1");
  auto spectrum = build_spectrum(src.base, src.head_dim);
  auto freqs = rotary_frequencies(src.encoding, spectrum, src.train_length);
  return {std::move(spectrum), src.train_length, std::move(freqs)};
}

}  // namespace

void cmd_classify(const SpectrumSource& src, const fs::path& out, std::ostream& os,
                  std::ostream& log) {
  const auto r = resolve(src);
  const auto classes = classify_components(r.spectrum, r.train_length);
  std::string csv = "index,theta,band\n";
  for (const auto& c : classes) {
    csv += std::to_string(c.index) + "," + fmt_double(c.theta, 17) + "," +
           std::string(to_string(c.band)) + "\n";
  }
  os << csv;
  fs::create_directories(out);
  write_text_file(out / "classify.csv", csv);
  write_text_file(out / "partition.json",
                  partition_to_json(partition_for_hope(r.spectrum, r.train_length)) + "\n");
  for (auto band : {FrequencyBand::HighFrequency, FrequencyBand::Activated,
                    FrequencyBand::LowFrequency}) {
    const auto members = band_members(classes, band);
    log << to_string(band) << ": " << members.size() << " components";
    if (!members.empty()) log << " [" << members.front() << ".." << members.back() << "]";
    log << '\n';
  }
}

void cmd_phase(const SpectrumSource& src, int test_length, const fs::path& out, std::ostream& os,
               std::ostream& log) {
  const auto r = resolve(src);
  if (test_length < r.train_length) {
    throw InvalidArgument("test length must be >= train length");
  }
  const auto reports = phase_coverage(r.freqs, r.train_length, test_length);
  std::string all = "index,theta,train_phase_max,test_phase_max,ood_flag\n";
  std::string ood = all;
  for (const auto& p : reports) {
    const std::string row = std::to_string(p.index) + "," + fmt_double(p.theta, 17) + "," +
                            fmt_double(p.train_phase_max, 17) + "," +
                            fmt_double(p.test_phase_max, 17) + "," + (p.ood_flag ? "1" : "0") +
                            "\n";
    all += row;
    if (p.ood_flag) ood += row;
  }
  os << ood;
  fs::create_directories(out);
  write_text_file(out / "phase.csv", all);
  write_text_file(out / "ood.csv", ood);
  log << "phase: " << ood_indices(reports).size() << " components flagged\n";
}

// ---------------------------------------------------------------------- eval

std::string to_string(EvalTask task) {
  switch (task) {
    case EvalTask::Copy: return "copy";
    case EvalTask::Follow: return "follow";
    case EvalTask::Ppl: return "ppl";
  }
  return "copy";
}

std::vector<EvalRow> evaluate_model(const Transformer<float>& model, const ExperimentConfig& cfg,
                                    EvalTask task, const std::string& seed_label,
                                    std::ostream& log) {
  const auto& mc = model.config();
  const bool bounded = mc.encoding.tag == EncodingTag::LearnableAPE;
  const TransformerLM<float> lm(model);
  const Vocabulary vocab = cfg.vocab();
  const MarkovSource source = cfg.markov();
  std::vector<EvalRow> rows;
  auto skip = [&](int point, int needed) {
    log << "  skip " << to_string(task) << " point " << point << ": needs " << needed
        << " positions, model addresses " << mc.train_length << '\n';
  };
  switch (task) {
    case EvalTask::Copy:
      for (int n : cfg.eval.copy_counts) {
        CopyTaskSpec spec;
        spec.num_sequences = n;
        spec.samples = cfg.eval.copy_samples;
        spec.vocab = vocab;
        const int needed = spec.input_length() + spec.suffix_len - 1;
        if (bounded && needed > mc.train_length) {
          skip(n, needed);
          continue;
        }
        const double acc = eval_copy(lm, spec, derive_seed(cfg.eval.seed, 100 + n));
        rows.push_back({"copy", n, "accuracy", acc, seed_label});
      }
      break;
    case EvalTask::Follow:
      for (int len : cfg.eval.follow_lengths) {
        FollowTaskSpec spec;
        spec.samples = cfg.eval.follow_samples;
        spec.vocab = vocab;
        spec.filler_budget = spec.filler_for_length(len);
        if (bounded && spec.input_length() > mc.train_length) {
          skip(len, spec.input_length());
          continue;
        }
        const double fa = eval_follow(lm, spec, source, derive_seed(cfg.eval.seed, 10000 + len));
        rows.push_back({"follow", len, "fa", fa, seed_label});
      }
      break;
    case EvalTask::Ppl: {
      // One corpus at the longest length; shorter inputs are its prefixes.
      const int longest =
          *std::max_element(cfg.eval.ppl_lengths.begin(), cfg.eval.ppl_lengths.end());
      const auto corpus =
          markov_corpus(source, vocab, {longest, cfg.eval.ppl_tail, cfg.eval.ppl_samples},
                        derive_seed(cfg.eval.seed, 3));
      for (int len : cfg.eval.ppl_lengths) {
        if (bounded && len > mc.train_length) {
          skip(len, len);
          continue;
        }
        const PplConfig pc{len, cfg.eval.ppl_tail, cfg.eval.ppl_samples};
        rows.push_back({"ppl", len, "ppl", eval_ppl(lm, corpus, pc), seed_label});
      }
      break;
    }
  }
  return rows;
}

void cmd_eval(const ExperimentConfig& cfg, const fs::path& runs,
              const std::vector<EvalTask>& tasks, const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  for (auto task : tasks) {
    // encoding -> point -> mean, for the comparison table.
    std::vector<std::pair<std::string, std::vector<EvalRow>>> means;
    for (auto tag : cfg.encodings) {
      std::vector<EvalRow> rows;
      for (auto seed : cfg.seeds) {
        const fs::path ckpt_path = runs / run_name(tag, seed) / "final.ckpt";
        if (!fs::exists(ckpt_path)) throw FormatError("missing checkpoint " + ckpt_path.string());
        const auto model = restore_model<float>(load_checkpoint(ckpt_path.string()));
        if (!cfg.model_for(tag).same_shape(model.config())) {
          throw ShapeMismatch(ckpt_path.string() + " does not match the configured model");
        }
        log << "eval " << to_string(task) << " " << run_name(tag, seed) << '\n';
        auto r = evaluate_model(model, cfg, task, std::to_string(seed), log);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      std::map<int, std::pair<double, int>> acc;
      std::vector<int> order;
      std::string metric;
      for (const auto& r : rows) {
        if (!acc.count(r.length_or_n)) order.push_back(r.length_or_n);
        acc[r.length_or_n].first += r.value;
        acc[r.length_or_n].second += 1;
        metric = r.metric;
      }
      std::vector<EvalRow> mean_rows;
      for (int p : order) {
        mean_rows.push_back(
            {to_string(task), p, metric, acc[p].first / acc[p].second, "mean"});
      }
      rows.insert(rows.end(), mean_rows.begin(), mean_rows.end());
      std::ostringstream csv;
      write_eval_csv(csv, rows);
      write_text_file(out / ("eval_" + to_string(task) + "_" + std::string(to_string(tag)) + ".csv"),
                      csv.str());
      means.emplace_back(std::string(to_string(tag)), std::move(mean_rows));
    }
    if (means.size() >= 2) {
      std::vector<int> points;
      for (const auto& r : means.front().second) points.push_back(r.length_or_n);
      std::string csv = "method";
      for (int p : points) csv += "," + std::to_string(p);
      csv += task == EvalTask::Ppl ? ",growth\n" : ",avg\n";
      for (const auto& [name, rows] : means) {
        csv += name;
        double sum = 0.0;
        for (int p : points) {
          const auto it = std::find_if(rows.begin(), rows.end(),
                                       [&](const EvalRow& r) { return r.length_or_n == p; });
          const double v = it == rows.end() ? std::nan("") : it->value;
          char buf[32];
          std::snprintf(buf, sizeof buf, ",%.2f", v);
          csv += buf;
          sum += v;
        }
        double tail;
        if (task == EvalTask::Ppl) {
          tail = rows.size() >= 2 ? rows.back().value / rows.front().value : std::nan("");
        } else {
          tail = sum / static_cast<double>(points.size());
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, task == EvalTask::Ppl ? ",%.4f\n" : ",%.2f\n", tail);
        csv += buf;
      }
      write_text_file(out / ("comparison_" + to_string(task) + ".csv"), csv);
    }
  }
}

// -------------------------------------------------------------------- report

namespace {

struct RunSummary {
  std::string name;
  std::string encoding;
  std::string seed;
  fs::path dir;
  CsvTable metrics;
};

std::pair<std::string, std::string> split_run_name(const std::string& name) {
  const auto pos = name.rfind("_seed");
  if (pos == std::string::npos) return {name, ""};
  return {name.substr(0, pos), name.substr(pos + 5)};
}

}  // namespace

void cmd_report(const fs::path& runs, const fs::path& out, std::ostream& log) {
  if (!fs::is_directory(runs)) throw InvalidArgument(runs.string() + " is not a directory");
  std::vector<RunSummary> found;
  const std::vector<std::string> numeric{"step", "loss", "grad_norm", "learning_rate"};
  auto add_run = [&](const fs::path& dir) {
    RunSummary r;
    r.dir = dir;
    r.name = dir.filename().string();
    if (r.name.empty()) r.name = dir.parent_path().filename().string();
    std::tie(r.encoding, r.seed) = split_run_name(r.name);
    r.metrics = read_csv(dir / "metrics.csv", numeric);
    found.push_back(std::move(r));
  };
  if (fs::exists(runs / "metrics.csv")) {
    add_run(runs);
  } else {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(runs)) {
      if (e.is_directory() && fs::exists(e.path() / "metrics.csv")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) add_run(d);
  }
  std::vector<fs::path> eval_files;
  for (const auto& e : fs::directory_iterator(runs)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("eval_", 0) == 0 && e.path().extension() == ".csv") {
      eval_files.push_back(e.path());
    }
  }
  std::sort(eval_files.begin(), eval_files.end());
  if (found.empty() && eval_files.empty()) {
    throw InvalidArgument(runs.string() + " holds no runs or evaluation files");
  }

  int skipped = 0;
  nlohmann::json jruns = nlohmann::json::array();
  std::map<std::string, std::vector<const RunSummary*>> by_encoding;
  std::vector<ChartSeries> loss_chart;
  for (const auto& r : found) {
    skipped += r.metrics.skipped;
    nlohmann::json j{{"name", r.name}, {"encoding", r.encoding}, {"seed", r.seed}};
    if (!r.metrics.rows.empty()) {
      const int cs = column_index(r.metrics, "step"), cl = column_index(r.metrics, "loss");
      const int cg = column_index(r.metrics, "grad_norm");
      const int clr = column_index(r.metrics, "learning_rate");
      const auto& last = r.metrics.rows.back();
      double min_loss = std::stod(last[cl]);
      ChartSeries s;
      s.label = r.name;
      for (const auto& row : r.metrics.rows) {
        const double loss = std::stod(row[cl]);
        min_loss = std::min(min_loss, loss);
        s.x.push_back(std::stod(row[cs]));
        s.y.push_back(loss);
      }
      j["steps"] = std::stoll(last[cs]);
      j["final_loss"] = std::stod(last[cl]);
      j["min_loss"] = min_loss;
      j["final_grad_norm"] = std::stod(last[cg]);
      j["final_learning_rate"] = std::stod(last[clr]);
      loss_chart.push_back(std::move(s));
      by_encoding[r.encoding].push_back(&r);
    }
    j["skipped_rows"] = r.metrics.skipped;
    jruns.push_back(j);
  }

  nlohmann::json jenc = nlohmann::json::object();
  for (const auto& [enc, list] : by_encoding) {
    double fl = 0.0, ml = 0.0;
    for (const auto* r : list) {
      const int cl = column_index(r->metrics, "loss");
      double mn = std::stod(r->metrics.rows.back()[cl]);
      for (const auto& row : r->metrics.rows) mn = std::min(mn, std::stod(row[cl]));
      fl += std::stod(r->metrics.rows.back()[cl]);
      ml += mn;
    }
    jenc[enc]["runs"] = list.size();
    jenc[enc]["final_loss_mean"] = fl / list.size();
    jenc[enc]["min_loss_mean"] = ml / list.size();
  }

  // eval_<task>_<encoding>.csv mean rows.
  std::map<std::string, std::map<std::string, std::map<int, double>>> eval_means;  // task/enc/pt
  for (const auto& f : eval_files) {
    const auto stem = f.stem().string().substr(5);
    const auto us = stem.find('_');
    if (us == std::string::npos) continue;
    const std::string task = stem.substr(0, us), enc = stem.substr(us + 1);
    const auto t = read_csv(f, {"length_or_N", "value"});
    skipped += t.skipped;
    const int cp = column_index(t, "length_or_N"), cv = column_index(t, "value");
    const int cseed = column_index(t, "seed");
    for (const auto& row : t.rows) {
      if (row[cseed] == "mean") eval_means[task][enc][std::stoi(row[cp])] = std::stod(row[cv]);
    }
  }
  nlohmann::json jeval = nlohmann::json::object();
  nlohmann::json jdelta = nlohmann::json::object();
  for (const auto& [task, encs] : eval_means) {
    std::vector<ChartSeries> chart;
    for (const auto& [enc, pts] : encs) {
      ChartSeries s;
      s.label = enc;
      for (const auto& [p, v] : pts) {
        jeval[task][enc][std::to_string(p)] = v;
        s.x.push_back(p);
        s.y.push_back(v);
      }
      chart.push_back(std::move(s));
    }
    if (encs.count("rope") && encs.count("hope")) {
      for (const auto& [p, v] : encs.at("hope")) {
        const auto it = encs.at("rope").find(p);
        if (it != encs.at("rope").end()) jdelta[task][std::to_string(p)] = v - it->second;
      }
    }
    write_text_file(out / ("report_" + task + ".svg"),
                    svg_line_chart(chart, task + " by encoding",
                                   task == "copy" ? "sequence count" : "input length", task));
  }

  nlohmann::json summary{{"runs", jruns},
                         {"encodings", jenc},
                         {"eval", jeval},
                         {"hope_minus_rope", jdelta},
                         {"skipped_rows", skipped}};
  fs::create_directories(out);
  write_text_file(out / "summary.json", summary.dump(2) + "\n");
  if (!loss_chart.empty()) {
    write_text_file(out / "report_loss.svg",
                    svg_line_chart(loss_chart, "Training loss", "step", "loss"));
  }
  if (skipped > 0) log << "report: warning: skipped " << skipped << " malformed CSV rows\n";
  log << "report: " << found.size() << " runs, " << eval_files.size() << " eval files\n";
}

}  // namespace hope
