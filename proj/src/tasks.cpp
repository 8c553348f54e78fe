#include "hopelab/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include <json.hpp>

#include "hopelab/error.hpp"

namespace hope {

void Vocabulary::validate() const {
  if (bos < 0 || sep < 0 || bos == sep || bos >= markov_begin || sep >= markov_begin) {
    throw InvalidArgument("vocabulary: BOS/SEP must be distinct ids below the Markov alphabet");
  }
  if (markov_size < 2 || markov_begin + markov_size > content_begin) {
    throw InvalidArgument("vocabulary: Markov alphabet overlaps the content region");
  }
  if (content_count() < 2) throw InvalidArgument("vocabulary: fewer than 2 content tokens");
}

// ------------------------------------------------------------------ Markov

MarkovSource::MarkovSource(int alphabet, int order, std::uint64_t seed, int token_offset,
                           int support)
    : alphabet_(alphabet), order_(order), offset_(token_offset) {
  if (alphabet < 2) throw InvalidArgument("Markov alphabet must have >= 2 symbols");
  if (order < 1) throw InvalidArgument("Markov order must be >= 1");
  if (support < 1 || support > alphabet) throw InvalidArgument("Markov support out of range");
  double contexts = std::pow(static_cast<double>(alphabet), order);
  if (contexts > 1 << 20) throw InvalidArgument("Markov state space too large");
  contexts_ = static_cast<std::size_t>(contexts);

  Rng rng(seed);
  const auto A = static_cast<std::size_t>(alphabet);
  probs_.assign(contexts_ * A, 0.0);
  for (std::size_t c = 0; c < contexts_; ++c) {
    const int last = static_cast<int>(c % A);
    std::vector<int> succ{(last + 1) % alphabet};
    while (static_cast<int>(succ.size()) < support) {
      const int s = static_cast<int>(rng.below(A));
      if (std::find(succ.begin(), succ.end(), s) == succ.end()) succ.push_back(s);
    }
    double total = 0.0;
    std::vector<double> w(succ.size());
    for (auto& x : w) {
      x = 0.05 + rng.uniform();
      total += x;
    }
    for (std::size_t i = 0; i < succ.size(); ++i) probs_[c * A + succ[i]] = w[i] / total;
  }

  // Power iteration on the lazy chain (same fixed point, always aperiodic).
  std::vector<double> pi(contexts_, 1.0 / contexts_), nxt(contexts_);
  for (int it = 0; it < 100000; ++it) {
    for (std::size_t c = 0; c < contexts_; ++c) nxt[c] = 0.5 * pi[c];
    for (std::size_t c = 0; c < contexts_; ++c) {
      const std::size_t base = (c * A) % contexts_;
      for (std::size_t s = 0; s < A; ++s) {
        const double p = probs_[c * A + s];
        if (p > 0.0) nxt[base + s] += 0.5 * pi[c] * p;
      }
    }
    double diff = 0.0;
    for (std::size_t c = 0; c < contexts_; ++c) diff += std::abs(nxt[c] - pi[c]);
    pi.swap(nxt);
    if (diff < 1e-14) break;
  }
  stationary_ = std::move(pi);
}

std::span<const double> MarkovSource::transition(std::size_t context) const {
  if (context >= contexts_) throw InvalidArgument("Markov context out of range");
  return {probs_.data() + context * alphabet_, static_cast<std::size_t>(alphabet_)};
}

double MarkovSource::entropy_rate() const {
  double h = 0.0;
  for (std::size_t c = 0; c < contexts_; ++c) {
    double hc = 0.0;
    for (double p : transition(c)) {
      if (p > 0.0) hc -= p * std::log(p);
    }
    h += stationary_[c] * hc;
  }
  return h;
}

double MarkovSource::ideal_perplexity() const { return std::exp(entropy_rate()); }

int MarkovSource::draw(std::span<const double> probs, Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_nonzero = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_nonzero = static_cast<int>(i);
    if (u < acc) return last_nonzero;
  }
  return last_nonzero;
}

std::vector<int> MarkovSource::sample(int length, Rng& rng) const {
  if (length < 0) throw InvalidArgument("negative sample length");
  std::vector<int> out;
  out.reserve(length);
  std::size_t ctx = static_cast<std::size_t>(draw(stationary_, rng));
  // Emit the digits of the starting context, oldest first.
  std::vector<int> digits(order_);
  std::size_t t = ctx;
  for (int i = order_ - 1; i >= 0; --i) {
    digits[i] = static_cast<int>(t % alphabet_);
    t /= alphabet_;
  }
  for (int i = 0; i < order_ && static_cast<int>(out.size()) < length; ++i) {
    out.push_back(offset_ + digits[i]);
  }
  while (static_cast<int>(out.size()) < length) {
    const int s = draw(transition(ctx), rng);
    out.push_back(offset_ + s);
    ctx = (ctx * alphabet_ + s) % contexts_;
  }
  return out;
}

// -------------------------------------------------------------------- copy

namespace {

int content_token(const Vocabulary& v, Rng& rng) {
  return v.content_begin + static_cast<int>(rng.below(v.content_count()));
}

}  // namespace

CopyInstance gen_copy_instance(const CopyTaskSpec& spec, Rng& rng) {
  spec.vocab.validate();
  if (spec.num_sequences < 1 || spec.prefix_len < 1 || spec.suffix_len < 1) {
    throw InvalidArgument("copy task: counts and lengths must be >= 1");
  }
  std::set<std::vector<int>> prefixes;
  std::vector<std::vector<int>> seqs;
  const int L = spec.prefix_len + spec.suffix_len;
  for (int n = 0; n < spec.num_sequences; ++n) {
    std::vector<int> s(L);
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == 100) {
        throw InvalidArgument("copy task: vocabulary too small for distinct prefixes");
      }
      for (auto& tok : s) tok = content_token(spec.vocab, rng);
      std::vector<int> p(s.begin(), s.begin() + spec.prefix_len);
      if (prefixes.insert(p).second) break;
    }
    seqs.push_back(std::move(s));
  }
  CopyInstance inst;
  inst.input.reserve(spec.input_length());
  inst.input.push_back(spec.vocab.bos);
  for (const auto& s : seqs) inst.input.insert(inst.input.end(), s.begin(), s.end());
  const auto& q = seqs[spec.query_index()];
  inst.input.insert(inst.input.end(), q.begin(), q.begin() + spec.prefix_len);
  inst.target.assign(q.begin() + spec.prefix_len, q.end());
  return inst;
}

// ------------------------------------------------------------------ follow

int FollowTaskSpec::filler_for_length(int target_length) const {
  return std::max(0, target_length - fixed_length());
}

namespace {

struct Shots {
  std::vector<int> tokens;  // BOS + shots
  std::vector<int> query;   // pattern + SEP
  std::array<int, 2> labels{};
};

Shots make_shots(const FollowTaskSpec& spec, Rng& rng) {
  const Vocabulary& v = spec.vocab;
  Shots out;
  out.labels[0] = content_token(v, rng);
  do {
    out.labels[1] = content_token(v, rng);
  } while (out.labels[1] == out.labels[0]);
  auto pattern = [&] {
    std::vector<int> p(spec.pattern_len);
    for (auto& t : p) {
      do {
        t = content_token(v, rng);
      } while (t == out.labels[0] || t == out.labels[1]);
    }
    return p;
  };
  std::vector<int> which(spec.num_shots);
  for (auto& w : which) w = static_cast<int>(rng.below(2));
  if (spec.num_shots >= 2 &&
      std::all_of(which.begin(), which.end(), [&](int w) { return w == which[0]; })) {
    which[rng.below(spec.num_shots)] ^= 1;
  }
  out.tokens.push_back(v.bos);
  for (int s = 0; s < spec.num_shots; ++s) {
    const auto p = pattern();
    out.tokens.insert(out.tokens.end(), p.begin(), p.end());
    out.tokens.push_back(v.sep);
    out.tokens.push_back(out.labels[which[s]]);
  }
  out.query = pattern();
  out.query.push_back(v.sep);
  return out;
}

}  // namespace

FollowInstance gen_follow_instance(const FollowTaskSpec& spec, const MarkovSource& filler,
                                   Rng& rng) {
  spec.vocab.validate();
  if (spec.num_shots < 1 || spec.pattern_len < 1 || spec.filler_budget < 0) {
    throw InvalidArgument("follow task: invalid shot/pattern/filler sizes");
  }
  Shots shots = make_shots(spec, rng);
  FollowInstance inst;
  inst.input = std::move(shots.tokens);
  const auto fill = filler.sample(spec.filler_budget, rng);
  inst.input.insert(inst.input.end(), fill.begin(), fill.end());
  inst.input.insert(inst.input.end(), shots.query.begin(), shots.query.end());
  inst.label_set = shots.labels;
  return inst;
}

// -------------------------------------------------------------- evaluation

template <typename T>
std::vector<double> TransformerLM<T>::logits(std::span<const int> tokens) const {
  const auto out = model_.forward(tokens, 1, static_cast<int>(tokens.size()));
  return {out.begin(), out.end()};
}

template class TransformerLM<float>;
template class TransformerLM<double>;

namespace {

int argmax_row(const std::vector<double>& logits, std::size_t row, int vocab) {
  const double* r = logits.data() + row * vocab;
  int best = 0;
  for (int i = 1; i < vocab; ++i) {
    if (r[i] > r[best]) best = i;
  }
  return best;
}

}  // namespace

std::vector<int> greedy_decode(const SequenceModel& model, std::vector<int> context, int steps) {
  if (context.empty()) throw InvalidArgument("greedy_decode needs a non-empty context");
  std::vector<int> out;
  for (int s = 0; s < steps; ++s) {
    const auto logits = model.logits(context);
    const int tok = argmax_row(logits, context.size() - 1, model.vocab_size());
    out.push_back(tok);
    context.push_back(tok);
  }
  return out;
}

double eval_copy(const SequenceModel& model, const CopyTaskSpec& spec, std::uint64_t seed) {
  if (spec.samples < 1) throw InvalidArgument("copy task: samples must be >= 1");
  Rng rng(seed);
  int hits = 0;
  for (int i = 0; i < spec.samples; ++i) {
    const auto inst = gen_copy_instance(spec, rng);
    if (greedy_decode(model, inst.input, spec.suffix_len) == inst.target) ++hits;
  }
  return 100.0 * hits / spec.samples;
}

double eval_follow(const SequenceModel& model, const FollowTaskSpec& spec,
                   const MarkovSource& filler, std::uint64_t seed) {
  if (spec.samples < 1) throw InvalidArgument("follow task: samples must be >= 1");
  Rng rng(seed);
  int hits = 0;
  for (int i = 0; i < spec.samples; ++i) {
    const auto inst = gen_follow_instance(spec, filler, rng);
    const int answer = greedy_decode(model, inst.input, 1)[0];
    if (answer == inst.label_set[0] || answer == inst.label_set[1]) ++hits;
  }
  return 100.0 * hits / spec.samples;
}

double eval_ppl(const SequenceModel& model, std::span<const std::vector<int>> corpus,
                const PplConfig& config) {
  if (config.tail_window < 1 || config.tail_window >= config.input_length) {
    throw InvalidArgument("ppl: tail_window must be in [1, input_length)");
  }
  if (corpus.empty()) throw InvalidArgument("ppl: empty corpus");
  const int V = model.vocab_size();
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& seq : corpus) {
    if (static_cast<int>(seq.size()) < config.input_length) {
      throw InvalidArgument("ppl: sequence of " + std::to_string(seq.size()) +
                            " tokens is shorter than input_length " +
                            std::to_string(config.input_length));
    }
    std::span<const int> window(seq.data(), config.input_length);
    const auto logits = model.logits(window);
    for (int t = config.input_length - 1 - config.tail_window; t < config.input_length - 1; ++t) {
      const double* r = logits.data() + static_cast<std::size_t>(t) * V;
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < V; ++i) mx = std::max(mx, r[i]);
      double z = 0.0;
      for (int i = 0; i < V; ++i) z += std::exp(r[i] - mx);
      nll += mx + std::log(z) - r[window[t + 1]];
      ++count;
    }
  }
  return std::exp(nll / static_cast<double>(count));
}

std::vector<std::vector<int>> markov_corpus(const MarkovSource& source, const Vocabulary& vocab,
                                            const PplConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> out;
  for (int i = 0; i < config.samples; ++i) {
    std::vector<int> row{vocab.bos};
    const auto text = source.sample(config.input_length - 1, rng);
    row.insert(row.end(), text.begin(), text.end());
    out.push_back(std::move(row));
  }
  return out;
}

// ------------------------------------------------------------------ streams

std::vector<int> MarkovStream::next(Rng& rng) {
  std::vector<int> row{vocab_.bos};
  const auto text = source_.sample(length_ - 1, rng);
  row.insert(row.end(), text.begin(), text.end());
  return row;
}

TaskMixtureStream::TaskMixtureStream(const MarkovSource& source, const Vocabulary& vocab,
                                     int length, MixtureWeights weights, int early_steps,
                                     MixtureWeights early)
    : source_(source),
      vocab_(vocab),
      length_(length),
      weights_(weights),
      early_steps_(early_steps),
      early_(early) {
  vocab_.validate();
  if (early_steps < 0) throw InvalidArgument("early_steps must be >= 0");
  FollowTaskSpec f;
  f.vocab = vocab_;
  for (const auto& w : {weights, early_steps > 0 ? early : weights}) {
    if (w.markov < 0 || w.copy < 0 || w.follow < 0 || w.markov + w.copy + w.follow <= 0) {
      throw InvalidArgument("mixture weights must be non-negative with a positive sum");
    }
    if (w.follow > 0 && f.fixed_length() + 1 > length) {
      throw InvalidArgument("row length too short for few-shot rows");
    }
  }
}

std::vector<int> TaskMixtureStream::copy_row(Rng& rng) const {
  std::vector<int> row{vocab_.bos};
  std::vector<std::vector<int>> seen;
  std::size_t last = 0;
  while (static_cast<int>(row.size()) < length_) {
    std::vector<int> s;
    if (seen.size() >= 2 && rng.uniform() < 0.75) {
      // Never the sequence just emitted, and lengths vary: otherwise a fixed lag
      // solves the task without matching content.
      std::size_t pick = rng.below(seen.size() - 1);
      if (pick >= last) ++pick;
      s = seen[pick];
      last = pick;
    } else {
      s.resize(rng.range(6, 13));
      for (auto& t : s) t = content_token(vocab_, rng);
      seen.push_back(s);
      last = seen.size() - 1;
    }
    const auto take = std::min<std::size_t>(s.size(), length_ - row.size());
    row.insert(row.end(), s.begin(), s.begin() + take);
  }
  return row;
}

std::vector<int> TaskMixtureStream::follow_row(Rng& rng) const {
  FollowTaskSpec spec;
  spec.vocab = vocab_;
  Shots shots = make_shots(spec, rng);
  const int room = length_ - spec.fixed_length() - 1;
  const int filler = static_cast<int>(rng.below(room + 1));
  std::vector<int> row = std::move(shots.tokens);
  const auto fill = source_.sample(filler, rng);
  row.insert(row.end(), fill.begin(), fill.end());
  row.insert(row.end(), shots.query.begin(), shots.query.end());
  row.push_back(shots.labels[rng.below(2)]);
  const auto tail = source_.sample(length_ - static_cast<int>(row.size()), rng);
  row.insert(row.end(), tail.begin(), tail.end());
  return row;
}

std::vector<int> TaskMixtureStream::next(Rng& rng) {
  const MixtureWeights& w = step_ < early_steps_ ? early_ : weights_;
  const double u = rng.uniform() * (w.markov + w.copy + w.follow);
  if (u < w.markov) {
    std::vector<int> row{vocab_.bos};
    const auto text = source_.sample(length_ - 1, rng);
    row.insert(row.end(), text.begin(), text.end());
    return row;
  }
  if (u < w.markov + w.copy) return copy_row(rng);
  return follow_row(rng);
}

// ----------------------------------------------------------- serialization

void write_copy_tasks(std::ostream& os, std::span<const CopyInstance> tasks) {
  for (const auto& t : tasks) {
    os << nlohmann::json{{"input_tokens", t.input}, {"target_tokens", t.target}}.dump() << '\n';
  }
}

namespace {

template <typename F>
void for_each_json_line(std::istream& is, F&& f) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("task file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<CopyInstance> read_copy_tasks(std::istream& is) {
  std::vector<CopyInstance> out;
  for_each_json_line(is, [&](const nlohmann::json& j) {
    out.push_back({j.at("input_tokens").get<std::vector<int>>(),
                   j.at("target_tokens").get<std::vector<int>>()});
  });
  return out;
}

void write_follow_tasks(std::ostream& os, std::span<const FollowInstance> tasks) {
  for (const auto& t : tasks) {
    os << nlohmann::json{{"input_tokens", t.input}, {"label_set", t.label_set}}.dump() << '\n';
  }
}

std::vector<FollowInstance> read_follow_tasks(std::istream& is) {
  std::vector<FollowInstance> out;
  for_each_json_line(is, [&](const nlohmann::json& j) {
    out.push_back({j.at("input_tokens").get<std::vector<int>>(),
                   j.at("label_set").get<std::array<int, 2>>()});
  });
  return out;
}

void write_eval_csv(std::ostream& os, std::span<const EvalRow> rows) {
  os << "task,length_or_N,metric,value,seed\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.value);
    os << r.task << ',' << r.length_or_n << ',' << r.metric << ',' << buf << ',' << r.seed << '\n';
  }
}

}  // namespace hope
