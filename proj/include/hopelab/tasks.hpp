#pragma once

// Synthetic evaluation suites: in-context copying, a few-shot-following
// surrogate and tail-window perplexity over an order-k Markov corpus, plus
// the training mixture that teaches a toy model those formats.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hopelab/model.hpp"
#include "hopelab/rng.hpp"
#include "hopelab/train.hpp"

namespace hope {

/// Token-id regions shared by every task:
///   [0]                         BOS
///   [1]                         SEP (answer marker in few-shot rows)
///   [markov_begin, +markov_size) Markov "text" alphabet (also few-shot filler)
///   [content_begin, size)       content tokens for copy sequences, patterns, labels
struct Vocabulary {
  int size = 128;
  int bos = 0;
  int sep = 1;
  int markov_begin = 4;
  int markov_size = 32;
  int content_begin = 36;

  int content_count() const { return size - content_begin; }
  void validate() const;
};

/// Order-k Markov chain over `alphabet` symbols emitted as token ids
/// token_offset + symbol. Every context has `support` successors; the
/// successor (last + 1) mod alphabet is always present so the chain is
/// irreducible.
class MarkovSource {
 public:
  MarkovSource(int alphabet, int order, std::uint64_t seed, int token_offset, int support = 4);

  int alphabet() const { return alphabet_; }
  int order() const { return order_; }
  int token_offset() const { return offset_; }
  std::size_t num_contexts() const { return contexts_; }

  /// Next-symbol distribution for a context (base-`alphabet` digits of the last k symbols).
  std::span<const double> transition(std::size_t context) const;
  /// Stationary distribution over contexts.
  const std::vector<double>& stationary() const { return stationary_; }

  /// Entropy rate in nats per token: sum_c pi(c) H(P(.|c)).
  double entropy_rate() const;
  double ideal_perplexity() const;

  /// `length` tokens starting from a stationary context.
  std::vector<int> sample(int length, Rng& rng) const;

 private:
  int draw(std::span<const double> probs, Rng& rng) const;

  int alphabet_;
  int order_;
  int offset_;
  std::size_t contexts_;
  std::vector<double> probs_;  // [context][symbol]
  std::vector<double> stationary_;
};

// ---------------------------------------------------------------- copy task

struct CopyTaskSpec {
  int num_sequences = 30;
  int prefix_len = 8;
  int suffix_len = 4;
  int samples = 100;
  Vocabulary vocab{};

  int query_index() const { return num_sequences / 2; }
  /// BOS + all sequences + the queried prefix.
  int input_length() const { return 1 + num_sequences * (prefix_len + suffix_len) + prefix_len; }
};

struct CopyInstance {
  std::vector<int> input;
  std::vector<int> target;
};

/// Throws InvalidArgument when the content vocabulary cannot supply
/// pairwise-distinct prefixes within a bounded number of retries.
CopyInstance gen_copy_instance(const CopyTaskSpec& spec, Rng& rng);

// ------------------------------------------------------ few-shot following

struct FollowTaskSpec {
  int num_shots = 5;
  int pattern_len = 3;
  int filler_budget = 0;
  int samples = 100;
  Vocabulary vocab{};

  /// Tokens excluding filler: BOS + shots (pattern, SEP, label) + query (pattern, SEP).
  int fixed_length() const { return 1 + num_shots * (pattern_len + 2) + pattern_len + 1; }
  int input_length() const { return fixed_length() + filler_budget; }
  /// Filler needed to reach `target_length` input tokens (clamped at 0).
  int filler_for_length(int target_length) const;
};

struct FollowInstance {
  std::vector<int> input;
  std::array<int, 2> label_set{};
};

/// Shots, then `filler_budget` tokens of Markov text, then the query pattern
/// and SEP. Both labels appear among the shots.
FollowInstance gen_follow_instance(const FollowTaskSpec& spec, const MarkovSource& filler,
                                   Rng& rng);

// -------------------------------------------------------------- perplexity

struct PplConfig {
  int input_length = 128;
  int tail_window = 32;
  int samples = 64;
};

// -------------------------------------------------------------- evaluation

/// Anything that maps a token sequence to next-token logits at every position.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual int vocab_size() const = 0;
  /// Row-major [tokens.size(), vocab_size()].
  virtual std::vector<double> logits(std::span<const int> tokens) const = 0;
};

template <typename T>
class TransformerLM : public SequenceModel {
 public:
  explicit TransformerLM(const Transformer<T>& model) : model_(model) {}
  int vocab_size() const override { return model_.config().vocab_size; }
  std::vector<double> logits(std::span<const int> tokens) const override;

 private:
  const Transformer<T>& model_;
};

/// Greedy argmax continuation (lowest id wins ties).
std::vector<int> greedy_decode(const SequenceModel& model, std::vector<int> context, int steps);

/// Percent of samples whose greedily decoded suffix matches exactly.
double eval_copy(const SequenceModel& model, const CopyTaskSpec& spec, std::uint64_t seed);

/// Percent of samples whose single greedy answer token is one of the shown labels.
double eval_follow(const SequenceModel& model, const FollowTaskSpec& spec,
                   const MarkovSource& filler, std::uint64_t seed);

/// exp(mean NLL) over the last tail_window predictions of each sequence.
/// Throws InvalidArgument for sequences shorter than input_length.
double eval_ppl(const SequenceModel& model, std::span<const std::vector<int>> corpus,
                const PplConfig& config);

/// BOS followed by Markov text, `config.samples` rows of `config.input_length` tokens.
std::vector<std::vector<int>> markov_corpus(const MarkovSource& source, const Vocabulary& vocab,
                                            const PplConfig& config, std::uint64_t seed);

// -------------------------------------------------------- training streams

/// BOS + Markov text.
class MarkovStream : public TokenStream {
 public:
  MarkovStream(const MarkovSource& source, const Vocabulary& vocab, int length)
      : source_(source), vocab_(vocab), length_(length) {}
  int length() const override { return length_; }
  std::vector<int> next(Rng& rng) override;

 private:
  const MarkovSource& source_;
  Vocabulary vocab_;
  int length_;
};

struct MixtureWeights {
  double markov = 1.0;
  double copy = 1.0;
  double follow = 1.0;
};

/// Rows drawn from three generators:
///   markov  BOS + Markov text
///   copy    BOS + a stream of 6- to 12-token sequences where earlier sequences
///           recur verbatim, so continuing a seen prefix is rewarded
///   follow  a few-shot instance with random filler, its answer label, then
///           Markov text up to the row length
/// Steps before `early_steps` draw from the `early` weights instead (a curriculum).
class TaskMixtureStream : public TokenStream {
 public:
  TaskMixtureStream(const MarkovSource& source, const Vocabulary& vocab, int length,
                    MixtureWeights weights = {}, int early_steps = 0,
                    MixtureWeights early = {});
  int length() const override { return length_; }
  std::vector<int> next(Rng& rng) override;
  void begin_step(int step) override { step_ = step; }

  std::vector<int> copy_row(Rng& rng) const;
  std::vector<int> follow_row(Rng& rng) const;

 private:
  const MarkovSource& source_;
  Vocabulary vocab_;
  int length_;
  MixtureWeights weights_;
  int early_steps_;
  MixtureWeights early_;
  int step_ = 0;
};

// ---------------------------------------------------------- serialization

/// One JSON object per line: {"input_tokens": [...], "target_tokens": [...]}.
void write_copy_tasks(std::ostream& os, std::span<const CopyInstance> tasks);
std::vector<CopyInstance> read_copy_tasks(std::istream& is);
/// {"input_tokens": [...], "label_set": [a, b]}.
void write_follow_tasks(std::ostream& os, std::span<const FollowInstance> tasks);
std::vector<FollowInstance> read_follow_tasks(std::istream& is);

struct EvalRow {
  std::string task;
  int length_or_n = 0;
  std::string metric;
  double value = 0.0;
  std::string seed;  // seed value, or "mean"
};

/// Header: task,length_or_N,metric,value,seed
void write_eval_csv(std::ostream& os, std::span<const EvalRow> rows);

}  // namespace hope
