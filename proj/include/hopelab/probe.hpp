#pragma once

// Attention probing on random-token batches: positional attention curves,
// per-component curves for rotary models, and the extrapolation summary that
// combines phase coverage with an envelope test on the curves.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hopelab/decomp.hpp"
#include "hopelab/model.hpp"

namespace hope {

/// `samples` rows of `length` tokens: BOS at position 0, uniform random ids elsewhere.
struct ProbeBatch {
  std::vector<std::vector<int>> samples;
  int length = 0;
  int bos_token = 0;
};

ProbeBatch gen_probe_batch(int vocab_size, int length, int samples, std::uint64_t seed,
                           int bos_token = 0);

enum class QueryMode {
  Last,         // query = last position; x axis = absolute key position
  AllRelative,  // every causal (query, key) pair; x axis = relative distance
};

enum class ProbeScope { AllLayersHeads, PerLayer, PerHead };

std::string to_string(QueryMode mode);
std::string to_string(ProbeScope scope);

/// Mean pre-softmax logit as a function of position.
struct ProbeCurve {
  ProbeScope scope = ProbeScope::AllLayersHeads;
  int layer = -1;  // -1 when aggregated
  int head = -1;
  QueryMode mode = QueryMode::Last;
  int sample_count = 0;
  std::vector<int> positions;
  std::vector<double> values;
};

struct AttentionPattern {
  ProbeCurve all;
  std::vector<ProbeCurve> per_layer;
  std::vector<ProbeCurve> per_head;  // layer-major
};

/// Analysis runs in double precision; cast float models first.
AttentionPattern attention_pattern(const Transformer<double>& model, const ProbeBatch& batch,
                                   QueryMode mode = QueryMode::Last);

struct ComponentPattern {
  std::vector<double> freqs;
  std::vector<ProbeCurve> components;  // one per 2-D component
  ProbeCurve total;                    // captured logits over the same layers and heads
};

/// Query = last position. `layer` restricts to one layer; default averages all.
/// Throws InvalidArgument for ALiBi and learnable-APE models.
ComponentPattern component_pattern(const Transformer<double>& model, const ProbeBatch& batch,
                                   std::optional<int> layer = std::nullopt);

struct ExtrapolationReport {
  int train_length = 0;
  int test_length = 0;
  ComponentPattern train_curves;  // first layer, probe length = train_length
  ComponentPattern test_curves;   // first layer, probe length = test_length
  std::vector<PhaseCoverageReport> phase;
  std::vector<int> phase_flags;
  std::vector<int> envelope_flags;
  std::vector<int> flagged;  // union, ascending
};

/// Envelope test: a rotary component is flagged when its test curve at any
/// relative distance >= train_length leaves the [min, max] of its training
/// curve by more than 1% of that range.
ExtrapolationReport extrapolation_report(const Transformer<double>& model, int train_length,
                                         int test_length, int samples, std::uint64_t seed);

}  // namespace hope
