#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "hopelab/model.hpp"
#include "hopelab/rng.hpp"

namespace hope {

enum class LrSchedule { Constant, Cosine };

/// AdamW settings. Defaults are the large-scale recipe; toy runs override
/// learning_rate / warmup_steps / total_steps.
struct TrainConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double learning_rate = 3e-4;
  int warmup_steps = 2000;
  double gradient_clip = 1.0;
  double weight_decay = 0.01;  // decoupled, matrices only
  double adam_eps = 1e-8;
  int batch_size = 8;
  int total_steps = 50000;
  std::uint64_t seed = 0;
  LrSchedule schedule = LrSchedule::Constant;
  int checkpoint_every = 0;  // 0: no intermediate checkpoints

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

double learning_rate_at(const TrainConfig& config, int step);

enum class DType { F32, F64 };

/// Everything needed to resume training bit-exactly.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::int64_t step = 0;  // completed optimizer steps
  std::string rng_state;  // data-sampling RNG
  DType dtype = DType::F32;
  std::vector<double> params;  // widened; exact for F32
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

template <typename T>
Checkpoint make_checkpoint(const Transformer<T>& model);

/// Rebuilds a model; throws ShapeMismatch if `expected` disagrees with the
/// stored architecture.
template <typename T>
Transformer<T> restore_model(const Checkpoint& ckpt, const ModelConfig* expected = nullptr);

/// Source of training rows, each exactly `length()` tokens.
class TokenStream {
 public:
  virtual ~TokenStream() = default;
  virtual int length() const = 0;
  virtual std::vector<int> next(Rng& rng) = 0;
  /// Called before the rows of each optimizer step (0-based), including after a resume.
  virtual void begin_step(int /*step*/) {}
};

struct StepMetrics {
  int step = 0;  // 1-based count of completed steps
  double loss = 0.0;
  double grad_norm = 0.0;          // before clipping
  double clipped_grad_norm = 0.0;  // after clipping
  double learning_rate = 0.0;
};

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;  // every checkpoint_every steps
};

/// Single-writer training loop in float32. Deterministic given the seed.
/// Throws DivergenceError if the loss stops being finite.
Checkpoint train(const ModelConfig& model_config, const TrainConfig& train_config,
                 TokenStream& data, const TrainHooks& hooks = {},
                 const Checkpoint* resume = nullptr);

void write_metrics_csv_header(std::ostream& os);
void write_metrics_csv_row(std::ostream& os, const StepMetrics& m);

}  // namespace hope
