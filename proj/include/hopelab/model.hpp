#pragma once

// Minimal pre-norm decoder-only transformer with a pluggable positional
// encoding. All parameters live in one flat buffer described by a
// ParameterLayout, which keeps the optimizer, clipping, checkpointing and
// finite-difference checks trivial.
//
// Block:  x += Wo . Attn(rope(Wq h), rope(Wk h), Wv h),  h = RMSNorm(x)
//         x += W2 . GELU(W1 . RMSNorm(x))
// Head:   logits = RMSNorm(x) . lm_head   (untied from tok_emb)

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hopelab/kernels.hpp"
#include "hopelab/pe_core.hpp"

namespace hope {

struct ModelConfig {
  int num_layers = 2;
  int num_heads = 2;
  int d_model = 64;
  int d_head = 32;
  int vocab_size = 128;
  int train_length = 64;
  int mlp_hidden = 256;
  EncodingKind encoding{};
  // Linear position interpolation applied to rotary positions at run time.
  double position_scale = 1.0;

  /// Throws InvalidArgument describing the first violated constraint.
  void validate() const;
  /// Same architecture and encoding; position_scale is a runtime knob and ignored.
  bool same_shape(const ModelConfig& other) const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TensorEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelConfig& config);

  const std::vector<TensorEntry>& entries() const { return entries_; }
  std::size_t total() const { return total_; }
  /// Throws InvalidArgument for an unknown name.
  const TensorEntry& find(std::string_view name) const;
  bool contains(std::string_view name) const;

 private:
  void add(std::string name, std::vector<int> shape);

  std::vector<TensorEntry> entries_;
  std::size_t total_ = 0;
};

/// Pre-softmax attention logits of one layer, after the 1/sqrt(d_head) scaling
/// and any additive bias, plus the projected (not yet rotated) q and k.
template <typename T>
struct LayerCapture {
  int layer = 0;
  kernels::AttentionDims dims;
  std::span<const T> pre_logits;  // [batch, heads, seq, seq]; -inf above the diagonal
  std::span<const T> q;           // [batch, seq, heads * d_head]
  std::span<const T> k;
};

template <typename T>
using CaptureHook = std::function<void(const LayerCapture<T>&)>;

template <typename T>
class Transformer {
 public:
  /// Parameters zero-initialized except normalization gains (= 1).
  explicit Transformer(ModelConfig config);

  /// Gaussian init: std for matrices and embeddings, residual outputs scaled by 1/sqrt(2 layers).
  static Transformer random(ModelConfig config, std::uint64_t seed, double std = 0.02);

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  std::span<T> parameters() { return params_; }
  std::span<const T> parameters() const { return params_; }
  std::span<T> tensor(std::string_view name);
  std::span<const T> tensor(std::string_view name) const;

  /// Per-component frequencies applied to each head (0 = position-independent).
  const std::vector<double>& frequencies() const { return freqs_; }
  void set_position_scale(double scale);

  /// tokens: [batch, seq] row-major. Returns logits [batch * seq, vocab].
  std::vector<T> forward(std::span<const int> tokens, int batch, int seq,
                         const CaptureHook<T>* capture = nullptr) const;

  /// Mean next-token cross-entropy over positions 1..seq-1 of every row.
  /// Overwrites `grads` (size = parameters().size()).
  double loss_and_gradients(std::span<const int> tokens, int batch, int seq,
                            std::span<T> grads) const;

  /// Same loss without the backward pass.
  double loss(std::span<const int> tokens, int batch, int seq) const;

  template <typename U>
  Transformer<U> cast() const {
    Transformer<U> out(config_);
    auto dst = out.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<U>(params_[i]);
    return out;
  }

 private:
  struct Activations;
  void run(std::span<const int> tokens, int batch, int seq, const CaptureHook<T>* capture,
           Activations& act) const;
  void check_tokens(std::span<const int> tokens, int batch, int seq) const;

  ModelConfig config_;
  ParameterLayout layout_;
  std::vector<T> params_;
  std::vector<double> freqs_;
  std::vector<T> slopes_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace hope
