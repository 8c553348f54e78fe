#include "hopelab/model.hpp"

#include <algorithm>
#include <cmath>

#include "hopelab/error.hpp"
#include "hopelab/rng.hpp"

namespace hope {

namespace k = kernels;

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("model config: " + msg); };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (num_heads < 1) fail("num_heads must be >= 1");
  if (d_head < 1) fail("d_head must be >= 1");
  if (d_model != num_heads * d_head) fail("d_model must equal num_heads * d_head");
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (train_length < 2) fail("train_length must be >= 2");
  if (mlp_hidden < 1) fail("mlp_hidden must be >= 1");
  if (is_rotary_family(encoding.tag) && d_head % 2 != 0) fail("rotary encodings need even d_head");
  if (!(encoding.rope_base > 1.0)) fail("rope_base must be > 1");
  if (!(position_scale >= 1.0)) fail("position_scale must be >= 1");
}

bool ModelConfig::same_shape(const ModelConfig& o) const {
  return num_layers == o.num_layers && num_heads == o.num_heads && d_model == o.d_model &&
         d_head == o.d_head && vocab_size == o.vocab_size && train_length == o.train_length &&
         mlp_hidden == o.mlp_hidden && encoding.tag == o.encoding.tag &&
         encoding.rope_base == o.encoding.rope_base;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"num_layers", c.num_layers},   {"num_heads", c.num_heads},
          {"d_model", c.d_model},         {"d_head", c.d_head},
          {"vocab_size", c.vocab_size},   {"train_length", c.train_length},
          {"mlp_hidden", c.mlp_hidden},   {"encoding", std::string(to_string(c.encoding.tag))},
          {"rope_base", c.encoding.rope_base}, {"position_scale", c.position_scale}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_head = j.at("d_head").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.train_length = j.at("train_length").get<int>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
    c.encoding.tag = parse_encoding(j.at("encoding").get<std::string>());
    c.encoding.rope_base = j.at("rope_base").get<double>();
    c.position_scale = j.value("position_scale", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

ParameterLayout::ParameterLayout(const ModelConfig& c) {
  c.validate();
  const int D = c.d_model, F = c.mlp_hidden, V = c.vocab_size;
  add("tok_emb", {V, D});
  if (c.encoding.tag == EncodingTag::LearnableAPE) add("ape", {c.train_length, D});
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "attn_norm", {D});
    add(p + "wq", {D, D});
    add(p + "wk", {D, D});
    add(p + "wv", {D, D});
    add(p + "wo", {D, D});
    add(p + "mlp_norm", {D});
    add(p + "w1", {D, F});
    add(p + "w2", {F, D});
  }
  add("final_norm", {D});
  add("lm_head", {D, V});
}

void ParameterLayout::add(std::string name, std::vector<int> shape) {
  std::size_t size = 1;
  for (int s : shape) size *= static_cast<std::size_t>(s);
  entries_.push_back({std::move(name), std::move(shape), total_, size});
  total_ += size;
}

const TensorEntry& ParameterLayout::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw InvalidArgument("no parameter tensor named '" + std::string(name) + "'");
}

bool ParameterLayout::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const TensorEntry& e) { return e.name == name; });
}

namespace {

bool is_gain(const std::string& name) {
  return name.ends_with("_norm");
}

}  // namespace

template <typename T>
Transformer<T>::Transformer(ModelConfig config)
    : config_(config), layout_(config_), params_(layout_.total(), T(0)) {
  for (const auto& e : layout_.entries()) {
    if (is_gain(e.name)) std::fill_n(params_.begin() + e.offset, e.size, T(1));
  }
  if (is_rotary_family(config_.encoding.tag)) {
    freqs_ = rotary_frequencies(config_.encoding.tag,
                                build_spectrum(config_.encoding.rope_base, config_.d_head),
                                config_.train_length);
  }
  if (config_.encoding.tag == EncodingTag::ALiBi) {
    for (double s : alibi_slopes(config_.num_heads)) slopes_.push_back(static_cast<T>(s));
  }
}

template <typename T>
Transformer<T> Transformer<T>::random(ModelConfig config, std::uint64_t seed, double std) {
  Transformer<T> m(config);
  Rng rng(seed);
  const double residual_std = std / std::sqrt(2.0 * config.num_layers);
  for (const auto& e : m.layout_.entries()) {
    if (is_gain(e.name)) continue;
    const bool residual = e.name.ends_with(".wo") || e.name.ends_with(".w2");
    const double s = residual ? residual_std : std;
    for (std::size_t i = 0; i < e.size; ++i) {
      m.params_[e.offset + i] = static_cast<T>(s * rng.normal());
    }
  }
  return m;
}

template <typename T>
std::span<T> Transformer<T>::tensor(std::string_view name) {
  const auto& e = layout_.find(name);
  return std::span<T>(params_).subspan(e.offset, e.size);
}

template <typename T>
std::span<const T> Transformer<T>::tensor(std::string_view name) const {
  const auto& e = layout_.find(name);
  return std::span<const T>(params_).subspan(e.offset, e.size);
}

template <typename T>
void Transformer<T>::set_position_scale(double scale) {
  if (!(scale >= 1.0)) throw InvalidArgument("position scale must be >= 1");
  config_.position_scale = scale;
}

template <typename T>
struct Transformer<T>::Activations {
  struct Layer {
    std::vector<T> x_in, h1, rstd1, q, k, v, qr, kr, probs, att, x_mid, h2, rstd2, u, a;
  };
  int batch = 0, seq = 0;
  std::vector<Layer> layers;
  std::vector<T> x_final, hf, rstdf, logits;
  std::vector<T> cos_table, sin_table;
};

template <typename T>
void Transformer<T>::check_tokens(std::span<const int> tokens, int batch, int seq) const {
  if (batch < 1 || seq < 1) throw InvalidArgument("empty batch");
  if (tokens.size() != static_cast<std::size_t>(batch) * seq) {
    throw InvalidArgument("token buffer size does not match batch x seq");
  }
  if (config_.encoding.tag == EncodingTag::LearnableAPE && seq > config_.train_length) {
    throw InvalidArgument("sequence length " + std::to_string(seq) +
                          " exceeds the learnable APE table (" +
                          std::to_string(config_.train_length) + ")");
  }
  for (int t : tokens) {
    if (t < 0 || t >= config_.vocab_size) {
      throw InvalidArgument("token id " + std::to_string(t) + " outside vocabulary");
    }
  }
}

template <typename T>
void Transformer<T>::run(std::span<const int> tokens, int batch, int seq,
                         const CaptureHook<T>* capture, Activations& act) const {
  check_tokens(tokens, batch, seq);
  const int D = config_.d_model, F = config_.mlp_hidden, V = config_.vocab_size;
  const int N = batch * seq;
  const std::size_t ND = static_cast<std::size_t>(N) * D;
  const k::AttentionDims dims{batch, seq, config_.num_heads, config_.d_head};
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(config_.d_head)));
  const T eps = static_cast<T>(1e-6);
  const bool rotary = !freqs_.empty();
  const auto P = [this](std::string_view n) { return tensor(n); };

  act.batch = batch;
  act.seq = seq;
  if (rotary) {
    const int comps = config_.d_head / 2;
    act.cos_table.resize(static_cast<std::size_t>(seq) * comps);
    act.sin_table.resize(act.cos_table.size());
    for (int t = 0; t < seq; ++t) {
      const double pos = scale_positions(t, PositionScaler{config_.position_scale});
      for (int i = 0; i < comps; ++i) {
        const double angle = pos * freqs_[i];
        act.cos_table[t * comps + i] = static_cast<T>(std::cos(angle));
        act.sin_table[t * comps + i] = static_cast<T>(std::sin(angle));
      }
    }
  }

  std::vector<T> x(ND);
  {
    const auto emb = P("tok_emb");
    for (int r = 0; r < N; ++r) {
      std::copy_n(emb.begin() + static_cast<std::size_t>(tokens[r]) * D, D, x.begin() + r * D);
    }
    if (config_.encoding.tag == EncodingTag::LearnableAPE) {
      const auto ape = P("ape");
      for (int r = 0; r < N; ++r) {
        const int t = r % seq;
        for (int i = 0; i < D; ++i) x[r * D + i] += ape[t * D + i];
      }
    }
  }

  act.layers.resize(config_.num_layers);
  for (int l = 0; l < config_.num_layers; ++l) {
    auto& L = act.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    L.x_in = x;
    L.h1.resize(ND);
    L.rstd1.resize(N);
    k::rmsnorm_forward<T>(L.h1, L.rstd1, L.x_in, P(p + "attn_norm"), N, D, eps);
    L.q.resize(ND);
    L.k.resize(ND);
    L.v.resize(ND);
    k::matmul_forward<T>(L.q, L.h1, P(p + "wq"), N, D, D);
    k::matmul_forward<T>(L.k, L.h1, P(p + "wk"), N, D, D);
    k::matmul_forward<T>(L.v, L.h1, P(p + "wv"), N, D, D);
    L.qr = L.q;
    L.kr = L.k;
    if (rotary) {
      k::rotary_apply<T>(L.qr, act.cos_table, act.sin_table, dims, false);
      k::rotary_apply<T>(L.kr, act.cos_table, act.sin_table, dims, false);
    }
    L.probs.resize(static_cast<std::size_t>(batch) * config_.num_heads * seq * seq);
    L.att.resize(ND);
    std::vector<T> pre;
    if (capture) pre.resize(L.probs.size());
    k::attention_forward<T>(L.att, L.probs, pre, L.qr, L.kr, L.v, dims, scale, slopes_);
    if (capture) {
      (*capture)(LayerCapture<T>{l, dims, pre, L.q, L.k});
    }
    std::vector<T> o(ND);
    k::matmul_forward<T>(o, L.att, P(p + "wo"), N, D, D);
    for (std::size_t i = 0; i < ND; ++i) x[i] += o[i];
    L.x_mid = x;

    L.h2.resize(ND);
    L.rstd2.resize(N);
    k::rmsnorm_forward<T>(L.h2, L.rstd2, L.x_mid, P(p + "mlp_norm"), N, D, eps);
    L.u.resize(static_cast<std::size_t>(N) * F);
    L.a.resize(L.u.size());
    k::matmul_forward<T>(L.u, L.h2, P(p + "w1"), N, D, F);
    k::gelu_forward<T>(L.a, L.u);
    k::matmul_forward<T>(o, L.a, P(p + "w2"), N, F, D);
    for (std::size_t i = 0; i < ND; ++i) x[i] += o[i];
  }

  act.x_final = std::move(x);
  act.hf.resize(ND);
  act.rstdf.resize(N);
  k::rmsnorm_forward<T>(act.hf, act.rstdf, act.x_final, P("final_norm"), N, D, eps);
  act.logits.resize(static_cast<std::size_t>(N) * V);
  k::matmul_forward<T>(act.logits, act.hf, P("lm_head"), N, D, V);
}

template <typename T>
std::vector<T> Transformer<T>::forward(std::span<const int> tokens, int batch, int seq,
                                       const CaptureHook<T>* capture) const {
  Activations act;
  run(tokens, batch, seq, capture, act);
  return std::move(act.logits);
}

namespace {

std::vector<int> next_token_targets(std::span<const int> tokens, int batch, int seq) {
  std::vector<int> targets(tokens.size(), -1);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t + 1 < seq; ++t) targets[b * seq + t] = tokens[b * seq + t + 1];
  }
  return targets;
}

}  // namespace

template <typename T>
double Transformer<T>::loss(std::span<const int> tokens, int batch, int seq) const {
  if (seq < 2) throw InvalidArgument("loss needs sequences of length >= 2");
  const auto logits = forward(tokens, batch, seq);
  const auto targets = next_token_targets(tokens, batch, seq);
  std::vector<T> scratch(logits.size());
  const int rows = batch * seq;
  const double total = k::softmax_cross_entropy<T>(scratch, logits, targets, rows,
                                                   config_.vocab_size, T(0));
  return total / (static_cast<double>(batch) * (seq - 1));
}

template <typename T>
double Transformer<T>::loss_and_gradients(std::span<const int> tokens, int batch, int seq,
                                          std::span<T> grads) const {
  if (seq < 2) throw InvalidArgument("loss needs sequences of length >= 2");
  if (grads.size() != params_.size()) throw ShapeMismatch("gradient buffer size mismatch");
  Activations act;
  run(tokens, batch, seq, nullptr, act);

  const int D = config_.d_model, F = config_.mlp_hidden, V = config_.vocab_size;
  const int N = batch * seq;
  const std::size_t ND = static_cast<std::size_t>(N) * D;
  const k::AttentionDims dims{batch, seq, config_.num_heads, config_.d_head};
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(config_.d_head)));
  const bool rotary = !freqs_.empty();
  const auto P = [this](std::string_view n) { return tensor(n); };
  const auto G = [&](std::string_view n) {
    const auto& e = layout_.find(n);
    return grads.subspan(e.offset, e.size);
  };
  std::fill(grads.begin(), grads.end(), T(0));

  const double count = static_cast<double>(batch) * (seq - 1);
  const auto targets = next_token_targets(tokens, batch, seq);
  std::vector<T> d_logits(act.logits.size());
  const double total = k::softmax_cross_entropy<T>(d_logits, act.logits, targets, N, V,
                                                   static_cast<T>(1.0 / count));

  std::vector<T> d_hf(ND, T(0)), d_x(ND, T(0));
  k::matmul_backward<T>(d_hf, G("lm_head"), d_logits, act.hf, P("lm_head"), N, D, V);
  k::rmsnorm_backward<T>(d_x, G("final_norm"), d_hf, act.x_final, P("final_norm"), act.rstdf, N,
                         D);

  std::vector<T> d_a(static_cast<std::size_t>(N) * F), d_u(d_a.size());
  std::vector<T> d_h(ND), d_att(ND), d_q(ND), d_k(ND), d_v(ND);
  for (int l = config_.num_layers - 1; l >= 0; --l) {
    const auto& L = act.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";

    std::fill(d_a.begin(), d_a.end(), T(0));
    std::fill(d_u.begin(), d_u.end(), T(0));
    std::fill(d_h.begin(), d_h.end(), T(0));
    k::matmul_backward<T>(d_a, G(p + "w2"), d_x, L.a, P(p + "w2"), N, F, D);
    k::gelu_backward<T>(d_u, d_a, L.u);
    k::matmul_backward<T>(d_h, G(p + "w1"), d_u, L.h2, P(p + "w1"), N, D, F);
    k::rmsnorm_backward<T>(d_x, G(p + "mlp_norm"), d_h, L.x_mid, P(p + "mlp_norm"), L.rstd2, N,
                           D);

    std::fill(d_att.begin(), d_att.end(), T(0));
    k::matmul_backward<T>(d_att, G(p + "wo"), d_x, L.att, P(p + "wo"), N, D, D);
    std::fill(d_q.begin(), d_q.end(), T(0));
    std::fill(d_k.begin(), d_k.end(), T(0));
    std::fill(d_v.begin(), d_v.end(), T(0));
    k::attention_backward<T>(d_q, d_k, d_v, d_att, L.probs, L.qr, L.kr, L.v, dims, scale);
    if (rotary) {
      k::rotary_apply<T>(d_q, act.cos_table, act.sin_table, dims, true);
      k::rotary_apply<T>(d_k, act.cos_table, act.sin_table, dims, true);
    }
    std::fill(d_h.begin(), d_h.end(), T(0));
    k::matmul_backward<T>(d_h, G(p + "wq"), d_q, L.h1, P(p + "wq"), N, D, D);
    k::matmul_backward<T>(d_h, G(p + "wk"), d_k, L.h1, P(p + "wk"), N, D, D);
    k::matmul_backward<T>(d_h, G(p + "wv"), d_v, L.h1, P(p + "wv"), N, D, D);
    k::rmsnorm_backward<T>(d_x, G(p + "attn_norm"), d_h, L.x_in, P(p + "attn_norm"), L.rstd1, N,
                           D);
  }

  // Embedding rows accumulate serially in token order.
  auto d_emb = G("tok_emb");
  for (int r = 0; r < N; ++r) {
    T* row = d_emb.data() + static_cast<std::size_t>(tokens[r]) * D;
    for (int i = 0; i < D; ++i) row[i] += d_x[r * D + i];
  }
  if (config_.encoding.tag == EncodingTag::LearnableAPE) {
    auto d_ape = G("ape");
    for (int r = 0; r < N; ++r) {
      const int t = r % seq;
      for (int i = 0; i < D; ++i) d_ape[t * D + i] += d_x[r * D + i];
    }
  }
  return total / count;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace hope
