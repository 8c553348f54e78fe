#include "hopelab/train.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "hopelab/error.hpp"

namespace hope {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("train config: " + msg); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (warmup_steps > total_steps) fail("warmup_steps must be <= total_steps");
  if (total_steps < 1) fail("total_steps must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(gradient_clip > 0.0)) fail("gradient_clip must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) fail("betas must be in [0, 1)");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"beta1", c.beta1},
          {"beta2", c.beta2},
          {"learning_rate", c.learning_rate},
          {"warmup_steps", c.warmup_steps},
          {"gradient_clip", c.gradient_clip},
          {"weight_decay", c.weight_decay},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"seed", c.seed},
          {"schedule", c.schedule == LrSchedule::Cosine ? "cosine" : "constant"},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.warmup_steps = j.at("warmup_steps").get<int>();
    c.gradient_clip = j.at("gradient_clip").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.total_steps = j.at("total_steps").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.schedule = j.at("schedule").get<std::string>() == "cosine" ? LrSchedule::Cosine
                                                                 : LrSchedule::Constant;
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config JSON: ") + e.what());
  }
  return c;
}

double learning_rate_at(const TrainConfig& c, int step) {
  if (c.warmup_steps > 0 && step < c.warmup_steps) {
    return c.learning_rate * (step + 1) / c.warmup_steps;
  }
  if (c.schedule == LrSchedule::Constant || c.total_steps <= c.warmup_steps) {
    return c.learning_rate;
  }
  const double progress =
      static_cast<double>(step - c.warmup_steps) / (c.total_steps - c.warmup_steps);
  // Decays to 10% of the peak.
  return c.learning_rate * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

template <typename T>
Checkpoint make_checkpoint(const Transformer<T>& model) {
  Checkpoint c;
  c.model = model.config();
  c.dtype = sizeof(T) == 4 ? DType::F32 : DType::F64;
  c.params.assign(model.parameters().begin(), model.parameters().end());
  return c;
}

template <typename T>
Transformer<T> restore_model(const Checkpoint& ckpt, const ModelConfig* expected) {
  if (expected && !expected->same_shape(ckpt.model)) {
    throw ShapeMismatch("checkpoint architecture does not match the requested model config");
  }
  Transformer<T> model(ckpt.model);
  auto dst = model.parameters();
  if (dst.size() != ckpt.params.size()) {
    throw ShapeMismatch("checkpoint holds " + std::to_string(ckpt.params.size()) +
                        " parameters, model expects " + std::to_string(dst.size()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(ckpt.params[i]);
  return model;
}

template Checkpoint make_checkpoint<float>(const Transformer<float>&);
template Checkpoint make_checkpoint<double>(const Transformer<double>&);
template Transformer<float> restore_model<float>(const Checkpoint&, const ModelConfig*);
template Transformer<double> restore_model<double>(const Checkpoint&, const ModelConfig*);

namespace {

// Weight decay skips normalization gains.
std::vector<char> decay_mask(const ParameterLayout& layout) {
  std::vector<char> mask(layout.total(), 0);
  for (const auto& e : layout.entries()) {
    if (e.shape.size() == 2) std::fill_n(mask.begin() + e.offset, e.size, 1);
  }
  return mask;
}

}  // namespace

Checkpoint train(const ModelConfig& model_config, const TrainConfig& tc, TokenStream& data,
                 const TrainHooks& hooks, const Checkpoint* resume) {
  tc.validate();
  model_config.validate();
  if (data.length() != model_config.train_length) {
    throw InvalidArgument("training rows must have exactly train_length tokens");
  }

  Transformer<float> model = resume ? restore_model<float>(*resume, &model_config)
                                    : Transformer<float>::random(model_config,
                                                                 derive_seed(tc.seed, 1));
  const std::size_t n = model.parameters().size();
  std::vector<float> m(n, 0.0f), v(n, 0.0f), grads(n);
  Rng rng(derive_seed(tc.seed, 2));
  int start = 0;
  if (resume) {
    if (resume->adam_m.size() != n || resume->adam_v.size() != n) {
      throw ShapeMismatch("checkpoint optimizer state does not match the model");
    }
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = static_cast<float>(resume->adam_m[i]);
      v[i] = static_cast<float>(resume->adam_v[i]);
    }
    rng.set_state(resume->rng_state);
    start = static_cast<int>(resume->step);
  }
  const auto decay = decay_mask(model.layout());

  const int B = tc.batch_size, S = model_config.train_length;
  std::vector<int> tokens(static_cast<std::size_t>(B) * S);

  auto snapshot = [&](int completed) {
    Checkpoint c = make_checkpoint(model);
    c.train = tc;
    c.step = completed;
    c.rng_state = rng.state();
    c.adam_m.assign(m.begin(), m.end());
    c.adam_v.assign(v.begin(), v.end());
    return c;
  };

  for (int step = start; step < tc.total_steps; ++step) {
    data.begin_step(step);
    for (int b = 0; b < B; ++b) {
      const auto row = data.next(rng);
      if (static_cast<int>(row.size()) != S) {
        throw InvalidArgument("token stream produced a row of the wrong length");
      }
      std::copy(row.begin(), row.end(), tokens.begin() + static_cast<std::size_t>(b) * S);
    }
    const double loss = model.loss_and_gradients(tokens, B, S, grads);
    double sq = 0.0;
    for (float g : grads) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(loss) || !std::isfinite(norm)) {
      throw DivergenceError("training diverged at step " + std::to_string(step + 1) +
                            ": loss=" + std::to_string(loss) +
                            " grad_norm=" + std::to_string(norm));
    }
    double clipped = norm;
    if (norm > tc.gradient_clip) {
      const float factor = static_cast<float>(tc.gradient_clip / norm);
      sq = 0.0;
      for (float& g : grads) {
        g *= factor;
        sq += static_cast<double>(g) * g;
      }
      clipped = std::sqrt(sq);
    }

    const double lr = learning_rate_at(tc, step);
    const double bc1 = 1.0 - std::pow(tc.beta1, step + 1);
    const double bc2 = 1.0 - std::pow(tc.beta2, step + 1);
    const float b1 = static_cast<float>(tc.beta1), b2 = static_cast<float>(tc.beta2);
    auto params = model.parameters();
    for (std::size_t i = 0; i < n; ++i) {
      const float g = grads[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double update = mhat / (std::sqrt(vhat) + tc.adam_eps);
      if (decay[i]) update += tc.weight_decay * params[i];
      params[i] = static_cast<float>(params[i] - lr * update);
    }

    const StepMetrics metrics{step + 1, loss, norm, clipped, lr};
    if (hooks.on_step) hooks.on_step(metrics);
    if (tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0 && hooks.on_checkpoint &&
        step + 1 < tc.total_steps) {
      hooks.on_checkpoint(snapshot(step + 1));
    }
  }
  return snapshot(tc.total_steps);
}

void write_metrics_csv_header(std::ostream& os) {
  os << "step,loss,grad_norm,learning_rate\n";
}

void write_metrics_csv_row(std::ostream& os, const StepMetrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", m.step, m.loss, m.grad_norm,
                m.learning_rate);
  os << buf;
}

}  // namespace hope
