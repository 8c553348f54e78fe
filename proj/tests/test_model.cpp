#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hopelab/error.hpp"
#include "hopelab/model.hpp"
#include "hopelab/rng.hpp"

using namespace hope;

namespace {

ModelConfig small_config(EncodingTag tag) {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 2;
  c.d_head = 8;
  c.d_model = 16;
  c.mlp_hidden = 24;
  c.vocab_size = 11;
  c.train_length = 8;
  c.encoding.tag = tag;
  c.encoding.rope_base = 10.0;  // small base so the 8-position toy has all three bands
  return c;
}

std::vector<int> random_tokens(Rng& rng, int n, int vocab) {
  std::vector<int> t(n);
  for (auto& x : t) x = static_cast<int>(rng.below(vocab));
  return t;
}

const EncodingTag kAllTags[] = {EncodingTag::NoPE, EncodingTag::RoPE, EncodingTag::HoPE,
                                EncodingTag::AB1,  EncodingTag::AB2,  EncodingTag::AB3,
                                EncodingTag::ALiBi, EncodingTag::LearnableAPE};

}  // namespace

TEST_CASE("parameter layout") {
  const auto c = small_config(EncodingTag::LearnableAPE);
  ParameterLayout layout(c);
  CHECK(layout.find("tok_emb").shape == std::vector<int>{11, 16});
  CHECK(layout.find("ape").shape == std::vector<int>{8, 16});
  CHECK(layout.find("layers.1.w1").shape == std::vector<int>{16, 24});
  CHECK(layout.find("lm_head").shape == std::vector<int>{16, 11});
  CHECK_FALSE(ParameterLayout(small_config(EncodingTag::RoPE)).contains("ape"));
  std::size_t expected = 11 * 16 + 8 * 16 + 16 + 16 * 11;
  expected += 2 * (16 + 4 * 16 * 16 + 16 + 16 * 24 + 24 * 16);
  CHECK(layout.total() == expected);
  CHECK_THROWS_AS(layout.find("nope"), InvalidArgument);
}

TEST_CASE("config validation") {
  auto c = small_config(EncodingTag::RoPE);
  c.d_model = 17;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = small_config(EncodingTag::RoPE);
  c.d_head = 7;
  c.d_model = 14;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.encoding.tag = EncodingTag::ALiBi;
  CHECK_NOTHROW(c.validate());
  const auto j = to_json(small_config(EncodingTag::AB2));
  CHECK(model_config_from_json(j) == small_config(EncodingTag::AB2));
}

TEST_CASE("gradients match central finite differences for every encoding") {
  for (auto tag : kAllTags) {
    CAPTURE(to_string(tag));
    const auto c = small_config(tag);
    auto model = Transformer<double>::random(c, 42, 0.3);
    Rng rng(7);
    const int B = 2, S = 7;
    const auto tokens = random_tokens(rng, B * S, c.vocab_size);
    std::vector<double> grads(model.parameters().size());
    model.loss_and_gradients(tokens, B, S, grads);

    auto params = model.parameters();
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + h;
      const double up = model.loss(tokens, B, S);
      params[i] = saved - h;
      const double down = model.loss(tokens, B, S);
      params[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double rel = std::abs(fd - grads[i]) / std::max({std::abs(fd), std::abs(grads[i]), 1e-6});
      worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("outputs at position t ignore tokens after t") {
  for (auto tag : kAllTags) {
    CAPTURE(to_string(tag));
    const auto c = small_config(tag);
    const auto model = Transformer<double>::random(c, 3, 0.3);
    Rng rng(11);
    auto tokens = random_tokens(rng, 8, c.vocab_size);
    const auto before = model.forward(tokens, 1, 8);
    tokens[5] = (tokens[5] + 1) % c.vocab_size;
    const auto after = model.forward(tokens, 1, 8);
    for (int t = 0; t < 5; ++t) {
      for (int v = 0; v < c.vocab_size; ++v) {
        CHECK(before[t * c.vocab_size + v] == after[t * c.vocab_size + v]);
      }
    }
    bool changed = false;
    for (int v = 0; v < c.vocab_size; ++v) changed |= before[5 * c.vocab_size + v] != after[5 * c.vocab_size + v];
    CHECK(changed);
  }
}

TEST_CASE("first-layer logits of relative encodings depend only on the offset") {
  // Layer-0 q and k are functions of the token alone, so shifting the whole
  // sequence by one position leaves every (query, key) logit unchanged.
  for (auto tag : {EncodingTag::NoPE, EncodingTag::RoPE, EncodingTag::HoPE, EncodingTag::AB1,
                   EncodingTag::AB2, EncodingTag::AB3, EncodingTag::ALiBi}) {
    CAPTURE(to_string(tag));
    const auto model = Transformer<double>::random(small_config(tag), 5, 0.3);
    const std::vector<int> a{1, 2, 3, 4, 5, 6}, b{9, 1, 2, 3, 4, 5, 6};
    std::vector<double> la, lb;
    CaptureHook<double> grab_a = [&](const LayerCapture<double>& cap) {
      if (cap.layer == 0) la.assign(cap.pre_logits.begin(), cap.pre_logits.end());
    };
    CaptureHook<double> grab_b = [&](const LayerCapture<double>& cap) {
      if (cap.layer == 0) lb.assign(cap.pre_logits.begin(), cap.pre_logits.end());
    };
    model.forward(a, 1, 6, &grab_a);
    model.forward(b, 1, 7, &grab_b);
    for (int h = 0; h < 2; ++h) {
      for (int t = 0; t < 6; ++t) {
        for (int s = 0; s <= t; ++s) {
          CHECK(la[(h * 6 + t) * 6 + s] ==
                doctest::Approx(lb[(h * 7 + t + 1) * 7 + s + 1]).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("batch rows are independent") {
  const auto c = small_config(EncodingTag::RoPE);
  const auto model = Transformer<double>::random(c, 9, 0.3);
  Rng rng(1);
  const auto a = random_tokens(rng, 6, c.vocab_size), b = random_tokens(rng, 6, c.vocab_size);
  std::vector<int> both = a;
  both.insert(both.end(), b.begin(), b.end());
  const auto joint = model.forward(both, 2, 6);
  const auto la = model.forward(a, 1, 6), lb = model.forward(b, 1, 6);
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(joint[i] == doctest::Approx(la[i]).epsilon(1e-12));
    CHECK(joint[la.size() + i] == doctest::Approx(lb[i]).epsilon(1e-12));
  }
}

TEST_CASE("zero parameters give uniform predictions") {
  auto c = small_config(EncodingTag::RoPE);
  Transformer<double> model(c);
  const std::vector<int> tokens{1, 2, 3, 4};
  CHECK(model.loss(tokens, 1, 4) == doctest::Approx(std::log(11.0)).epsilon(1e-12));
}

TEST_CASE("input validation") {
  const auto c = small_config(EncodingTag::LearnableAPE);
  const Transformer<double> model(c);
  CHECK_THROWS_AS(model.forward(std::vector<int>(9, 1), 1, 9), InvalidArgument);
  CHECK_THROWS_AS(model.forward(std::vector<int>{1, 2, 99}, 1, 3), InvalidArgument);
  CHECK_THROWS_AS(model.forward(std::vector<int>{1, 2, 3}, 1, 4), InvalidArgument);
  CHECK_THROWS_AS(model.forward(std::vector<int>{}, 0, 0), InvalidArgument);
  const Transformer<double> rope(small_config(EncodingTag::RoPE));
  CHECK_NOTHROW(rope.forward(std::vector<int>(20, 1), 1, 20));
}

TEST_CASE("float and double agree on the forward pass") {
  const auto c = small_config(EncodingTag::HoPE);
  const auto d = Transformer<double>::random(c, 21, 0.2);
  const auto f = d.cast<float>();
  Rng rng(4);
  const auto tokens = random_tokens(rng, 8, c.vocab_size);
  const auto ld = d.forward(tokens, 1, 8);
  const auto lf = f.forward(tokens, 1, 8);
  for (std::size_t i = 0; i < ld.size(); ++i) CHECK(lf[i] == doctest::Approx(ld[i]).epsilon(1e-4));
}

TEST_CASE("position scale changes only rotary models") {
  auto c = small_config(EncodingTag::RoPE);
  auto model = Transformer<double>::random(c, 2, 0.3);
  const std::vector<int> tokens{1, 5, 2, 7, 3, 3};
  const auto base = model.forward(tokens, 1, 6);
  model.set_position_scale(2.0);
  CHECK(model.forward(tokens, 1, 6) != base);
  CHECK_THROWS_AS(model.set_position_scale(0.5), InvalidArgument);

  auto nope = Transformer<double>::random(small_config(EncodingTag::NoPE), 2, 0.3);
  const auto nb = nope.forward(tokens, 1, 6);
  nope.set_position_scale(4.0);
  CHECK(nope.forward(tokens, 1, 6) == nb);
}
