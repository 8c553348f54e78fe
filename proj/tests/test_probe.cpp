#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hopelab/error.hpp"
#include "hopelab/probe.hpp"

using namespace hope;

namespace {

ModelConfig probe_config(EncodingTag tag, int d_head = 8, int heads = 2) {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = heads;
  c.d_head = d_head;
  c.d_model = d_head * heads;
  c.mlp_hidden = 16;
  c.vocab_size = 20;
  c.train_length = 16;
  c.encoding.tag = tag;
  c.encoding.rope_base = 100.0;
  return c;
}

void zero_tensor(Transformer<double>& model, const std::string& name) {
  const auto& e = model.layout().find(name);
  auto p = model.parameters();
  std::fill(p.begin() + e.offset, p.begin() + e.offset + e.size, 0.0);
}

}  // namespace

TEST_CASE("probe batches") {
  const auto a = gen_probe_batch(50, 12, 300, 4);
  const auto b = gen_probe_batch(50, 12, 300, 4);
  CHECK(a.samples == b.samples);
  CHECK(gen_probe_batch(50, 12, 300, 5).samples != a.samples);
  std::vector<double> hist(50, 0.0);
  for (const auto& row : a.samples) {
    REQUIRE(row.size() == 12u);
    CHECK(row[0] == 0);
    for (int t = 1; t < 12; ++t) hist[row[t]] += 1.0;
  }
  // Chi-square against uniform, 49 degrees of freedom; 99.9% quantile is about 85.4.
  const double expected = 300.0 * 11 / 50;
  double chi2 = 0.0;
  for (double h : hist) chi2 += (h - expected) * (h - expected) / expected;
  CHECK(chi2 < 85.4);
  CHECK_THROWS_AS(gen_probe_batch(50, 1, 3, 0), InvalidArgument);
  CHECK_THROWS_AS(gen_probe_batch(50, 4, 0, 0), InvalidArgument);
  CHECK_THROWS_AS(gen_probe_batch(50, 4, 3, 0, 50), InvalidArgument);
}

TEST_CASE("zero model gives zero curves") {
  const Transformer<double> model(probe_config(EncodingTag::RoPE));
  const auto batch = gen_probe_batch(20, 10, 20, 1);
  const auto pat = attention_pattern(model, batch);
  CHECK(pat.per_layer.size() == 2u);
  CHECK(pat.per_head.size() == 4u);
  for (double v : pat.all.values) CHECK(v == 0.0);
  CHECK(pat.all.sample_count == 20);
}

TEST_CASE("per-layer and overall curves average the head curves") {
  const auto model = Transformer<double>::random(probe_config(EncodingTag::HoPE), 3, 0.5);
  const auto batch = gen_probe_batch(20, 10, 40, 2);
  for (auto mode : {QueryMode::Last, QueryMode::AllRelative}) {
    const auto pat = attention_pattern(model, batch, mode);
    for (int i = 0; i < 10; ++i) {
      double all = 0.0;
      for (int l = 0; l < 2; ++l) {
        const double layer = 0.5 * (pat.per_head[2 * l].values[i] + pat.per_head[2 * l + 1].values[i]);
        CHECK(pat.per_layer[l].values[i] == doctest::Approx(layer).epsilon(1e-12));
        all += 0.5 * layer;
      }
      CHECK(pat.all.values[i] == doctest::Approx(all).epsilon(1e-12));
    }
  }
}

TEST_CASE("last-query curve matches a direct per-sample average") {
  const auto model = Transformer<double>::random(probe_config(EncodingTag::RoPE), 8, 0.5);
  const auto batch = gen_probe_batch(20, 9, 21, 3);  // not a multiple of the chunk size
  const auto pat = attention_pattern(model, batch);
  std::vector<double> direct(9, 0.0);
  for (const auto& row : batch.samples) {
    CaptureHook<double> hook = [&](const LayerCapture<double>& cap) {
      if (cap.layer != 1) return;
      for (int s = 0; s < 9; ++s) direct[s] += cap.pre_logits[(1 * 9 + 8) * 9 + s];  // head 1
    };
    model.forward(row, 1, 9, &hook);
  }
  for (int s = 0; s < 9; ++s) {
    CHECK(pat.per_head[3].values[s] == doctest::Approx(direct[s] / 21).epsilon(1e-12));
  }
}

TEST_CASE("bias-only ALiBi curve is the mean slope times distance") {
  auto model = Transformer<double>::random(probe_config(EncodingTag::ALiBi, 8, 4), 5, 0.5);
  zero_tensor(model, "layers.0.wq");
  zero_tensor(model, "layers.1.wq");
  const auto batch = gen_probe_batch(20, 12, 16, 9);
  const auto slopes = alibi_slopes(4);
  double mean_slope = 0.0;
  for (double s : slopes) mean_slope += s / 4;
  const auto rel = attention_pattern(model, batch, QueryMode::AllRelative).all.values;
  for (int d = 0; d < 12; ++d) CHECK(rel[d] == doctest::Approx(-mean_slope * d).epsilon(1e-12));
  for (int d = 1; d < 12; ++d) CHECK(rel[d] < rel[d - 1]);
  const auto last = attention_pattern(model, batch).all.values;
  for (int s = 0; s < 12; ++s) CHECK(last[s] == doctest::Approx(-mean_slope * (11 - s)).epsilon(1e-12));
}

TEST_CASE("component curves") {
  SUBCASE("sum to the total curve") {
    for (auto tag : {EncodingTag::RoPE, EncodingTag::HoPE, EncodingTag::AB1, EncodingTag::AB2,
                     EncodingTag::AB3, EncodingTag::NoPE}) {
      CAPTURE(to_string(tag));
      const auto model = Transformer<double>::random(probe_config(tag), 6, 0.5);
      const auto batch = gen_probe_batch(20, 14, 20, 7);
      for (auto layer : {std::optional<int>{}, std::optional<int>{1}}) {
        const auto cp = component_pattern(model, batch, layer);
        REQUIRE(cp.components.size() == 4u);
        for (int s = 0; s < 14; ++s) {
          double sum = 0.0;
          for (const auto& c : cp.components) sum += c.values[s];
          CHECK(std::abs(sum - cp.total.values[s]) < 1e-9);
        }
      }
    }
  }
  SUBCASE("a single component is the whole curve") {
    const auto model = Transformer<double>::random(probe_config(EncodingTag::RoPE, 2, 2), 4, 0.5);
    const auto batch = gen_probe_batch(20, 10, 8, 1);
    const auto cp = component_pattern(model, batch);
    REQUIRE(cp.components.size() == 1u);
    for (int s = 0; s < 10; ++s) {
      CHECK(cp.components[0].values[s] == doctest::Approx(cp.total.values[s]).epsilon(1e-12));
    }
  }
  SUBCASE("averaging over layers is linear") {
    const auto model = Transformer<double>::random(probe_config(EncodingTag::RoPE), 2, 0.5);
    const auto batch = gen_probe_batch(20, 8, 16, 3);
    const auto all = component_pattern(model, batch);
    const auto l0 = component_pattern(model, batch, 0);
    const auto l1 = component_pattern(model, batch, 1);
    for (int i = 0; i < 4; ++i) {
      for (int s = 0; s < 8; ++s) {
        CHECK(all.components[i].values[s] ==
              doctest::Approx(0.5 * (l0.components[i].values[s] + l1.components[i].values[s])).epsilon(1e-12));
      }
    }
  }
  SUBCASE("non-rotary encodings are rejected") {
    const auto batch = gen_probe_batch(20, 8, 4, 3);
    CHECK_THROWS_AS(component_pattern(Transformer<double>(probe_config(EncodingTag::ALiBi)), batch),
                    InvalidArgument);
    CHECK_THROWS_AS(component_pattern(Transformer<double>(probe_config(EncodingTag::LearnableAPE)), batch),
                    InvalidArgument);
    CHECK_THROWS_AS(component_pattern(Transformer<double>(probe_config(EncodingTag::RoPE)), batch, 2),
                    InvalidArgument);
  }
}

TEST_CASE("learnable positions cannot be probed past their table") {
  const Transformer<double> model(probe_config(EncodingTag::LearnableAPE));
  CHECK_NOTHROW(attention_pattern(model, gen_probe_batch(20, 16, 2, 0)));
  CHECK_THROWS_AS(attention_pattern(model, gen_probe_batch(20, 17, 2, 0)), InvalidArgument);
}

TEST_CASE("extrapolation report") {
  const auto rope = Transformer<double>::random(probe_config(EncodingTag::RoPE), 1, 0.5);
  const auto same = extrapolation_report(rope, 16, 16, 8, 2);
  CHECK(same.phase_flags.empty());
  CHECK(same.envelope_flags.empty());
  CHECK(same.flagged.empty());

  const auto longer = extrapolation_report(rope, 16, 40, 8, 2);
  CHECK(longer.train_curves.total.values.size() == 16u);
  CHECK(longer.test_curves.total.values.size() == 40u);
  // base 100, d_head 8: theta = 1, 0.316, 0.1, 0.0316; only the first completes a turn within 15 steps.
  CHECK(longer.phase_flags == std::vector<int>{1, 2, 3});
  CHECK(std::includes(longer.flagged.begin(), longer.flagged.end(), longer.phase_flags.begin(),
                      longer.phase_flags.end()));

  const auto hope = Transformer<double>::random(probe_config(EncodingTag::HoPE), 1, 0.5);
  for (int test : {16, 40, 200}) {
    CHECK(extrapolation_report(hope, 16, test, 4, 2).phase_flags.empty());
  }
  CHECK_THROWS_AS(extrapolation_report(rope, 16, 8, 4, 2), InvalidArgument);
}

TEST_CASE("scope and mode names") {
  CHECK(to_string(QueryMode::Last) == "last");
  CHECK(to_string(QueryMode::AllRelative) == "relative");
  CHECK(to_string(ProbeScope::PerHead) == "head");
}
