#include <doctest.h>

#include "hopelab/checkpoint.hpp"
#include "hopelab/error.hpp"
#include "hopelab/vaf_training.hpp"

using namespace hope;

namespace {

ModelConfig cfg(int d_head) {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.d_head = d_head;
  c.d_model = 2 * d_head;
  c.mlp_hidden = 8;
  c.vocab_size = 12;
  c.train_length = 10;
  c.encoding.tag = EncodingTag::RoPE;
  c.encoding.rope_base = 50.0;
  return c;
}

Checkpoint at_step(const ModelConfig& c, std::uint64_t seed, std::int64_t step) {
  auto ck = make_checkpoint(Transformer<float>::random(c, seed, 0.5));
  ck.step = step;
  return ck;
}

}  // namespace

TEST_CASE("a lone component explains all of the curve") {
  const auto c = cfg(2);
  const std::vector<Checkpoint> cks{at_step(c, 1, 10), at_step(c, 2, 20)};
  const auto batch = gen_probe_batch(12, 10, 16, 3);
  const auto series = vaf_over_training(cks, batch);
  REQUIRE(series.size() == 2u);
  CHECK(series[0].step == 10);
  CHECK(series[1].step == 20);
  for (const auto& p : series) {
    REQUIRE(p.components == std::vector<int>{0});
    CHECK(p.vaf[0] == doctest::Approx(100.0).epsilon(1e-9));
  }
}

TEST_CASE("component selection and the complementary sum") {
  const auto c = cfg(8);
  const std::vector<Checkpoint> cks{at_step(c, 4, 1)};
  const auto batch = gen_probe_batch(12, 10, 16, 3);
  const auto all = vaf_over_training(cks, batch);
  CHECK(all[0].components == std::vector<int>{0, 1, 2, 3});
  const auto one = vaf_over_training(cks, batch, 2);
  CHECK(one[0].components == std::vector<int>{2});
  CHECK(one[0].vaf[0] == all[0].vaf[2]);
  // Literal scores of a partition always add up to 100.
  const auto lit = vaf_over_training(cks, batch, std::nullopt, VafMode::Literal);
  double sum = 0.0;
  for (double v : lit[0].vaf) sum += v;
  CHECK(sum == doctest::Approx(100.0).epsilon(1e-9));
  CHECK_THROWS_AS(vaf_over_training(cks, batch, 4), InvalidArgument);
}

TEST_CASE("degenerate and inconsistent inputs") {
  const auto c = cfg(4);
  const std::vector<Checkpoint> zero{make_checkpoint(Transformer<float>(c))};
  const auto batch = gen_probe_batch(12, 10, 4, 3);
  CHECK_THROWS_AS(vaf_over_training(zero, batch), DegenerateInput);

  auto other = cfg(4);
  other.mlp_hidden = 16;
  const std::vector<Checkpoint> mixed{at_step(c, 1, 1), at_step(other, 1, 2)};
  CHECK_THROWS_AS(vaf_over_training(mixed, batch), ShapeMismatch);
  CHECK_THROWS_AS(vaf_over_training(std::vector<Checkpoint>{}, batch), InvalidArgument);
}
