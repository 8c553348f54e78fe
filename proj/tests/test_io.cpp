#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "hopelab/error.hpp"
#include "hopelab/experiment.hpp"
#include "hopelab/io.hpp"

using namespace hope;

namespace {

std::string field_of(const std::string& text) {
  try {
    ExperimentConfig::from_flat(FlatConfig::parse(text));
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

const char* kMinimal = "model.encoding = rope\ntrain.total_steps = 10\n";

}  // namespace

TEST_CASE("flat config parsing") {
  const auto f = FlatConfig::parse(
      "# comment\n"
      "a.int = 42   # trailing\n"
      "a.real = 2.5e-3\n"
      "a.list = x, y ,z\n"
      "a.ints = 1,2,3\n"
      "a.flag = true\n"
      "\n"
      "a.big = 18446744073709551615\n");
  CHECK(f.integer("a.int") == 42);
  CHECK(f.real("a.real") == 2.5e-3);
  CHECK(f.list("a.list") == std::vector<std::string>{"x", "y", "z"});
  CHECK(f.int_list("a.ints") == std::vector<int>{1, 2, 3});
  CHECK(f.boolean("a.flag"));
  CHECK(f.u64("a.big") == 18446744073709551615ULL);
  CHECK(f.integer_or("a.none", 7) == 7);
  CHECK(f.str_or("a.none", "d") == "d");
  CHECK(f.unused().empty());

  CHECK_THROWS_AS(FlatConfig::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(FlatConfig::parse("a = 1\na = 2\n"), ConfigError);
  const auto bad = FlatConfig::parse("a.int = 4x\na.real = nan-ish\n");
  CHECK_THROWS_AS(bad.integer("a.int"), ConfigError);
  CHECK_THROWS_AS(bad.real("a.real"), ConfigError);
  try {
    bad.integer("a.missing");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "a.missing");
  }
  CHECK_THROWS_AS(FlatConfig::load("/nonexistent/config.txt"), ConfigError);
}

TEST_CASE("experiment config validation names the field") {
  CHECK(field_of(kMinimal).empty());
  CHECK(field_of("train.total_steps = 10\n") == "model.encoding");
  CHECK(field_of("model.encoding = rope\n") == "train.total_steps");
  CHECK(field_of(std::string(kMinimal) + "model.colour = red\n") == "model.colour");
  CHECK(field_of("model.encoding = rope, bogus\ntrain.total_steps = 10\n") == "model.encoding");
  CHECK(field_of(std::string(kMinimal) + "model.d_model = 60\n") == "model.d_model");
  CHECK(field_of(std::string(kMinimal) + "train.learning_rate = -1\n") == "train.learning_rate");
  CHECK(field_of(std::string(kMinimal) + "model.vocab_size = 20\n") == "model.vocab_size");
  CHECK(field_of(std::string(kMinimal) + "train.schedule = linear\n") == "train.schedule");
  CHECK(field_of(std::string(kMinimal) + "data.early_steps = -5\n") == "data.early_steps");
  CHECK(field_of(std::string(kMinimal) + "data.early_steps = 5\ndata.early_mix_copy = 0\n") ==
        "data.early_mix_markov");
}

TEST_CASE("experiment config text round trip") {
  auto cfg = ExperimentConfig::from_flat(FlatConfig::parse(
      "model.encoding = hope, rope, alibi\ntrain.total_steps = 99\nrun.seeds = 1,2,3\n"
      "eval.copy_counts = 2,3\ntrain.learning_rate = 0.00123456789\ndata.early_steps = 40\ndata.early_mix_follow = 0.5\n"));
  CHECK(cfg.encodings.size() == 3u);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  const auto again = ExperimentConfig::from_flat(FlatConfig::parse(cfg.to_text()));
  CHECK(again.to_text() == cfg.to_text());
  CHECK(again.train == cfg.train);
  CHECK(again.model == cfg.model);
  CHECK(again.data.early_steps == 40);
  CHECK(again.data.early_mixture.follow == 0.5);
  CHECK(cfg.model_for(EncodingTag::ALiBi).encoding.tag == EncodingTag::ALiBi);
  CHECK(run_name(EncodingTag::HoPE, 3) == "hope_seed3");
  CHECK(config_digest(cfg.model) == config_digest(again.model));
  CHECK(config_digest(cfg.model) != config_digest(cfg.model_for(EncodingTag::RoPE)));
}

TEST_CASE("csv reader skips malformed rows") {
  const auto dir = testing::scratch_dir("csv");
  {
    std::ofstream f(dir / "m.csv");
    f << "step,loss\n1,2.5\n2,oops\n3\n4,1.0,extra\n5,0.5\n";
  }
  const auto t = read_csv(dir / "m.csv", {"step", "loss"});
  CHECK(t.header == std::vector<std::string>{"step", "loss"});
  CHECK(t.rows.size() == 2u);
  CHECK(t.skipped == 3);
  CHECK(column_index(t, "loss") == 1);
  CHECK_THROWS_AS(column_index(t, "x"), FormatError);
  CHECK_THROWS_AS(read_csv(dir / "none.csv"), FormatError);
}

TEST_CASE("number formatting and charts") {
  CHECK(fmt_double(0.5) == "0.5");
  CHECK(fmt_double(1.0 / 3.0, 4) == "0.3333");
  CHECK(fmt_double(1e-300, 3) == "1e-300");
  const auto svg = svg_line_chart({{"a", {0, 1, 2}, {1, 3, 2}}, {"b<&>", {0, 2}, {0, 1}}}, "t", "x", "y");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("b&lt;&amp;&gt;") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("text files") {
  const auto dir = testing::scratch_dir("text");
  write_text_file(dir / "deep" / "x.txt", "hello\n");
  CHECK(read_text_file(dir / "deep" / "x.txt") == "hello\n");
  CHECK_THROWS(read_text_file(dir / "missing.txt"));
}
