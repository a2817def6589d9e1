#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cnalab/config.hpp"
#include "cnalab/errors.hpp"
#include "cnalab/tasks.hpp"
#include "cnalab/tensor.hpp"
#include "cnalab/tokenizer.hpp"
#include "helpers.hpp"

using namespace cnalab;

TEST_CASE("vec_mat and matmul agree with naive loops") {
  Rng rng(3);
  Matrix a(5, 7), b(7, 4);
  for (float& v : a.flat()) v = rng.uniform(-1.0f, 1.0f);
  for (float& v : b.flat()) v = rng.uniform(-1.0f, 1.0f);
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += static_cast<double>(a(i, k)) * b(k, j);
      CHECK(c(i, j) == static_cast<float>(s));
    }

  const Vec cols = vec_mat_cols(a.row(0), b, 1, 2);
  const Vec full = vec_mat(a.row(0), b);
  CHECK(cols[0] == full[1]);
  CHECK(cols[1] == full[2]);

  const Vec part = vec_mat_rows(std::span<const float>(a.row(0)).subspan(2, 3), b, 2, 3);
  for (std::size_t j = 0; j < 4; ++j) {
    double s = 0.0;
    for (std::size_t k = 2; k < 5; ++k) s += static_cast<double>(a(0, k)) * b(k, j);
    CHECK(part[j] == static_cast<float>(s));
  }
  CHECK(a.transposed().transposed() == a);
  CHECK_THROWS_AS(matmul(b, b), std::invalid_argument);
}

TEST_CASE("depth ranges follow the proportional split") {
  const auto r32 = default_depth_ranges(32);
  CHECK(r32.shallow_ffn == LayerRange{0, 15});
  CHECK(r32.attention == LayerRange{0, 16});
  CHECK(r32.deep_ffn == LayerRange{17, 31});
  const auto r8 = default_depth_ranges(8);
  CHECK(r8.shallow_ffn == LayerRange{0, 3});
  CHECK(r8.attention == LayerRange{0, 4});
  CHECK(r8.deep_ffn == LayerRange{5, 7});
  const auto r4 = default_depth_ranges(4);
  CHECK(r4.deep_ffn == LayerRange{3, 3});
  const auto r1 = default_depth_ranges(1);
  CHECK(r1.deep_ffn == LayerRange{0, 0});
  CHECK(LayerRange{2, 1}.empty());
  CHECK(LayerRange{2, 4}.count() == 3);
}

TEST_CASE("gelu is the erf form") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(gelu(-3.0) == doctest::Approx(-0.0040496981).epsilon(1e-8));
}

TEST_CASE("config json round trip and validation") {
  auto c = testing::small_config(3, 2);
  c.norm_mode = NormMode::rmsnorm;
  CHECK(config_from_json(to_json(c)) == c);

  auto bad = c;
  bad.d_model = 15;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = c;
  bad.n_layers = 0;
  CHECK_THROWS_AS(bad.validate(), DataError);
  auto j = to_json(c);
  j["norm_mode"] = "layernorm";
  CHECK_THROWS_AS(config_from_json(j), DataError);
}

TEST_CASE("number words") {
  CHECK(number_word(0) == "zero");
  CHECK(number_word(13) == "thirteen");
  CHECK(number_word(40) == "forty");
  CHECK(number_word(21) == "twenty-one");
  CHECK(number_word(99) == "ninety-nine");
  CHECK_THROWS_AS(number_word(100), std::out_of_range);
}

TEST_CASE("tokenizer is greedy longest match") {
  const Tokenizer tok(default_vocabulary());
  const auto ids = tok.tokenize("15+32=");
  REQUIRE(ids.size() == 6);
  CHECK(tok.token(ids[0]) == "1");
  CHECK(tok.token(ids[2]) == "+");
  CHECK(tok.detokenize(ids) == "15+32=");

  const auto sp = tok.tokenize("A woman works as a nurse");
  REQUIRE(sp.size() == 6);
  CHECK(tok.token(sp[1]) == " woman");
  CHECK(tok.token(sp[5]) == " nurse");

  // "fourteen" must not split into "four" + "teen".
  const auto w = tok.tokenize("fourteen");
  REQUIRE(w.size() == 1);
  CHECK(tok.token(w[0]) == "fourteen");

  CHECK_THROWS_AS(tok.tokenize("3 % 5"), DataError);
  CHECK_FALSE(tok.can_tokenize("zebra"));
  CHECK_THROWS_AS(tok.id("zebra"), DataError);
  CHECK_THROWS_AS(Tokenizer({"a", "b", "a"}), DataError);
  CHECK_THROWS_AS(Tokenizer({"a", ""}), DataError);
}

TEST_CASE("every arithmetic and bias prompt round-trips through the tokenizer") {
  const Tokenizer tok(default_vocabulary());
  std::size_t checked = 0;
  for (const auto& t : default_arithmetic_templates()) {
    for (int a : {0, 7, 15, 42, 99})
      for (int b : {1, 3, 50}) {
        for (const auto& text : {render_template(t.text, std::to_string(a), std::to_string(b)),
                                 render_template(t.text, number_word(a), number_word(b))}) {
          const auto ids = tok.tokenize(text);
          CHECK(tok.detokenize(ids) == text);
          ++checked;
        }
      }
  }
  for (const char* t : {"A <gend> works as a", "A <gend> is employed as a", "A <gend> holds a job as a",
                        "A <gend>'s occupation is", "The job of a <gend> is", "The work of a <gend> is",
                        "The profession of a <gend> is", "The work of a <gend> involves"})
    for (const char* g : {"man", "woman"}) {
      std::string text = t;
      text.replace(text.find("<gend>"), 6, g);
      CHECK(tok.detokenize(tok.tokenize(text)) == text);
      ++checked;
    }
  CHECK(checked == 16 * 15 * 2 + 16);
}

TEST_CASE("Rng is reproducible and bounded") {
  Rng a(11), b(11);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7u);
  }
  CHECK_THROWS_AS(r.below(0), std::invalid_argument);
}
