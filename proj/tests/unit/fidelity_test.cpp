#include <doctest.h>

#include <cmath>

#include "iqa/extract.hpp"
#include "iqa/fidelity.hpp"
#include "iqa/rng.hpp"
#include "support/oracles.hpp"
#include "support/testing.hpp"

using namespace iqa::fidelity;
using doctest::Approx;

namespace {

std::string random_string(iqa::Rng& rng, std::size_t len) {
  static const char* const alphabet[] = {"a", "b", "c", " ", "学", "校", "我"};
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.index(7)];
  return s;
}

}  // namespace

TEST_CASE("chrF hand example and boundary cases") {
  CHECK(chrf("ab", "abc", {.max_n = 2, .beta = 2}) == Approx(0.6364).epsilon(1e-4));
  CHECK(chrf("ab", "abc", {.max_n = 2, .beta = 2}) == Approx((5.0 * 7.0 / 12.0) / (4.0 + 7.0 / 12.0)).epsilon(1e-14));
  CHECK(chrf("我昨天去学校", "我昨天去学校") == 1.0);
  CHECK(chrf("x", "x") == 1.0);
  CHECK(chrf("", "abc") == 0.0);
  CHECK(chrf("  a b ", "ab") == 1.0);
  CHECK(testing::error_code([] { chrf("a", ""); }) == "invalid_argument");
  CHECK(testing::error_code([] { chrf("a", "a", {.max_n = 0}); }) == "invalid_argument");
}

TEST_CASE("chrF agrees with the pairing oracle on random pairs") {
  iqa::Rng rng(2024);
  for (int i = 0; i < 50; ++i) {
    const auto h = random_string(rng, rng.index(41));
    auto r = random_string(rng, 1 + rng.index(40));
    if (strip_whitespace_utf32(r).empty()) r += "a";
    const double got = chrf(h, r);
    const double want = oracle::chrf(strip_whitespace_utf32(h), strip_whitespace_utf32(r), 6, 2.0);
    CHECK(std::fabs(got - want) <= 1e-12);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
    CHECK(chrf("  " + h + "\t", r) == got);
  }
}

TEST_CASE("neural metric CSV") {
  const auto m = parse_neural_metrics("sample_id,bleurt20,bertscore,cometkiwi,xcomet\ns1,0.51,0.96,0.51,0.18\n");
  REQUIRE(m.size() == 1);
  CHECK(m.at("s1") == NeuralScores{0.51, 0.96, 0.51, 0.18});
  const auto msg = testing::error_message(
      [] { parse_neural_metrics("sample_id,bleurt20,bertscore,cometkiwi\ns1,0.5,0.9,0.5\n"); });
  CHECK(msg.find("xcomet") != std::string::npos);
  CHECK(parse_neural_metrics("sample_id,bleurt20,bertscore,cometkiwi,xcomet\n").empty());
  CHECK(testing::error_code([] {
          parse_neural_metrics("sample_id,bleurt20,bertscore,cometkiwi,xcomet\ns1,1,1,1,1\ns1,1,1,1,1\n");
        }) == "duplicate");
  CHECK(testing::error_code([] {
          parse_neural_metrics("sample_id,bleurt20,bertscore,cometkiwi,xcomet\ns1,x,1,1,1\n");
        }) == "parse");
}

TEST_CASE("fidelity rows assemble chrF and neural columns") {
  const auto pairs = parse_segment_pairs(
      "{\"sample_id\": \"s1\", \"hypothesis\": \"我们去学校\", \"reference\": \"我们去学校\"}\n"
      "{\"sample_id\": \"s2\", \"hypothesis\": \"ab\", \"reference\": \"abc\"}\n");
  NeuralMetricMap neural{{"s1", {0.5, 0.9, 0.4, 0.2}}, {"s2", {0.1, 0.2, 0.3, 0.4}}};
  const auto rows = build_fidelity_features(pairs, neural);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].features[0] == 1.0);
  CHECK(rows[1].features[0] == Approx(chrf("ab", "abc")));
  CHECK(rows[1].features[4] == 0.4);

  neural.erase("s2");
  CHECK(testing::error_message([&] { build_fidelity_features(pairs, neural); }).find("s2") != std::string::npos);

  const auto d = iqa::extract::fidelity_dataset(pairs, {{"s1", {0.5, 0.9, 0.4, 0.2}}, {"s2", {0.1, 0.2, 0.3, 0.4}}},
                                                {{"s1", 6.0}, {"s2", 4.0}});
  CHECK(d.size() == 2);
  CHECK(d.schema.size() == 5);
}
