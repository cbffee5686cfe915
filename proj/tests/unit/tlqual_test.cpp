#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "iqa/dataset.hpp"
#include "iqa/extract.hpp"
#include "iqa/rng.hpp"
#include "iqa/tlqual.hpp"
#include "support/testing.hpp"

using namespace iqa::tlqual;
using doctest::Approx;

namespace {

SegmentationAnnotation forty_words() {
  // 2 sentences, 3 T-units, 4 clauses, 40 words.
  return {"s1", 40, {{{10, 10}}, {{12}, {8}}}};
}

CollocationAnnotation with_vo(std::vector<std::string> vo) {
  CollocationAnnotation c;
  c.sample_id = "s1";
  c.occurrences[0] = std::move(vo);
  return c;
}

}  // namespace

TEST_CASE("example annotations parse to the expected tuples") {
  const auto e = parse_error_annotations(
      "[1, 6, 7, R, 学校, 0.95]\n"
      "\n"
      "Expected output follows\n"
      "[2, 4, 6, W, 比我还快, 0.85]\n"
      "[3, 10, 11, S, ``让'', 0.95]\n"
      "[3, 25, 28, S, \"移民会落入\", 0.90]\n");
  REQUIRE(e.size() == 4);
  CHECK(e[0] == ErrorEntry{1, 6, 7, ErrorType::R, "学校", 0.95});
  CHECK(e[1] == ErrorEntry{2, 4, 6, ErrorType::W, "比我还快", 0.85});
  CHECK(e[2] == ErrorEntry{3, 10, 11, ErrorType::S, "让", 0.95});
  CHECK(e[3] == ErrorEntry{3, 25, 28, ErrorType::S, "移民会落入", 0.90});
  CHECK(parse_error_annotations(format_error_annotations(e)) == e);
  CHECK(parse_error_annotations("No error entries.\n").empty());
}

TEST_CASE("malformed annotations report the line") {
  const auto msg = testing::error_message([] { parse_error_annotations("\n[1, 9, 2, R, x, 0.5]\n"); });
  CHECK(msg.find("line 2") != std::string::npos);
  CHECK(testing::error_code([] { parse_error_annotations("[1, 1, 2, Q, x, 0.5]"); }) == "parse");
  CHECK(testing::error_code([] { parse_error_annotations("[1, 1, 2, R, x, 1.5]"); }) == "parse");
  CHECK(testing::error_code([] { parse_error_annotations("[1, 1, 2, R, x]"); }) == "parse");
}

TEST_CASE("quoted corrected text may contain commas and round trips") {
  const std::vector<ErrorEntry> e{{4, 0, 3, ErrorType::M, "然而, 我们", 0.7}, {5, 2, 2, ErrorType::R, "", 1.0}};
  const auto text = format_error_annotations(e);
  CHECK(parse_error_annotations(text) == e);
}

TEST_CASE("parser round trip on random entries") {
  iqa::Rng rng(17);
  static const char* const words[] = {"学校", "我们", "a,b", "\"q\"", "x y", "了"};
  std::vector<ErrorEntry> e;
  for (int i = 0; i < 100; ++i) {
    const long a = static_cast<long>(rng.index(50));
    e.push_back({static_cast<long>(rng.index(9)) + 1, a, a + static_cast<long>(rng.index(5)),
                 static_cast<ErrorType>(rng.index(4)), words[rng.index(6)],
                 static_cast<double>(rng.index(101)) / 100.0});
  }
  CHECK(parse_error_annotations(format_error_annotations(e)) == e);
}

TEST_CASE("error counts filter by confidence") {
  const std::vector<ErrorEntry> e{
      {1, 0, 1, ErrorType::R, "a", 0.95}, {1, 2, 3, ErrorType::S, "b", 0.90}, {2, 0, 1, ErrorType::S, "c", 0.6}};
  CHECK(error_counts(e, 0.7) == ErrorCounts{1, 0, 1, 0});
  CHECK(error_counts(e) == ErrorCounts{1, 0, 2, 0});
  CHECK(error_counts({}) == ErrorCounts{});
}

TEST_CASE("coarse-grained metrics") {
  const auto m = coarse_grained_metrics(forty_words());
  CHECK(m.MLS == 20.0);
  CHECK(m.MLTU == Approx(40.0 / 3.0).epsilon(1e-14));
  CHECK(m.NTPS == 1.5);
  CHECK(m.MLC == 10.0);
  CHECK(m.NCPS == 2.0);
  CHECK(std::fabs(m.MLS - m.MLTU * m.NTPS) < 1e-12);
  CHECK(std::fabs(m.MLS - m.MLC * m.NCPS) < 1e-12);

  const auto one = coarse_grained_metrics({"s", 7, {{{7}}}});
  CHECK(one.MLS == 7);
  CHECK(one.MLTU == 7);
  CHECK(one.MLC == 7);
  CHECK(one.NTPS == 1);
  CHECK(one.NCPS == 1);

  CHECK(testing::error_code([] { coarse_grained_metrics({"s", 0, {}}); }) == "invalid_argument");
  CHECK(testing::error_code([] { coarse_grained_metrics({"s", 41, {{{40}}}}); }) == "invalid_argument");
}

TEST_CASE("coarse identities on random segmentations") {
  iqa::Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    SegmentationAnnotation s{"r", 0, {}};
    for (std::size_t i = 0, ns = 1 + rng.index(6); i < ns; ++i) {
      std::vector<std::vector<long>> sentence;
      for (std::size_t t = 0, nt = 1 + rng.index(3); t < nt; ++t) {
        std::vector<long> tu;
        for (std::size_t c = 0, nc = 1 + rng.index(3); c < nc; ++c) {
          tu.push_back(1 + static_cast<long>(rng.index(15)));
          s.total_word_tokens += tu.back();
        }
        sentence.push_back(tu);
      }
      s.sentences.push_back(sentence);
    }
    const auto m = coarse_grained_metrics(s);
    CHECK(std::fabs(m.MLS - m.MLTU * m.NTPS) <= 1e-12 * m.MLS);
    CHECK(std::fabs(m.MLS - m.MLC * m.NCPS) <= 1e-12 * m.MLS);
    CHECK(segmentation_from_json(segmentation_to_json(s)).sentences == s.sentences);
  }
}

TEST_CASE("collocation metrics") {
  auto m = collocation_metrics(with_vo({"看书", "看书", "吃饭"}), 30);
  CHECK(m.categories[0].rttr == Approx(2.0 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(m.categories[0].ratio == Approx(0.1).epsilon(1e-14));
  CHECK(m.categories[4].rttr == 0.0);  // CN empty
  CHECK(m.categories[4].ratio == 0.0);
  m = collocation_metrics(with_vo({"看书"}), 30);
  CHECK(m.categories[0].rttr == 1.0);
  CHECK(testing::error_code([] { collocation_metrics(with_vo({}), 0); }) == "invalid_argument");
}

TEST_CASE("RTTR bounds on random categories") {
  iqa::Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    CollocationAnnotation c;
    c.sample_id = "r";
    for (auto& occ : c.occurrences)
      for (std::size_t i = 0, n = rng.index(6); i < n; ++i) occ.push_back("w" + std::to_string(rng.index(4)));
    const auto m = collocation_metrics(c, 50);
    for (std::size_t k = 0; k < 8; ++k) {
      const double t = static_cast<double>(c.occurrences[k].size());
      CHECK((m.categories[k].rttr == 0.0) == (m.categories[k].ratio == 0.0));
      CHECK(m.categories[k].rttr <= std::sqrt(t) + 1e-12);
    }
  }
}

TEST_CASE("TLQual feature assembly") {
  const auto seg = forty_words();
  const auto coll = with_vo({"看书", "看书", "吃饭"});
  const std::vector<ErrorEntry> errors{{1, 6, 7, ErrorType::R, "学校", 0.95}};
  const auto v = build_tlqual_features(seg, coll, errors, "s1");
  const auto schema = iqa::builtin_schema(iqa::Dimension::TLQual);
  REQUIRE(v.size() == 25);
  CHECK(v[*schema.index_of("NRW")] == 1.0);
  CHECK(v[*schema.index_of("MLS")] == 20.0);
  CHECK(v[*schema.index_of("VO_RTTR")] == Approx(2.0 / std::sqrt(3.0)));
  CHECK(v[*schema.index_of("VO_RATIO")] == Approx(3.0 / 40.0));

  const auto with_total = build_tlqual_features(seg, coll, errors, "s1", {.include_total_rttr = true});
  CHECK(with_total.size() == 26);
  CHECK(iqa::builtin_schema(iqa::Dimension::TLQual, {.include_total_rttr = true}).size() == 26);

  const auto msg = testing::error_message([&] { build_tlqual_features(seg, coll, errors, "s9"); });
  CHECK(msg.find("s1") != std::string::npos);
  CHECK(msg.find("s9") != std::string::npos);
}

TEST_CASE("collocation JSON requires the eight categories") {
  const auto c = with_vo({"看-书"});
  CHECK(collocation_from_json(collocation_to_json(c)).occurrences == c.occurrences);
  auto j = collocation_to_json(c);
  j.erase("PC");
  CHECK(testing::error_code([&] { collocation_from_json(j); }) == "parse");
}
