#include <doctest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "iqa/extract.hpp"
#include "iqa/fluency.hpp"
#include "iqa/rng.hpp"
#include "iqa/wav.hpp"
#include "support/testing.hpp"

using namespace iqa::fluency;
using doctest::Approx;

namespace {

TimeAlignedTranscript worked() {
  TimeAlignedTranscript t;
  t.sample_id = "w";
  t.total_duration_s = 6.0;
  t.tokens = {{"a", 0.0, 1.0, 2, TokenKind::Speech},
              {"uh", 1.0, 1.4, 1, TokenKind::FilledPause},
              {"b", 2.0, 4.0, 4, TokenKind::Speech}};
  t.silences = {{1.4, 2.0}, {4.0, 6.0}};
  return t;
}

std::vector<double> tone(double seconds, double rate, double amplitude = 0.9) {
  std::vector<double> v(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = amplitude * std::sin(2 * std::numbers::pi * 220.0 * i / rate);
  return v;
}

std::vector<double> concat(std::initializer_list<std::vector<double>> parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

TEST_CASE("worked transcript yields the hand-computed features") {
  const auto f = compute_fluency_features(worked());
  CHECK(f.NFP == 1);
  CHECK(f.MLFP == Approx(0.4).epsilon(1e-12));
  CHECK(f.NUP == 2);
  CHECK(f.MLUP == Approx(1.3).epsilon(1e-12));
  CHECK(f.PSC == 6);
  CHECK(f.SR == Approx(7.0 / 6.0).epsilon(1e-12));
  CHECK(f.PTR == Approx(3.4 / 6.0).epsilon(1e-12));
  CHECK(*f.AR == Approx(2.0).epsilon(1e-12));
  CHECK(*f.MLS == Approx(0.5).epsilon(1e-12));
  CHECK(*f.MLR == Approx(3.0).epsilon(1e-12));
  CHECK(f.NRSA == 0);
  CHECK(f.NPSA == 0);
  CHECK(f.NRLFP == 0);
  CHECK(f.NRLUP == 0);
  CHECK(f.to_vector().size() == 14);
}

TEST_CASE("transcript without pauses") {
  TimeAlignedTranscript t;
  t.sample_id = "np";
  t.total_duration_s = 3.0;
  t.tokens = {{"a", 0.0, 1.5, 3, TokenKind::Speech}, {"b", 1.5, 3.0, 3, TokenKind::Speech}};
  const auto f = compute_fluency_features(t);
  CHECK(f.NUP == 0);
  CHECK(f.NFP == 0);
  CHECK(f.PTR == 1.0);
  CHECK(f.SR == Approx(*f.AR).epsilon(1e-15));
  CHECK(f.MLFP == 0.0);
  CHECK(f.MLUP == 0.0);
}

TEST_CASE("doubling every timestamp halves the rates") {
  auto t = worked();
  const auto a = compute_fluency_features(t);
  t.total_duration_s *= 2;
  for (auto& tok : t.tokens) {
    tok.start_s *= 2;
    tok.end_s *= 2;
  }
  for (auto& s : t.silences) {
    s.start_s *= 2;
    s.end_s *= 2;
  }
  const auto b = compute_fluency_features(t);
  CHECK(b.SR == Approx(a.SR / 2).epsilon(1e-14));
  CHECK(*b.AR == Approx(*a.AR / 2).epsilon(1e-14));
  CHECK(b.NFP == a.NFP);
  CHECK(b.NUP == a.NUP);
  CHECK(b.PSC == a.PSC);
  CHECK(b.PTR == Approx(a.PTR).epsilon(1e-14));
}

TEST_CASE("phonation identity and added silences") {
  auto t = worked();
  auto f = compute_fluency_features(t);
  double up = 0;
  for (const auto& s : t.silences) up += s.duration();
  CHECK(f.PTR * t.total_duration_s + up == Approx(t.total_duration_s).epsilon(1e-14));

  // Split the trailing silence's room: shorten it and add one more after a token.
  t.total_duration_s = 7.0;
  t.tokens.push_back({"c", 6.0, 6.5, 1, TokenKind::Speech});
  const auto before = compute_fluency_features(t);
  t.silences.push_back({6.5, 7.0});
  const auto after = compute_fluency_features(t);
  CHECK(after.NUP == before.NUP + 1);
  CHECK(after.PTR <= before.PTR);
}

TEST_CASE("zero pruned syllables leaves dependent features absent") {
  TimeAlignedTranscript t;
  t.sample_id = "fp";
  t.total_duration_s = 2.0;
  t.tokens = {{"uh", 0.0, 1.0, 1, TokenKind::FilledPause}};
  const auto f = compute_fluency_features(t);
  CHECK_FALSE(f.MLS.has_value());
  CHECK(testing::error_code([&] { (void)f.to_vector(); }) == "missing");
}

TEST_CASE("invalid transcripts are rejected") {
  auto t = worked();
  t.silences[0] = {0.5, 2.0};  // overlaps the first token
  CHECK(testing::error_code([&] { compute_fluency_features(t); }) == "range");
  t = worked();
  t.tokens[1].syllables = 0;
  CHECK(testing::error_code([&] { compute_fluency_features(t); }) == "range");
}

TEST_CASE("transcript JSON round trip and file loading") {
  const auto t = load_transcript(testing::data_dir() / "fluency" / "s001.json");
  CHECK(t.tokens.size() == 3);
  CHECK(t.tokens[1].kind == TokenKind::FilledPause);
  const auto back = transcript_from_json(transcript_to_json(t));
  CHECK(back.silences == t.silences);
  const auto f = compute_fluency_features(t);
  CHECK(f.PSC == 6);

  const auto scores = iqa::extract::load_score_map(testing::data_dir() / "fluency" / "scores.csv");
  const auto d = iqa::extract::fluency_dataset(iqa::extract::load_transcripts(testing::data_dir() / "fluency"), scores);
  CHECK(d.size() == 1);
  CHECK(d.samples[0].score == 5.5);
  CHECK(d.samples[0].features == f.to_vector());
}

TEST_CASE("IQR fence counts") {
  CHECK(iqr_outlier_counts(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 40}) == FenceCounts{1, 1});
  CHECK(iqr_outlier_counts(std::vector<double>{2, 2, 2, 2}) == FenceCounts{0, 0});
  CHECK(iqr_outlier_counts(std::vector<double>{1, 2, 3}) == FenceCounts{0, 0});
  CHECK(iqr_outlier_counts(std::vector<double>{}) == FenceCounts{0, 0});
  CHECK(iqr_outlier_counts(std::vector<double>{5}) == FenceCounts{0, 0});
}

TEST_CASE("fence counts never exceed the population") {
  iqa::Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(rng.index(40));
    for (double& x : v) x = std::exp(rng.normal(0, 1.2));
    const auto c = iqr_outlier_counts(v);
    CHECK(c.relative + c.particular <= v.size());
  }
}

TEST_CASE("silence detection on tone, gap, tone") {
  const double rate = 16000;
  const auto pcm = concat({tone(1.0, rate), std::vector<double>(8000, 0.0), tone(1.0, rate)});
  const auto s = detect_silences(pcm, rate);
  REQUIRE(s.size() == 1);
  CHECK(std::fabs(s[0].start_s - 1.0) <= 0.01 + 1e-9);
  CHECK(std::fabs(s[0].end_s - 1.5) <= 0.01 + 1e-9);

  // Frame-level oracle: a 25 ms frame on the 10 ms hop grid is silent iff it
  // lies entirely in the gap, so the run covers frames starting at 1.00 .. 1.47.
  CHECK(s[0].start_s == Approx(1.0).epsilon(1e-9));
  CHECK(s[0].end_s == Approx(1.47 + 0.025).epsilon(1e-9));

  // Scaling the amplitude leaves the result unchanged.
  std::vector<double> quiet(pcm);
  for (double& x : quiet) x *= 0.01;
  CHECK(detect_silences(quiet, rate) == s);
}

TEST_CASE("silence detection edge cases") {
  const double rate = 8000;
  const auto short_gap = concat({tone(1.0, rate), std::vector<double>(1600, 0.0), tone(1.0, rate)});
  CHECK(detect_silences(short_gap, rate).empty());
  CHECK(detect_silences(tone(2.0, rate), rate).empty());
  const auto zeros = detect_silences(std::vector<double>(8000, 0.0), rate);
  REQUIRE(zeros.size() == 1);
  CHECK(zeros[0].start_s == 0.0);
  CHECK(zeros[0].end_s == Approx(1.0));
  CHECK(testing::error_code([] { detect_silences(std::vector<double>{}, 8000); }) == "invalid_argument");
}

TEST_CASE("WAV encode and parse; stereo rejected") {
  iqa::PcmAudio a{8000, {0.0, 0.5, -0.5, 0.25}};
  const auto back = iqa::parse_wav(iqa::encode_wav(a));
  CHECK(back.sample_rate == 8000);
  REQUIRE(back.samples.size() == 4);
  CHECK(back.samples[1] == Approx(0.5).epsilon(1e-4));

  auto bytes = iqa::encode_wav(a);
  bytes[22] = 2;  // channel count
  CHECK(testing::error_message([&] { iqa::parse_wav(bytes); }).find("mono") != std::string::npos);
}

TEST_CASE("audio silences are reconciled with tokens") {
  std::vector<Token> tokens{{"a", 0.0, 1.0, 2, TokenKind::Speech}, {"b", 1.6, 2.0, 1, TokenKind::Speech}};
  const auto r = reconcile_silences(tokens, {{0.9, 1.7}, {1.95, 2.1}}, 0.35);
  REQUIRE(r.size() == 1);
  CHECK(r[0].start_s == 1.0);
  CHECK(r[0].end_s == 1.6);
}
