#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "iqa/dataset.hpp"
#include "iqa/rng.hpp"
#include "iqa/scaler.hpp"
#include "iqa/split.hpp"
#include "iqa/stats.hpp"
#include "support/oracles.hpp"
#include "support/testing.hpp"

using doctest::Approx;

TEST_CASE("builtin schemas have fixed sizes and unique names") {
  CHECK(iqa::builtin_schema(iqa::Dimension::InfoCom).size() == 5);
  CHECK(iqa::builtin_schema(iqa::Dimension::FluDel).size() == 14);
  CHECK(iqa::builtin_schema(iqa::Dimension::TLQual).size() == 25);
  const auto with_total = iqa::builtin_schema(iqa::Dimension::TLQual, {.include_total_rttr = true});
  CHECK(with_total.size() == 26);
  CHECK(with_total.name != iqa::builtin_schema(iqa::Dimension::TLQual).name);
  for (auto d : {iqa::Dimension::InfoCom, iqa::Dimension::FluDel, iqa::Dimension::TLQual}) {
    const auto names = iqa::builtin_schema(d).names();
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
    const auto s = iqa::builtin_schema(d);
    CHECK(iqa::schema_from_json(iqa::schema_to_json(s)) == s);
  }
}

TEST_CASE("moments of small examples") {
  const std::vector<double> a{1, 2, 3};
  auto m = iqa::descriptive_stats(a);
  CHECK(m.mean == 2.0);
  CHECK(*m.sd == Approx(1.0).epsilon(1e-15));
  CHECK(std::fabs(*m.skewness) < 1e-15);
  CHECK_FALSE(m.excess_kurtosis.has_value());

  const std::vector<double> b{2, 4, 4, 4, 5, 5, 7, 9};
  m = iqa::descriptive_stats(b);
  CHECK(m.mean == 5.0);
  CHECK(*m.skewness == Approx(0.65625).epsilon(1e-12));
  CHECK(*m.excess_kurtosis == Approx(-0.21875).epsilon(1e-12));

  const std::vector<double> flat{3, 3, 3, 3};
  m = iqa::descriptive_stats(flat);
  CHECK(*m.sd == 0.0);
  CHECK_FALSE(m.skewness.has_value());
  CHECK_FALSE(m.excess_kurtosis.has_value());

  CHECK(testing::error_code([] { iqa::descriptive_stats(std::vector<double>{}); }) == "invalid_argument");
}

TEST_CASE("moments agree with the central-moment oracle and ignore order") {
  iqa::Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> v(4 + rng.index(997));
    for (double& x : v) x = rng.normal(3.0, 2.0) + (rng.uniform() < 0.1 ? rng.uniform(0, 20) : 0.0);
    const auto c = oracle::central_moments(v);
    const auto m = iqa::descriptive_stats(v);
    CHECK(m.mean == Approx(c.mean).epsilon(1e-12));
    CHECK(*m.skewness == Approx(c.m3 / std::pow(c.m2, 1.5)).epsilon(1e-12));
    CHECK(*m.excess_kurtosis == Approx(c.m4 / (c.m2 * c.m2) - 3.0).epsilon(1e-12));
    CHECK(*m.sd == Approx(std::sqrt(c.m2 * v.size() / (v.size() - 1.0))).epsilon(1e-12));

    std::vector<double> shuffled(v);
    std::reverse(shuffled.begin(), shuffled.end());
    const auto r = iqa::descriptive_stats(shuffled);
    CHECK(r.mean == Approx(m.mean).epsilon(1e-13));
    CHECK(*r.skewness == Approx(*m.skewness).epsilon(1e-11));
  }
}

TEST_CASE("quantiles interpolate on (n-1) positions") {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 40};
  CHECK(iqa::quantile(v, 0.25) == Approx(3.75));
  CHECK(iqa::quantile(v, 0.75) == Approx(9.25));
  CHECK(iqa::quantile(v, 0.0) == 1.0);
  CHECK(iqa::quantile(v, 1.0) == 40.0);
}

TEST_CASE("scaler fit, apply and invert") {
  const auto schema = oracle::toy_schema(2);
  const auto d = oracle::toy_dataset(schema, {{1, 4}, {3, 4}}, {5, 6});
  const auto s = iqa::fit_scaler(d);
  CHECK(s.mean[0] == 2.0);
  CHECK(s.sd[0] == 1.0);
  CHECK_FALSE(s.is_constant(0));
  CHECK(s.is_constant(1));
  CHECK(s.transform(std::vector<double>{5, 4}) == std::vector<double>{3.0, 0.0});
  const auto z = iqa::apply_scaler(s, d);
  CHECK(z.samples[0].score == 5.0);
  CHECK(z.samples[1].features == std::vector<double>{1.0, 0.0});

  const auto single = oracle::toy_dataset(oracle::toy_schema(1), {{4}, {4}, {4}}, {5, 5, 5});
  CHECK(iqa::fit_scaler(single).sd[0] == 0.0);

  iqa::Dataset empty;
  empty.schema = schema;
  CHECK(testing::error_code([&] { iqa::fit_scaler(empty); }) == "invalid_argument");
  CHECK(testing::error_code([&] { iqa::apply_scaler(s, single); }) == "schema");
}

TEST_CASE("scaler round trip and zero column means on random data") {
  iqa::Rng rng(11);
  const auto schema = oracle::toy_schema(4);
  std::vector<std::vector<double>> rows;
  std::vector<double> scores;
  for (int i = 0; i < 60; ++i) {
    rows.push_back({rng.normal(100, 30), rng.normal(-2, 0.01), rng.uniform(0, 1), rng.normal(1e4, 1e3)});
    scores.push_back(rng.uniform(1, 8));
  }
  const auto d = oracle::toy_dataset(schema, rows, scores);
  const auto s = iqa::fit_scaler(d);
  const auto z = iqa::apply_scaler(s, d);
  for (std::size_t j = 0; j < 4; ++j) {
    const auto col = z.column(j);
    CHECK(std::fabs(iqa::mean(col)) < 1e-12);
  }
  for (const auto& r : rows) {
    const auto back = s.inverse(s.transform(r));
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::fabs(back[j] - r[j]) <= 1e-12 * std::fabs(r[j]));
  }
  CHECK(iqa::parse_scaler_mode("whole-data") == iqa::ScalerMode::WholeData);
  CHECK(iqa::to_string(iqa::ScalerMode::TrainOnly) == "fit-on-train-only");
}

namespace {

iqa::Dataset numbered(std::size_t n) {
  std::vector<std::vector<double>> rows;
  std::vector<double> scores;
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back({static_cast<double>(i)});
    scores.push_back(1.0 + static_cast<double>(i % 7));
  }
  return oracle::toy_dataset(oracle::toy_schema(1), rows, scores);
}

}  // namespace

TEST_CASE("split sizes and partition") {
  const auto big = iqa::split_dataset(numbered(500), 0.2, 42);
  CHECK(big.train.size() == 400);
  CHECK(big.test.size() == 100);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto d = numbered(10 + seed % 13);
    const auto sp = iqa::split_dataset(d, 0.2, seed);
    std::set<std::string> train, test;
    for (const auto& s : sp.train.samples) train.insert(s.id);
    for (const auto& s : sp.test.samples) test.insert(s.id);
    CHECK(train.size() + test.size() == d.size());
    std::set<std::string> all(train);
    all.insert(test.begin(), test.end());
    CHECK(all.size() == d.size());
    if (d.size() == 10) {
      CHECK(sp.train.size() == 8);
      CHECK(sp.test.size() == 2);
    }
  }
  const auto a = iqa::split_dataset(numbered(30), 0.2, 9);
  const auto b = iqa::split_dataset(numbered(30), 0.2, 9);
  CHECK(a.test.samples == b.test.samples);
  CHECK(iqa::split_dataset(numbered(3), 0.01, 1).test.size() == 1);
  CHECK(testing::error_code([] { iqa::split_dataset(numbered(10), 1.0, 1); }) == "invalid_argument");
  CHECK(testing::error_code([] { iqa::split_dataset(numbered(1), 0.5, 1); }) == "invalid_argument");
}

TEST_CASE("dataset CSV parsing and errors") {
  const auto schema = iqa::builtin_schema(iqa::Dimension::InfoCom);
  const std::string header = "sample_id,chrF,BLEURT20,BERTScore,CometKiwi,xCOMET,score\n";
  const std::string good = header +
                           "s1,0.1,0.5,0.96,0.5,0.2,5.5\n"
                           "s2,0.2,0.4,0.95,0.4,0.1,4\n"
                           "s3,0.12,0.6,0.97,0.6,0.3,6.25\n";
  const auto d = iqa::parse_dataset_csv(good, schema);
  CHECK(d.size() == 3);
  CHECK(d.schema.size() == 5);
  CHECK(d.provenance == iqa::Provenance::Raw);
  CHECK(d.samples[2].id == "s3");
  CHECK(iqa::parse_dataset_csv(iqa::dataset_to_csv(d), schema).samples == d.samples);

  std::string bad_header = good;
  bad_header.replace(bad_header.find("chrF"), 4, "bleu");
  const auto msg = testing::error_message([&] { iqa::parse_dataset_csv(bad_header, schema); });
  CHECK(msg.find("bleu") != std::string::npos);
  CHECK(msg.find("chrF") != std::string::npos);

  const auto out_of_range = header + "s1,0.1,0.5,0.96,0.5,0.2,9.1\n";
  CHECK(testing::error_code([&] { iqa::parse_dataset_csv(out_of_range, schema); }) == "range");
  CHECK(testing::error_message([&] { iqa::parse_dataset_csv(out_of_range, schema); }).find("line 2") !=
        std::string::npos);

  const auto non_numeric = header + "s1,0.1,abc,0.96,0.5,0.2,5\n";
  const auto nm = testing::error_message([&] { iqa::parse_dataset_csv(non_numeric, schema); });
  CHECK(nm.find("BLEURT20") != std::string::npos);
  CHECK(nm.find("line 2") != std::string::npos);

  const auto dup = header + "s1,0.1,0.5,0.96,0.5,0.2,5\ns1,0.1,0.5,0.96,0.5,0.2,5\n";
  CHECK(testing::error_code([&] { iqa::parse_dataset_csv(dup, schema); }) == "duplicate");
  CHECK(testing::error_code([&] { iqa::load_dataset("/nonexistent/x.csv", schema); }) == "io");
}

TEST_CASE("format_double round trips") {
  iqa::Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal(0, 1e3) * std::pow(10.0, static_cast<int>(rng.index(20)) - 10);
    CHECK(std::stod(iqa::format_double(v)) == v);
  }
}

TEST_CASE("rng streams are reproducible and distinct") {
  auto a = iqa::Rng::derive(5, 0), b = iqa::Rng::derive(5, 0), c = iqa::Rng::derive(5, 1);
  const auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());
  iqa::Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.index(7) < 7);
  }
}
