#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "iqa/models.hpp"
#include "iqa/rng.hpp"
#include "iqa/shap.hpp"
#include "support/oracles.hpp"
#include "support/testing.hpp"

using namespace iqa::explain;
using iqa::models::Model;
using iqa::models::TreeEnsembleModel;
using doctest::Approx;

namespace {

TreeEnsembleModel stump() {
  TreeEnsembleModel m;
  m.kind = iqa::models::EnsembleKind::Bagged;
  m.scaler = iqa::Scaler::identity(oracle::toy_schema(1));
  iqa::models::RegressionTree t;
  t.nodes = {{0, 0.5, 1, 2, 0.0, 2}, {-1, 0, -1, -1, 1.0, 1}, {-1, 0, -1, -1, 3.0, 1}};
  m.trees.push_back(t);
  m.params = iqa::models::RfParams{};
  return m;
}

iqa::Dataset toy_data(std::size_t n, std::size_t p, std::uint64_t seed) {
  iqa::Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(p);
    for (double& v : r) v = std::round(rng.normal() * 4) / 4;  // repeated values exercise ties
    rows.push_back(r);
    double s = 4.5 + r[0] + 0.5 * r[1 % p] * r[2 % p] + 0.2 * rng.normal();
    y.push_back(std::clamp(s, 1.0, 8.0));
  }
  return oracle::toy_dataset(oracle::toy_schema(p), rows, y);
}

BackgroundSet rows_of(const iqa::FeatureSchema& s, std::vector<std::vector<double>> rows) { return {s, std::move(rows)}; }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("value function boundary coalitions") {
  const auto data = toy_data(40, 3, 1);
  const Model m = iqa::models::train_gbt(data, {.n_trees = 20}, 1);
  const auto bg = make_background(data);
  const auto& x = data.samples[3].features;
  CHECK(value_function(m, x, 0b111, bg) == Approx(iqa::models::predict(m, x)).epsilon(1e-14));
  double mean = 0;
  for (const auto& r : bg.rows) mean += iqa::models::predict(m, r);
  CHECK(value_function(m, x, 0, bg) == Approx(mean / bg.size()).epsilon(1e-13));

  const Model lin = oracle::linear_model({2.0, -1.0}, 0.5);
  const auto single = rows_of(oracle::toy_schema(2), {{7.0, 4.0}});
  const std::vector<double> x2{1.0, 3.0};
  CHECK(value_function(lin, x2, 0b01, single) == Approx(iqa::models::predict(lin, std::vector<double>{1.0, 4.0})));
}

TEST_CASE("exact Shapley hand examples") {
  const Model lin = oracle::linear_model({2.0, 3.0}, 0.0);
  const auto bg = rows_of(oracle::toy_schema(2), {{-1, 1}, {1, -1}});
  const std::vector<double> x{1, 1};
  auto e = exact_shapley(lin, x, bg);
  CHECK(e.base == Approx(0.0));
  CHECK(e.phi[0] == Approx(2.0).epsilon(1e-14));
  CHECK(e.phi[1] == Approx(3.0).epsilon(1e-14));

  const Model s = stump();
  const auto sbg = rows_of(oracle::toy_schema(1), {{0}, {1}});
  e = exact_shapley(s, std::vector<double>{1}, sbg);
  CHECK(e.base == 2.0);
  CHECK(e.phi[0] == 1.0);
  const auto t = tree_shap(s, std::vector<double>{1}, sbg);
  CHECK(t.base == 2.0);
  CHECK(t.phi[0] == 1.0);

  auto flat = oracle::linear_model({0.0, 0.0, 0.0}, 4.0);
  e = exact_shapley(flat, std::vector<double>{1, 2, 3}, rows_of(oracle::toy_schema(3), {{0, 0, 0}, {5, 5, 5}}));
  CHECK(e.base == 4.0);
  for (double v : e.phi) CHECK(v == 0.0);
}

TEST_CASE("exact Shapley matches the ordering oracle") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t p = 2 + seed % 4;
    const auto data = toy_data(30, p, seed);
    const Model m = seed % 2 ? Model(iqa::models::train_rf(data, {.n_trees = 8, .max_depth = 3}, seed))
                             : Model(iqa::models::train_mlp(data, {.hidden_widths = {6}, .epochs = 30}, seed));
    const auto bg = make_background(data, 12, seed);
    const auto& x = data.samples[0].features;
    const auto e = exact_shapley(m, x, bg);
    CHECK(max_abs_diff(e.phi, oracle::shapley_by_orderings(m, x, bg.rows)) <= 1e-10);
    CHECK(std::fabs(e.base + e.phi_sum() - e.prediction) <= 1e-9);
  }
}

TEST_CASE("tree SHAP equals exact enumeration") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const std::size_t p = 2 + seed;
    const auto data = toy_data(80, p, 100 + seed);
    const Model m = seed % 2 ? Model(iqa::models::train_rf(data, {.n_trees = 12, .max_depth = 4}, seed))
                             : Model(iqa::models::train_gbt(data, {.n_trees = 15, .max_depth = 3}, seed));
    const auto bg = make_background(data, 50, seed);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& x = data.samples[i].features;
      const auto a = tree_shap(m, x, bg);
      const auto b = exact_shapley(m, x, bg);
      CHECK(max_abs_diff(a.phi, b.phi) <= 1e-9);
      CHECK(std::fabs(a.base - b.base) <= 1e-12);
      CHECK(std::fabs(a.base + a.phi_sum() - a.prediction) <= 1e-9);
    }
  }
}

TEST_CASE("tree SHAP dummy and constant leaves") {
  auto data = toy_data(60, 4, 7);
  // A zeroed column can never be split on.
  for (auto& s : data.samples) s.features[3] = 0.0;
  const Model clean = iqa::models::train_gbt(data, {.n_trees = 10}, 1);
  const auto bg = make_background(data);
  auto x = data.samples[0].features;
  x[3] = 2.0;
  CHECK(tree_shap(clean, x, bg).phi[3] == 0.0);
  CHECK(exact_shapley(clean, x, bg).phi[3] == 0.0);

  for (auto& s : data.samples) s.score = 5.0;
  const Model flat = iqa::models::train_gbt(data, {.n_trees = 5}, 1);
  for (double v : tree_shap(flat, data.samples[1].features, bg).phi) CHECK(v == 0.0);
  CHECK(testing::error_code([&] { tree_shap(oracle::linear_model({1, 1, 1, 1}, 0), x, bg); }) == "invalid_argument");
}

TEST_CASE("boosted SHAP is the scaled sum of per-tree SHAP") {
  const auto data = toy_data(70, 5, 9);
  const auto m = iqa::models::train_gbt(data, {.n_trees = 12, .learning_rate = 0.3}, 2);
  const auto bg = make_background(data, 40, 3);
  const auto& x = data.samples[5].features;
  const auto whole = tree_shap(m, x, bg);
  std::vector<double> sum(5, 0.0);
  for (const auto& t : m.trees) {
    auto single = m;
    single.trees = {t};
    single.base_score = 0.0;
    single.learning_rate = 1.0;
    const auto e = tree_shap(single, x, bg);
    for (std::size_t j = 0; j < 5; ++j) sum[j] += m.learning_rate * e.phi[j];
  }
  CHECK(max_abs_diff(whole.phi, sum) <= 1e-9);
}

TEST_CASE("symmetric features receive equal attributions") {
  // Hidden units see x0 and x1 through equal weights.
  iqa::models::MlpModel m;
  m.scaler = iqa::Scaler::identity(oracle::toy_schema(3));
  iqa::nn::Dense h, o;
  h.weight = iqa::nn::Matrix(3, 3);
  h.weight << 1.0, 1.0, -0.5, -0.7, -0.7, 0.3, 0.2, 0.2, 1.1;
  h.bias = iqa::nn::Vector::Constant(3, 0.1);
  o.weight = iqa::nn::Matrix(1, 3);
  o.weight << 1.5, -2.0, 0.7;
  o.bias = iqa::nn::Vector::Constant(1, 4.0);
  m.network.layers = {h, o};
  iqa::Rng rng(4);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 20; ++i) {
    const double v = rng.normal();
    rows.push_back({v, v, rng.normal()});
  }
  const auto e = exact_shapley(Model(m), std::vector<double>{0.8, 0.8, -1.0}, rows_of(oracle::toy_schema(3), rows));
  CHECK(std::fabs(e.phi[0] - e.phi[1]) <= 1e-9);
}

TEST_CASE("sampled Shapley converges, is seeded, and enforces additivity") {
  const Model lin = oracle::linear_model({2.0, 3.0, -1.0}, 1.0);
  const auto bg = rows_of(oracle::toy_schema(3), {{0, 0, 0}, {1, -1, 2}, {-1, 1, -2}, {0.5, 0.5, 0.5}});
  const std::vector<double> x{1, 1, 1};
  const auto exact = exact_shapley(lin, x, bg);
  const auto s = sampled_shapley(lin, x, bg, 2000, 5);
  CHECK(max_abs_diff(s.phi, exact.phi) <= 0.05);
  CHECK(std::fabs(s.base + s.phi_sum() - s.prediction) <= 1e-6);
  REQUIRE(s.residual.has_value());
  CHECK(sampled_shapley(lin, x, bg, 2000, 5).phi == s.phi);

  const auto data = toy_data(60, 6, 11);
  const Model mlp = iqa::models::train_mlp(data, {.hidden_widths = {8}, .epochs = 50}, 3);
  const auto bg2 = make_background(data, 23, 1);
  std::vector<double> medians;
  for (std::size_t n : {100u, 400u, 1600u}) {
    std::vector<double> r;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      r.push_back(std::fabs(*sampled_shapley(mlp, data.samples[2].features, bg2, n, seed).residual));
    std::nth_element(r.begin(), r.begin() + 10, r.end());
    medians.push_back(r[10]);
  }
  CHECK(medians[1] < medians[0]);
  CHECK(medians[2] < medians[1]);
}

TEST_CASE("method choice") {
  const auto data = toy_data(40, 3, 12);
  const auto bg = make_background(data);
  CHECK(choose_method(Model(iqa::models::train_gbt(data, {.n_trees = 3}, 1)), bg) == Method::Tree);
  CHECK(choose_method(Model(oracle::linear_model({1, 1, 1}, 0)), bg) == Method::Exact);
  const auto wide = oracle::linear_model(std::vector<double>(25, 0.1), 0);
  CHECK(choose_method(Model(wide), rows_of(oracle::toy_schema(25), {std::vector<double>(25, 0.0)})) ==
        Method::Sampled);
  CHECK(testing::error_code([&] {
          exact_shapley(Model(wide), std::vector<double>(25, 1.0),
                        rows_of(oracle::toy_schema(25), {std::vector<double>(25, 0.0)}));
        }) == "invalid_argument");
}

TEST_CASE("global importance") {
  const auto data = toy_data(50, 4, 13);
  const Model m = iqa::models::train_gbt(data, {.n_trees = 20}, 1);
  const auto bg = make_background(data);
  const auto g = global_importance(m, data, bg);
  REQUIRE(g.order.size() == 4);
  for (std::size_t k = 1; k < 4; ++k) CHECK(g.mean_abs[g.order[k - 1]] >= g.mean_abs[g.order[k]]);
  CHECK(g.order[0] == 0);  // x0 drives the score
  CHECK(g.phi.size() == 50);

  auto twin = data;
  twin.samples[1].features = twin.samples[0].features;
  auto replaced = twin;
  replaced.samples[1] = twin.samples[0];
  replaced.samples[1].id = "copy";
  const auto a = global_importance(m, twin, bg);
  const auto b = global_importance(m, replaced, bg);
  for (std::size_t j = 0; j < 4; ++j) CHECK(a.mean_abs[j] == b.mean_abs[j]);

  auto flat = data;
  for (auto& s : flat.samples) s.score = 3.0;
  const Model constant = iqa::models::train_gbt(flat, {.n_trees = 5}, 1);
  for (double v : global_importance(constant, data, bg).mean_abs) CHECK(v == 0.0);
}

TEST_CASE("bootstrap intervals") {
  const Model lin = oracle::linear_model({1.0, -2.0}, 4.0);
  iqa::Rng rng(14);
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (int i = 0; i < 100; ++i) {
    rows.push_back({rng.normal(), rng.normal()});
    y.push_back(4.0);
  }
  const auto data = oracle::toy_dataset(oracle::toy_schema(2), rows, y);
  auto quad = data;
  for (int copy = 1; copy < 4; ++copy)
    for (int i = 0; i < 100; ++i) {
      auto s = data.samples[static_cast<std::size_t>(i)];
      s.id += "-" + std::to_string(copy);
      quad.samples.push_back(s);
    }
  const auto bg = make_background(data);
  const auto a = bootstrap_ci(lin, data, bg, 1000, 7);
  const auto b = bootstrap_ci(lin, quad, bg, 1000, 7);
  for (std::size_t j = 0; j < 2; ++j) {
    const double ratio = (b.upper[j] - b.lower[j]) / (a.upper[j] - a.lower[j]);
    CHECK(ratio >= 0.4);
    CHECK(ratio <= 0.6);
    CHECK(a.lower[j] <= a.mean[j]);
    CHECK(a.mean[j] <= a.upper[j]);
    CHECK(a.abs_lower[j] <= a.abs_upper[j]);
  }
  const auto again = bootstrap_ci(lin, data, bg, 1000, 7);
  CHECK(again.lower == a.lower);
  CHECK(again.upper == a.upper);

  const Model flat = oracle::linear_model({0.0, 0.0}, 5.0);
  const auto z = bootstrap_ci(flat, data, bg, 1000, 1);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(z.lower[j] == 0.0);
    CHECK(z.upper[j] == 0.0);
  }
  CHECK(testing::error_code([&] { bootstrap_ci(lin, data, bg, 1, 1); }) == "invalid_argument");
}

TEST_CASE("local explanation ordering, trajectory, and JSON") {
  const auto data = toy_data(60, 5, 15);
  const Model m = iqa::models::train_gbt(data, {.n_trees = 30}, 1);
  const auto bg = make_background(data);
  const auto local = local_explanation(m, data.samples[4], bg);
  REQUIRE(local.contributions.size() == 5);
  for (std::size_t k = 1; k < 5; ++k)
    CHECK(std::fabs(local.contributions[k - 1].phi) >= std::fabs(local.contributions[k].phi));
  REQUIRE(local.trajectory.size() == 6);
  CHECK(local.trajectory.front() == local.base);
  CHECK(std::fabs(local.trajectory.back() - local.prediction) <= 1e-9);
  CHECK(local.sample_id == data.samples[4].id);

  const auto j = explanation_to_json(local);
  for (const char* key : {"base", "prediction", "method", "contributions"}) CHECK(j.contains(key));
  CHECK(j["contributions"][0].contains("feature"));
  CHECK(j["contributions"][0].contains("phi"));
  CHECK(j["contributions"][0].contains("value"));
  CHECK(explanation_to_json(explanation_from_json(j)).dump() == j.dump());
}
