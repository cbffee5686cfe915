#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "iqa/eval.hpp"
#include "iqa/models.hpp"
#include "iqa/protocol.hpp"
#include "iqa/rng.hpp"
#include "iqa/synth.hpp"
#include "support/oracles.hpp"
#include "support/testing.hpp"

using namespace iqa::models;
using doctest::Approx;

namespace {

iqa::Dataset random_dataset(std::size_t n, std::size_t p, std::uint64_t seed) {
  iqa::Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(p);
    for (double& v : r) v = rng.normal();
    rows.push_back(r);
    y.push_back(std::clamp(4.5 + r[0] - 0.5 * r[1 % p] + 0.3 * rng.normal(), 1.0, 8.0));
  }
  return oracle::toy_dataset(oracle::toy_schema(p), rows, y);
}

iqa::Dataset line(std::size_t n) {
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = 1.0 + 7.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    rows.push_back({x});
    y.push_back(x);
  }
  return oracle::toy_dataset(oracle::toy_schema(1), rows, y);
}

double tree_sum(const TreeEnsembleModel& m, const std::vector<double>& z) {
  double s = 0;
  for (const auto& t : m.trees) {
    int k = 0;
    while (!t.nodes[static_cast<std::size_t>(k)].is_leaf()) {
      const auto& n = t.nodes[static_cast<std::size_t>(k)];
      k = z[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    s += t.nodes[static_cast<std::size_t>(k)].value;
  }
  return s;
}

double training_rmse(const Model& m, const iqa::Dataset& d) {
  return iqa::eval::regression_errors(predict_all(m, d), d.scores()).rmse;
}

}  // namespace

TEST_CASE("hand-fit stump") {
  const auto d = oracle::toy_dataset(oracle::toy_schema(1), {{0.0}, {1.0}}, {1.0, 3.0});
  // Scores shifted by +1 so they lie on the rubric; the hand fit is base 2, leaves -1 / +1.
  const auto m = train_gbt(d, {.n_trees = 1, .max_depth = 1, .learning_rate = 1.0, .min_leaf = 1, .l2_leaf = 0.0}, 0);
  CHECK(m.base_score == 2.0);
  REQUIRE(m.trees.size() == 1);
  const auto& root = m.trees[0].nodes[0];
  CHECK(root.feature == 0);
  const auto z0 = m.scaler.transform(std::vector<double>{0.0})[0];
  const auto z1 = m.scaler.transform(std::vector<double>{1.0})[0];
  CHECK(root.threshold > z0);
  CHECK(root.threshold < z1);
  CHECK(m.trees[0].nodes[static_cast<std::size_t>(root.left)].value == -1.0);
  CHECK(m.trees[0].nodes[static_cast<std::size_t>(root.right)].value == 1.0);
  CHECK(predict(m, std::vector<double>{0.0}) == 1.0);
  CHECK(predict(m, std::vector<double>{1.0}) == 3.0);
}

TEST_CASE("constant target gives constant predictions") {
  auto d = random_dataset(40, 3, 1);
  for (auto& s : d.samples) s.score = 4.25;
  const Model gbt = train_gbt(d, {}, 1);
  const Model rf = train_rf(d, {.n_trees = 10}, 1);
  iqa::Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> x{rng.normal(0, 3), rng.normal(0, 3), rng.normal(0, 3)};
    CHECK(predict(gbt, x) == Approx(4.25).epsilon(1e-14));
    CHECK(predict(rf, x) == Approx(4.25).epsilon(1e-14));
  }
}

TEST_CASE("boosting fits y = x closely") {
  const auto d = line(200);
  const Model m = train_gbt(d, {.n_trees = 300, .max_depth = 3, .learning_rate = 0.1}, 3);
  CHECK(training_rmse(m, d) < 0.05);
}

TEST_CASE("boosted prediction equals base plus scaled tree sum") {
  const auto d = random_dataset(120, 5, 4);
  const auto m = train_gbt(d, {.n_trees = 40, .max_depth = 3, .learning_rate = 0.2}, 4);
  for (const auto& s : d.samples) {
    const auto z = m.scaler.transform(s.features);
    CHECK(std::fabs(predict(m, s.features) - (m.base_score + m.learning_rate * tree_sum(m, z))) <= 1e-12);
  }
  auto empty = m;
  empty.trees.clear();
  CHECK(predict(empty, d.samples[0].features) == m.base_score);
}

TEST_CASE("a constant column never changes the splits") {
  const auto d = random_dataset(80, 3, 5);
  auto wide = d;
  wide.schema = oracle::toy_schema(4);
  for (auto& s : wide.samples) s.features.insert(s.features.begin(), 7.0);
  const auto a = train_gbt(d, {.n_trees = 20}, 5);
  const auto b = train_gbt(wide, {.n_trees = 20}, 5);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
    for (std::size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
      const auto& x = a.trees[t].nodes[k];
      const auto& y = b.trees[t].nodes[k];
      CHECK(y.feature == (x.is_leaf() ? -1 : x.feature + 1));
      CHECK(y.threshold == x.threshold);
      CHECK(y.value == x.value);
    }
  }
}

TEST_CASE("random forest reduces to one CART tree") {
  const auto d = random_dataset(60, 4, 6);
  const auto m = train_rf(d, {.n_trees = 1, .max_depth = 4, .min_leaf = 2, .feature_subsample = 4, .bootstrap = false}, 6);
  std::vector<std::vector<double>> rows;
  for (const auto& s : d.samples) rows.push_back(m.scaler.transform(s.features));
  const auto y = d.scores();
  const auto tree = fit_cart(rows, y, {.max_depth = 4, .min_leaf = 2});
  REQUIRE(m.trees.size() == 1);
  for (const auto& r : rows) CHECK(m.predict_standardized(r) == tree.predict(r));

  const auto identical = train_rf(d, {.n_trees = 5, .max_depth = 4, .feature_subsample = 4, .bootstrap = false}, 7);
  for (const auto& r : rows) CHECK(identical.predict_standardized(r) == Approx(identical.trees[0].predict(r)));
}

TEST_CASE("trainers are deterministic") {
  const auto d = random_dataset(80, 4, 8);
  CHECK(model_to_json(train_rf(d, {.n_trees = 20}, 9)).dump() == model_to_json(train_rf(d, {.n_trees = 20}, 9)).dump());
  CHECK(model_to_json(train_rf(d, {.n_trees = 20}, 9)).dump() != model_to_json(train_rf(d, {.n_trees = 20}, 10)).dump());
  CHECK(model_to_json(train_gbt(d, {}, 9)).dump() == model_to_json(train_gbt(d, {}, 9)).dump());
  const MlpParams mp{.hidden_widths = {8}, .epochs = 20};
  CHECK(model_to_json(train_mlp(d, mp, 9)).dump() == model_to_json(train_mlp(d, mp, 9)).dump());
}

TEST_CASE("MLP fits a line") {
  const auto d = line(60);
  // y = 2x + 1 on x in [0, 3.5]
  auto data = d;
  for (auto& s : data.samples) {
    s.features[0] = (s.score - 1.0) / 2.0;
  }
  const Model m = train_mlp(data, {.hidden_widths = {8}, .learning_rate = 1e-2, .epochs = 2000, .batch_size = 0}, 11);
  CHECK(training_rmse(m, data) < 0.1);
  CHECK(std::get<MlpModel>(m).loss_trace.size() == 2000);
}

TEST_CASE("MLP with zero epochs stays at initialization") {
  const auto d = random_dataset(30, 3, 12);
  const auto a = train_mlp(d, {.hidden_widths = {8}, .epochs = 0}, 13);
  const auto b = train_mlp(d, {.hidden_widths = {8}, .epochs = 5}, 13);
  CHECK(iqa::nn::flatten(a.network) != iqa::nn::flatten(b.network));
  for (const auto& s : d.samples) CHECK(std::isfinite(predict(a, s.features)));
  CHECK(a.loss_trace.empty());
}

TEST_CASE("MLP gradient check at initialization") {
  const auto d = random_dataset(25, 4, 14);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto m = train_mlp(d, {.hidden_widths = {16, 8}, .epochs = 0}, seed);
    CHECK(mlp_gradient_check(m, d) < 1e-4);
  }
}

TEST_CASE("prediction input checks") {
  const auto d = random_dataset(20, 3, 15);
  const Model m = train_gbt(d, {.n_trees = 5}, 1);
  CHECK(testing::error_code([&] { predict(m, std::vector<double>{1.0, 2.0}); }) == "shape");
  CHECK(testing::error_code([&] { predict(m, std::vector<double>{1.0, NAN, 2.0}); }) == "numeric");
  const auto one = oracle::toy_dataset(oracle::toy_schema(1), {{1.0}}, {4.0});
  CHECK(testing::error_code([&] { train_gbt(one, {}, 1); }) == "invalid_argument");
  CHECK(testing::error_code([&] { train_gbt(d, {.n_trees = -1}, 1); }) == "invalid_argument");
  CHECK(testing::error_code([&] { train_rf(d, {.n_trees = 0}, 1); }) == "invalid_argument");
}

TEST_CASE("model JSON round trip") {
  const auto d = random_dataset(50, 3, 16);
  for (const ModelParams& p : std::vector<ModelParams>{GbtParams{.n_trees = 10}, RfParams{.n_trees = 10},
                                                       MlpParams{.hidden_widths = {4}, .epochs = 10}}) {
    const Model m = train_model(d, p, 17);
    const auto j = model_to_json(m);
    const Model back = model_from_json(j);
    CHECK(model_to_json(back).dump() == j.dump());
    for (const auto& s : d.samples) CHECK(predict(back, s.features) == predict(m, s.features));
    auto tampered = j;
    tampered["schema_digest"] = "00";
    CHECK(testing::error_code([&] { model_from_json(tampered); }) != "");
  }
}

TEST_CASE("folds partition the rows") {
  for (std::size_t n : {10u, 23u, 400u}) {
    const auto folds = make_folds(n, 5, 3);
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    for (const auto& f : folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      for (auto i : f) seen[i]++;
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("grid search selection and leave-one-out") {
  const auto d = random_dataset(40, 3, 18);
  const std::vector<ModelParams> one{GbtParams{.n_trees = 20}};
  CHECK(cross_validate_grid(d, one, 5, 1).selected == 0);

  const std::vector<ModelParams> tied{GbtParams{.n_trees = 20}, GbtParams{.n_trees = 20}};
  CHECK(cross_validate_grid(d, tied, 5, 1).selected == 0);

  const std::vector<ModelParams> grid{GbtParams{.n_trees = 5}, GbtParams{.n_trees = 60},
                                      GbtParams{.n_trees = 60, .learning_rate = 0.9}};
  const auto r = cross_validate_grid(d, grid, 5, 2);
  CHECK(r.mean_rmse[r.selected] == *std::min_element(r.mean_rmse.begin(), r.mean_rmse.end()));
  CHECK(grid_result_to_json(r).dump() == grid_result_to_json(cross_validate_grid(d, grid, 5, 2)).dump());

  // k = n: each fold RMSE is one absolute residual of a model fit on the other rows.
  const auto ten = random_dataset(10, 2, 19);
  const auto loo = cross_validate_grid(ten, one, 10, 3);
  double sum = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    std::vector<std::size_t> rest;
    for (std::size_t j = 0; j < 10; ++j)
      if (j != i) rest.push_back(j);
    const auto m = train_gbt(iqa::subset(ten, rest), std::get<GbtParams>(one[0]), 0);
    sum += std::fabs(predict(m, ten.samples[i].features) - ten.samples[i].score);
  }
  CHECK(loo.mean_rmse[0] == Approx(sum / 10).epsilon(1e-12));
  for (const auto& f : loo.fold_rmse[0]) CHECK(f >= 0.0);

  CHECK(testing::error_code([&] { cross_validate_grid(d, {}, 5, 1); }) == "invalid_argument");
  CHECK(testing::error_code([&] { cross_validate_grid(ten, one, 11, 1); }) == "invalid_argument");
}

TEST_CASE("default grids") {
  CHECK(default_grid(ModelKind::Gbt).size() == 18);
  CHECK(default_grid(ModelKind::Rf).size() == 4);
  CHECK(default_grid(ModelKind::Mlp).size() == 4);
  for (auto k : {ModelKind::Gbt, ModelKind::Rf, ModelKind::Mlp})
    CHECK(grid_from_json(k, grid_to_json(default_grid(k))) == default_grid(k));
}

TEST_CASE("protocol on a 500-row synthetic corpus") {
  const auto d = iqa::synth::generate_synthetic_corpus(iqa::Dimension::FluDel, 500, 31);
  const std::vector<ModelParams> grid{GbtParams{.n_trees = 100, .max_depth = 2}, GbtParams{.n_trees = 100}};
  const auto r = run_training_protocol(d, grid, 5);
  CHECK(r.split.train.size() == 400);
  CHECK(r.split.test.size() == 100);
  CHECK(r.grid.k == 5);
  CHECK(r.grid.fold_rmse[0].size() == 5);
  CHECK(r.report.n == 100);
  CHECK(*r.report.spearman_rho >= 0.8);
  CHECK(r.report.provenance.seed == 5);
  CHECK(r.report.provenance.data == "raw");

  const auto again = run_training_protocol(d, grid, 5);
  CHECK(model_to_json(again.model).dump() == model_to_json(r.model).dump());
  CHECK(iqa::eval::report_to_json(again.report).dump() == iqa::eval::report_to_json(r.report).dump());

  const auto whole = run_training_protocol(d, grid, 5, {.scaler_mode = iqa::ScalerMode::WholeData});
  CHECK(whole.report.provenance.scaler_mode == "whole-data");
}
