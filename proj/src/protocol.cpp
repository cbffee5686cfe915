#include "iqa/protocol.hpp"

#include <cmath>
#include <optional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"
#include "iqa/rng.hpp"

namespace iqa::models {

using nlohmann::json;

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("invalid_argument", fmt::format("cross-validation needs k >= 2, got {}", k));
  if (n < k) throw Error("invalid_argument", fmt::format("cannot split {} samples into {} folds", n, k));
  const auto order = permutation(n, seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

GridSearchResult cross_validate_grid(const Dataset& train, const std::vector<ModelParams>& grid, std::size_t k,
                                     std::uint64_t seed, const Scaler* scaler) {
  if (grid.empty()) throw Error("invalid_argument", "hyperparameter grid is empty");
  const ModelKind kind = kind_of(grid.front());
  for (const auto& p : grid)
    if (kind_of(p) != kind) throw Error("invalid_argument", "grid mixes model kinds");
  validate_dataset(train);

  GridSearchResult r;
  r.kind = kind;
  r.configs = grid;
  r.k = k;
  r.seed = seed;
  const auto folds = make_folds(train.size(), k, splitmix64(seed ^ 0x636f6c64ULL));

  std::vector<Dataset> fit_parts, held_parts;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> rest;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
    fit_parts.push_back(subset(train, rest));
    held_parts.push_back(subset(train, folds[f]));
  }

  const TrainOptions options{scaler};
  for (const auto& params : grid) {
    std::vector<double> rmse;
    for (std::size_t f = 0; f < k; ++f) {
      const Model m = train_model(fit_parts[f], params, splitmix64(seed + f), options);
      const auto pred = predict_all(m, held_parts[f]);
      rmse.push_back(eval::regression_errors(pred, held_parts[f].scores()).rmse);
    }
    double mean = 0.0;
    for (double v : rmse) mean += v;
    mean /= static_cast<double>(rmse.size());
    r.fold_rmse.push_back(std::move(rmse));
    r.mean_rmse.push_back(mean);
  }
  for (std::size_t c = 1; c < r.mean_rmse.size(); ++c)
    if (r.mean_rmse[c] < r.mean_rmse[r.selected]) r.selected = c;
  return r;
}

std::vector<ModelParams> default_grid(ModelKind kind) {
  std::vector<ModelParams> grid;
  switch (kind) {
    case ModelKind::Gbt:
      for (int depth : {2, 3, 4})
        for (double lr : {0.05, 0.1, 0.3})
          for (int trees : {100, 300}) {
            GbtParams p;
            p.max_depth = depth;
            p.learning_rate = lr;
            p.n_trees = trees;
            grid.emplace_back(p);
          }
      break;
    case ModelKind::Rf:
      for (int trees : {200, 500})
        for (int leaf : {1, 5}) {
          RfParams p;
          p.n_trees = trees;
          p.min_leaf = leaf;
          grid.emplace_back(p);
        }
      break;
    case ModelKind::Mlp:
      for (int h : {16, 32})
        for (double lr : {1e-3, 1e-2}) {
          MlpParams p;
          p.hidden_widths = {h};
          p.learning_rate = lr;
          grid.emplace_back(p);
        }
      break;
  }
  return grid;
}

std::vector<ModelParams> grid_from_json(ModelKind kind, const json& j) {
  const json* list = &j;
  if (j.is_object()) {
    if (j.contains("model") && parse_model_kind(j.at("model").get<std::string>()) != kind)
      throw Error("invalid_argument", "grid file is for a different model kind");
    list = &j.at("configs");
  }
  if (!list->is_array()) throw Error("parse", "grid must be a JSON array of hyperparameter objects");
  std::vector<ModelParams> grid;
  for (const auto& item : *list) grid.push_back(params_from_json(kind, item));
  if (grid.empty()) throw Error("invalid_argument", "hyperparameter grid is empty");
  return grid;
}

json grid_to_json(const std::vector<ModelParams>& grid) {
  json a = json::array();
  for (const auto& p : grid) a.push_back(params_to_json(p));
  return a;
}

json grid_result_to_json(const GridSearchResult& r) {
  json configs = json::array();
  for (std::size_t c = 0; c < r.configs.size(); ++c)
    configs.push_back({{"params", params_to_json(r.configs[c])},
                       {"mean_rmse", r.mean_rmse[c]},
                       {"fold_rmse", r.fold_rmse[c]}});
  return {{"model", std::string(to_string(r.kind))},
          {"k", r.k},
          {"seed", r.seed},
          {"selected", r.selected},
          {"selected_params", params_to_json(r.best())},
          {"configs", configs}};
}

ProtocolResult run_training_protocol(const Dataset& dataset, const std::vector<ModelParams>& grid,
                                     std::uint64_t seed, const ProtocolOptions& options) {
  if (grid.empty()) throw Error("invalid_argument", "hyperparameter grid is empty");
  ProtocolResult out{Model{}, {}, {}, split_dataset(dataset, options.test_fraction, seed), {}};

  std::optional<Scaler> whole;
  if (options.scaler_mode == ScalerMode::WholeData) whole = fit_scaler(dataset);
  const Scaler* shared = whole ? &*whole : nullptr;

  out.grid = cross_validate_grid(out.split.train, grid, options.k, seed, shared);
  out.model = train_model(out.split.train, out.grid.best(), seed, TrainOptions{shared});
  out.test_predictions = predict_all(out.model, out.split.test);

  eval::ProvenanceTags tags;
  tags.data = std::string(to_string(dataset.provenance));
  tags.seed = seed;
  tags.scaler_mode = std::string(to_string(options.scaler_mode));
  tags.model = std::string(to_string(out.grid.kind));
  tags.dimension = std::string(to_string(dataset.schema.dimension));
  out.report = eval::evaluate(out.test_predictions, out.split.test.scores(), tags);
  return out;
}

}  // namespace iqa::models
