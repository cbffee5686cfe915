#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iqa/dataset.hpp"
#include "iqa/eval.hpp"
#include "iqa/models.hpp"
#include "iqa/scaler.hpp"
#include "iqa/split.hpp"

namespace iqa::models {

struct GridSearchResult {
  ModelKind kind = ModelKind::Gbt;
  std::vector<ModelParams> configs;
  std::vector<std::vector<double>> fold_rmse;  // [config][fold]
  std::vector<double> mean_rmse;
  std::size_t selected = 0;
  std::size_t k = 5;
  std::uint64_t seed = 0;

  const ModelParams& best() const { return configs.at(selected); }
};

/// Seeded permutation of 0..n-1 cut into k contiguous blocks; the first
/// n % k blocks hold one extra row.
std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k, std::uint64_t seed);

/// Every configuration sees the same folds. `scaler`, when given, is reused
/// by every fold (whole-data standardization); otherwise each fold fits its
/// own on its training rows.
GridSearchResult cross_validate_grid(const Dataset& train, const std::vector<ModelParams>& grid, std::size_t k,
                                     std::uint64_t seed, const Scaler* scaler = nullptr);

std::vector<ModelParams> default_grid(ModelKind kind);
std::vector<ModelParams> grid_from_json(ModelKind kind, const nlohmann::json& j);
nlohmann::json grid_to_json(const std::vector<ModelParams>& grid);
nlohmann::json grid_result_to_json(const GridSearchResult& r);

struct ProtocolOptions {
  double test_fraction = 0.2;
  std::size_t k = 5;
  ScalerMode scaler_mode = ScalerMode::TrainOnly;
};

struct ProtocolResult {
  Model model;
  GridSearchResult grid;
  eval::EvalReport report;
  TrainTestSplit split;
  std::vector<double> test_predictions;
};

/// Split, grid search on the training part, retrain the best configuration
/// on all training rows, evaluate on the held-out rows.
ProtocolResult run_training_protocol(const Dataset& dataset, const std::vector<ModelParams>& grid,
                                     std::uint64_t seed, const ProtocolOptions& options = {});

}  // namespace iqa::models
