#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iqa/dataset.hpp"
#include "iqa/nn.hpp"
#include "iqa/scaler.hpp"

namespace iqa::models {

/// Binary regression tree stored as a node array. Internal nodes send x to
/// `left` when x[feature] < threshold; leaves have feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  int samples = 0;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  int depth() const;
  /// Throws unless the node array is a well-formed binary tree.
  void validate(std::size_t feature_count) const;
};

enum class LeafRule { Mean, Shrunk };

struct CartParams {
  int max_depth = 3;
  int min_leaf = 1;
  LeafRule leaf_rule = LeafRule::Mean;
  double l2_leaf = 0.0;     // leaf = sum / (count + l2_leaf) for LeafRule::Shrunk
  int features_per_split = 0;  // 0 = all features
};

/// Exact greedy CART on (already standardized) rows. Splits maximize the
/// reduction in squared error; ties go to the lowest feature index, then the
/// lowest threshold. Thresholds are midpoints between adjacent distinct values.
RegressionTree fit_cart(const std::vector<std::vector<double>>& rows, std::span<const double> targets,
                        const CartParams& params, std::uint64_t seed = 0);

struct GbtParams {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 1;
  double l2_leaf = 1.0;

  bool operator==(const GbtParams&) const = default;
};

struct RfParams {
  int n_trees = 200;
  int max_depth = 8;
  int min_leaf = 1;
  int feature_subsample = 0;  // 0 = ceil(p / 3)
  bool bootstrap = true;

  bool operator==(const RfParams&) const = default;
};

struct MlpParams {
  std::vector<int> hidden_widths = {16};
  double learning_rate = 1e-3;
  int epochs = 500;
  int batch_size = 32;  // 0 = full batch

  bool operator==(const MlpParams&) const = default;
};

enum class EnsembleKind { Boosted, Bagged };

struct TreeEnsembleModel {
  EnsembleKind kind = EnsembleKind::Boosted;
  std::vector<RegressionTree> trees;
  double base_score = 0.0;     // boosted only
  double learning_rate = 1.0;  // boosted only
  Scaler scaler;
  std::uint64_t seed = 0;
  std::variant<GbtParams, RfParams> params;

  const FeatureSchema& schema() const { return scaler.schema; }
  /// Prediction on already-standardized features.
  double predict_standardized(std::span<const double> z) const;
};

struct MlpModel {
  nn::Network network;
  Scaler scaler;
  std::uint64_t seed = 0;
  MlpParams params;
  std::vector<double> loss_trace;

  const FeatureSchema& schema() const { return scaler.schema; }
  double predict_standardized(std::span<const double> z) const;
};

using Model = std::variant<TreeEnsembleModel, MlpModel>;

enum class ModelKind { Gbt, Rf, Mlp };
std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view name);
ModelKind kind_of(const Model& m);

using ModelParams = std::variant<GbtParams, RfParams, MlpParams>;
ModelKind kind_of(const ModelParams& p);

/// Scaler handling for trainers: by default each trainer fits its own scaler
/// on the rows it sees; passing one reuses it (whole-data standardization).
struct TrainOptions {
  const Scaler* scaler = nullptr;
};

TreeEnsembleModel train_gbt(const Dataset& train, const GbtParams& params, std::uint64_t seed,
                            const TrainOptions& options = {});
TreeEnsembleModel train_rf(const Dataset& train, const RfParams& params, std::uint64_t seed,
                           const TrainOptions& options = {});
MlpModel train_mlp(const Dataset& train, const MlpParams& params, std::uint64_t seed, const TrainOptions& options = {});
Model train_model(const Dataset& train, const ModelParams& params, std::uint64_t seed, const TrainOptions& options = {});

/// Max relative error between backprop and central differences of the MLP's
/// mean squared error on `data` at the model's current parameters.
double mlp_gradient_check(const MlpModel& model, const Dataset& data, double epsilon = 1e-5);

const FeatureSchema& schema_of(const Model& m);
const Scaler& scaler_of(const Model& m);

/// Raw-feature prediction; the model's scaler is applied internally.
double predict(const Model& model, std::span<const double> features);
double predict(const TreeEnsembleModel& model, std::span<const double> features);
double predict(const MlpModel& model, std::span<const double> features);
std::vector<double> predict_all(const Model& model, const Dataset& dataset);

nlohmann::json params_to_json(const ModelParams& p);
ModelParams params_from_json(ModelKind kind, const nlohmann::json& j);

nlohmann::json model_to_json(const Model& m);
Model model_from_json(const nlohmann::json& j);

}  // namespace iqa::models
