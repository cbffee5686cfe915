#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iqa/dataset.hpp"
#include "iqa/models.hpp"

namespace iqa::explain {

using models::Model;

/// Rows (raw feature values) whose values fill in absent features.
struct BackgroundSet {
  FeatureSchema schema;
  std::vector<std::vector<double>> rows;

  std::size_t size() const { return rows.size(); }
};

/// All rows of `data`, or a seeded subsample of `cap` rows when larger.
BackgroundSet make_background(const Dataset& data, std::size_t cap = 500, std::uint64_t seed = 0);

enum class Method { Exact, Tree, Sampled };
std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct ShapExplanation {
  std::string sample_id;
  Method method = Method::Exact;
  double base = 0.0;
  double prediction = 0.0;
  std::vector<double> phi;
  /// Sampled method only: prediction - base - sum(phi) before enforcement.
  std::optional<double> residual;

  double phi_sum() const;
};

/// Coalition membership as a bit mask over feature indices.
double value_function(const Model& model, std::span<const double> x, std::uint64_t subset,
                      const BackgroundSet& background);

inline constexpr std::size_t kMaxExactFeatures = 15;

ShapExplanation exact_shapley(const Model& model, std::span<const double> x, const BackgroundSet& background);
ShapExplanation tree_shap(const Model& model, std::span<const double> x, const BackgroundSet& background);
ShapExplanation sampled_shapley(const Model& model, std::span<const double> x, const BackgroundSet& background,
                                std::size_t n_permutations = 2000, std::uint64_t seed = 0);

struct ExplainOptions {
  std::optional<Method> method;  // default: tree for ensembles, else exact when cheap, else sampled
  std::size_t n_permutations = 2000;
  std::uint64_t seed = 0;
};

Method choose_method(const Model& model, const BackgroundSet& background);
ShapExplanation explain(const Model& model, std::span<const double> x, const BackgroundSet& background,
                        const ExplainOptions& options = {});

struct GlobalImportance {
  std::vector<std::string> features;
  Method method = Method::Tree;
  double base = 0.0;
  std::vector<double> mean_abs;
  std::vector<double> mean_signed;
  std::vector<std::size_t> order;  // by mean |phi| descending, ties by index
  std::vector<std::string> sample_ids;
  std::vector<double> predictions;
  std::vector<std::vector<double>> phi;       // [sample][feature]
  std::vector<std::vector<double>> z_values;  // standardized feature values, same layout
  std::vector<std::vector<double>> raw_values;
};

GlobalImportance global_importance(const Model& model, const Dataset& data, const BackgroundSet& background,
                                   const ExplainOptions& options = {});

struct BootstrapCi {
  std::vector<std::string> features;
  std::vector<double> mean;       // mean of the resample means
  std::vector<double> full_mean;  // mean phi over the original rows
  std::vector<double> lower;      // 2.5th percentile of resample means
  std::vector<double> upper;      // 97.5th percentile
  std::vector<double> abs_lower;  // same percentiles for the resample means of |phi|
  std::vector<double> abs_upper;
  std::size_t n_resamples = 0;
  std::uint64_t seed = 0;
};

/// Resamples rows of an already computed per-sample phi matrix.
BootstrapCi bootstrap_ci(const std::vector<std::vector<double>>& phi, const std::vector<std::string>& features,
                         std::size_t n_resamples = 1000, std::uint64_t seed = 0);
BootstrapCi bootstrap_ci(const Model& model, const Dataset& data, const BackgroundSet& background,
                         std::size_t n_resamples = 1000, std::uint64_t seed = 0, const ExplainOptions& options = {});

struct Contribution {
  std::string feature;
  double phi = 0.0;
  double value = 0.0;
  std::optional<std::pair<double, double>> ci;
};

struct LocalExplanation {
  std::string sample_id;
  Method method = Method::Exact;
  double base = 0.0;
  double prediction = 0.0;
  std::vector<Contribution> contributions;  // descending |phi|
  std::vector<double> trajectory;           // base, then running sums in contribution order
  std::optional<double> residual;
};

LocalExplanation local_explanation(const Model& model, const Sample& sample, const BackgroundSet& background,
                                   const ExplainOptions& options = {});
/// Orders contributions and fills the trajectory.
LocalExplanation make_local(const ShapExplanation& e, const FeatureSchema& schema, std::span<const double> values);

nlohmann::json explanation_to_json(const LocalExplanation& e);
LocalExplanation explanation_from_json(const nlohmann::json& j);

nlohmann::json global_to_json(const GlobalImportance& g, const BootstrapCi* ci = nullptr);

}  // namespace iqa::explain
