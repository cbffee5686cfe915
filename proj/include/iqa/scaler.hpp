#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iqa/dataset.hpp"

namespace iqa {

/// Per-feature z-score standardization with population (n) SDs. Features
/// whose SD is zero are constant and map to 0.
struct Scaler {
  FeatureSchema schema;
  std::vector<double> mean;
  std::vector<double> sd;

  std::size_t size() const { return mean.size(); }
  bool is_constant(std::size_t feature) const { return sd[feature] == 0.0; }

  std::vector<double> transform(std::span<const double> x) const;
  void transform_in_place(std::span<double> x) const;
  /// Constant features invert to their mean.
  std::vector<double> inverse(std::span<const double> z) const;

  /// Identity transform (mean 0, sd 1) for `schema`.
  static Scaler identity(const FeatureSchema& schema);
};

Scaler fit_scaler(const Dataset& train);
Dataset apply_scaler(const Scaler& scaler, const Dataset& dataset);

nlohmann::json scaler_to_json(const Scaler& scaler);
Scaler scaler_from_json(const nlohmann::json& j, const FeatureSchema& schema);

/// Whole-data standardization fits before the split; train-only keeps test
/// statistics out of the scaler and is the default.
enum class ScalerMode { TrainOnly, WholeData };

std::string_view to_string(ScalerMode mode);
ScalerMode parse_scaler_mode(std::string_view name);

/// Scalar z-score helper used for the CVAE score condition.
struct ScalarScaler {
  double mean = 0.0;
  double sd = 1.0;

  double apply(double v) const { return sd > 0.0 ? (v - mean) / sd : 0.0; }
  double invert(double z) const { return mean + sd * z; }
};

}  // namespace iqa
