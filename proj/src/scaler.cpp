#include "iqa/scaler.hpp"

#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"

namespace iqa {

std::vector<double> Scaler::transform(std::span<const double> x) const {
  std::vector<double> out(x.begin(), x.end());
  transform_in_place(out);
  return out;
}

void Scaler::transform_in_place(std::span<double> x) const {
  if (x.size() != mean.size())
    throw Error("shape", fmt::format("scaler expects {} features, got {}", mean.size(), x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = sd[i] > 0.0 ? (x[i] - mean[i]) / sd[i] : 0.0;
}

std::vector<double> Scaler::inverse(std::span<const double> z) const {
  if (z.size() != mean.size())
    throw Error("shape", fmt::format("scaler expects {} features, got {}", mean.size(), z.size()));
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = sd[i] > 0.0 ? mean[i] + sd[i] * z[i] : mean[i];
  return out;
}

Scaler Scaler::identity(const FeatureSchema& schema) {
  return Scaler{schema, std::vector<double>(schema.size(), 0.0), std::vector<double>(schema.size(), 1.0)};
}

Scaler fit_scaler(const Dataset& train) {
  if (train.empty()) throw Error("invalid_argument", "cannot fit a scaler on an empty dataset");
  const std::size_t p = train.schema.size();
  Scaler s{train.schema, std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
  const double n = static_cast<double>(train.size());
  for (std::size_t j = 0; j < p; ++j) {
    double sum = 0.0;
    bool constant = true;
    const double first = train.samples.front().features.at(j);
    for (const auto& row : train.samples) {
      sum += row.features.at(j);
      constant = constant && row.features[j] == first;
    }
    if (constant) {
      s.mean[j] = first;
      s.sd[j] = 0.0;
      continue;
    }
    s.mean[j] = sum / n;
    double ss = 0.0;
    for (const auto& row : train.samples) {
      const double d = row.features[j] - s.mean[j];
      ss += d * d;
    }
    s.sd[j] = std::sqrt(ss / n);
  }
  return s;
}

Dataset apply_scaler(const Scaler& scaler, const Dataset& dataset) {
  if (!(dataset.schema == scaler.schema))
    throw Error("schema", fmt::format("scaler fitted on schema '{}' applied to dataset with schema '{}'",
                                      scaler.schema.name, dataset.schema.name));
  Dataset out = dataset;
  for (auto& s : out.samples) scaler.transform_in_place(s.features);
  return out;
}

nlohmann::json scaler_to_json(const Scaler& scaler) {
  return {{"mean", scaler.mean}, {"sd", scaler.sd}};
}

Scaler scaler_from_json(const nlohmann::json& j, const FeatureSchema& schema) {
  Scaler s{schema, j.at("mean").get<std::vector<double>>(), j.at("sd").get<std::vector<double>>()};
  if (s.mean.size() != schema.size() || s.sd.size() != schema.size())
    throw Error("schema", "scaler size does not match schema");
  return s;
}

std::string_view to_string(ScalerMode mode) {
  return mode == ScalerMode::TrainOnly ? "fit-on-train-only" : "whole-data";
}

ScalerMode parse_scaler_mode(std::string_view name) {
  if (name == "fit-on-train-only" || name == "train-only") return ScalerMode::TrainOnly;
  if (name == "whole-data") return ScalerMode::WholeData;
  throw Error("invalid_argument", fmt::format("unknown scaler mode '{}'", name));
}

}  // namespace iqa
