#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace iqa {

/// Mean, sample SD (n-1), moment skewness g1 = m3/m2^1.5 and excess
/// kurtosis g2 = m4/m2^2 - 3 with n-denominator central moments. Fields that
/// are undefined for the input (too short, or zero spread) are empty.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> sd;
  std::optional<double> skewness;
  std::optional<double> excess_kurtosis;
};

Moments descriptive_stats(std::span<const double> values);
nlohmann::json moments_to_json(const Moments& m);

double mean(std::span<const double> values);

/// Quantile by linear interpolation at position q*(n-1) of the sorted values.
double quantile_sorted(std::span<const double> sorted, double q);
double quantile(std::vector<double> values, double q);

}  // namespace iqa
