#include "iqa/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "iqa/error.hpp"

namespace iqa {

double mean(std::span<const double> values) {
  if (values.empty()) throw Error("invalid_argument", "mean of an empty sequence");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

Moments descriptive_stats(std::span<const double> values) {
  if (values.empty()) throw Error("invalid_argument", "descriptive statistics need at least one value");
  Moments m;
  m.n = values.size();
  m.mean = mean(values);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) {
    m.mean = *lo;
    if (values.size() >= 2) m.sd = 0.0;
    return m;
  }
  const double n = static_cast<double>(values.size());
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - m.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (values.size() >= 2) m.sd = std::sqrt(m2 * n / (n - 1.0));
  if (m2 > 0.0) {
    if (values.size() >= 3) m.skewness = m3 / std::pow(m2, 1.5);
    if (values.size() >= 4) m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return m;
}

nlohmann::json moments_to_json(const Moments& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"n", m.n},
          {"mean", m.mean},
          {"sd", opt(m.sd)},
          {"skewness", opt(m.skewness)},
          {"excess_kurtosis", opt(m.excess_kurtosis)},
          {"conventions", {{"sd", "sample (n-1)"}, {"skewness", "g1 = m3/m2^1.5"}, {"kurtosis", "excess g2 = m4/m2^2 - 3"}}}};
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("invalid_argument", "quantile of an empty sequence");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, q);
}

}  // namespace iqa
