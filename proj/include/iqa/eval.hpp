#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace iqa::eval {

struct RegressionErrors {
  double rmse = 0.0;
  double mae = 0.0;
};

RegressionErrors regression_errors(std::span<const double> predicted, std::span<const double> actual);

/// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> midranks(std::span<const double> values);

struct SpearmanResult {
  std::optional<double> rho;  // empty when either rank vector is constant
  std::optional<double> p;
};

/// rho = Pearson correlation of midranks; two-sided p from Student t with
/// n - 2 degrees of freedom (0 when |rho| = 1).
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

/// Two-sided permutation p for Spearman's rho by enumerating every
/// permutation of y (n <= 10).
double spearman_exact_p(std::span<const double> x, std::span<const double> y);

struct MannWhitneyResult {
  double u = 0.0;  // statistic of the first sample: #(a > b) + 0.5 #(a == b)
  double p = 1.0;  // two-sided
  bool exact = false;
};

/// Exact enumeration of all C(m+n, m) labelings when m + n <= 16, else the
/// normal approximation with tie and continuity corrections.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b);
double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b);
double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b);

/// Rounding to the nearest integer with halves away from zero.
struct AgreementRates {
  double ear = 0.0;
  double aar = 0.0;
};

AgreementRates agreement_rates(std::span<const double> predicted, std::span<const double> actual);

struct ProvenanceTags {
  std::string data = "raw";  // raw | augmented | synthetic
  std::uint64_t seed = 0;
  std::string scaler_mode = "fit-on-train-only";
  std::string model;  // gbt | rf | mlp, when known
  std::string dimension;
};

struct EvalReport {
  std::size_t n = 0;
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> spearman_rho;
  std::optional<double> spearman_p;
  double mann_whitney_u = 0.0;
  double mann_whitney_p = 1.0;
  bool mann_whitney_exact = false;
  double ear = 0.0;
  double aar = 0.0;
  ProvenanceTags provenance;
};

EvalReport evaluate(std::span<const double> predicted, std::span<const double> actual,
                    const ProvenanceTags& provenance = {});

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace iqa::eval
