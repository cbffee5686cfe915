#include "iqa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"

namespace iqa::eval {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size())
    throw Error("shape", fmt::format("{}: length mismatch ({} vs {})", what, a.size(), b.size()));
  if (a.empty()) throw Error("invalid_argument", fmt::format("{}: empty input", what));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw Error("numeric", fmt::format("{}: non-finite value at index {}", what, i));
  }
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

RegressionErrors regression_errors(std::span<const double> predicted, std::span<const double> actual) {
  check_pair(predicted, actual, "regression_errors");
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double r = predicted[i] - actual[i];
    se += r * r;
    ae += std::abs(r);
  }
  const double n = static_cast<double>(predicted.size());
  return {std::sqrt(se / n), ae / n};
}

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "spearman");
  if (x.size() < 3) throw Error("invalid_argument", "spearman needs at least 3 pairs");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  SpearmanResult out;
  out.rho = pearson(rx, ry);
  if (!out.rho) return out;
  const double rho = *out.rho;
  const double df = static_cast<double>(x.size()) - 2.0;
  if (std::abs(rho) >= 1.0) {
    out.p = 0.0;
    return out;
  }
  const double t = rho * std::sqrt(df / (1.0 - rho * rho));
  const boost::math::students_t dist(df);
  out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  return out;
}

double spearman_exact_p(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "spearman_exact_p");
  if (x.size() < 3 || x.size() > 10) throw Error("invalid_argument", "exact Spearman p supports 3 <= n <= 10");
  const auto rx = midranks(x);
  auto ry = midranks(y);
  const auto observed = pearson(rx, ry);
  if (!observed) throw Error("numeric", "Spearman rho undefined for constant input");
  std::sort(ry.begin(), ry.end());
  std::size_t extreme = 0, total = 0;
  const double tol = 1e-12;
  do {
    const auto r = pearson(rx, ry);
    if (std::abs(*r) >= std::abs(*observed) - tol) ++extreme;
    ++total;
  } while (std::next_permutation(ry.begin(), ry.end()));
  // next_permutation skips duplicate arrangements; with tied ranks every
  // distinct arrangement is equally likely up to the same multiplicity.
  return static_cast<double>(extreme) / static_cast<double>(total);
}

namespace {

double u_statistic(std::span<const double> a, std::span<const double> b) {
  double u = 0.0;
  for (double x : a)
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return u;
}

void check_samples(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error("invalid_argument", "Mann-Whitney U needs two non-empty samples");
  for (double v : a)
    if (!std::isfinite(v)) throw Error("numeric", "Mann-Whitney U: non-finite value");
  for (double v : b)
    if (!std::isfinite(v)) throw Error("numeric", "Mann-Whitney U: non-finite value");
}

}  // namespace

double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b) {
  check_samples(a, b);
  const std::size_t m = a.size(), n = b.size(), N = m + n;
  if (N > 20) throw Error("invalid_argument", "exact Mann-Whitney enumeration supports at most 20 observations");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const double center = 0.5 * static_cast<double>(m * n);
  const double observed = std::abs(u_statistic(a, b) - center);

  std::vector<bool> pick(N, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(m), true);
  std::vector<double> ga, gb;
  std::size_t extreme = 0, total = 0;
  // prev_permutation over a sorted-descending selector visits each subset once.
  do {
    ga.clear();
    gb.clear();
    for (std::size_t i = 0; i < N; ++i) (pick[i] ? ga : gb).push_back(pooled[i]);
    if (std::abs(u_statistic(ga, gb) - center) >= observed - 1e-9) ++extreme;
    ++total;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b) {
  check_samples(a, b);
  const double m = static_cast<double>(a.size()), n = static_cast<double>(b.size());
  const double N = m + n;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double variance = m * n / 12.0 * ((N + 1.0) - tie_term / (N * (N - 1.0)));
  if (!(variance > 0.0)) return 1.0;
  const double dev = std::abs(u_statistic(a, b) - 0.5 * m * n);
  const double z = std::max(0.0, dev - 0.5) / std::sqrt(variance);
  const boost::math::normal std_normal;
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(std_normal, z)));
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  check_samples(a, b);
  MannWhitneyResult r;
  r.u = u_statistic(a, b);
  if (a.size() + b.size() <= 16) {
    r.p = mann_whitney_exact_p(a, b);
    r.exact = true;
  } else {
    r.p = mann_whitney_normal_p(a, b);
  }
  return r;
}

AgreementRates agreement_rates(std::span<const double> predicted, std::span<const double> actual) {
  check_pair(predicted, actual, "agreement_rates");
  std::size_t exact = 0, adjacent = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = std::abs(std::round(predicted[i]) - std::round(actual[i]));
    if (d == 0.0) ++exact;
    if (d <= 1.0) ++adjacent;
  }
  const double n = static_cast<double>(predicted.size());
  return {static_cast<double>(exact) / n, static_cast<double>(adjacent) / n};
}

EvalReport evaluate(std::span<const double> predicted, std::span<const double> actual, const ProvenanceTags& provenance) {
  check_pair(predicted, actual, "evaluate");
  EvalReport r;
  r.n = predicted.size();
  const auto errors = regression_errors(predicted, actual);
  r.rmse = errors.rmse;
  r.mae = errors.mae;
  if (predicted.size() >= 3) {
    const auto s = spearman(predicted, actual);
    r.spearman_rho = s.rho;
    r.spearman_p = s.p;
  }
  const auto mw = mann_whitney_u(predicted, actual);
  r.mann_whitney_u = mw.u;
  r.mann_whitney_p = mw.p;
  r.mann_whitney_exact = mw.exact;
  const auto ag = agreement_rates(predicted, actual);
  r.ear = ag.ear;
  r.aar = ag.aar;
  r.provenance = provenance;
  return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"n", r.n},
          {"rmse", r.rmse},
          {"mae", r.mae},
          {"spearman_rho", opt(r.spearman_rho)},
          {"spearman_p", opt(r.spearman_p)},
          {"mann_whitney_u", r.mann_whitney_u},
          {"mann_whitney_p", r.mann_whitney_p},
          {"ear", r.ear},
          {"aar", r.aar},
          {"conventions",
           {{"rounding", "half away from zero"},
            {"aar", "|rounded difference| <= 1, exact matches included"},
            {"spearman_p", "two-sided, Student t with n-2 df"},
            {"mann_whitney_u", "statistic of the predicted sample vs actual"},
            {"mann_whitney_p", r.mann_whitney_exact ? "two-sided exact enumeration"
                                                     : "two-sided normal approximation, tie and continuity corrected"}}},
          {"provenance",
           {{"data", r.provenance.data},
            {"seed", r.provenance.seed},
            {"scaler_mode", r.provenance.scaler_mode},
            {"model", r.provenance.model},
            {"dimension", r.provenance.dimension}}}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.n = j.at("n").get<std::size_t>();
    r.rmse = j.at("rmse").get<double>();
    r.mae = j.at("mae").get<double>();
    if (!j.at("spearman_rho").is_null()) r.spearman_rho = j.at("spearman_rho").get<double>();
    if (!j.at("spearman_p").is_null()) r.spearman_p = j.at("spearman_p").get<double>();
    r.mann_whitney_u = j.at("mann_whitney_u").get<double>();
    r.mann_whitney_p = j.at("mann_whitney_p").get<double>();
    r.ear = j.at("ear").get<double>();
    r.aar = j.at("aar").get<double>();
    const auto& p = j.at("provenance");
    r.provenance = {p.at("data").get<std::string>(), p.at("seed").get<std::uint64_t>(),
                    p.at("scaler_mode").get<std::string>(), p.value("model", std::string()),
                    p.value("dimension", std::string())};
    r.mann_whitney_exact = j.at("conventions").at("mann_whitney_p").get<std::string>().find("exact") != std::string::npos;
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error("parse", fmt::format("malformed evaluation report JSON: {}", e.what()));
  }
}

}  // namespace iqa::eval
