#include "iqa/shap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"
#include "iqa/rng.hpp"
#include "iqa/split.hpp"
#include "iqa/stats.hpp"

namespace iqa::explain {

using nlohmann::json;
using nn::Matrix;
using models::MlpModel;
using models::TreeEnsembleModel;

BackgroundSet make_background(const Dataset& data, std::size_t cap, std::uint64_t seed) {
  if (data.size() == 0) throw Error("invalid_argument", "background data is empty");
  if (cap == 0) throw Error("invalid_argument", "background cap must be positive");
  BackgroundSet bg{data.schema, {}};
  if (data.size() <= cap) {
    for (const auto& s : data.samples) bg.rows.push_back(s.features);
    return bg;
  }
  auto order = permutation(data.size(), seed);
  order.resize(cap);
  std::sort(order.begin(), order.end());
  for (std::size_t i : order) bg.rows.push_back(data.samples[i].features);
  return bg;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Exact: return "exact";
    case Method::Tree: return "tree";
    case Method::Sampled: return "sampled";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "exact") return Method::Exact;
  if (name == "tree") return Method::Tree;
  if (name == "sampled") return Method::Sampled;
  throw Error("invalid_argument", fmt::format("unknown explanation method '{}'", name));
}

double ShapExplanation::phi_sum() const { return std::accumulate(phi.begin(), phi.end(), 0.0); }

namespace {

void check_inputs(const Model& model, std::span<const double> x, const BackgroundSet& bg) {
  const auto& schema = models::schema_of(model);
  if (bg.rows.empty()) throw Error("invalid_argument", "background set is empty");
  if (bg.schema.names() != schema.names())
    throw Error("schema", fmt::format("background schema '{}' does not match model schema '{}'", bg.schema.name,
                                      schema.name));
  if (x.size() != schema.size())
    throw Error("shape", fmt::format("model expects {} features, got {}", schema.size(), x.size()));
  for (const auto& r : bg.rows)
    if (r.size() != schema.size()) throw Error("shape", "background row has the wrong number of features");
}

// Standardized background, one row per column.
Matrix standardized_background(const Model& model, const BackgroundSet& bg) {
  const Scaler& s = models::scaler_of(model);
  Matrix Z(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(bg.size()));
  for (std::size_t c = 0; c < bg.size(); ++c) {
    const auto z = s.transform(bg.rows[c]);
    for (std::size_t j = 0; j < z.size(); ++j) Z(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = z[j];
  }
  return Z;
}

Eigen::VectorXd predict_columns(const Model& model, const Matrix& Z) {
  if (const auto* t = std::get_if<TreeEnsembleModel>(&model)) {
    Eigen::VectorXd out(Z.cols());
    const auto p = static_cast<std::size_t>(Z.rows());
    for (Eigen::Index c = 0; c < Z.cols(); ++c) out(c) = t->predict_standardized({Z.col(c).data(), p});
    return out;
  }
  return nn::predict(std::get<MlpModel>(model).network, Z).row(0).transpose();
}

// s!(n-s-1)!/n!, the Shapley weight of a coalition of size s among n players.
double shapley_weight(std::size_t s, std::size_t n) {
  double binom = 1.0;  // C(n-1, s)
  for (std::size_t k = 1; k <= s; ++k) binom = binom * static_cast<double>(n - s - 1 + k) / static_cast<double>(k);
  return 1.0 / (static_cast<double>(n) * binom);
}

class SingleReferenceTreeShap {
 public:
  SingleReferenceTreeShap(const models::RegressionTree& tree, std::size_t p, std::vector<double>& phi)
      : tree_(tree), mark_(p, 0), phi_(phi) {}

  void run(const double* x, const double* z, double scale) {
    x_ = x;
    z_ = z;
    scale_ = scale;
    visit(0);
  }

 private:
  void visit(int node) {
    const auto& n = tree_.nodes[static_cast<std::size_t>(node)];
    if (n.is_leaf()) {
      const std::size_t nx = in_x_.size(), nz = in_z_.size(), total = nx + nz;
      if (total == 0) return;
      if (nx > 0) {
        const double w = scale_ * n.value * shapley_weight(nx - 1, total);
        for (int f : in_x_) phi_[static_cast<std::size_t>(f)] += w;
      }
      if (nz > 0) {
        const double w = scale_ * n.value * shapley_weight(nx, total);
        for (int f : in_z_) phi_[static_cast<std::size_t>(f)] -= w;
      }
      return;
    }
    const auto f = static_cast<std::size_t>(n.feature);
    const int xc = x_[f] < n.threshold ? n.left : n.right;
    const int zc = z_[f] < n.threshold ? n.left : n.right;
    if (mark_[f] > 0) {
      visit(xc);
    } else if (mark_[f] < 0) {
      visit(zc);
    } else if (xc == zc) {
      visit(xc);
    } else {
      mark_[f] = 1;
      in_x_.push_back(n.feature);
      visit(xc);
      in_x_.pop_back();
      mark_[f] = -1;
      in_z_.push_back(n.feature);
      visit(zc);
      in_z_.pop_back();
      mark_[f] = 0;
    }
  }

  const models::RegressionTree& tree_;
  std::vector<signed char> mark_;
  std::vector<int> in_x_, in_z_;
  std::vector<double>& phi_;
  const double* x_ = nullptr;
  const double* z_ = nullptr;
  double scale_ = 1.0;
};

}  // namespace

double value_function(const Model& model, std::span<const double> x, std::uint64_t subset,
                      const BackgroundSet& background) {
  check_inputs(model, x, background);
  const std::size_t p = x.size();
  if (p < 64 && (subset >> p) != 0) throw Error("invalid_argument", "coalition mask names a feature out of range");
  Matrix Z = standardized_background(model, background);
  const auto xz = models::scaler_of(model).transform(x);
  for (std::size_t j = 0; j < p; ++j)
    if ((subset >> j) & 1U) Z.row(static_cast<Eigen::Index>(j)).setConstant(xz[j]);
  return predict_columns(model, Z).mean();
}

ShapExplanation exact_shapley(const Model& model, std::span<const double> x, const BackgroundSet& background) {
  check_inputs(model, x, background);
  const std::size_t p = x.size();
  if (p > kMaxExactFeatures)
    throw Error("invalid_argument", fmt::format("exact enumeration supports at most {} features, model has {}; use the "
                                                "tree or sampled method",
                                                kMaxExactFeatures, p));
  const Matrix base_rows = standardized_background(model, background);
  const auto xz = models::scaler_of(model).transform(x);
  const std::size_t n_subsets = std::size_t{1} << p;
  std::vector<double> v(n_subsets);
  Matrix Z = base_rows;
  for (std::size_t mask = 0; mask < n_subsets; ++mask) {
    for (std::size_t j = 0; j < p; ++j) {
      const auto r = static_cast<Eigen::Index>(j);
      if ((mask >> j) & 1U) Z.row(r).setConstant(xz[j]);
      else Z.row(r) = base_rows.row(r);
    }
    v[mask] = predict_columns(model, Z).mean();
  }
  std::vector<double> weight(p);
  for (std::size_t s = 0; s < p; ++s) weight[s] = shapley_weight(s, p);

  ShapExplanation e;
  e.method = Method::Exact;
  e.base = v[0];
  e.prediction = models::predict(model, x);
  e.phi.assign(p, 0.0);
  for (std::size_t mask = 0; mask < n_subsets; ++mask) {
    const auto size = static_cast<std::size_t>(__builtin_popcountll(mask));
    for (std::size_t i = 0; i < p; ++i) {
      if ((mask >> i) & 1U) continue;
      e.phi[i] += weight[size] * (v[mask | (std::size_t{1} << i)] - v[mask]);
    }
  }
  return e;
}

ShapExplanation tree_shap(const Model& model, std::span<const double> x, const BackgroundSet& background) {
  const auto* ens = std::get_if<TreeEnsembleModel>(&model);
  if (!ens) throw Error("invalid_argument", "tree_shap requires a tree-ensemble model");
  check_inputs(model, x, background);
  const std::size_t p = x.size();
  const Matrix Z = standardized_background(model, background);
  const auto xz = models::scaler_of(model).transform(x);

  const double scale = ens->kind == models::EnsembleKind::Boosted
                           ? ens->learning_rate
                           : (ens->trees.empty() ? 0.0 : 1.0 / static_cast<double>(ens->trees.size()));
  std::vector<double> phi(p, 0.0);
  for (const auto& tree : ens->trees) {
    SingleReferenceTreeShap walker(tree, p, phi);
    for (Eigen::Index c = 0; c < Z.cols(); ++c) walker.run(xz.data(), Z.col(c).data(), scale);
  }
  const double nb = static_cast<double>(Z.cols());
  for (double& v : phi) v /= nb;

  ShapExplanation e;
  e.method = Method::Tree;
  e.base = predict_columns(model, Z).mean();
  e.prediction = models::predict(model, x);
  e.phi = std::move(phi);
  return e;
}

ShapExplanation sampled_shapley(const Model& model, std::span<const double> x, const BackgroundSet& background,
                                std::size_t n_permutations, std::uint64_t seed) {
  check_inputs(model, x, background);
  if (n_permutations == 0) throw Error("invalid_argument", "n_permutations must be positive");
  const std::size_t p = x.size();
  const Matrix bgz = standardized_background(model, background);
  const auto xz = models::scaler_of(model).transform(x);
  const std::size_t pairs = (n_permutations + 1) / 2;

  const auto row_order = permutation(background.size(), Rng::derive(seed, 0).next_u64());
  Rng rng = Rng::derive(seed, 1);
  std::vector<std::size_t> perm(p);
  std::vector<double> phi(p, 0.0);
  Matrix Z(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p + 1));

  auto walk = [&](auto begin, auto end, Eigen::Index ref) {
    Z.col(0) = bgz.col(ref);
    Eigen::Index c = 1;
    for (auto it = begin; it != end; ++it, ++c) {
      Z.col(c) = Z.col(c - 1);
      Z(static_cast<Eigen::Index>(*it), c) = xz[*it];
    }
    const Eigen::VectorXd f = predict_columns(model, Z);
    c = 1;
    for (auto it = begin; it != end; ++it, ++c) phi[*it] += f(c) - f(c - 1);
  };

  for (std::size_t k = 0; k < pairs; ++k) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = p; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    const auto ref = static_cast<Eigen::Index>(row_order[k % row_order.size()]);
    walk(perm.begin(), perm.end(), ref);
    walk(perm.rbegin(), perm.rend(), ref);
  }
  const double total = static_cast<double>(2 * pairs);
  for (double& v : phi) v /= total;

  ShapExplanation e;
  e.method = Method::Sampled;
  e.base = predict_columns(model, bgz).mean();
  e.prediction = models::predict(model, x);
  const double residual = e.prediction - e.base - std::accumulate(phi.begin(), phi.end(), 0.0);
  e.residual = residual;
  double abs_sum = 0.0;
  for (double v : phi) abs_sum += std::abs(v);
  for (double& v : phi) v += abs_sum > 0.0 ? residual * std::abs(v) / abs_sum : residual / static_cast<double>(p);
  e.phi = std::move(phi);
  return e;
}

Method choose_method(const Model& model, const BackgroundSet& background) {
  if (std::holds_alternative<TreeEnsembleModel>(model)) return Method::Tree;
  const std::size_t p = models::schema_of(model).size();
  if (p <= kMaxExactFeatures && (std::size_t{1} << p) * background.size() <= (std::size_t{1} << 20))
    return Method::Exact;
  return Method::Sampled;
}

ShapExplanation explain(const Model& model, std::span<const double> x, const BackgroundSet& background,
                        const ExplainOptions& options) {
  switch (options.method.value_or(choose_method(model, background))) {
    case Method::Exact: return exact_shapley(model, x, background);
    case Method::Tree: return tree_shap(model, x, background);
    case Method::Sampled: return sampled_shapley(model, x, background, options.n_permutations, options.seed);
  }
  throw Error("invalid_argument", "unknown explanation method");
}

GlobalImportance global_importance(const Model& model, const Dataset& data, const BackgroundSet& background,
                                   const ExplainOptions& options) {
  if (data.size() == 0) throw Error("invalid_argument", "cannot explain an empty dataset");
  const auto& schema = models::schema_of(model);
  if (data.schema.names() != schema.names()) throw Error("schema", "dataset schema does not match the model");
  GlobalImportance g;
  g.features = schema.names();
  g.method = options.method.value_or(choose_method(model, background));
  const std::size_t p = schema.size();
  g.mean_abs.assign(p, 0.0);
  g.mean_signed.assign(p, 0.0);
  ExplainOptions per_sample = options;
  per_sample.method = g.method;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    per_sample.seed = splitmix64(options.seed + i);
    const auto e = explain(model, s.features, background, per_sample);
    if (i == 0) g.base = e.base;
    for (std::size_t j = 0; j < p; ++j) {
      g.mean_abs[j] += std::abs(e.phi[j]);
      g.mean_signed[j] += e.phi[j];
    }
    g.sample_ids.push_back(s.id);
    g.predictions.push_back(e.prediction);
    g.phi.push_back(e.phi);
    g.raw_values.push_back(s.features);
    g.z_values.push_back(models::scaler_of(model).transform(s.features));
  }
  for (std::size_t j = 0; j < p; ++j) {
    g.mean_abs[j] /= static_cast<double>(data.size());
    g.mean_signed[j] /= static_cast<double>(data.size());
  }
  g.order.resize(p);
  std::iota(g.order.begin(), g.order.end(), std::size_t{0});
  std::stable_sort(g.order.begin(), g.order.end(),
                   [&](std::size_t a, std::size_t b) { return g.mean_abs[a] > g.mean_abs[b]; });
  return g;
}

BootstrapCi bootstrap_ci(const std::vector<std::vector<double>>& phi, const std::vector<std::string>& features,
                         std::size_t n_resamples, std::uint64_t seed) {
  if (n_resamples < 2) throw Error("invalid_argument", "bootstrap needs at least 2 resamples");
  if (phi.empty()) throw Error("invalid_argument", "bootstrap needs at least one explained sample");
  const std::size_t n = phi.size(), p = features.size();
  for (const auto& row : phi)
    if (row.size() != p) throw Error("shape", "phi matrix width does not match the feature list");

  BootstrapCi ci;
  ci.features = features;
  ci.n_resamples = n_resamples;
  ci.seed = seed;
  ci.full_mean.assign(p, 0.0);
  for (const auto& row : phi)
    for (std::size_t j = 0; j < p; ++j) ci.full_mean[j] += row[j];
  for (double& v : ci.full_mean) v /= static_cast<double>(n);

  std::vector<std::vector<double>> means(p, std::vector<double>(n_resamples, 0.0));
  auto abs_means = means;
  Rng rng(seed);
  for (std::size_t r = 0; r < n_resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = phi[rng.index(n)];
      for (std::size_t j = 0; j < p; ++j) {
        means[j][r] += row[j];
        abs_means[j][r] += std::abs(row[j]);
      }
    }
    for (std::size_t j = 0; j < p; ++j) {
      means[j][r] /= static_cast<double>(n);
      abs_means[j][r] /= static_cast<double>(n);
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    auto& m = means[j];
    ci.mean.push_back(std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(n_resamples));
    std::sort(m.begin(), m.end());
    ci.lower.push_back(quantile_sorted(m, 0.025));
    ci.upper.push_back(quantile_sorted(m, 0.975));
    auto& a = abs_means[j];
    std::sort(a.begin(), a.end());
    ci.abs_lower.push_back(quantile_sorted(a, 0.025));
    ci.abs_upper.push_back(quantile_sorted(a, 0.975));
  }
  return ci;
}

BootstrapCi bootstrap_ci(const Model& model, const Dataset& data, const BackgroundSet& background,
                         std::size_t n_resamples, std::uint64_t seed, const ExplainOptions& options) {
  if (n_resamples < 2) throw Error("invalid_argument", "bootstrap needs at least 2 resamples");
  const auto g = global_importance(model, data, background, options);
  return bootstrap_ci(g.phi, g.features, n_resamples, seed);
}

LocalExplanation make_local(const ShapExplanation& e, const FeatureSchema& schema, std::span<const double> values) {
  if (e.phi.size() != schema.size() || values.size() != schema.size())
    throw Error("shape", "explanation does not match the schema");
  LocalExplanation out;
  out.sample_id = e.sample_id;
  out.method = e.method;
  out.base = e.base;
  out.prediction = e.prediction;
  out.residual = e.residual;
  std::vector<std::size_t> order(schema.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(e.phi[a]) > std::abs(e.phi[b]); });
  double running = e.base;
  out.trajectory.push_back(running);
  for (std::size_t j : order) {
    out.contributions.push_back({schema.features[j].name, e.phi[j], values[j], std::nullopt});
    running += e.phi[j];
    out.trajectory.push_back(running);
  }
  return out;
}

LocalExplanation local_explanation(const Model& model, const Sample& sample, const BackgroundSet& background,
                                   const ExplainOptions& options) {
  auto e = explain(model, sample.features, background, options);
  e.sample_id = sample.id;
  return make_local(e, models::schema_of(model), sample.features);
}

json explanation_to_json(const LocalExplanation& e) {
  json contributions = json::array();
  for (const auto& c : e.contributions) {
    json item = {{"feature", c.feature}, {"phi", c.phi}, {"value", c.value}};
    if (c.ci) item["ci"] = {c.ci->first, c.ci->second};
    contributions.push_back(item);
  }
  json j = {{"sample_id", e.sample_id},
            {"method", std::string(to_string(e.method))},
            {"base", e.base},
            {"prediction", e.prediction},
            {"contributions", contributions},
            {"trajectory", e.trajectory}};
  if (e.residual) j["residual"] = *e.residual;
  return j;
}

LocalExplanation explanation_from_json(const json& j) {
  try {
    LocalExplanation e;
    e.sample_id = j.value("sample_id", std::string{});
    e.method = parse_method(j.value("method", std::string("exact")));
    e.base = j.at("base").get<double>();
    e.prediction = j.at("prediction").get<double>();
    for (const auto& c : j.at("contributions")) {
      Contribution item{c.at("feature").get<std::string>(), c.at("phi").get<double>(), c.value("value", 0.0),
                        std::nullopt};
      if (c.contains("ci")) item.ci = std::pair{c.at("ci").at(0).get<double>(), c.at("ci").at(1).get<double>()};
      e.contributions.push_back(std::move(item));
    }
    if (j.contains("trajectory")) {
      e.trajectory = j.at("trajectory").get<std::vector<double>>();
    } else {
      double running = e.base;
      e.trajectory.push_back(running);
      for (const auto& c : e.contributions) e.trajectory.push_back(running += c.phi);
    }
    if (j.contains("residual")) e.residual = j.at("residual").get<double>();
    if (e.trajectory.size() != e.contributions.size() + 1)
      throw Error("schema", "explanation trajectory length does not match its contributions");
    return e;
  } catch (const json::exception& ex) {
    throw Error("parse", fmt::format("malformed explanation JSON: {}", ex.what()));
  }
}

json global_to_json(const GlobalImportance& g, const BootstrapCi* ci) {
  json features = json::array();
  for (std::size_t j : g.order) {
    json item = {{"feature", g.features[j]}, {"mean_abs_phi", g.mean_abs[j]}, {"mean_phi", g.mean_signed[j]}};
    if (ci) {
      item["ci"] = {ci->lower[j], ci->upper[j]};
      item["abs_ci"] = {ci->abs_lower[j], ci->abs_upper[j]};
      item["bootstrap_mean_phi"] = ci->mean[j];
      item["full_mean_phi"] = ci->full_mean[j];
    }
    features.push_back(item);
  }
  json samples = json::array();
  for (std::size_t i = 0; i < g.sample_ids.size(); ++i)
    samples.push_back({{"sample_id", g.sample_ids[i]},
                       {"prediction", g.predictions[i]},
                       {"phi", g.phi[i]},
                       {"z", g.z_values[i]},
                       {"value", g.raw_values[i]}});
  json j = {{"method", std::string(to_string(g.method))},
            {"base", g.base},
            {"ranking", "mean_abs_phi"},
            {"features", features},
            {"beeswarm", {{"feature_order", g.features}, {"samples", samples}}}};
  if (ci) j["bootstrap"] = {{"n_resamples", ci->n_resamples}, {"seed", ci->seed}, {"interval", {0.025, 0.975}}};
  return j;
}

}  // namespace iqa::explain
