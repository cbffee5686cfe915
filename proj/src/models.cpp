#include "iqa/models.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"
#include "iqa/rng.hpp"

namespace iqa::models {

using nlohmann::json;

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Gbt: return "gbt";
    case ModelKind::Rf: return "rf";
    case ModelKind::Mlp: return "mlp";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "gbt") return ModelKind::Gbt;
  if (name == "rf") return ModelKind::Rf;
  if (name == "mlp") return ModelKind::Mlp;
  throw Error("invalid_argument", fmt::format("unknown model kind '{}' (expected gbt, rf or mlp)", name));
}

ModelKind kind_of(const Model& m) {
  if (const auto* t = std::get_if<TreeEnsembleModel>(&m))
    return t->kind == EnsembleKind::Boosted ? ModelKind::Gbt : ModelKind::Rf;
  return ModelKind::Mlp;
}

ModelKind kind_of(const ModelParams& p) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GbtParams>) return ModelKind::Gbt;
        else if constexpr (std::is_same_v<T, RfParams>) return ModelKind::Rf;
        else return ModelKind::Mlp;
      },
      p);
}

double TreeEnsembleModel::predict_standardized(std::span<const double> z) const {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(z);
  if (kind == EnsembleKind::Boosted) return base_score + learning_rate * sum;
  return trees.empty() ? 0.0 : sum / static_cast<double>(trees.size());
}

double MlpModel::predict_standardized(std::span<const double> z) const {
  const nn::Matrix in = Eigen::Map<const nn::Matrix>(z.data(), static_cast<Eigen::Index>(z.size()), 1);
  return nn::predict(network, in)(0, 0);
}

namespace {

void check_training_set(const Dataset& train, const char* what) {
  if (train.size() < 2)
    throw Error("invalid_argument", fmt::format("{} needs at least 2 samples, got {}", what, train.size()));
  validate_dataset(train);
}

Scaler choose_scaler(const Dataset& train, const TrainOptions& options) {
  if (options.scaler) {
    if (!(options.scaler->schema == train.schema)) throw Error("schema", "supplied scaler does not match the dataset schema");
    return *options.scaler;
  }
  return fit_scaler(train);
}

std::vector<std::vector<double>> standardized_rows(const Dataset& d, const Scaler& s) {
  std::vector<std::vector<double>> rows;
  rows.reserve(d.size());
  for (const auto& sample : d.samples) rows.push_back(s.transform(sample.features));
  return rows;
}

}  // namespace

TreeEnsembleModel train_gbt(const Dataset& train, const GbtParams& params, std::uint64_t seed,
                            const TrainOptions& options) {
  check_training_set(train, "gradient boosting");
  if (params.n_trees < 0 || params.max_depth < 1 || !(params.learning_rate > 0.0) || params.min_leaf < 1 ||
      !(params.l2_leaf >= 0.0))
    throw Error("invalid_argument", "invalid gradient boosting parameters");
  TreeEnsembleModel m;
  m.kind = EnsembleKind::Boosted;
  m.scaler = choose_scaler(train, options);
  m.seed = seed;
  m.params = params;
  m.learning_rate = params.learning_rate;
  const auto rows = standardized_rows(train, m.scaler);
  const auto y = train.scores();
  m.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  std::vector<double> fitted(y.size(), m.base_score);
  std::vector<double> residual(y.size());
  const CartParams cart{params.max_depth, params.min_leaf, LeafRule::Shrunk, params.l2_leaf, 0};
  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - fitted[i];
    RegressionTree tree = fit_cart(rows, residual, cart, splitmix64(seed + static_cast<std::uint64_t>(t)));
    for (std::size_t i = 0; i < y.size(); ++i) fitted[i] += m.learning_rate * tree.predict(rows[i]);
    m.trees.push_back(std::move(tree));
  }
  return m;
}

TreeEnsembleModel train_rf(const Dataset& train, const RfParams& params, std::uint64_t seed,
                           const TrainOptions& options) {
  check_training_set(train, "random forest");
  if (params.n_trees < 1 || params.max_depth < 1 || params.min_leaf < 1 || params.feature_subsample < 0)
    throw Error("invalid_argument", "invalid random forest parameters");
  TreeEnsembleModel m;
  m.kind = EnsembleKind::Bagged;
  m.scaler = choose_scaler(train, options);
  m.seed = seed;
  m.params = params;
  const auto rows = standardized_rows(train, m.scaler);
  const auto y = train.scores();
  const std::size_t n = rows.size();
  const int p = static_cast<int>(train.schema.size());
  const int per_split = params.feature_subsample > 0 ? std::min(params.feature_subsample, p) : (p + 2) / 3;
  const CartParams cart{params.max_depth, params.min_leaf, LeafRule::Mean, 0.0, per_split};

  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(t));
    if (!params.bootstrap) {
      m.trees.push_back(fit_cart(rows, y, cart, rng.next_u64()));
      continue;
    }
    std::vector<std::vector<double>> boot_rows;
    std::vector<double> boot_y;
    boot_rows.reserve(n);
    boot_y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = rng.index(n);
      boot_rows.push_back(rows[r]);
      boot_y.push_back(y[r]);
    }
    m.trees.push_back(fit_cart(boot_rows, boot_y, cart, rng.next_u64()));
  }
  return m;
}

namespace {

nn::Matrix design_matrix(const std::vector<std::vector<double>>& rows) {
  nn::Matrix X(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) X(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = rows[i][j];
  return X;
}

double mse_with_gradients(const nn::Network& net, const nn::Matrix& X, const nn::Matrix& y, nn::Gradients* grads) {
  const auto cache = nn::forward(net, X);
  const nn::Matrix diff = cache.output() - y;
  const double B = static_cast<double>(X.cols());
  if (grads) *grads = nn::backward(net, cache, 2.0 * diff / B);
  return diff.squaredNorm() / B;
}

}  // namespace

MlpModel train_mlp(const Dataset& train, const MlpParams& params, std::uint64_t seed, const TrainOptions& options) {
  check_training_set(train, "MLP");
  if (!(params.learning_rate > 0.0) || params.epochs < 0 || params.batch_size < 0)
    throw Error("invalid_argument", "invalid MLP parameters");
  MlpModel m;
  m.scaler = choose_scaler(train, options);
  m.seed = seed;
  m.params = params;
  Rng init_rng = Rng::derive(seed, 0);
  m.network = nn::make_network(static_cast<Eigen::Index>(train.schema.size()), params.hidden_widths, 1, init_rng);

  const auto y = train.scores();
  m.network.layers.back().bias(0) = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const nn::Matrix X = design_matrix(standardized_rows(train, m.scaler));
  nn::Matrix Y(1, static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) Y(0, static_cast<Eigen::Index>(i)) = y[i];

  const std::size_t n = y.size();
  const std::size_t batch =
      params.batch_size <= 0 ? n : std::min<std::size_t>(n, static_cast<std::size_t>(params.batch_size));
  nn::Adam opt(m.network, params.learning_rate);
  Rng rng = Rng::derive(seed, 1);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    if (batch < n) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      nn::Matrix xb(X.rows(), static_cast<Eigen::Index>(count));
      nn::Matrix yb(1, static_cast<Eigen::Index>(count));
      for (std::size_t k = 0; k < count; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = X.col(order[start + k]);
        yb(0, static_cast<Eigen::Index>(k)) = Y(0, order[start + k]);
      }
      nn::Gradients g;
      const double loss = mse_with_gradients(m.network, xb, yb, &g);
      if (!std::isfinite(loss)) throw Error("numeric", fmt::format("MLP loss became non-finite at epoch {}", epoch));
      epoch_loss += loss * static_cast<double>(count) / static_cast<double>(n);
      opt.step(m.network, g);
    }
    m.loss_trace.push_back(epoch_loss);
  }
  return m;
}

double mlp_gradient_check(const MlpModel& model, const Dataset& data, double epsilon) {
  const nn::Matrix X = design_matrix(standardized_rows(data, model.scaler));
  nn::Matrix Y(1, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) Y(0, static_cast<Eigen::Index>(i)) = data.samples[i].score;
  nn::Gradients g;
  mse_with_gradients(model.network, X, Y, &g);
  const auto analytic = nn::flatten(g);
  nn::Network probe = model.network;
  auto params = nn::flatten(probe);
  std::vector<double> numeric;
  numeric.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + epsilon;
    nn::unflatten(probe, params);
    const double up = mse_with_gradients(probe, X, Y, nullptr);
    params[i] = saved - epsilon;
    nn::unflatten(probe, params);
    const double down = mse_with_gradients(probe, X, Y, nullptr);
    params[i] = saved;
    numeric.push_back((up - down) / (2.0 * epsilon));
  }
  return nn::max_relative_error(analytic, numeric);
}

Model train_model(const Dataset& train, const ModelParams& params, std::uint64_t seed, const TrainOptions& options) {
  return std::visit(
      [&](const auto& p) -> Model {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GbtParams>) return train_gbt(train, p, seed, options);
        else if constexpr (std::is_same_v<T, RfParams>) return train_rf(train, p, seed, options);
        else return train_mlp(train, p, seed, options);
      },
      params);
}

const FeatureSchema& schema_of(const Model& m) {
  return std::visit([](const auto& v) -> const FeatureSchema& { return v.schema(); }, m);
}

const Scaler& scaler_of(const Model& m) {
  return std::visit([](const auto& v) -> const Scaler& { return v.scaler; }, m);
}

namespace {

template <typename M>
double predict_impl(const M& model, std::span<const double> features) {
  if (features.size() != model.scaler.size())
    throw Error("shape", fmt::format("model expects {} features, got {}", model.scaler.size(), features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features[i]))
      throw Error("numeric", fmt::format("feature '{}' is not finite", model.scaler.schema.features[i].name));
  }
  const auto z = model.scaler.transform(features);
  return model.predict_standardized(z);
}

}  // namespace

double predict(const TreeEnsembleModel& model, std::span<const double> features) { return predict_impl(model, features); }
double predict(const MlpModel& model, std::span<const double> features) { return predict_impl(model, features); }
double predict(const Model& model, std::span<const double> features) {
  return std::visit([&](const auto& m) { return predict_impl(m, features); }, model);
}

std::vector<double> predict_all(const Model& model, const Dataset& dataset) {
  if (!(dataset.schema.names() == schema_of(model).names()))
    throw Error("schema", fmt::format("model schema '{}' does not match dataset schema '{}'", schema_of(model).name,
                                      dataset.schema.name));
  std::vector<double> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset.samples) out.push_back(predict(model, s.features));
  return out;
}

json params_to_json(const ModelParams& p) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GbtParams>)
          return {{"n_trees", v.n_trees}, {"max_depth", v.max_depth}, {"learning_rate", v.learning_rate},
                  {"min_leaf", v.min_leaf}, {"l2_leaf", v.l2_leaf}};
        else if constexpr (std::is_same_v<T, RfParams>)
          return {{"n_trees", v.n_trees}, {"max_depth", v.max_depth}, {"min_leaf", v.min_leaf},
                  {"feature_subsample", v.feature_subsample}, {"bootstrap", v.bootstrap}};
        else
          return {{"hidden_widths", v.hidden_widths}, {"learning_rate", v.learning_rate}, {"epochs", v.epochs},
                  {"batch_size", v.batch_size}};
      },
      p);
}

ModelParams params_from_json(ModelKind kind, const json& j) {
  try {
    switch (kind) {
      case ModelKind::Gbt: {
        GbtParams g;
        g.n_trees = j.value("n_trees", g.n_trees);
        g.max_depth = j.value("max_depth", g.max_depth);
        g.learning_rate = j.value("learning_rate", g.learning_rate);
        g.min_leaf = j.value("min_leaf", g.min_leaf);
        g.l2_leaf = j.value("l2_leaf", g.l2_leaf);
        return g;
      }
      case ModelKind::Rf: {
        RfParams r;
        r.n_trees = j.value("n_trees", r.n_trees);
        r.max_depth = j.value("max_depth", r.max_depth);
        r.min_leaf = j.value("min_leaf", r.min_leaf);
        r.feature_subsample = j.value("feature_subsample", r.feature_subsample);
        r.bootstrap = j.value("bootstrap", r.bootstrap);
        return r;
      }
      case ModelKind::Mlp: {
        MlpParams m;
        m.hidden_widths = j.value("hidden_widths", m.hidden_widths);
        m.learning_rate = j.value("learning_rate", m.learning_rate);
        m.epochs = j.value("epochs", m.epochs);
        m.batch_size = j.value("batch_size", m.batch_size);
        return m;
      }
    }
  } catch (const json::exception& e) {
    throw Error("parse", fmt::format("malformed hyperparameters: {}", e.what()));
  }
  throw Error("invalid_argument", "unknown model kind");
}

namespace {

json tree_to_json(const RegressionTree& t) {
  std::vector<int> feature, left, right, samples;
  std::vector<double> threshold, value;
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    samples.push_back(n.samples);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left},
          {"right", right},     {"value", value},         {"samples", samples}};
}

RegressionTree tree_from_json(const json& j) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const auto samples = j.value("samples", std::vector<int>(feature.size(), 0));
  const std::size_t n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n || samples.size() != n)
    throw Error("shape", "tree node arrays differ in length");
  RegressionTree t;
  for (std::size_t k = 0; k < n; ++k) t.nodes.push_back({feature[k], threshold[k], left[k], right[k], value[k], samples[k]});
  return t;
}

}  // namespace

json model_to_json(const Model& m) {
  const FeatureSchema& schema = schema_of(m);
  json j = {{"format", "iqa-model/1"},
            {"kind", std::string(to_string(kind_of(m)))},
            {"dimension", std::string(to_string(schema.dimension))},
            {"schema", schema_to_json(schema)},
            {"schema_digest", schema.digest()},
            {"scaler", scaler_to_json(scaler_of(m))}};
  if (const auto* t = std::get_if<TreeEnsembleModel>(&m)) {
    j["seed"] = t->seed;
    j["hyperparameters"] = std::visit([](const auto& p) { return params_to_json(ModelParams{p}); }, t->params);
    j["base_score"] = t->base_score;
    j["learning_rate"] = t->learning_rate;
    json trees = json::array();
    for (const auto& tree : t->trees) trees.push_back(tree_to_json(tree));
    j["trees"] = trees;
  } else {
    const auto& mlp = std::get<MlpModel>(m);
    j["seed"] = mlp.seed;
    j["hyperparameters"] = params_to_json(mlp.params);
    j["network"] = nn::network_to_json(mlp.network);
    j["loss_trace_final"] = mlp.loss_trace.empty() ? json(nullptr) : json(mlp.loss_trace.back());
  }
  return j;
}

Model model_from_json(const json& j) {
  try {
    const ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
    const FeatureSchema schema = schema_from_json(j.at("schema"));
    if (j.contains("schema_digest") && j.at("schema_digest").get<std::string>() != schema.digest())
      throw Error("schema", "model schema digest does not match its schema");
    const Scaler scaler = scaler_from_json(j.at("scaler"), schema);
    const auto seed = j.at("seed").get<std::uint64_t>();
    const ModelParams params = params_from_json(kind, j.at("hyperparameters"));
    if (kind == ModelKind::Mlp) {
      MlpModel m;
      m.network = nn::network_from_json(j.at("network"));
      if (m.network.inputs() != static_cast<Eigen::Index>(schema.size()) || m.network.outputs() != 1)
        throw Error("shape", "MLP network shape does not match the schema");
      m.scaler = scaler;
      m.seed = seed;
      m.params = std::get<MlpParams>(params);
      if (j.contains("loss_trace_final") && !j.at("loss_trace_final").is_null())
        m.loss_trace = {j.at("loss_trace_final").get<double>()};
      return m;
    }
    TreeEnsembleModel m;
    m.kind = kind == ModelKind::Gbt ? EnsembleKind::Boosted : EnsembleKind::Bagged;
    m.scaler = scaler;
    m.seed = seed;
    if (kind == ModelKind::Gbt) m.params = std::get<GbtParams>(params);
    else m.params = std::get<RfParams>(params);
    m.base_score = j.value("base_score", 0.0);
    m.learning_rate = j.value("learning_rate", 1.0);
    for (const auto& tj : j.at("trees")) {
      m.trees.push_back(tree_from_json(tj));
      m.trees.back().validate(schema.size());
    }
    return m;
  } catch (const json::exception& e) {
    throw Error("parse", fmt::format("malformed model JSON: {}", e.what()));
  }
}

}  // namespace iqa::models
