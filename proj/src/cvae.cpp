#include "iqa/cvae.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"
#include "iqa/rng.hpp"
#include "iqa/split.hpp"

namespace iqa::augment {

using nlohmann::json;
using nn::Matrix;

void CvaeConfig::validate() const {
  if (latent_dim <= 0) throw Error("invalid_argument", "CVAE latent_dim must be positive");
  for (int h : encoder_hidden)
    if (h <= 0) throw Error("invalid_argument", "CVAE encoder widths must be positive");
  for (int h : decoder_hidden)
    if (h <= 0) throw Error("invalid_argument", "CVAE decoder widths must be positive");
  if (!(learning_rate > 0.0)) throw Error("invalid_argument", "CVAE learning_rate must be positive");
  if (epochs < 0) throw Error("invalid_argument", "CVAE epochs must be non-negative");
  if (batch_size < 0) throw Error("invalid_argument", "CVAE batch_size must be non-negative");
  if (!(kl_weight >= 0.0)) throw Error("invalid_argument", "CVAE kl_weight must be non-negative");
}

json cvae_config_to_json(const CvaeConfig& c) {
  return {{"latent_dim", c.latent_dim},         {"encoder_hidden", c.encoder_hidden},
          {"decoder_hidden", c.decoder_hidden}, {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},                 {"batch_size", c.batch_size},
          {"kl_weight", c.kl_weight},           {"seed", c.seed},
          {"activation", "relu"},               {"optimizer", "adam"}};
}

CvaeConfig cvae_config_from_json(const json& j) {
  CvaeConfig c;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
  c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

CvaeModel init_cvae(const FeatureSchema& schema, const CvaeConfig& config) {
  config.validate();
  CvaeModel m;
  m.dimension = schema.dimension;
  m.config = config;
  const auto p = static_cast<Eigen::Index>(schema.size());
  Rng rng = Rng::derive(config.seed, 0);
  m.encoder = nn::make_network(p + 1, config.encoder_hidden, 2 * config.latent_dim, rng);
  m.decoder = nn::make_network(config.latent_dim + 1, config.decoder_hidden, p, rng);
  m.feature_scaler = Scaler::identity(schema);
  return m;
}

namespace {

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

struct Pass {
  nn::ForwardCache enc;
  nn::ForwardCache dec;
  Matrix mu, logvar, sigma;
  ElboTerms terms;
};

Pass run(const CvaeModel& model, const CvaeBatch& batch) {
  const Eigen::Index L = model.config.latent_dim;
  const auto B = static_cast<double>(batch.features.cols());
  if (batch.features.cols() == 0) throw Error("shape", "ELBO batch is empty");
  if (batch.features.rows() != model.decoder.outputs() || batch.conditions.rows() != 1 ||
      batch.conditions.cols() != batch.features.cols() || batch.noise.rows() != L ||
      batch.noise.cols() != batch.features.cols())
    throw Error("shape", "CVAE batch shape does not match the model");

  Pass p;
  p.enc = nn::forward(model.encoder, stack_rows(batch.features, batch.conditions));
  p.mu = p.enc.output().topRows(L);
  p.logvar = p.enc.output().bottomRows(L);
  p.sigma = (0.5 * p.logvar.array()).exp().matrix();
  const Matrix z = p.mu + p.sigma.cwiseProduct(batch.noise);
  p.dec = nn::forward(model.decoder, stack_rows(z, batch.conditions));

  p.terms.reconstruction = (p.dec.output() - batch.features).squaredNorm() / B;
  p.terms.kl = 0.5 * (p.mu.array().square() + p.logvar.array().exp() - p.logvar.array() - 1.0).sum() / B;
  p.terms.total = p.terms.reconstruction + model.config.kl_weight * p.terms.kl;
  return p;
}

}  // namespace

CvaeBatch make_batch(const CvaeModel& model, const Dataset& dataset, std::uint64_t seed) {
  const auto p = static_cast<Eigen::Index>(model.feature_scaler.size());
  const auto n = static_cast<Eigen::Index>(dataset.size());
  CvaeBatch b{Matrix(p, n), Matrix(1, n), Matrix(model.config.latent_dim, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = dataset.samples[static_cast<std::size_t>(i)];
    const auto z = model.feature_scaler.transform(s.features);
    for (Eigen::Index j = 0; j < p; ++j) b.features(j, i) = z[static_cast<std::size_t>(j)];
    b.conditions(0, i) = model.score_scaler.apply(s.score);
  }
  Rng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = 0; l < b.noise.rows(); ++l) b.noise(l, i) = rng.normal();
  return b;
}

ElboTerms elbo(const CvaeModel& model, const CvaeBatch& batch) { return run(model, batch).terms; }

ElboTerms elbo_with_gradients(const CvaeModel& model, const CvaeBatch& batch, CvaeGradients& grads) {
  const Eigen::Index L = model.config.latent_dim;
  const auto B = static_cast<double>(batch.features.cols());
  const double kw = model.config.kl_weight;
  Pass p = run(model, batch);

  const Matrix d_recon = 2.0 * (p.dec.output() - batch.features) / B;
  grads.decoder = nn::backward(model.decoder, p.dec, d_recon);
  const Matrix dz = grads.decoder.input.topRows(L);

  Matrix d_enc(2 * L, batch.features.cols());
  d_enc.topRows(L) = dz + (kw / B) * p.mu;
  d_enc.bottomRows(L) = (dz.array() * batch.noise.array() * 0.5 * p.sigma.array() +
                         (kw / B) * 0.5 * (p.logvar.array().exp() - 1.0))
                            .matrix();
  grads.encoder = nn::backward(model.encoder, p.enc, d_enc);
  return p.terms;
}

namespace {

// Sign of every hidden pre-activation, encoder then decoder.
std::vector<bool> relu_pattern(const Pass& p) {
  std::vector<bool> out;
  for (const auto* cache : {&p.enc, &p.dec})
    for (std::size_t k = 0; k + 1 < cache->pre_activations.size(); ++k) {
      const auto& z = cache->pre_activations[k];
      for (Eigen::Index i = 0; i < z.size(); ++i) out.push_back(z(i) > 0.0);
    }
  return out;
}

}  // namespace

double gradient_check(const CvaeModel& model, const CvaeBatch& batch, double epsilon) {
  CvaeGradients grads;
  elbo_with_gradients(model, batch, grads);
  std::vector<double> analytic = nn::flatten(grads.encoder);
  const auto dec_analytic = nn::flatten(grads.decoder);
  analytic.insert(analytic.end(), dec_analytic.begin(), dec_analytic.end());
  const auto pattern = relu_pattern(run(model, batch));

  CvaeModel probe = model;
  std::vector<double> numeric;
  numeric.reserve(analytic.size());
  auto sweep = [&](nn::Network& net) {
    auto params = nn::flatten(net);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      double estimate = 0.0;
      // A step that moves some unit across its kink measures the secant of a
      // piecewise function; shrink it and retry.
      for (double h = epsilon, tries = 0; tries < 3; h /= 10.0, ++tries) {
        params[i] = saved + h;
        nn::unflatten(net, params);
        const Pass up = run(probe, batch);
        params[i] = saved - h;
        nn::unflatten(net, params);
        const Pass down = run(probe, batch);
        estimate = (up.terms.total - down.terms.total) / (2.0 * h);
        if (relu_pattern(up) == pattern && relu_pattern(down) == pattern) break;
      }
      params[i] = saved;
      numeric.push_back(estimate);
    }
    nn::unflatten(net, params);
  };
  sweep(probe.encoder);
  sweep(probe.decoder);
  return nn::max_relative_error(analytic, numeric);
}

namespace {

void check_raw(const Dataset& raw) {
  if (raw.size() < 10)
    throw Error("invalid_argument", fmt::format("CVAE training needs at least 10 samples, got {}", raw.size()));
}

}  // namespace

void train_epochs(CvaeModel& model, const Dataset& raw, int epochs, std::uint64_t seed) {
  check_raw(raw);
  const std::size_t n = raw.size();
  const std::size_t batch_size =
      model.config.batch_size <= 0 ? n : std::min<std::size_t>(n, static_cast<std::size_t>(model.config.batch_size));
  nn::Adam enc_opt(model.encoder, model.config.learning_rate);
  nn::Adam dec_opt(model.decoder, model.config.learning_rate);
  const CvaeBatch all = make_batch(model, raw, seed);
  Rng rng = Rng::derive(seed, 1);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const auto L = model.config.latent_dim;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    if (batch_size < n) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    }
    ElboTerms sum;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t count = std::min(batch_size, n - start);
      CvaeBatch b{Matrix(all.features.rows(), static_cast<Eigen::Index>(count)),
                  Matrix(1, static_cast<Eigen::Index>(count)), Matrix(L, static_cast<Eigen::Index>(count))};
      for (std::size_t k = 0; k < count; ++k) {
        const auto src = static_cast<Eigen::Index>(order[start + k]);
        const auto dst = static_cast<Eigen::Index>(k);
        b.features.col(dst) = all.features.col(src);
        b.conditions(0, dst) = all.conditions(0, src);
        for (Eigen::Index l = 0; l < L; ++l) b.noise(l, dst) = rng.normal();
      }
      CvaeGradients grads;
      const ElboTerms t = elbo_with_gradients(model, b, grads);
      if (!std::isfinite(t.total))
        throw Error("numeric", fmt::format("CVAE loss became non-finite at epoch {}", model.trace.size()));
      const double w = static_cast<double>(count) / static_cast<double>(n);
      sum.total += w * t.total;
      sum.reconstruction += w * t.reconstruction;
      sum.kl += w * t.kl;
      enc_opt.step(model.encoder, grads.encoder);
      dec_opt.step(model.decoder, grads.decoder);
    }
    model.trace.push_back(sum);
  }
}

CvaeModel train_cvae(const Dataset& raw, const CvaeConfig& config) {
  check_raw(raw);
  validate_dataset(raw);
  CvaeModel model = init_cvae(raw.schema, config);
  model.feature_scaler = fit_scaler(raw);
  const auto scores = raw.scores();
  double m = 0.0;
  for (double s : scores) m += s;
  m /= static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - m) * (s - m);
  model.score_scaler = {m, std::sqrt(ss / static_cast<double>(scores.size()))};
  if (model.score_scaler.sd == 0.0) model.score_scaler.sd = 1.0;
  train_epochs(model, raw, config.epochs, config.seed);
  return model;
}

SyntheticBatch generate_samples(const CvaeModel& model, int n, double lo, double hi, std::uint64_t seed) {
  if (n < 1) throw Error("invalid_argument", "number of generated samples must be at least 1");
  if (!(lo < hi) || lo < kMinScore || hi > kMaxScore)
    throw Error("invalid_argument", fmt::format("invalid score range [{}, {}] (need lo < hi within [1, 8])", lo, hi));
  const Eigen::Index L = model.config.latent_dim;
  SyntheticBatch out;
  out.seed = seed;
  Matrix input(L + 1, n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
    const double score = rng.uniform(lo, hi);
    out.scores.push_back(score);
    for (Eigen::Index l = 0; l < L; ++l) input(l, i) = rng.normal();
    input(L, i) = model.score_scaler.apply(score);
  }
  const Matrix decoded = nn::predict(model.decoder, input);
  out.features.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> z(decoded.col(i).data(), decoded.col(i).data() + decoded.rows());
    out.features.push_back(model.feature_scaler.inverse(z));
  }
  return out;
}

Dataset augment_dataset(const Dataset& raw, const CvaeModel& model, int target_total, std::uint64_t seed) {
  if (target_total <= static_cast<int>(raw.size()))
    throw Error("invalid_argument",
                fmt::format("target total {} must exceed the raw dataset size {}", target_total, raw.size()));
  if (raw.schema.size() != model.feature_scaler.size())
    throw Error("schema", "CVAE model and dataset have different feature counts");
  const auto scores = raw.scores();
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const int n_new = target_total - static_cast<int>(raw.size());
  const SyntheticBatch batch = generate_samples(model, n_new, *lo, *hi, seed);

  Dataset out = raw;
  out.provenance = Provenance::Augmented;
  for (int i = 0; i < n_new; ++i) {
    out.samples.push_back({fmt::format("syn-{:04d}", i + 1), batch.features[static_cast<std::size_t>(i)],
                           batch.scores[static_cast<std::size_t>(i)]});
  }
  validate_dataset(out);
  return out;
}

json cvae_to_json(const CvaeModel& m) {
  json trace = json::array();
  for (const auto& t : m.trace) trace.push_back({t.total, t.reconstruction, t.kl});
  return {{"kind", "cvae"},
          {"dimension", std::string(to_string(m.dimension))},
          {"schema", schema_to_json(m.feature_scaler.schema)},
          {"config", cvae_config_to_json(m.config)},
          {"encoder", nn::network_to_json(m.encoder)},
          {"decoder", nn::network_to_json(m.decoder)},
          {"feature_scaler", scaler_to_json(m.feature_scaler)},
          {"score_scaler", {{"mean", m.score_scaler.mean}, {"sd", m.score_scaler.sd}}},
          {"trace_columns", {"total", "reconstruction", "kl"}},
          {"trace", trace}};
}

CvaeModel cvae_from_json(const json& j) {
  try {
    CvaeModel m;
    m.dimension = parse_dimension(j.at("dimension").get<std::string>());
    const FeatureSchema schema = schema_from_json(j.at("schema"));
    m.config = cvae_config_from_json(j.at("config"));
    m.encoder = nn::network_from_json(j.at("encoder"));
    m.decoder = nn::network_from_json(j.at("decoder"));
    m.feature_scaler = scaler_from_json(j.at("feature_scaler"), schema);
    m.score_scaler = {j.at("score_scaler").at("mean").get<double>(), j.at("score_scaler").at("sd").get<double>()};
    for (const auto& t : j.at("trace")) m.trace.push_back({t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error("parse", fmt::format("malformed CVAE model JSON: {}", e.what()));
  }
}

}  // namespace iqa::augment
