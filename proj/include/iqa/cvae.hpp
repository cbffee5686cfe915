#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iqa/dataset.hpp"
#include "iqa/nn.hpp"
#include "iqa/scaler.hpp"

namespace iqa::augment {

struct CvaeConfig {
  int latent_dim = 8;
  std::vector<int> encoder_hidden = {32};
  std::vector<int> decoder_hidden = {32};
  double learning_rate = 1e-3;
  int epochs = 2000;
  int batch_size = 0;  // 0 = full batch
  double kl_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const CvaeConfig&) const = default;
};

nlohmann::json cvae_config_to_json(const CvaeConfig& c);
CvaeConfig cvae_config_from_json(const nlohmann::json& j);

struct ElboTerms {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

/// Conditional VAE over standardized feature vectors. The condition is the
/// standardized score, appended to both the encoder input and the latent
/// code. The encoder emits (mu, log sigma^2) stacked as 2 * latent_dim rows.
struct CvaeModel {
  Dimension dimension = Dimension::InfoCom;
  CvaeConfig config;
  nn::Network encoder;
  nn::Network decoder;
  Scaler feature_scaler;
  ScalarScaler score_scaler;
  std::vector<ElboTerms> trace;  // one entry per training epoch

  int features() const { return static_cast<int>(decoder.outputs()); }
};

/// Fresh, untrained model for `schema` (shapes from `config`, seeded init).
CvaeModel init_cvae(const FeatureSchema& schema, const CvaeConfig& config);

/// A standardized batch: features (p x B), conditions (1 x B) and the
/// reparameterization noise (latent x B) held fixed for the evaluation.
struct CvaeBatch {
  nn::Matrix features;
  nn::Matrix conditions;
  nn::Matrix noise;
};

/// Standardizes `dataset` with the model's scalers; noise drawn from `seed`.
CvaeBatch make_batch(const CvaeModel& model, const Dataset& dataset, std::uint64_t seed);

/// reconstruction = batch mean of the summed squared error; kl = batch mean
/// of 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1); total = reconstruction +
/// kl_weight * kl.
ElboTerms elbo(const CvaeModel& model, const CvaeBatch& batch);

struct CvaeGradients {
  nn::Gradients encoder;
  nn::Gradients decoder;
};

ElboTerms elbo_with_gradients(const CvaeModel& model, const CvaeBatch& batch, CvaeGradients& grads);

/// Central-difference check of d total / d every parameter; returns the
/// largest relative error. A step that flips any hidden unit is retried at
/// epsilon / 10 and epsilon / 100.
double gradient_check(const CvaeModel& model, const CvaeBatch& batch, double epsilon = 1e-5);

/// Trains on `raw` (one dimension, >= 10 samples) with Adam.
CvaeModel train_cvae(const Dataset& raw, const CvaeConfig& config);

/// Continues training an existing model for `epochs` more epochs.
void train_epochs(CvaeModel& model, const Dataset& raw, int epochs, std::uint64_t seed);

struct SyntheticBatch {
  std::vector<std::vector<double>> features;
  std::vector<double> scores;
  std::uint64_t seed = 0;
};

/// Sample i draws its score uniformly from [lo, hi] and z ~ N(0, I) from
/// the stream (seed, i), so output does not depend on evaluation order.
SyntheticBatch generate_samples(const CvaeModel& model, int n, double lo, double hi, std::uint64_t seed);

/// Appends target_total - |raw| synthetic rows (ids `syn-0001`, ...) with
/// scores uniform over the observed raw range.
Dataset augment_dataset(const Dataset& raw, const CvaeModel& model, int target_total, std::uint64_t seed);

nlohmann::json cvae_to_json(const CvaeModel& model);
CvaeModel cvae_from_json(const nlohmann::json& j);

}  // namespace iqa::augment
