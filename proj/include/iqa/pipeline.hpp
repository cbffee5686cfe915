#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iqa/cvae.hpp"
#include "iqa/dataset.hpp"
#include "iqa/models.hpp"
#include "iqa/scaler.hpp"

namespace iqa::pipeline {

struct SyntheticInput {
  int n = 117;
  std::uint64_t seed = 0;

  bool operator==(const SyntheticInput&) const = default;
};

/// Exactly one source: a feature CSV, the synthetic generator, or the
/// extraction inputs of the configured dimension plus a score file.
struct InputConfig {
  std::optional<std::string> dataset;
  std::optional<SyntheticInput> synthetic;
  std::optional<std::string> scores;
  // FluDel
  std::optional<std::string> transcripts;
  std::optional<std::string> audio_dir;  // recompute silences from <id>.wav when set
  // InfoCom
  std::optional<std::string> segments;
  std::optional<std::string> neural_metrics;
  // TLQual
  std::optional<std::string> segmentations;
  std::optional<std::string> collocations;
  std::optional<std::string> errors_dir;
  double min_confidence = 0.0;
  bool include_total_rttr = false;

  bool operator==(const InputConfig&) const = default;
};

struct AugmentConfig {
  bool enabled = true;
  int target_total = 500;
  std::uint64_t seed = 0;
  augment::CvaeConfig cvae;

  bool operator==(const AugmentConfig&) const = default;
};

struct ModelConfig {
  models::ModelKind kind = models::ModelKind::Gbt;
  std::optional<std::vector<models::ModelParams>> grid;  // default grid when absent
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

struct EvaluationConfig {
  double test_fraction = 0.2;
  std::size_t k = 5;

  bool operator==(const EvaluationConfig&) const = default;
};

struct ExplanationConfig {
  bool enabled = true;
  std::size_t bootstrap = 1000;
  std::size_t background_cap = 500;
  std::size_t n_permutations = 2000;
  std::uint64_t seed = 0;
  std::vector<std::string> local_samples;  // first test sample when empty

  bool operator==(const ExplanationConfig&) const = default;
};

struct PipelineConfig {
  Dimension dimension = Dimension::FluDel;
  InputConfig inputs;
  AugmentConfig augmentation;
  ModelConfig model;
  EvaluationConfig evaluation;
  ExplanationConfig explanation;
  ScalerMode scaler_mode = ScalerMode::TrainOnly;
  bool plots = true;
  std::string output_dir = "out";

  bool operator==(const PipelineConfig&) const = default;
};

/// Seeds must be given explicitly for every enabled randomized block.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);
/// Relative paths inside the file resolve against the file's directory.
PipelineConfig load_config(const std::filesystem::path& path);

void validate_config(const PipelineConfig& c);

struct FileDigest {
  std::string path;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct StageRecord {
  std::string name;
  bool skipped = false;
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  double wall_clock_s = 0.0;
};

struct RunManifest {
  std::string tool_version;
  std::string config_digest;
  std::string provenance;
  std::vector<StageRecord> stages;

  /// Every output across stages, in write order.
  std::vector<FileDigest> artifacts() const;
};

nlohmann::json manifest_to_json(const RunManifest& m);

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kLockName = ".iqa.lock";

/// Runs extract, augment, train, evaluate, explain and plot in order inside
/// `config.output_dir`, then writes manifest.json. On failure every file
/// written by this run is removed and the error names the stage.
RunManifest run_pipeline(const PipelineConfig& config);

const char* tool_version();

}  // namespace iqa::pipeline
