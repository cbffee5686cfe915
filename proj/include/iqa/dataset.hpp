#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace iqa {

/// The three rubric dimensions scored on the eight-point scale.
enum class Dimension { InfoCom, FluDel, TLQual };

std::string_view to_string(Dimension d);
Dimension parse_dimension(std::string_view name);

inline constexpr double kMinScore = 1.0;
inline constexpr double kMaxScore = 8.0;

struct FeatureSpec {
  std::string name;
  std::string description;

  bool operator==(const FeatureSpec&) const = default;
};

struct FeatureSchema {
  Dimension dimension = Dimension::InfoCom;
  /// "InfoCom", "FluDel", "TLQual", or "TLQual+TOTAL_RTTR".
  std::string name;
  std::vector<FeatureSpec> features;

  std::size_t size() const { return features.size(); }
  std::vector<std::string> names() const;
  std::optional<std::size_t> index_of(std::string_view feature) const;
  /// Hex SHA-256 of the canonical JSON form; stored in model files.
  std::string digest() const;

  bool operator==(const FeatureSchema&) const = default;
};

struct SchemaOptions {
  bool include_total_rttr = false;
};

/// Built-in schemas: InfoCom has 5 features, FluDel 14, TLQual 25 (26 with
/// TOTAL_RTTR enabled). Order is canonical.
FeatureSchema builtin_schema(Dimension d, SchemaOptions options = {});

nlohmann::json schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const nlohmann::json& j);
/// Throws if names repeat or are empty.
void validate_schema(const FeatureSchema& schema);

struct Sample {
  std::string id;
  std::vector<double> features;
  double score = 0.0;

  bool operator==(const Sample&) const = default;
};

enum class Provenance { Raw, Synthetic, Augmented };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view name);

struct Dataset {
  FeatureSchema schema;
  std::vector<Sample> samples;
  Provenance provenance = Provenance::Raw;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::vector<double> scores() const;
  std::vector<double> column(std::size_t feature) const;
};

/// Checks id uniqueness, vector lengths, finiteness, and the score range.
void validate_dataset(const Dataset& dataset);

/// CSV wire format: `sample_id,<features in schema order>,score`.
Dataset load_dataset(const std::filesystem::path& path, const FeatureSchema& schema);
Dataset parse_dataset_csv(std::string_view text, const FeatureSchema& schema,
                          std::string_view source = "<memory>");
std::string dataset_to_csv(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Reads `sample_id,score` files used to attach calibrated scores to
/// extracted features.
std::vector<std::pair<std::string, double>> load_scores(const std::filesystem::path& path);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double value);

}  // namespace iqa
