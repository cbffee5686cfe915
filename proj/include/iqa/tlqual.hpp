#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace iqa::tlqual {

/// Grammatical error codes: redundant word, missing word, word selection,
/// word order.
enum class ErrorType { R, M, S, W };

struct ErrorEntry {
  long sentence_id = 0;
  long start_index = 0;
  long end_index = 0;
  ErrorType error_type = ErrorType::R;
  std::string corrected_text;
  double confidence = 0.0;

  bool operator==(const ErrorEntry&) const = default;
};

/// Parses `[sentence_id, start_index, end_index, error_type, corrected_text,
/// confidence]` lines. Lines that are blank or do not start with `[` are
/// ignored. corrected_text may be wrapped in ASCII double quotes, curly
/// quotes or TeX-style ``...'' quotes and must be quoted to contain commas.
std::vector<ErrorEntry> parse_error_annotations(std::string_view text);

/// Inverse of the parser (one entry per line).
std::string format_error_annotations(const std::vector<ErrorEntry>& entries);
std::string format_error_entry(const ErrorEntry& entry);

struct ErrorCounts {
  int NRW = 0;
  int NMW = 0;
  int NWSE = 0;
  int NWOE = 0;

  bool operator==(const ErrorCounts&) const = default;
};

ErrorCounts error_counts(const std::vector<ErrorEntry>& entries, double min_confidence = 0.0);

/// Clause word counts grouped into T-units, grouped into sentences.
struct SegmentationAnnotation {
  std::string sample_id;
  long total_word_tokens = 0;
  std::vector<std::vector<std::vector<long>>> sentences;
};

void validate_segmentation(const SegmentationAnnotation& seg);
SegmentationAnnotation segmentation_from_json(const nlohmann::json& j);
nlohmann::json segmentation_to_json(const SegmentationAnnotation& seg);

inline constexpr std::array<const char*, 8> kCategories = {"VO", "SP", "AN", "AP", "CN", "PP", "PV", "PC"};

struct CollocationAnnotation {
  std::string sample_id;
  std::array<std::vector<std::string>, 8> occurrences;  // indexed like kCategories
};

CollocationAnnotation collocation_from_json(const nlohmann::json& j);
nlohmann::json collocation_to_json(const CollocationAnnotation& coll);

struct CoarseMetrics {
  double MLS = 0.0;
  double MLTU = 0.0;
  double NTPS = 0.0;
  double MLC = 0.0;
  double NCPS = 0.0;
};

CoarseMetrics coarse_grained_metrics(const SegmentationAnnotation& seg);

struct CategoryMetrics {
  double rttr = 0.0;
  double ratio = 0.0;
};

struct CollocationMetrics {
  std::array<CategoryMetrics, 8> categories;
  double total_rttr = 0.0;
};

/// RTTR = distinct types / sqrt(tokens); RATIO = category tokens per word
/// token. Empty categories give 0 for both.
CollocationMetrics collocation_metrics(const CollocationAnnotation& coll, long total_word_tokens);

struct TlqualOptions {
  double min_confidence = 0.0;
  bool include_total_rttr = false;
};

/// Feature vector in TLQual schema order (25 values, 26 with TOTAL_RTTR).
std::vector<double> build_tlqual_features(const SegmentationAnnotation& seg, const CollocationAnnotation& coll,
                                          const std::vector<ErrorEntry>& entries, std::string_view errors_sample_id,
                                          const TlqualOptions& options = {});

/// JSON-lines loaders keyed by sample_id.
std::vector<SegmentationAnnotation> load_segmentations(const std::filesystem::path& path);
std::vector<CollocationAnnotation> load_collocations(const std::filesystem::path& path);

}  // namespace iqa::tlqual
