#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "iqa/dataset.hpp"

namespace iqa::fidelity {

struct SegmentPair {
  std::string sample_id;
  std::string hypothesis;
  std::string reference;
};

struct ChrfParams {
  int max_n = 6;
  double beta = 2.0;
};

/// Character n-gram F-score on Unicode code points with all whitespace
/// removed. Orders where neither string has an n-gram are skipped; the
/// score is 0 when precision and recall are both 0.
double chrf(std::string_view hypothesis, std::string_view reference, const ChrfParams& params = {});

/// UTF-8 to code points, dropping whitespace (ASCII, NBSP, ideographic space
/// and the other Unicode space separators). Invalid bytes raise an error.
std::u32string strip_whitespace_utf32(std::string_view utf8);

struct NeuralScores {
  double bleurt20 = 0.0;
  double bertscore = 0.0;
  double cometkiwi = 0.0;
  double xcomet = 0.0;

  bool operator==(const NeuralScores&) const = default;
};

using NeuralMetricMap = std::map<std::string, NeuralScores>;

/// CSV with header `sample_id,bleurt20,bertscore,cometkiwi,xcomet` (any
/// column order). An empty data section yields an empty map and a warning.
NeuralMetricMap ingest_neural_metrics(const std::filesystem::path& path);
NeuralMetricMap parse_neural_metrics(std::string_view csv_text, std::string_view source = "<memory>");

/// One JSON object per line: {"sample_id", "hypothesis", "reference"}.
std::vector<SegmentPair> load_segment_pairs(const std::filesystem::path& path);
std::vector<SegmentPair> parse_segment_pairs(std::string_view jsonl, std::string_view source = "<memory>");

struct FidelityRow {
  std::string sample_id;
  std::array<double, 5> features{};  // chrF, BLEURT20, BERTScore, CometKiwi, xCOMET
};

std::vector<FidelityRow> build_fidelity_features(const std::vector<SegmentPair>& pairs,
                                                 const NeuralMetricMap& neural,
                                                 const ChrfParams& params = {});

}  // namespace iqa::fidelity
