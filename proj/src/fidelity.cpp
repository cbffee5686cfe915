#include "iqa/fidelity.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "iqa/error.hpp"
#include "iqa/io.hpp"
#include "iqa/log.hpp"

namespace iqa::fidelity {
namespace {

bool is_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000: case 0xFEFF:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200B;
  }
}

struct U32Hash {
  std::size_t operator()(const std::u32string& s) const noexcept {
    std::size_t h = 1469598103934665603ULL;
    for (char32_t c : s) {
      h ^= static_cast<std::size_t>(c);
      h *= 1099511628211ULL;
    }
    return h;
  }
};

using NgramCounts = std::unordered_map<std::u32string, int, U32Hash>;

NgramCounts count_ngrams(const std::u32string& s, std::size_t n) {
  NgramCounts counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[s.substr(i, n)];
  return counts;
}

}  // namespace

std::u32string strip_whitespace_utf32(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  for (std::size_t i = 0; i < utf8.size();) {
    const auto b0 = static_cast<unsigned char>(utf8[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) { cp = b0; len = 1; }
    else if ((b0 & 0xE0) == 0xC0) { cp = b0 & 0x1F; len = 2; }
    else if ((b0 & 0xF0) == 0xE0) { cp = b0 & 0x0F; len = 3; }
    else if ((b0 & 0xF8) == 0xF0) { cp = b0 & 0x07; len = 4; }
    else throw Error("parse", fmt::format("invalid UTF-8 lead byte at offset {}", i));
    if (i + len > utf8.size()) throw Error("parse", "truncated UTF-8 sequence");
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(utf8[i + k]);
      if ((b & 0xC0) != 0x80) throw Error("parse", fmt::format("invalid UTF-8 continuation at offset {}", i + k));
      cp = (cp << 6) | (b & 0x3F);
    }
    i += len;
    if (!is_space(cp)) out.push_back(cp);
  }
  return out;
}

double chrf(std::string_view hypothesis, std::string_view reference, const ChrfParams& params) {
  if (params.max_n < 1) throw Error("invalid_argument", "chrF max_n must be at least 1");
  if (!(params.beta > 0.0)) throw Error("invalid_argument", "chrF beta must be positive");
  const std::u32string hyp = strip_whitespace_utf32(hypothesis);
  const std::u32string ref = strip_whitespace_utf32(reference);
  if (ref.empty()) throw Error("invalid_argument", "chrF reference must be non-empty");

  double precision_sum = 0.0, recall_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= params.max_n; ++n) {
    const auto un = static_cast<std::size_t>(n);
    const std::size_t hyp_total = hyp.size() >= un ? hyp.size() - un + 1 : 0;
    const std::size_t ref_total = ref.size() >= un ? ref.size() - un + 1 : 0;
    if (hyp_total == 0 && ref_total == 0) continue;
    const auto hc = count_ngrams(hyp, un);
    const auto rc = count_ngrams(ref, un);
    double matches = 0.0;
    for (const auto& [gram, count] : hc) {
      auto it = rc.find(gram);
      if (it != rc.end()) matches += std::min(count, it->second);
    }
    precision_sum += hyp_total ? matches / static_cast<double>(hyp_total) : 0.0;
    recall_sum += ref_total ? matches / static_cast<double>(ref_total) : 0.0;
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double p = precision_sum / orders;
  const double r = recall_sum / orders;
  const double b2 = params.beta * params.beta;
  const double denom = b2 * p + r;
  if (denom == 0.0) return 0.0;
  return std::clamp((1.0 + b2) * p * r / denom, 0.0, 1.0);
}

NeuralMetricMap parse_neural_metrics(std::string_view csv_text, std::string_view source) {
  const auto rows = detail::parse_csv(csv_text);
  if (rows.empty()) throw Error("parse", fmt::format("{}: empty neural metric file", source));
  static const char* const kColumns[] = {"sample_id", "bleurt20", "bertscore", "cometkiwi", "xcomet"};
  std::array<std::size_t, 5> pos{};
  const auto& header = rows.front().cells;
  for (std::size_t c = 0; c < 5; ++c) {
    auto it = std::find_if(header.begin(), header.end(),
                           [&](const std::string& h) { return detail::trim(h) == kColumns[c]; });
    if (it == header.end())
      throw Error("schema", fmt::format("{}: neural metric file is missing column '{}'", source, kColumns[c]));
    pos[c] = static_cast<std::size_t>(it - header.begin());
  }
  NeuralMetricMap out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.cells.size() != header.size())
      throw Error("parse", fmt::format("{}: line {} has {} cells, expected {}", source, row.line, row.cells.size(),
                                       header.size()));
    std::array<double, 4> v{};
    for (std::size_t c = 1; c < 5; ++c) {
      if (!detail::parse_double(row.cells[pos[c]], v[c - 1]) || !std::isfinite(v[c - 1]))
        throw Error("parse", fmt::format("{}: non-numeric value '{}' at line {}, column '{}'", source,
                                         row.cells[pos[c]], row.line, kColumns[c]));
    }
    std::string id(detail::trim(row.cells[pos[0]]));
    if (!out.emplace(id, NeuralScores{v[0], v[1], v[2], v[3]}).second)
      throw Error("duplicate", fmt::format("{}: duplicate sample_id '{}' at line {}", source, id, row.line));
  }
  if (out.empty()) warn(fmt::format("{}: neural metric file has no data rows", source));
  return out;
}

NeuralMetricMap ingest_neural_metrics(const std::filesystem::path& path) {
  return parse_neural_metrics(read_text_file(path), path.string());
}

std::vector<SegmentPair> parse_segment_pairs(std::string_view jsonl, std::string_view source) {
  std::vector<SegmentPair> out;
  std::size_t line_no = 0;
  while (!jsonl.empty()) {
    const auto nl = jsonl.find('\n');
    const std::string_view line = detail::trim(jsonl.substr(0, nl));
    jsonl = nl == std::string_view::npos ? std::string_view{} : jsonl.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("sample_id").get<std::string>(), j.at("hypothesis").get<std::string>(),
                     j.at("reference").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error("parse", fmt::format("{}: line {}: {}", source, line_no, e.what()));
    }
  }
  return out;
}

std::vector<SegmentPair> load_segment_pairs(const std::filesystem::path& path) {
  return parse_segment_pairs(read_text_file(path), path.string());
}

std::vector<FidelityRow> build_fidelity_features(const std::vector<SegmentPair>& pairs,
                                                 const NeuralMetricMap& neural, const ChrfParams& params) {
  std::vector<std::string> missing;
  for (const auto& p : pairs) {
    if (!neural.contains(p.sample_id)) missing.push_back(p.sample_id);
  }
  if (!missing.empty())
    throw Error("missing", fmt::format("neural metrics missing for sample ids: {}", fmt::join(missing, ", ")));
  std::vector<FidelityRow> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto& n = neural.at(p.sample_id);
    rows.push_back({p.sample_id, {chrf(p.hypothesis, p.reference, params), n.bleurt20, n.bertscore, n.cometkiwi, n.xcomet}});
  }
  return rows;
}

}  // namespace iqa::fidelity
