#include "iqa/dataset.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "iqa/error.hpp"
#include "iqa/io.hpp"

namespace iqa {

using nlohmann::json;

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::InfoCom: return "InfoCom";
    case Dimension::FluDel: return "FluDel";
    case Dimension::TLQual: return "TLQual";
  }
  return "?";
}

Dimension parse_dimension(std::string_view name) {
  if (name == "InfoCom" || name == "infocom") return Dimension::InfoCom;
  if (name == "FluDel" || name == "fludel") return Dimension::FluDel;
  if (name == "TLQual" || name == "tlqual") return Dimension::TLQual;
  throw Error("invalid_argument", fmt::format("unknown dimension '{}' (expected InfoCom, FluDel or TLQual)", name));
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Raw: return "raw";
    case Provenance::Synthetic: return "synthetic";
    case Provenance::Augmented: return "augmented";
  }
  return "?";
}

Provenance parse_provenance(std::string_view name) {
  if (name == "raw") return Provenance::Raw;
  if (name == "synthetic") return Provenance::Synthetic;
  if (name == "augmented") return Provenance::Augmented;
  throw Error("invalid_argument", fmt::format("unknown provenance '{}'", name));
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view feature) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == feature) return i;
  }
  return std::nullopt;
}

std::string FeatureSchema::digest() const { return sha256_hex(schema_to_json(*this).dump()); }

namespace {

FeatureSchema make_schema(Dimension d, std::string name,
                          std::initializer_list<std::pair<const char*, const char*>> items) {
  FeatureSchema s;
  s.dimension = d;
  s.name = std::move(name);
  for (const auto& [n, desc] : items) s.features.push_back({n, desc});
  return s;
}

const char* const kCollocationCategories[] = {"VO", "SP", "AN", "AP", "CN", "PP", "PV", "PC"};
const char* const kCollocationNames[] = {
    "Verb-Object",  "Subject-Predicate",        "Adjective-Noun",  "Adverb-Preposition",
    "Classifier-Noun", "Preposition-Postposition", "Preposition-Verb", "Predicate-Complement"};

}  // namespace

FeatureSchema builtin_schema(Dimension d, SchemaOptions options) {
  switch (d) {
    case Dimension::InfoCom:
      return make_schema(d, "InfoCom",
                         {{"chrF", "Character n-gram F-score against the reference"},
                          {"BLEURT20", "BLEURT-20 score (external scorer)"},
                          {"BERTScore", "BERTScore F1 (external scorer)"},
                          {"CometKiwi", "CometKiwi-da reference-free score (external scorer)"},
                          {"xCOMET", "xCOMET-XL score (external scorer)"}});
    case Dimension::FluDel:
      return make_schema(d, "FluDel",
                         {{"SR", "Speech rate: syllables uttered per second"},
                          {"AR", "Articulation rate: pruned syllables per second of articulation"},
                          {"PTR", "Phonation time ratio"},
                          {"MLS", "Mean length of syllables (seconds)"},
                          {"MLR", "Mean length of run (syllables)"},
                          {"PSC", "Pruned syllable count"},
                          {"NFP", "Number of filled pauses"},
                          {"NUP", "Number of unfilled pauses (>= 0.35 s)"},
                          {"MLFP", "Mean length of filled pauses (seconds)"},
                          {"MLUP", "Mean length of unfilled pauses (seconds)"},
                          {"NRLFP", "Relatively long filled pauses (Q3+1.5IQR, Q3+3IQR]"},
                          {"NRLUP", "Relatively long unfilled pauses (Q3+1.5IQR, Q3+3IQR]"},
                          {"NRSA", "Relatively slow syllables (Q3+1.5IQR, Q3+3IQR]"},
                          {"NPSA", "Particularly slow syllables (> Q3+3IQR)"}});
    case Dimension::TLQual: {
      FeatureSchema s = make_schema(d, "TLQual",
                                    {{"NRW", "Number of redundant words"},
                                     {"NMW", "Number of missing words"},
                                     {"NWSE", "Number of word selection errors"},
                                     {"NWOE", "Number of word order errors"},
                                     {"MLS", "Mean length of sentences (words)"},
                                     {"MLTU", "Mean length of T-units (words)"},
                                     {"NTPS", "T-units per sentence"},
                                     {"MLC", "Mean length of clauses (words)"},
                                     {"NCPS", "Clauses per sentence"}});
      for (std::size_t c = 0; c < 8; ++c) {
        const std::string cat = kCollocationCategories[c];
        s.features.push_back({cat + "_RTTR", std::string(kCollocationNames[c]) + " root type-token ratio"});
        s.features.push_back({cat + "_RATIO", std::string(kCollocationNames[c]) + " combinations per word token"});
      }
      if (options.include_total_rttr) {
        s.name = "TLQual+TOTAL_RTTR";
        s.features.push_back({"TOTAL_RTTR", "Root type-token ratio over all collocation categories"});
      }
      return s;
    }
  }
  throw Error("invalid_argument", "unknown dimension");
}

json schema_to_json(const FeatureSchema& schema) {
  json features = json::array();
  for (const auto& f : schema.features) features.push_back({{"name", f.name}, {"description", f.description}});
  json j = {{"dimension", std::string(to_string(schema.dimension))}, {"features", features}};
  if (!schema.name.empty() && schema.name != to_string(schema.dimension)) j["name"] = schema.name;
  return j;
}

FeatureSchema schema_from_json(const json& j) {
  try {
    FeatureSchema s;
    s.dimension = parse_dimension(j.at("dimension").get<std::string>());
    s.name = j.contains("name") ? j.at("name").get<std::string>() : std::string(to_string(s.dimension));
    for (const auto& f : j.at("features")) {
      s.features.push_back({f.at("name").get<std::string>(), f.value("description", std::string())});
    }
    validate_schema(s);
    return s;
  } catch (const json::exception& e) {
    throw Error("parse", fmt::format("malformed feature schema JSON: {}", e.what()));
  }
}

void validate_schema(const FeatureSchema& schema) {
  std::set<std::string> seen;
  for (const auto& f : schema.features) {
    if (f.name.empty()) throw Error("schema", "feature schema contains an empty feature name");
    if (f.name == "sample_id" || f.name == "score")
      throw Error("schema", fmt::format("feature name '{}' is reserved", f.name));
    if (!seen.insert(f.name).second)
      throw Error("schema", fmt::format("duplicate feature name '{}' in schema", f.name));
  }
}

std::vector<double> Dataset::scores() const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.score);
  return out;
}

std::vector<double> Dataset::column(std::size_t feature) const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.features.at(feature));
  return out;
}

void validate_dataset(const Dataset& dataset) {
  std::unordered_set<std::string> ids;
  for (const auto& s : dataset.samples) {
    if (s.id.empty()) throw Error("parse", "empty sample_id");
    if (!ids.insert(s.id).second) throw Error("duplicate", fmt::format("duplicate sample_id '{}'", s.id));
    if (s.features.size() != dataset.schema.size())
      throw Error("schema", fmt::format("sample '{}' has {} features, schema '{}' expects {}", s.id,
                                        s.features.size(), dataset.schema.name, dataset.schema.size()));
    for (std::size_t i = 0; i < s.features.size(); ++i) {
      if (!std::isfinite(s.features[i]))
        throw Error("numeric", fmt::format("sample '{}' feature '{}' is not finite", s.id,
                                           dataset.schema.features[i].name));
    }
    if (!std::isfinite(s.score) || s.score < kMinScore || s.score > kMaxScore)
      throw Error("range", fmt::format("sample '{}' score {} outside [1, 8]", s.id, s.score));
  }
}

Dataset parse_dataset_csv(std::string_view text, const FeatureSchema& schema, std::string_view source) {
  const auto rows = detail::parse_csv(text);
  if (rows.empty()) throw Error("parse", fmt::format("{}: empty dataset file (no header row)", source));

  std::vector<std::string> expected;
  expected.push_back("sample_id");
  for (const auto& f : schema.features) expected.push_back(f.name);
  expected.push_back("score");

  std::vector<std::string> header;
  for (const auto& c : rows.front().cells) header.emplace_back(detail::trim(c));
  if (header != expected) {
    std::string detail_msg;
    for (std::size_t i = 0; i < std::max(header.size(), expected.size()); ++i) {
      const std::string got = i < header.size() ? header[i] : "<missing>";
      const std::string want = i < expected.size() ? expected[i] : "<none>";
      if (got != want) {
        detail_msg = fmt::format("column {}: found '{}', schema expects '{}'", i + 1, got, want);
        break;
      }
    }
    throw Error("schema", fmt::format("{}: header does not match schema '{}' ({}); header = [{}], expected = [{}]",
                                      source, schema.name, detail_msg, fmt::join(header, ","),
                                      fmt::join(expected, ",")));
  }

  Dataset ds;
  ds.schema = schema;
  std::unordered_set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.cells.size() != expected.size())
      throw Error("parse", fmt::format("{}: row at line {} has {} cells, expected {}", source, row.line,
                                       row.cells.size(), expected.size()));
    Sample s;
    s.id = std::string(detail::trim(row.cells[0]));
    if (s.id.empty()) throw Error("parse", fmt::format("{}: empty sample_id at line {}", source, row.line));
    if (!ids.insert(s.id).second)
      throw Error("duplicate", fmt::format("{}: duplicate sample_id '{}' at line {}", source, s.id, row.line));
    s.features.resize(schema.size());
    for (std::size_t c = 1; c < row.cells.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_double(row.cells[c], v) || !std::isfinite(v))
        throw Error("parse", fmt::format("{}: non-numeric value '{}' at line {}, column '{}'", source,
                                         row.cells[c], row.line, expected[c]));
      if (c + 1 == row.cells.size()) s.score = v;
      else s.features[c - 1] = v;
    }
    if (s.score < kMinScore || s.score > kMaxScore)
      throw Error("range", fmt::format("{}: score {} at line {} (sample '{}') outside [1, 8]", source,
                                       row.cells.back(), row.line, s.id));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const FeatureSchema& schema) {
  return parse_dataset_csv(read_text_file(path), schema, path.string());
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw Error("numeric", "failed to format number");
  return std::string(buf, ptr);
}

std::string dataset_to_csv(const Dataset& dataset) {
  std::string out = "sample_id";
  for (const auto& f : dataset.schema.features) {
    out += ',';
    out += detail::csv_escape(f.name);
  }
  out += ",score\n";
  for (const auto& s : dataset.samples) {
    out += detail::csv_escape(s.id);
    for (double v : s.features) {
      out += ',';
      out += format_double(v);
    }
    out += ',';
    out += format_double(s.score);
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_text_file(path, dataset_to_csv(dataset));
}

std::vector<std::pair<std::string, double>> load_scores(const std::filesystem::path& path) {
  const auto rows = detail::parse_csv(read_text_file(path));
  if (rows.empty()) throw Error("parse", fmt::format("{}: empty scores file", path.string()));
  const auto& header = rows.front().cells;
  if (header.size() != 2 || detail::trim(header[0]) != "sample_id" || detail::trim(header[1]) != "score")
    throw Error("schema", fmt::format("{}: scores header must be 'sample_id,score'", path.string()));
  std::vector<std::pair<std::string, double>> out;
  std::unordered_set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    double v = 0.0;
    if (row.cells.size() != 2 || !detail::parse_double(row.cells[1], v) || !std::isfinite(v))
      throw Error("parse", fmt::format("{}: malformed score row at line {}", path.string(), row.line));
    std::string id(detail::trim(row.cells[0]));
    if (!ids.insert(id).second)
      throw Error("duplicate", fmt::format("{}: duplicate sample_id '{}'", path.string(), id));
    if (v < kMinScore || v > kMaxScore)
      throw Error("range", fmt::format("{}: score {} at line {} outside [1, 8]", path.string(), v, row.line));
    out.emplace_back(std::move(id), v);
  }
  return out;
}

}  // namespace iqa
