#include "iqa/tlqual.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "iqa/dataset.hpp"
#include "iqa/error.hpp"
#include "iqa/io.hpp"

namespace iqa::tlqual {

using nlohmann::json;

namespace {

struct QuoteStyle {
  std::string_view open;
  std::string_view close;
};

constexpr QuoteStyle kQuotes[] = {{"\"", "\""}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}, {"``", "''"}};

[[noreturn]] void malformed(std::size_t line, const std::string& why) {
  throw Error("parse", fmt::format("error annotation line {}: {}", line, why));
}

std::vector<std::string> split_tuple(std::string_view body, std::size_t line) {
  std::vector<std::string> fields;
  std::size_t i = 0;
  auto skip_spaces = [&] {
    while (i < body.size() && (body[i] == ' ' || body[i] == '\t')) ++i;
  };
  while (true) {
    skip_spaces();
    std::string field;
    const QuoteStyle* quote = nullptr;
    for (const auto& q : kQuotes) {
      if (body.substr(i).starts_with(q.open)) {
        quote = &q;
        break;
      }
    }
    if (quote) {
      i += quote->open.size();
      bool closed = false;
      while (i < body.size()) {
        if (quote->open == "\"" && body.substr(i).starts_with("\"\"")) {
          field.push_back('"');
          i += 2;
          continue;
        }
        if (body.substr(i).starts_with(quote->close)) {
          i += quote->close.size();
          closed = true;
          break;
        }
        field.push_back(body[i++]);
      }
      if (!closed) malformed(line, "unterminated quoted corrected_text");
      skip_spaces();
      if (i < body.size() && body[i] != ',') malformed(line, "unexpected text after quoted field");
    } else {
      const std::size_t comma = body.find(',', i);
      const std::size_t stop = comma == std::string_view::npos ? body.size() : comma;
      field = std::string(detail::trim(body.substr(i, stop - i)));
      i = stop;
    }
    fields.push_back(std::move(field));
    if (i >= body.size()) break;
    ++i;  // comma
  }
  return fields;
}

long parse_long(const std::string& s, std::size_t line, const char* name) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    malformed(line, fmt::format("{} '{}' is not an integer", name, s));
  }
}

bool needs_quotes(std::string_view text) {
  if (text.empty()) return true;
  if (detail::trim(text).size() != text.size()) return true;
  if (text.find_first_of(",[]\"") != std::string_view::npos) return true;
  for (const auto& q : kQuotes) {
    if (text.starts_with(q.open)) return true;
  }
  return false;
}

char type_char(ErrorType t) {
  switch (t) {
    case ErrorType::R: return 'R';
    case ErrorType::M: return 'M';
    case ErrorType::S: return 'S';
    case ErrorType::W: return 'W';
  }
  return '?';
}

}  // namespace

std::vector<ErrorEntry> parse_error_annotations(std::string_view text) {
  std::vector<ErrorEntry> entries;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = detail::trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() != '[') continue;
    if (line.back() != ']') malformed(line_no, "tuple is not closed with ']'");
    const auto fields = split_tuple(line.substr(1, line.size() - 2), line_no);
    if (fields.size() != 6) malformed(line_no, fmt::format("expected 6 fields, found {}", fields.size()));

    ErrorEntry e;
    e.sentence_id = parse_long(fields[0], line_no, "sentence_id");
    e.start_index = parse_long(fields[1], line_no, "start_index");
    e.end_index = parse_long(fields[2], line_no, "end_index");
    if (e.start_index > e.end_index)
      malformed(line_no, fmt::format("start_index {} exceeds end_index {}", e.start_index, e.end_index));
    const std::string& type = fields[3];
    if (type == "R") e.error_type = ErrorType::R;
    else if (type == "M") e.error_type = ErrorType::M;
    else if (type == "S") e.error_type = ErrorType::S;
    else if (type == "W") e.error_type = ErrorType::W;
    else malformed(line_no, fmt::format("unknown error_type '{}' (expected R, M, S or W)", type));
    e.corrected_text = fields[4];
    if (!detail::parse_double(fields[5], e.confidence) || !std::isfinite(e.confidence))
      malformed(line_no, fmt::format("confidence '{}' is not a number", fields[5]));
    if (e.confidence < 0.0 || e.confidence > 1.0)
      malformed(line_no, fmt::format("confidence {} outside [0, 1]", fields[5]));
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string format_error_entry(const ErrorEntry& e) {
  std::string text = e.corrected_text;
  if (text.find_first_of("\r\n") != std::string::npos)
    throw Error("invalid_argument", "corrected_text cannot contain line breaks");
  if (needs_quotes(text)) {
    std::string quoted = "\"";
    for (char c : text) {
      if (c == '"') quoted += "\"\"";
      else quoted.push_back(c);
    }
    quoted.push_back('"');
    text = std::move(quoted);
  }
  return fmt::format("[{}, {}, {}, {}, {}, {}]", e.sentence_id, e.start_index, e.end_index, type_char(e.error_type),
                     text, format_double(e.confidence));
}

std::string format_error_annotations(const std::vector<ErrorEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += format_error_entry(e);
    out += '\n';
  }
  return out;
}

ErrorCounts error_counts(const std::vector<ErrorEntry>& entries, double min_confidence) {
  if (!(min_confidence >= 0.0 && min_confidence <= 1.0))
    throw Error("invalid_argument", "min_confidence must lie in [0, 1]");
  ErrorCounts c;
  for (const auto& e : entries) {
    if (e.confidence < min_confidence) continue;
    switch (e.error_type) {
      case ErrorType::R: ++c.NRW; break;
      case ErrorType::M: ++c.NMW; break;
      case ErrorType::S: ++c.NWSE; break;
      case ErrorType::W: ++c.NWOE; break;
    }
  }
  return c;
}

void validate_segmentation(const SegmentationAnnotation& seg) {
  if (seg.sentences.empty())
    throw Error("invalid_argument", fmt::format("segmentation '{}' has zero sentences", seg.sample_id));
  long words = 0;
  for (std::size_t s = 0; s < seg.sentences.size(); ++s) {
    if (seg.sentences[s].empty())
      throw Error("invalid_argument", fmt::format("segmentation '{}': sentence {} has no T-units", seg.sample_id, s));
    for (std::size_t t = 0; t < seg.sentences[s].size(); ++t) {
      if (seg.sentences[s][t].empty())
        throw Error("invalid_argument",
                    fmt::format("segmentation '{}': sentence {} T-unit {} has no clauses", seg.sample_id, s, t));
      for (long c : seg.sentences[s][t]) {
        if (c < 0) throw Error("invalid_argument", fmt::format("segmentation '{}': negative clause length", seg.sample_id));
        words += c;
      }
    }
  }
  if (words != seg.total_word_tokens)
    throw Error("invalid_argument", fmt::format("segmentation '{}': clause word counts sum to {} but total_word_tokens is {}",
                                                seg.sample_id, words, seg.total_word_tokens));
}

SegmentationAnnotation segmentation_from_json(const json& j) {
  try {
    SegmentationAnnotation seg;
    seg.sample_id = j.at("sample_id").get<std::string>();
    seg.total_word_tokens = j.at("total_word_tokens").get<long>();
    seg.sentences = j.at("sentences").get<std::vector<std::vector<std::vector<long>>>>();
    return seg;
  } catch (const json::exception& e) {
    throw Error("parse", fmt::format("malformed segmentation JSON: {}", e.what()));
  }
}

json segmentation_to_json(const SegmentationAnnotation& seg) {
  return {{"sample_id", seg.sample_id}, {"total_word_tokens", seg.total_word_tokens}, {"sentences", seg.sentences}};
}

CollocationAnnotation collocation_from_json(const json& j) {
  try {
    CollocationAnnotation coll;
    coll.sample_id = j.at("sample_id").get<std::string>();
    std::set<std::string> known(kCategories.begin(), kCategories.end());
    known.insert("sample_id");
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw Error("parse", fmt::format("collocation '{}': unknown category '{}'", coll.sample_id, key));
    }
    for (std::size_t c = 0; c < kCategories.size(); ++c) {
      if (!j.contains(kCategories[c]))
        throw Error("parse", fmt::format("collocation '{}': missing category '{}'", coll.sample_id, kCategories[c]));
      coll.occurrences[c] = j.at(kCategories[c]).get<std::vector<std::string>>();
    }
    return coll;
  } catch (const json::exception& e) {
    throw Error("parse", fmt::format("malformed collocation JSON: {}", e.what()));
  }
}

json collocation_to_json(const CollocationAnnotation& coll) {
  json j = {{"sample_id", coll.sample_id}};
  for (std::size_t c = 0; c < kCategories.size(); ++c) j[kCategories[c]] = coll.occurrences[c];
  return j;
}

CoarseMetrics coarse_grained_metrics(const SegmentationAnnotation& seg) {
  validate_segmentation(seg);
  double tunits = 0.0, clauses = 0.0;
  for (const auto& sentence : seg.sentences) {
    tunits += static_cast<double>(sentence.size());
    for (const auto& tu : sentence) clauses += static_cast<double>(tu.size());
  }
  const double sentences = static_cast<double>(seg.sentences.size());
  const double words = static_cast<double>(seg.total_word_tokens);
  return {words / sentences, words / tunits, tunits / sentences, words / clauses, clauses / sentences};
}

CollocationMetrics collocation_metrics(const CollocationAnnotation& coll, long total_word_tokens) {
  if (total_word_tokens <= 0)
    throw Error("invalid_argument", fmt::format("collocation '{}': total word tokens must be positive", coll.sample_id));
  CollocationMetrics m;
  double all_types = 0.0, all_tokens = 0.0;
  for (std::size_t c = 0; c < kCategories.size(); ++c) {
    const auto& occ = coll.occurrences[c];
    const std::set<std::string> types(occ.begin(), occ.end());
    const double t = static_cast<double>(occ.size());
    const double y = static_cast<double>(types.size());
    m.categories[c].rttr = occ.empty() ? 0.0 : y / std::sqrt(t);
    m.categories[c].ratio = t / static_cast<double>(total_word_tokens);
    all_types += y;
    all_tokens += t;
  }
  m.total_rttr = all_tokens > 0.0 ? all_types / std::sqrt(all_tokens) : 0.0;
  return m;
}

std::vector<double> build_tlqual_features(const SegmentationAnnotation& seg, const CollocationAnnotation& coll,
                                          const std::vector<ErrorEntry>& entries, std::string_view errors_sample_id,
                                          const TlqualOptions& options) {
  if (seg.sample_id != coll.sample_id || seg.sample_id != errors_sample_id)
    throw Error("schema", fmt::format("sample_id mismatch: segmentation '{}', collocation '{}', errors '{}'",
                                      seg.sample_id, coll.sample_id, errors_sample_id));
  const auto errors = error_counts(entries, options.min_confidence);
  const auto coarse = coarse_grained_metrics(seg);
  const auto fine = collocation_metrics(coll, seg.total_word_tokens);
  std::vector<double> v = {static_cast<double>(errors.NRW), static_cast<double>(errors.NMW),
                           static_cast<double>(errors.NWSE), static_cast<double>(errors.NWOE),
                           coarse.MLS, coarse.MLTU, coarse.NTPS, coarse.MLC, coarse.NCPS};
  for (const auto& cat : fine.categories) {
    v.push_back(cat.rttr);
    v.push_back(cat.ratio);
  }
  if (options.include_total_rttr) v.push_back(fine.total_rttr);
  return v;
}

namespace {

template <typename T, typename F>
std::vector<T> load_jsonl(const std::filesystem::path& path, F&& convert) {
  const std::string text = read_text_file(path);
  std::vector<T> out;
  std::string_view rest = text;
  std::size_t line_no = 0;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const std::string_view line = detail::trim(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("parse", fmt::format("{}: line {}: {}", path.string(), line_no, e.what()));
    }
    out.push_back(convert(j));
  }
  return out;
}

}  // namespace

std::vector<SegmentationAnnotation> load_segmentations(const std::filesystem::path& path) {
  return load_jsonl<SegmentationAnnotation>(path, segmentation_from_json);
}

std::vector<CollocationAnnotation> load_collocations(const std::filesystem::path& path) {
  return load_jsonl<CollocationAnnotation>(path, collocation_from_json);
}

}  // namespace iqa::tlqual
