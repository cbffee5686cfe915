#include "iqa/extract.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"
#include "iqa/io.hpp"
#include "iqa/wav.hpp"

namespace iqa::extract {

namespace fs = std::filesystem;

ScoreMap load_score_map(const fs::path& path) {
  ScoreMap out;
  for (const auto& [id, score] : load_scores(path)) {
    if (!out.emplace(id, score).second)
      throw Error("duplicate", fmt::format("{}: duplicate score for sample '{}'", path.string(), id));
  }
  return out;
}

std::vector<fluency::TimeAlignedTranscript> load_transcripts(const fs::path& path) {
  std::vector<fluency::TimeAlignedTranscript> out;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back(fluency::load_transcript(f));
    if (out.empty()) throw Error("missing", fmt::format("{}: no transcript files found", path.string()));
    return out;
  }
  if (path.extension() == ".jsonl") {
    const std::string text = read_text_file(path);
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      const std::string line = text.substr(pos, end - pos);
      ++line_no;
      pos = end + 1;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        out.push_back(fluency::transcript_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw Error("parse", fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
      } catch (const Error& e) {
        throw Error(e.code(), fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
      }
    }
    return out;
  }
  out.push_back(fluency::load_transcript(path));
  return out;
}

namespace {

double score_for(const ScoreMap& scores, const std::string& id) {
  const auto it = scores.find(id);
  if (it == scores.end()) throw Error("missing", fmt::format("no score for sample '{}'", id));
  return it->second;
}

void check_unique(std::vector<std::string> ids, std::string_view what) {
  std::sort(ids.begin(), ids.end());
  const auto dup = std::adjacent_find(ids.begin(), ids.end());
  if (dup != ids.end()) throw Error("duplicate", fmt::format("duplicate {} for sample '{}'", what, *dup));
}

}  // namespace

Dataset fluency_dataset(std::vector<fluency::TimeAlignedTranscript> transcripts, const ScoreMap& scores,
                        SilenceSource source, const fs::path& audio_dir, const fluency::SilenceDetectionParams& params) {
  std::vector<std::string> ids;
  for (const auto& t : transcripts) ids.push_back(t.sample_id);
  check_unique(ids, "transcript");
  Dataset d;
  d.schema = builtin_schema(Dimension::FluDel);
  for (auto& t : transcripts) {
    if (source == SilenceSource::Audio) {
      const PcmAudio audio = read_wav(audio_dir / (t.sample_id + ".wav"));
      const auto detected = fluency::detect_silences(audio.samples, audio.sample_rate, params);
      t.silences = fluency::reconcile_silences(t.tokens, detected, params.min_duration_s);
    }
    try {
      d.samples.push_back({t.sample_id, fluency::compute_fluency_features(t).to_vector(), score_for(scores, t.sample_id)});
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("sample '{}': {}", t.sample_id, e.what()));
    }
  }
  validate_dataset(d);
  return d;
}

Dataset fidelity_dataset(const std::vector<fidelity::SegmentPair>& pairs, const fidelity::NeuralMetricMap& neural,
                         const ScoreMap& scores) {
  Dataset d;
  d.schema = builtin_schema(Dimension::InfoCom);
  for (const auto& row : fidelity::build_fidelity_features(pairs, neural))
    d.samples.push_back({row.sample_id, {row.features.begin(), row.features.end()}, score_for(scores, row.sample_id)});
  validate_dataset(d);
  return d;
}

Dataset tlqual_dataset(const std::vector<tlqual::SegmentationAnnotation>& segmentations,
                       const std::vector<tlqual::CollocationAnnotation>& collocations, const fs::path& errors_dir,
                       const ScoreMap& scores, const tlqual::TlqualOptions& options) {
  std::map<std::string, const tlqual::CollocationAnnotation*> coll_by_id;
  for (const auto& c : collocations)
    if (!coll_by_id.emplace(c.sample_id, &c).second)
      throw Error("duplicate", fmt::format("duplicate collocation annotation for sample '{}'", c.sample_id));
  std::vector<std::string> ids;
  for (const auto& s : segmentations) ids.push_back(s.sample_id);
  check_unique(ids, "segmentation");

  Dataset d;
  d.schema = builtin_schema(Dimension::TLQual, SchemaOptions{options.include_total_rttr});
  for (const auto& seg : segmentations) {
    const auto it = coll_by_id.find(seg.sample_id);
    if (it == coll_by_id.end())
      throw Error("missing", fmt::format("no collocation annotation for sample '{}'", seg.sample_id));
    const fs::path err_path = errors_dir / (seg.sample_id + ".txt");
    std::vector<tlqual::ErrorEntry> entries;
    try {
      entries = tlqual::parse_error_annotations(read_text_file(err_path));
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("{}: {}", err_path.string(), e.what()));
    }
    d.samples.push_back({seg.sample_id, tlqual::build_tlqual_features(seg, *it->second, entries, seg.sample_id, options),
                         score_for(scores, seg.sample_id)});
  }
  if (coll_by_id.size() != segmentations.size())
    throw Error("missing", "collocation annotations include samples without a segmentation");
  validate_dataset(d);
  return d;
}

}  // namespace iqa::extract
