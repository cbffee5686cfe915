#include "iqa/fluency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"
#include "iqa/io.hpp"
#include "iqa/stats.hpp"

namespace iqa::fluency {

using nlohmann::json;

void validate_transcript(const TimeAlignedTranscript& t) {
  const std::string& id = t.sample_id;
  if (!(t.total_duration_s > 0.0) || !std::isfinite(t.total_duration_s))
    throw Error("range", fmt::format("transcript '{}': total_duration_s must be positive", id));
  auto in_bounds = [&](double a, double b) { return a >= 0.0 && b <= t.total_duration_s; };

  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    const auto& tok = t.tokens[i];
    if (!std::isfinite(tok.start_s) || !std::isfinite(tok.end_s) || !(tok.end_s > tok.start_s))
      throw Error("range", fmt::format("transcript '{}': token {} ('{}') needs end_s > start_s", id, i, tok.text));
    if (!in_bounds(tok.start_s, tok.end_s))
      throw Error("range", fmt::format("transcript '{}': token {} lies outside [0, {}]", id, i, t.total_duration_s));
    if (tok.syllables < 0)
      throw Error("range", fmt::format("transcript '{}': token {} has negative syllable count", id, i));
    if (tok.kind == TokenKind::FilledPause && tok.syllables < 1)
      throw Error("range", fmt::format("transcript '{}': filled pause {} must have at least one syllable", id, i));
    if (i > 0 && tok.start_s < t.tokens[i - 1].end_s)
      throw Error("range", fmt::format("transcript '{}': token {} overlaps or precedes token {}", id, i, i - 1));
  }
  for (std::size_t i = 0; i < t.silences.size(); ++i) {
    const auto& s = t.silences[i];
    if (!std::isfinite(s.start_s) || !std::isfinite(s.end_s) || !(s.end_s > s.start_s))
      throw Error("range", fmt::format("transcript '{}': silence {} needs end_s > start_s", id, i));
    if (!in_bounds(s.start_s, s.end_s))
      throw Error("range", fmt::format("transcript '{}': silence {} lies outside [0, {}]", id, i, t.total_duration_s));
    if (i > 0 && s.start_s < t.silences[i - 1].end_s)
      throw Error("range", fmt::format("transcript '{}': silence {} overlaps or precedes silence {}", id, i, i - 1));
  }
  // Both lists are sorted, so a merge walk finds any token/silence overlap.
  std::size_t k = 0;
  for (std::size_t i = 0; i < t.silences.size(); ++i) {
    const auto& s = t.silences[i];
    while (k < t.tokens.size() && t.tokens[k].end_s <= s.start_s) ++k;
    if (k < t.tokens.size() && t.tokens[k].start_s < s.end_s)
      throw Error("range", fmt::format("transcript '{}': silence {} overlaps token {} ('{}')", id, i, k,
                                       t.tokens[k].text));
  }
}

TimeAlignedTranscript transcript_from_json(const json& j) {
  try {
    TimeAlignedTranscript t;
    t.sample_id = j.at("sample_id").get<std::string>();
    t.total_duration_s = j.at("total_duration_s").get<double>();
    for (const auto& tj : j.at("tokens")) {
      Token tok;
      tok.text = tj.value("text", std::string());
      tok.start_s = tj.at("start_s").get<double>();
      tok.end_s = tj.at("end_s").get<double>();
      tok.syllables = tj.at("syllables").get<int>();
      const std::string kind = tj.value("kind", std::string("speech"));
      if (kind == "speech") tok.kind = TokenKind::Speech;
      else if (kind == "filled_pause") tok.kind = TokenKind::FilledPause;
      else throw Error("parse", fmt::format("transcript '{}': unknown token kind '{}'", t.sample_id, kind));
      t.tokens.push_back(std::move(tok));
    }
    if (j.contains("silences")) {
      for (const auto& sj : j.at("silences"))
        t.silences.push_back({sj.at("start_s").get<double>(), sj.at("end_s").get<double>()});
    }
    return t;
  } catch (const json::exception& e) {
    throw Error("parse", fmt::format("malformed transcript JSON: {}", e.what()));
  }
}

json transcript_to_json(const TimeAlignedTranscript& t) {
  json tokens = json::array();
  for (const auto& tok : t.tokens) {
    tokens.push_back({{"text", tok.text},
                      {"start_s", tok.start_s},
                      {"end_s", tok.end_s},
                      {"syllables", tok.syllables},
                      {"kind", tok.kind == TokenKind::Speech ? "speech" : "filled_pause"}});
  }
  json silences = json::array();
  for (const auto& s : t.silences) silences.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}});
  return {{"sample_id", t.sample_id}, {"total_duration_s", t.total_duration_s}, {"tokens", tokens}, {"silences", silences}};
}

TimeAlignedTranscript load_transcript(const std::filesystem::path& path) {
  return transcript_from_json(read_json_file(path));
}

std::vector<double> FluencyFeatures::to_vector() const {
  auto need = [](const std::optional<double>& v, const char* name) {
    if (!v) throw Error("missing", fmt::format("fluency feature {} is undefined for this transcript", name));
    return *v;
  };
  return {SR, need(AR, "AR"), PTR, need(MLS, "MLS"), need(MLR, "MLR"), PSC, NFP, NUP,
          MLFP, MLUP, NRLFP, NRLUP, NRSA, NPSA};
}

json FluencyFeatures::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"SR", SR},     {"AR", opt(AR)},   {"PTR", PTR},     {"MLS", opt(MLS)},   {"MLR", opt(MLR)},
          {"PSC", PSC},   {"NFP", NFP},      {"NUP", NUP},     {"MLFP", MLFP},      {"MLUP", MLUP},
          {"NRLFP", NRLFP}, {"NRLUP", NRLUP}, {"NRSA", NRSA},  {"NPSA", NPSA}};
}

FenceCounts iqr_outlier_counts(std::span<const double> durations) {
  if (durations.size() < 2) return {};
  std::vector<double> sorted(durations.begin(), durations.end());
  std::sort(sorted.begin(), sorted.end());
  const double q1 = quantile_sorted(sorted, 0.25);
  const double q3 = quantile_sorted(sorted, 0.75);
  const double iqr = q3 - q1;
  const double fence1 = q3 + 1.5 * iqr;
  const double fence2 = q3 + 3.0 * iqr;
  FenceCounts c;
  for (double x : sorted) {
    if (x > fence2) ++c.particular;
    else if (x > fence1) ++c.relative;
  }
  return c;
}

FluencyFeatures compute_fluency_features(const TimeAlignedTranscript& t) {
  validate_transcript(t);
  FluencyFeatures f;
  const double total = t.total_duration_s;

  std::vector<double> fp_durations;
  std::vector<double> syllable_durations;
  double fp_time = 0.0;
  double speech_syllables = 0.0;
  double fp_syllables = 0.0;
  for (const auto& tok : t.tokens) {
    if (tok.kind == TokenKind::FilledPause) {
      fp_durations.push_back(tok.duration());
      fp_time += tok.duration();
      fp_syllables += tok.syllables;
    } else {
      speech_syllables += tok.syllables;
      if (tok.syllables > 0) {
        const double per = tok.duration() / tok.syllables;
        syllable_durations.insert(syllable_durations.end(), static_cast<std::size_t>(tok.syllables), per);
      }
    }
  }
  std::vector<double> up_durations;
  double up_time = 0.0;
  for (const auto& s : t.silences) {
    up_durations.push_back(s.duration());
    up_time += s.duration();
  }

  f.NFP = static_cast<double>(fp_durations.size());
  f.NUP = static_cast<double>(up_durations.size());
  f.MLFP = fp_durations.empty() ? 0.0 : mean(fp_durations);
  f.MLUP = up_durations.empty() ? 0.0 : mean(up_durations);
  f.PSC = speech_syllables;
  f.SR = (speech_syllables + fp_syllables) / total;

  const double phonation = total - up_time;
  f.PTR = phonation / total;
  const double articulation = phonation - fp_time;
  if (articulation > 0.0) f.AR = speech_syllables / articulation;
  if (speech_syllables > 0.0) f.MLS = articulation / speech_syllables;

  // A run is the stretch of tokens between unfilled pauses; the run index of
  // a token is the number of silences that end at or before its start.
  std::map<std::size_t, double> runs;
  std::size_t silence_idx = 0;
  for (const auto& tok : t.tokens) {
    while (silence_idx < t.silences.size() && t.silences[silence_idx].end_s <= tok.start_s) ++silence_idx;
    double& run = runs[silence_idx];
    if (tok.kind == TokenKind::Speech) run += tok.syllables;
  }
  double run_sum = 0.0;
  std::size_t run_count = 0;
  for (const auto& [idx, len] : runs) {
    if (len > 0.0) {
      run_sum += len;
      ++run_count;
    }
  }
  if (run_count > 0) f.MLR = run_sum / static_cast<double>(run_count);

  const auto syl = iqr_outlier_counts(syllable_durations);
  f.NRSA = static_cast<double>(syl.relative);
  f.NPSA = static_cast<double>(syl.particular);
  f.NRLFP = static_cast<double>(iqr_outlier_counts(fp_durations).relative);
  f.NRLUP = static_cast<double>(iqr_outlier_counts(up_durations).relative);
  return f;
}

std::vector<SilenceInterval> detect_silences(std::span<const double> pcm, double sample_rate,
                                             const SilenceDetectionParams& params) {
  if (pcm.empty()) throw Error("invalid_argument", "silence detection needs a non-empty signal");
  if (!(sample_rate > 0.0)) throw Error("invalid_argument", "sample rate must be positive");
  if (!(params.frame_ms > 0.0) || !(params.hop_ms > 0.0))
    throw Error("invalid_argument", "frame and hop lengths must be positive");

  const double duration = static_cast<double>(pcm.size()) / sample_rate;
  const auto frame_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(params.frame_ms * 1e-3 * sample_rate)));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(params.hop_ms * 1e-3 * sample_rate)));
  const std::size_t n_frames = pcm.size() <= frame_len ? 1 : 1 + (pcm.size() - frame_len) / hop;

  std::vector<double> level_db(n_frames);
  double peak_db = -std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t begin = f * hop;
    const std::size_t end = std::min(begin + frame_len, pcm.size());
    double ss = 0.0;
    for (std::size_t i = begin; i < end; ++i) ss += pcm[i] * pcm[i];
    const double rms = std::sqrt(ss / static_cast<double>(end - begin));
    level_db[f] = rms > 0.0 ? 20.0 * std::log10(rms) : -std::numeric_limits<double>::infinity();
    peak_db = std::max(peak_db, level_db[f]);
  }
  if (std::isinf(peak_db)) return {{0.0, duration}};

  const double cutoff = peak_db - params.threshold_db_below_peak;
  std::vector<SilenceInterval> out;
  std::size_t f = 0;
  while (f < n_frames) {
    if (!(level_db[f] < cutoff)) {
      ++f;
      continue;
    }
    const std::size_t first = f;
    while (f < n_frames && level_db[f] < cutoff) ++f;
    const std::size_t last = f - 1;
    const double start = static_cast<double>(first * hop) / sample_rate;
    const double end = std::min(duration, static_cast<double>(last * hop + frame_len) / sample_rate);
    if (end - start >= params.min_duration_s) out.push_back({start, end});
  }
  return out;
}

std::vector<SilenceInterval> reconcile_silences(const std::vector<Token>& tokens,
                                                const std::vector<SilenceInterval>& silences,
                                                double min_duration_s) {
  std::vector<SilenceInterval> out;
  for (const auto& s : silences) {
    // Cut the interval at every token it overlaps; keep the remaining pieces.
    double cursor = s.start_s;
    for (const auto& tok : tokens) {
      if (tok.end_s <= cursor || tok.start_s >= s.end_s) continue;
      if (tok.start_s - cursor >= min_duration_s) out.push_back({cursor, tok.start_s});
      cursor = std::max(cursor, tok.end_s);
    }
    if (s.end_s - cursor >= min_duration_s) out.push_back({cursor, s.end_s});
  }
  return out;
}

}  // namespace iqa::fluency
