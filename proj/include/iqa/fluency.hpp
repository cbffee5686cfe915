#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace iqa::fluency {

enum class TokenKind { Speech, FilledPause };

struct Token {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  int syllables = 0;
  TokenKind kind = TokenKind::Speech;

  double duration() const { return end_s - start_s; }
};

struct SilenceInterval {
  double start_s = 0.0;
  double end_s = 0.0;

  double duration() const { return end_s - start_s; }
  bool operator==(const SilenceInterval&) const = default;
};

struct TimeAlignedTranscript {
  std::string sample_id;
  double total_duration_s = 0.0;
  std::vector<Token> tokens;
  std::vector<SilenceInterval> silences;
};

/// Throws iqa::Error describing the first violated ordering/overlap/bounds rule.
void validate_transcript(const TimeAlignedTranscript& t);

TimeAlignedTranscript transcript_from_json(const nlohmann::json& j);
nlohmann::json transcript_to_json(const TimeAlignedTranscript& t);
TimeAlignedTranscript load_transcript(const std::filesystem::path& path);

/// The 14 temporal fluency features. Features whose denominator vanishes
/// (no articulation time, no pruned syllables, no runs) are empty.
struct FluencyFeatures {
  double SR = 0.0;
  std::optional<double> AR;
  double PTR = 0.0;
  std::optional<double> MLS;  // mean length of syllables (seconds)
  std::optional<double> MLR;
  double PSC = 0.0;
  double NFP = 0.0;
  double NUP = 0.0;
  double MLFP = 0.0;
  double MLUP = 0.0;
  double NRLFP = 0.0;
  double NRLUP = 0.0;
  double NRSA = 0.0;
  double NPSA = 0.0;

  /// Values in FluDel schema order. Throws if any feature is absent.
  std::vector<double> to_vector() const;
  nlohmann::json to_json() const;
};

struct FenceCounts {
  std::size_t relative = 0;    // Q3 + 1.5 IQR < x <= Q3 + 3 IQR
  std::size_t particular = 0;  // x > Q3 + 3 IQR

  bool operator==(const FenceCounts&) const = default;
};

/// Upper-fence outlier counts with quartiles by linear interpolation at
/// q*(n-1). Empty input gives (0, 0).
FenceCounts iqr_outlier_counts(std::span<const double> durations);

FluencyFeatures compute_fluency_features(const TimeAlignedTranscript& t);

struct SilenceDetectionParams {
  double threshold_db_below_peak = 18.0;
  double min_duration_s = 0.35;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
};

/// Frame-RMS silence detection. A frame is silent when its level is more
/// than `threshold_db_below_peak` dB under the loudest frame; silent runs
/// shorter than `min_duration_s` are dropped. Intervals span from the start
/// of the first silent frame to the end of the last one, clipped to the
/// signal duration. An all-zero signal is one interval over its whole length.
std::vector<SilenceInterval> detect_silences(std::span<const double> pcm, double sample_rate,
                                             const SilenceDetectionParams& params = {});

/// Trims detected silences so none overlaps a token, then drops pieces
/// shorter than `min_duration_s`. Used when silences come from audio rather
/// than from the transcript.
std::vector<SilenceInterval> reconcile_silences(const std::vector<Token>& tokens,
                                                const std::vector<SilenceInterval>& silences,
                                                double min_duration_s);

}  // namespace iqa::fluency
