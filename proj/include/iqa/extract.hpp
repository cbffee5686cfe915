#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "iqa/dataset.hpp"
#include "iqa/fidelity.hpp"
#include "iqa/fluency.hpp"
#include "iqa/tlqual.hpp"

namespace iqa::extract {

using ScoreMap = std::map<std::string, double>;

/// Reads a `sample_id,score` CSV into a map, rejecting duplicate ids.
ScoreMap load_score_map(const std::filesystem::path& path);

/// A directory of *.json files (sorted by name), a JSON-lines file, or a
/// single transcript JSON.
std::vector<fluency::TimeAlignedTranscript> load_transcripts(const std::filesystem::path& path);

enum class SilenceSource { Transcript, Audio };

/// With SilenceSource::Audio, silences are recomputed from
/// `<audio_dir>/<sample_id>.wav` and reconciled with the tokens.
Dataset fluency_dataset(std::vector<fluency::TimeAlignedTranscript> transcripts, const ScoreMap& scores,
                        SilenceSource source = SilenceSource::Transcript,
                        const std::filesystem::path& audio_dir = {},
                        const fluency::SilenceDetectionParams& params = {});

Dataset fidelity_dataset(const std::vector<fidelity::SegmentPair>& pairs, const fidelity::NeuralMetricMap& neural,
                         const ScoreMap& scores);

/// Error annotations are read from `<errors_dir>/<sample_id>.txt`.
Dataset tlqual_dataset(const std::vector<tlqual::SegmentationAnnotation>& segmentations,
                       const std::vector<tlqual::CollocationAnnotation>& collocations,
                       const std::filesystem::path& errors_dir, const ScoreMap& scores,
                       const tlqual::TlqualOptions& options = {});

}  // namespace iqa::extract
