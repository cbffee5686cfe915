#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace iqa {

struct PcmAudio {
  double sample_rate = 0.0;
  std::vector<double> samples;  // mono, scaled to [-1, 1)
};

/// Reads RIFF/WAVE with 16-bit PCM mono data. Stereo and other encodings
/// are rejected.
PcmAudio read_wav(const std::filesystem::path& path);
PcmAudio parse_wav(std::string_view bytes);

/// 16-bit PCM mono writer (used by tests and the synthetic corpus).
std::string encode_wav(const PcmAudio& audio);
void write_wav(const std::filesystem::path& path, const PcmAudio& audio);

}  // namespace iqa
