#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iqa/dataset.hpp"

namespace iqa::plot {

/// Renderers take report JSON (as written by the explain and augment stages)
/// and return a self-contained SVG document. Output depends only on the
/// input, so identical reports give identical bytes.

/// Mean |phi| per feature, largest first, with bootstrap whiskers when the
/// report carries intervals.
std::string importance_bar_svg(const nlohmann::json& global_report);

/// One row per feature; each dot is a sample at its phi, colored from cool
/// (low standardized value) to warm (high).
std::string beeswarm_svg(const nlohmann::json& global_report);

/// Steps from E[f(x)] through each contribution to f(x).
std::string waterfall_svg(const nlohmann::json& local_report);

/// Positive contributions push right from the left, negative push left from
/// the right, meeting at f(x).
std::string force_svg(const nlohmann::json& local_report);

struct HistogramPanel {
  std::string title;
  std::vector<double> scores;
};

/// Side-by-side unit-bin histograms sharing one x range.
std::string score_histograms_svg(const std::vector<HistogramPanel>& panels);

/// Raw, synthetic and combined panels; synthetic rows are those whose id
/// starts with `syn-`.
std::vector<HistogramPanel> augmentation_panels(const Dataset& augmented);

}  // namespace iqa::plot
