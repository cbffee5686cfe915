#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iqa/dataset.hpp"

namespace iqa::synth {

/// Marginal used to draw one feature: value = max(floor, mean + sd * N(0,1)),
/// rounded to an integer for count features.
struct FeatureMarginal {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
  double floor = 0.0;
  bool count = false;
};

/// Feature entering the score: weight * (value - mean) / sd.
struct ScoreTerm {
  std::string feature;
  double weight = 0.0;
};

struct GeneratorSpec {
  Dimension dimension = Dimension::FluDel;
  std::vector<FeatureMarginal> marginals;  // schema order
  std::vector<ScoreTerm> terms;
  double intercept = 5.0;
  double noise_sd = 0.3;
  double score_lo = 3.0;
  double score_hi = 8.0;
};

/// Marginals use realistic magnitudes (FluDel NUP: mean 34, sd 15);
/// the score is clip(intercept + sum of terms + N(0, noise_sd^2), lo, hi).
GeneratorSpec generator_spec(Dimension d);
nlohmann::json generator_spec_to_json(const GeneratorSpec& spec);

/// Sample ids are `s001`, `s002`, ...; provenance is raw.
Dataset generate_synthetic_corpus(const GeneratorSpec& spec, int n, std::uint64_t seed);
Dataset generate_synthetic_corpus(Dimension d, int n, std::uint64_t seed);

}  // namespace iqa::synth
