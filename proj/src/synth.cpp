#include "iqa/synth.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"
#include "iqa/rng.hpp"

namespace iqa::synth {

namespace {

// name, mean, sd, count
struct Row {
  const char* name;
  double mean;
  double sd;
  bool count;
};

constexpr Row kInfoCom[] = {
    {"chrF", 0.11, 0.02, false},      {"BLEURT20", 0.51, 0.13, false}, {"BERTScore", 0.96, 0.01, false},
    {"CometKiwi", 0.51, 0.10, false}, {"xCOMET", 0.18, 0.11, false},
};

constexpr Row kFluDel[] = {
    {"SR", 1.73, 0.48, false},   {"AR", 3.87, 0.53, false},  {"PTR", 0.63, 0.12, false},  {"MLS", 0.26, 0.04, false},
    {"MLR", 16.99, 2.60, false}, {"PSC", 197.78, 55.36, true}, {"NFP", 15.72, 8.41, true}, {"NUP", 34.05, 14.95, true},
    {"MLFP", 0.35, 0.14, false}, {"MLUP", 1.00, 0.61, false}, {"NRLFP", 0.18, 0.54, true}, {"NRLUP", 1.05, 1.33, true},
    {"NRSA", 3.75, 2.99, true},  {"NPSA", 0.78, 1.28, true},
};

constexpr Row kTlqual[] = {
    {"NRW", 1.68, 0.51, false},     {"NMW", 2.17, 0.62, false},      {"NWSE", 4.13, 1.15, false},
    {"NWOE", 0.98, 0.34, false},    {"MLS", 23.5, 4.2, false},       {"MLTU", 19.57, 3.46, false},
    {"NTPS", 3.20, 1.11, false},    {"MLC", 16.87, 2.70, false},     {"NCPS", 3.69, 1.28, false},
    {"VO_RTTR", 2.55, 0.62, false}, {"VO_RATIO", 0.21, 0.08, false}, {"SP_RTTR", 2.54, 0.60, false},
    {"SP_RATIO", 0.22, 0.09, false}, {"AN_RTTR", 1.48, 0.65, false}, {"AN_RATIO", 0.08, 0.04, false},
    {"AP_RTTR", 3.18, 0.77, false}, {"AP_RATIO", 0.37, 0.09, false}, {"CN_RTTR", 0.40, 0.58, false},
    {"CN_RATIO", 0.01, 0.02, false}, {"PP_RTTR", 0.67, 0.56, false}, {"PP_RATIO", 0.03, 0.03, false},
    {"PV_RTTR", 0.89, 0.57, false}, {"PV_RATIO", 0.04, 0.04, false}, {"PC_RTTR", 0.88, 0.64, false},
    {"PC_RATIO", 0.04, 0.04, false},
};

template <std::size_t N>
std::vector<FeatureMarginal> marginals(const Row (&rows)[N]) {
  std::vector<FeatureMarginal> out;
  for (const auto& r : rows) out.push_back({r.name, r.mean, r.sd, 0.0, r.count});
  return out;
}

}  // namespace

GeneratorSpec generator_spec(Dimension d) {
  GeneratorSpec spec;
  spec.dimension = d;
  switch (d) {
    case Dimension::InfoCom:
      spec.marginals = marginals(kInfoCom);
      spec.terms = {{"BLEURT20", 0.5}, {"CometKiwi", 0.4}, {"chrF", 0.35}};
      break;
    case Dimension::FluDel:
      spec.marginals = marginals(kFluDel);
      spec.terms = {{"NFP", -0.5}, {"MLUP", -0.4}, {"PSC", 0.35}};
      break;
    case Dimension::TLQual:
      spec.marginals = marginals(kTlqual);
      spec.terms = {{"NWSE", -0.5}, {"MLTU", 0.4}, {"VO_RTTR", 0.35}};
      break;
  }
  const auto schema = builtin_schema(d);
  if (schema.size() != spec.marginals.size()) throw Error("schema", "generator table does not cover the schema");
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (schema.features[j].name != spec.marginals[j].name)
      throw Error("schema", fmt::format("generator feature '{}' out of schema order", spec.marginals[j].name));
  return spec;
}

nlohmann::json generator_spec_to_json(const GeneratorSpec& spec) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& m : spec.marginals)
    features.push_back({{"name", m.name}, {"mean", m.mean}, {"sd", m.sd}, {"floor", m.floor}, {"count", m.count}});
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : spec.terms) terms.push_back({{"feature", t.feature}, {"weight", t.weight}});
  return {{"dimension", std::string(to_string(spec.dimension))},
          {"features", features},
          {"score",
           {{"intercept", spec.intercept},
            {"terms", terms},
            {"noise_sd", spec.noise_sd},
            {"clip", {spec.score_lo, spec.score_hi}}}}};
}

Dataset generate_synthetic_corpus(const GeneratorSpec& spec, int n, std::uint64_t seed) {
  if (n < 10) throw Error("invalid_argument", fmt::format("synthetic corpus needs n >= 10, got {}", n));
  Dataset d;
  d.schema = builtin_schema(spec.dimension);
  d.provenance = Provenance::Raw;
  std::vector<std::size_t> term_index;
  for (const auto& t : spec.terms) {
    const auto idx = d.schema.index_of(t.feature);
    if (!idx) throw Error("schema", fmt::format("score term names unknown feature '{}'", t.feature));
    term_index.push_back(*idx);
  }

  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.id = fmt::format("s{:03d}", i + 1);
    for (const auto& m : spec.marginals) {
      double v = std::max(m.floor, m.mean + m.sd * rng.normal());
      if (m.count) v = std::round(v);
      s.features.push_back(v);
    }
    double score = spec.intercept;
    for (std::size_t k = 0; k < spec.terms.size(); ++k) {
      const auto& m = spec.marginals[term_index[k]];
      score += spec.terms[k].weight * (s.features[term_index[k]] - m.mean) / m.sd;
    }
    score += spec.noise_sd * rng.normal();
    s.score = std::clamp(score, spec.score_lo, spec.score_hi);
    d.samples.push_back(std::move(s));
  }
  return d;
}

Dataset generate_synthetic_corpus(Dimension d, int n, std::uint64_t seed) {
  return generate_synthetic_corpus(generator_spec(d), n, seed);
}

}  // namespace iqa::synth
