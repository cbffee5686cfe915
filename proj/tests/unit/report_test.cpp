#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/dataset.hpp"
#include "iqa/io.hpp"
#include "iqa/pipeline.hpp"
#include "iqa/plot.hpp"
#include "iqa/synth.hpp"
#include "support/testing.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iqa::pipeline;

namespace {

json report(const std::string& name) { return json::parse(testing::slurp(testing::data_dir() / "reports" / name)); }

// Set IQA_UPDATE_GOLDEN=1 to rewrite the files after an intended change.
void check_golden(const std::string& name, const std::string& svg) {
  const fs::path path = testing::data_dir() / "golden" / name;
  if (std::getenv("IQA_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << svg;
    return;
  }
  REQUIRE(fs::exists(path));
  CHECK(testing::slurp(path) == svg);
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

PipelineConfig small_config(const fs::path& out) {
  PipelineConfig c;
  c.dimension = iqa::Dimension::FluDel;
  c.inputs.synthetic = SyntheticInput{60, 4};
  c.augmentation.target_total = 120;
  c.augmentation.seed = 5;
  c.augmentation.cvae.seed = 5;
  c.augmentation.cvae.epochs = 30;
  c.model.kind = iqa::models::ModelKind::Gbt;
  c.model.seed = 6;
  iqa::models::GbtParams g;
  g.n_trees = 20;
  g.max_depth = 2;
  c.model.grid = std::vector<iqa::models::ModelParams>{g};
  c.evaluation.k = 3;
  c.explanation.seed = 7;
  c.explanation.bootstrap = 20;
  c.explanation.background_cap = 40;
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("waterfall plot of a local explanation") {
  const auto r = report("local-sample50.json");
  const auto svg = iqa::plot::waterfall_svg(r);
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("E[f(x)] = 4.991") != std::string::npos);
  CHECK(svg.find("f(x) = 4.746") != std::string::npos);
  CHECK(count(svg, "<polygon") == 4);
  CHECK(count(svg, "#ff0d57\"") >= 1);
  CHECK(svg.find("+0.235") != std::string::npos);
  CHECK(svg.find("-0.220") != std::string::npos);
  CHECK(iqa::plot::waterfall_svg(r) == svg);
  check_golden("waterfall-sample50.svg", svg);
}

TEST_CASE("force plot of a local explanation") {
  const auto r = report("local-sample87.json");
  const auto svg = iqa::plot::force_svg(r);
  CHECK(svg.find("f(x) = 6.466") != std::string::npos);
  CHECK(svg.find("base value 5.258") != std::string::npos);
  CHECK(count(svg, "<polygon") == 8);
  check_golden("force-sample87.svg", svg);
}

TEST_CASE("global plots") {
  const auto g = report("global-infocom.json");
  const auto bar = iqa::plot::importance_bar_svg(g);
  const auto bee = iqa::plot::beeswarm_svg(g);
  CHECK(bar.find("mean |SHAP value|") != std::string::npos);
  CHECK(bar.find("BLEURT20") < bar.find("CometKiwi"));
  CHECK(bar.find("CometKiwi") < bar.find("chrF"));
  CHECK(count(bee, "<circle") == 20);
  CHECK(bee.find("High") != std::string::npos);
  check_golden("importance-infocom.svg", bar);
  check_golden("beeswarm-infocom.svg", bee);
}

TEST_CASE("plot input errors") {
  auto r = report("local-sample50.json");
  r["contributions"] = json::array();
  CHECK(testing::error_code([&] { iqa::plot::waterfall_svg(r); }) == "schema");
  CHECK(testing::error_code([&] { iqa::plot::force_svg(json{{"base", 1.0}}); }) == "parse");
  auto g = report("global-infocom.json");
  g["beeswarm"]["samples"][0]["phi"] = json::array({1.0});
  CHECK(testing::error_code([&] { iqa::plot::beeswarm_svg(g); }) == "schema");
  CHECK(testing::error_code([] { iqa::plot::score_histograms_svg({}); }) == "invalid_argument");
}

TEST_CASE("augmentation histograms") {
  iqa::Dataset d;
  d.schema = iqa::builtin_schema(iqa::Dimension::FluDel);
  const std::vector<double> x(d.schema.size(), 1.0);
  for (int i = 0; i < 6; ++i) d.samples.push_back({fmt::format("s{:03d}", i + 1), x, 4.0 + 0.5 * i});
  for (int i = 0; i < 4; ++i) d.samples.push_back({fmt::format("syn-{:04d}", i + 1), x, 3.2 + i});
  const auto panels = iqa::plot::augmentation_panels(d);
  REQUIRE(panels.size() == 3);
  CHECK(panels[0].scores.size() == 6);
  CHECK(panels[1].scores.size() == 4);
  CHECK(panels[2].scores.size() == 10);
  const auto svg = iqa::plot::score_histograms_svg(panels);
  CHECK(svg.find("Synthetic (n = 4)") != std::string::npos);
  check_golden("histograms.svg", svg);
}

TEST_CASE("pipeline config round trip and seeds") {
  const auto c = small_config("out-x");
  CHECK(config_from_json(config_to_json(c)) == c);

  auto j = config_to_json(c);
  j["model"].erase("seed");
  CHECK(testing::error_code([&] { config_from_json(j); }) == "schema");
  j = config_to_json(c);
  j["augmentation"].erase("seed");
  CHECK(testing::error_code([&] { config_from_json(j); }) == "schema");
  j["augmentation"]["enabled"] = false;
  CHECK_NOTHROW(config_from_json(j));
  j = config_to_json(c);
  j["inputs"]["dataset"] = "x.csv";
  CHECK(testing::error_code([&] { config_from_json(j); }) == "schema");
  j = config_to_json(c);
  j["model"]["kind"] = 3;
  CHECK(testing::error_code([&] { config_from_json(j); }) == "parse");
}

TEST_CASE("synthetic corpus") {
  const auto a = iqa::synth::generate_synthetic_corpus(iqa::Dimension::FluDel, 117, 1);
  const auto b = iqa::synth::generate_synthetic_corpus(iqa::Dimension::FluDel, 117, 1);
  CHECK(a.size() == 117);
  CHECK(a.samples.front().id == "s001");
  CHECK(a.provenance == iqa::Provenance::Raw);
  CHECK(iqa::dataset_to_csv(a) == iqa::dataset_to_csv(b));
  const auto nup = *a.schema.index_of("NUP");
  double mean = 0;
  for (const auto& s : a.samples) {
    CHECK(s.score >= 3.0);
    CHECK(s.score <= 8.0);
    mean += s.features[nup] / 117.0;
  }
  CHECK(mean >= 29.0);
  CHECK(mean <= 39.0);
  for (auto d : {iqa::Dimension::InfoCom, iqa::Dimension::TLQual})
    CHECK(iqa::synth::generate_synthetic_corpus(d, 20, 2).schema.size() == iqa::builtin_schema(d).size());
  CHECK(testing::error_code([] { iqa::synth::generate_synthetic_corpus(iqa::Dimension::FluDel, 9, 1); }) ==
        "invalid_argument");
}

TEST_CASE("pipeline runs are reproducible") {
  const auto dir = testing::scratch_dir("pipeline");
  const auto m1 = run_pipeline(small_config(dir / "a"));
  const auto m2 = run_pipeline(small_config(dir / "b"));
  const auto a1 = m1.artifacts(), a2 = m2.artifacts();
  REQUIRE(a1.size() == a2.size());
  for (std::size_t i = 0; i < a1.size(); ++i) {
    CHECK(a1[i].path == a2[i].path);
    CHECK(a1[i].sha256 == a2[i].sha256);
  }
  CHECK(m1.provenance == "augmented");
  for (const char* name : {"aug.csv", "model.json", "eval.json", "shap-global.json", "manifest.json"})
    CHECK(fs::exists(dir / "a" / name));
  CHECK_FALSE(fs::exists(dir / "a" / kLockName));
  const auto aug = iqa::load_dataset(dir / "a" / "aug.csv", iqa::builtin_schema(iqa::Dimension::FluDel));
  CHECK(aug.size() == 120);

  const auto manifest = json::parse(testing::slurp(dir / "a" / "manifest.json"));
  CHECK(manifest.at("stages").size() == 6);
  CHECK(manifest.at("provenance") == "augmented");
}

TEST_CASE("pipeline lock and failure cleanup") {
  const auto dir = testing::scratch_dir("pipeline-lock");
  auto c = small_config(dir);
  fs::create_directories(dir);
  std::ofstream(dir / kLockName) << "busy";
  CHECK(testing::error_code([&] { run_pipeline(c); }) == "locked");
  fs::remove(dir / kLockName);

  c.explanation.local_samples = {"no-such-sample"};
  const auto msg = testing::error_message([&] { run_pipeline(c); });
  CHECK(msg.find("explain") != std::string::npos);
  CHECK(fs::is_empty(dir));
}

TEST_CASE("pipeline without augmentation keeps raw provenance") {
  const auto dir = testing::scratch_dir("pipeline-raw");
  auto c = small_config(dir);
  c.augmentation.enabled = false;
  c.explanation.enabled = false;
  c.plots = false;
  const auto m = run_pipeline(c);
  CHECK(m.provenance == "raw");
  CHECK_FALSE(fs::exists(dir / "aug.csv"));
  CHECK(fs::exists(dir / "eval.json"));
  const auto eval = json::parse(testing::slurp(dir / "eval.json"));
  CHECK(eval.at("provenance").at("data") == "raw");
}
