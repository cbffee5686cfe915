// Command-line front end: one subcommand per pipeline stage plus `pipeline`
// for config-driven end-to-end runs.

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/cvae.hpp"
#include "iqa/error.hpp"
#include "iqa/eval.hpp"
#include "iqa/extract.hpp"
#include "iqa/io.hpp"
#include "iqa/pipeline.hpp"
#include "iqa/plot.hpp"
#include "iqa/protocol.hpp"
#include "iqa/shap.hpp"
#include "iqa/stats.hpp"
#include "iqa/synth.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void emit_json(const std::string& out, const json& j) {
  if (out.empty() || out == "-") std::cout << j.dump(2) << "\n";
  else iqa::write_json_file(out, j);
}

void emit_text(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") std::cout << text;
  else iqa::write_text_file(out, text);
}

iqa::Dimension dimension_arg(const std::string& s) { return iqa::parse_dimension(s); }

iqa::models::Model load_model(const std::string& path) { return iqa::models::model_from_json(iqa::read_json_file(path)); }

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

void report_error(std::string_view code, const std::string& message) {
  const bool color = std::getenv("NO_COLOR") == nullptr && ::isatty(STDERR_FILENO);
  const char* on = color ? "\033[31m" : "";
  const char* off = color ? "\033[0m" : "";
  std::cerr << fmt::format("{}error{}: {}: {}\n", on, off, code, one_line(message));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpreting quality assessment: feature extraction, augmentation, scoring models, explanations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", iqa::pipeline::tool_version());

  // stats
  std::string dim, data_path, out;
  bool total_rttr = false;
  auto* stats = app.add_subcommand("stats", "Descriptive statistics of every feature and the score");
  stats->add_option("--dimension", dim, "InfoCom, FluDel or TLQual")->required();
  stats->add_option("--data", data_path, "Dataset CSV")->required();
  stats->add_flag("--total-rttr", total_rttr, "TLQual schema with TOTAL_RTTR");
  stats->add_option("--out", out, "Output JSON (default stdout)");

  // extraction
  std::string transcripts, scores, audio_dir;
  auto* ex_flu = app.add_subcommand("extract-fluency", "FluDel features from time-aligned transcripts");
  ex_flu->add_option("--transcripts", transcripts, "Transcript JSON, JSON-lines file, or directory")->required();
  ex_flu->add_option("--scores", scores, "CSV of sample_id,score")->required();
  std::string silences = "transcript";
  ex_flu->add_option("--silences", silences, "transcript or from-audio")
      ->check(CLI::IsMember({"transcript", "from-audio"}));
  ex_flu->add_option("--audio-dir", audio_dir, "Directory holding <sample_id>.wav");
  ex_flu->add_option("--out", out, "Output CSV (default stdout)");

  std::string segments, metrics;
  auto* ex_fid = app.add_subcommand("extract-fidelity", "InfoCom features from segment pairs and neural metrics");
  ex_fid->add_option("--segments", segments, "JSON-lines segment pairs")->required();
  ex_fid->add_option("--metrics", metrics, "Neural metric CSV")->required();
  ex_fid->add_option("--scores", scores, "CSV of sample_id,score")->required();
  ex_fid->add_option("--out", out, "Output CSV (default stdout)");

  std::string segmentations, collocations, errors_dir;
  double min_conf = 0.0;
  auto* ex_tlq = app.add_subcommand("extract-tlqual", "TLQual features from segmentation, collocation and error files");
  ex_tlq->add_option("--segmentations", segmentations, "JSON-lines segmentation annotations")->required();
  ex_tlq->add_option("--collocations", collocations, "JSON-lines collocation annotations")->required();
  ex_tlq->add_option("--errors-dir", errors_dir, "Directory holding <sample_id>.txt error annotations")->required();
  ex_tlq->add_option("--scores", scores, "CSV of sample_id,score")->required();
  ex_tlq->add_option("--min-confidence", min_conf, "Drop error entries below this confidence");
  ex_tlq->add_flag("--total-rttr", total_rttr, "Append TOTAL_RTTR");
  ex_tlq->add_option("--out", out, "Output CSV (default stdout)");

  // augment
  std::string raw_path, model_out, config_path;
  int target_total = 500;
  std::uint64_t seed = 0;
  std::optional<int> epochs;
  auto* aug = app.add_subcommand("augment", "Train a conditional VAE and append synthetic rows");
  aug->add_option("--dimension", dim)->required();
  aug->add_option("--raw", raw_path, "Raw dataset CSV")->required();
  aug->add_option("--target-total", target_total, "Rows after augmentation");
  aug->add_option("--seed", seed, "Seed")->required();
  aug->add_option("--config", config_path, "CVAE config JSON");
  aug->add_option("--epochs", epochs, "Override training epochs");
  aug->add_option("--out", out, "Augmented CSV")->required();
  aug->add_option("--model-out", model_out, "Trained CVAE JSON");

  // train
  std::string model_kind, grid_path, report_out, scaler_mode = "fit-on-train-only";
  std::size_t k = 5;
  double test_fraction = 0.2;
  auto* train = app.add_subcommand("train", "Split, grid-search with k-fold CV, retrain and test");
  train->add_option("--dimension", dim)->required();
  train->add_option("--model", model_kind, "gbt, rf or mlp")->required()->check(CLI::IsMember({"gbt", "rf", "mlp"}));
  train->add_option("--data", data_path, "Dataset CSV")->required();
  train->add_option("--grid", grid_path, "Grid JSON (default grid when omitted)");
  train->add_option("--seed", seed)->required();
  train->add_option("--k", k, "Folds");
  train->add_option("--test-fraction", test_fraction);
  train->add_option("--scaler-mode", scaler_mode)->check(CLI::IsMember({"fit-on-train-only", "whole-data"}));
  train->add_flag("--total-rttr", total_rttr);
  train->add_option("--out", out, "Model JSON")->required();
  train->add_option("--report", report_out, "Evaluation report JSON");

  // evaluate
  std::string model_path, test_path;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a trained model on a labelled CSV");
  evaluate->add_option("--model", model_path)->required();
  evaluate->add_option("--test", test_path)->required();
  evaluate->add_option("--out", out, "Report JSON (default stdout)");

  // explain
  std::string scope, sample_id, background_path, method;
  std::size_t bootstrap = 0, background_cap = 500, permutations = 2000;
  auto* explain = app.add_subcommand("explain", "SHAP explanations");
  explain->add_option("scope", scope, "global or local")->required()->check(CLI::IsMember({"global", "local"}));
  explain->add_option("--model", model_path)->required();
  explain->add_option("--data", data_path)->required();
  explain->add_option("--sample-id", sample_id, "Sample to explain (local)");
  explain->add_option("--background", background_path, "Background CSV (default: --data)");
  explain->add_option("--background-cap", background_cap);
  explain->add_option("--bootstrap", bootstrap, "Bootstrap resamples for CIs (0 = none)");
  explain->add_option("--method", method)->check(CLI::IsMember({"exact", "tree", "sampled"}));
  explain->add_option("--permutations", permutations);
  explain->add_option("--seed", seed)->required();
  explain->add_option("--out", out, "Output JSON (default stdout)");

  // plot
  std::string kind, input;
  auto* plot = app.add_subcommand("plot", "Render a report as SVG");
  plot->add_option("kind", kind, "bar, beeswarm, waterfall, force or histograms")
      ->required()
      ->check(CLI::IsMember({"bar", "beeswarm", "waterfall", "force", "histograms"}));
  plot->add_option("--input", input, "Report JSON, or augmented CSV for histograms")->required();
  plot->add_option("--dimension", dim, "Dimension of the CSV (histograms)");
  plot->add_option("--out", out, "SVG path (default stdout)");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Config-driven end-to-end run");
  pipe->add_option("--config", config_path)->required();
  std::string out_dir;
  pipe->add_option("--out", out_dir, "Override output_dir");

  // synth
  int n = 117;
  std::string spec_out;
  auto* synth = app.add_subcommand("synth", "Synthetic corpus with a known monotone score function");
  synth->add_option("--dimension", dim)->required();
  synth->add_option("--n", n);
  synth->add_option("--seed", seed)->required();
  synth->add_option("--out", out, "Dataset CSV (default stdout)");
  synth->add_option("--spec-out", spec_out, "Write the generator specification JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }

  try {
    if (*stats) {
      const auto d = iqa::load_dataset(data_path, iqa::builtin_schema(dimension_arg(dim), {total_rttr}));
      json features = json::object();
      for (std::size_t j = 0; j < d.schema.size(); ++j) {
        const auto col = d.column(j);
        features[d.schema.features[j].name] = iqa::moments_to_json(iqa::descriptive_stats(col));
      }
      const auto sc = d.scores();
      emit_json(out, {{"dimension", std::string(iqa::to_string(d.schema.dimension))},
                      {"n", d.size()},
                      {"score", iqa::moments_to_json(iqa::descriptive_stats(sc))},
                      {"features", features}});
    } else if (*ex_flu) {
      const auto source = silences == "from-audio" ? iqa::extract::SilenceSource::Audio : iqa::extract::SilenceSource::Transcript;
      if (source == iqa::extract::SilenceSource::Audio && audio_dir.empty())
        throw iqa::Error("invalid_argument", "--silences from-audio needs --audio-dir");
      const auto d = iqa::extract::fluency_dataset(iqa::extract::load_transcripts(transcripts),
                                                   iqa::extract::load_score_map(scores), source, audio_dir);
      emit_text(out, iqa::dataset_to_csv(d));
    } else if (*ex_fid) {
      const auto d = iqa::extract::fidelity_dataset(iqa::fidelity::load_segment_pairs(segments),
                                                    iqa::fidelity::ingest_neural_metrics(metrics),
                                                    iqa::extract::load_score_map(scores));
      emit_text(out, iqa::dataset_to_csv(d));
    } else if (*ex_tlq) {
      const auto d = iqa::extract::tlqual_dataset(iqa::tlqual::load_segmentations(segmentations),
                                                  iqa::tlqual::load_collocations(collocations), errors_dir,
                                                  iqa::extract::load_score_map(scores), {min_conf, total_rttr});
      emit_text(out, iqa::dataset_to_csv(d));
    } else if (*aug) {
      const auto raw = iqa::load_dataset(raw_path, iqa::builtin_schema(dimension_arg(dim)));
      iqa::augment::CvaeConfig cfg;
      if (!config_path.empty()) cfg = iqa::augment::cvae_config_from_json(iqa::read_json_file(config_path));
      cfg.seed = seed;
      if (epochs) cfg.epochs = *epochs;
      const auto model = iqa::augment::train_cvae(raw, cfg);
      const auto augmented = iqa::augment::augment_dataset(raw, model, target_total, seed);
      iqa::save_dataset(augmented, out);
      if (!model_out.empty()) iqa::write_json_file(model_out, iqa::augment::cvae_to_json(model));
    } else if (*train) {
      const auto kind_v = iqa::models::parse_model_kind(model_kind);
      const auto d = iqa::load_dataset(data_path, iqa::builtin_schema(dimension_arg(dim), {total_rttr}));
      const auto grid = grid_path.empty() ? iqa::models::default_grid(kind_v)
                                          : iqa::models::grid_from_json(kind_v, iqa::read_json_file(grid_path));
      iqa::models::ProtocolOptions options;
      options.k = k;
      options.test_fraction = test_fraction;
      options.scaler_mode = iqa::parse_scaler_mode(scaler_mode);
      auto d_tagged = d;
      for (const auto& s : d.samples)
        if (s.id.rfind("syn-", 0) == 0) d_tagged.provenance = iqa::Provenance::Augmented;
      const auto result = iqa::models::run_training_protocol(d_tagged, grid, seed, options);
      json mj = iqa::models::model_to_json(result.model);
      mj["provenance"] = std::string(iqa::to_string(d_tagged.provenance));
      mj["scaler_mode"] = scaler_mode;
      mj["grid_search"] = iqa::models::grid_result_to_json(result.grid);
      iqa::write_json_file(out, mj);
      if (!report_out.empty()) iqa::write_json_file(report_out, iqa::eval::report_to_json(result.report));
    } else if (*evaluate) {
      const json mj = iqa::read_json_file(model_path);
      const auto model = iqa::models::model_from_json(mj);
      const auto test = iqa::load_dataset(test_path, iqa::models::schema_of(model));
      iqa::eval::ProvenanceTags tags;
      tags.data = mj.value("provenance", std::string("raw"));
      tags.seed = mj.value("seed", std::uint64_t{0});
      tags.scaler_mode = mj.value("scaler_mode", std::string("fit-on-train-only"));
      tags.model = std::string(iqa::models::to_string(iqa::models::kind_of(model)));
      tags.dimension = std::string(iqa::to_string(iqa::models::schema_of(model).dimension));
      const auto pred = iqa::models::predict_all(model, test);
      emit_json(out, iqa::eval::report_to_json(iqa::eval::evaluate(pred, test.scores(), tags)));
    } else if (*explain) {
      const auto model = load_model(model_path);
      const auto& schema = iqa::models::schema_of(model);
      const auto data = iqa::load_dataset(data_path, schema);
      const auto bg_data = background_path.empty() ? data : iqa::load_dataset(background_path, schema);
      const auto background = iqa::explain::make_background(bg_data, background_cap, seed);
      iqa::explain::ExplainOptions options;
      options.n_permutations = permutations;
      options.seed = seed;
      if (!method.empty()) options.method = iqa::explain::parse_method(method);
      if (scope == "global") {
        const auto g = iqa::explain::global_importance(model, data, background, options);
        std::optional<iqa::explain::BootstrapCi> ci;
        if (bootstrap > 0) ci = iqa::explain::bootstrap_ci(g.phi, g.features, bootstrap, seed);
        emit_json(out, iqa::explain::global_to_json(g, ci ? &*ci : nullptr));
      } else {
        if (sample_id.empty()) throw iqa::Error("invalid_argument", "local explanations need --sample-id");
        const auto it = std::find_if(data.samples.begin(), data.samples.end(),
                                     [&](const iqa::Sample& s) { return s.id == sample_id; });
        if (it == data.samples.end())
          throw iqa::Error("missing", fmt::format("sample '{}' not found in {}", sample_id, data_path));
        auto local = iqa::explain::local_explanation(model, *it, background, options);
        if (bootstrap > 0) {
          const auto ci = iqa::explain::bootstrap_ci(model, data, background, bootstrap, seed, options);
          for (auto& c : local.contributions) {
            const std::size_t j = *schema.index_of(c.feature);
            c.ci = std::pair{ci.lower[j], ci.upper[j]};
          }
        }
        emit_json(out, iqa::explain::explanation_to_json(local));
      }
    } else if (*plot) {
      std::string svg;
      if (kind == "histograms") {
        if (fs::path(input).extension() == ".json") {
          std::vector<iqa::plot::HistogramPanel> panels;
          for (const auto& p : iqa::read_json_file(input).at("panels"))
            panels.push_back({p.at("title").get<std::string>(), p.at("scores").get<std::vector<double>>()});
          svg = iqa::plot::score_histograms_svg(panels);
        } else {
          if (dim.empty()) throw iqa::Error("invalid_argument", "histograms from a CSV need --dimension");
          const auto d = iqa::load_dataset(input, iqa::builtin_schema(dimension_arg(dim)));
          svg = iqa::plot::score_histograms_svg(iqa::plot::augmentation_panels(d));
        }
      } else {
        const json report = iqa::read_json_file(input);
        if (kind == "bar") svg = iqa::plot::importance_bar_svg(report);
        else if (kind == "beeswarm") svg = iqa::plot::beeswarm_svg(report);
        else if (kind == "waterfall") svg = iqa::plot::waterfall_svg(report);
        else svg = iqa::plot::force_svg(report);
      }
      emit_text(out, svg);
    } else if (*pipe) {
      auto cfg = iqa::pipeline::load_config(config_path);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      const auto manifest = iqa::pipeline::run_pipeline(cfg);
      std::cout << fmt::format("wrote {} artifacts to {}\n", manifest.artifacts().size(), cfg.output_dir);
    } else if (*synth) {
      const auto spec = iqa::synth::generator_spec(dimension_arg(dim));
      emit_text(out, iqa::dataset_to_csv(iqa::synth::generate_synthetic_corpus(spec, n, seed)));
      if (!spec_out.empty()) iqa::write_json_file(spec_out, iqa::synth::generator_spec_to_json(spec));
    }
  } catch (const iqa::Error& e) {
    report_error(e.code(), e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    report_error("parse", e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error("io", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 0;
}
