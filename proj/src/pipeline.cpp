#include "iqa/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <functional>

#include <fmt/format.h>

#include "iqa/error.hpp"
#include "iqa/eval.hpp"
#include "iqa/extract.hpp"
#include "iqa/io.hpp"
#include "iqa/plot.hpp"
#include "iqa/protocol.hpp"
#include "iqa/shap.hpp"
#include "iqa/synth.hpp"

namespace iqa::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const char* tool_version() { return "iqa 0.1.0"; }

namespace {

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

std::uint64_t required_seed(const json& block, const std::string& where) {
  if (!block.contains("seed") || block.at("seed").is_null())
    throw Error("schema", fmt::format("{}.seed is required", where));
  return block.at("seed").get<std::uint64_t>();
}

json opt_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

PipelineConfig config_from_json(const json& j) {
  try {
    PipelineConfig c;
    c.dimension = parse_dimension(j.at("dimension").get<std::string>());
    c.output_dir = j.value("output_dir", c.output_dir);
    c.scaler_mode = parse_scaler_mode(j.value("scaler_mode", std::string(to_string(c.scaler_mode))));
    c.plots = j.value("plots", c.plots);

    const json in = j.value("inputs", json::object());
    c.inputs.dataset = opt_string(in, "dataset");
    if (in.contains("synthetic") && !in.at("synthetic").is_null()) {
      const auto& s = in.at("synthetic");
      c.inputs.synthetic = SyntheticInput{s.value("n", 117), required_seed(s, "inputs.synthetic")};
    }
    c.inputs.scores = opt_string(in, "scores");
    c.inputs.transcripts = opt_string(in, "transcripts");
    c.inputs.audio_dir = opt_string(in, "audio_dir");
    c.inputs.segments = opt_string(in, "segments");
    c.inputs.neural_metrics = opt_string(in, "neural_metrics");
    c.inputs.segmentations = opt_string(in, "segmentations");
    c.inputs.collocations = opt_string(in, "collocations");
    c.inputs.errors_dir = opt_string(in, "errors_dir");
    c.inputs.min_confidence = in.value("min_confidence", 0.0);
    c.inputs.include_total_rttr = in.value("include_total_rttr", false);

    const json aug = j.value("augmentation", json::object());
    c.augmentation.enabled = aug.value("enabled", true);
    if (c.augmentation.enabled) {
      c.augmentation.seed = required_seed(aug, "augmentation");
    } else {
      c.augmentation.seed = aug.value("seed", std::uint64_t{0});
    }
    c.augmentation.target_total = aug.value("target_total", c.augmentation.target_total);
    json cvae = aug.value("cvae", json::object());
    if (!cvae.contains("seed")) cvae["seed"] = c.augmentation.seed;
    c.augmentation.cvae = augment::cvae_config_from_json(cvae);

    const json& model = j.at("model");
    c.model.kind = models::parse_model_kind(model.at("kind").get<std::string>());
    c.model.seed = required_seed(model, "model");
    if (model.contains("grid") && !model.at("grid").is_null())
      c.model.grid = models::grid_from_json(c.model.kind, model.at("grid"));

    const json ev = j.value("evaluation", json::object());
    c.evaluation.test_fraction = ev.value("test_fraction", c.evaluation.test_fraction);
    c.evaluation.k = ev.value("k", c.evaluation.k);

    const json ex = j.value("explanation", json::object());
    c.explanation.enabled = ex.value("enabled", true);
    c.explanation.seed = c.explanation.enabled ? required_seed(ex, "explanation") : ex.value("seed", std::uint64_t{0});
    c.explanation.bootstrap = ex.value("bootstrap", c.explanation.bootstrap);
    c.explanation.background_cap = ex.value("background_cap", c.explanation.background_cap);
    c.explanation.n_permutations = ex.value("n_permutations", c.explanation.n_permutations);
    c.explanation.local_samples = ex.value("local_samples", std::vector<std::string>{});
    validate_config(c);
    return c;
  } catch (const json::exception& e) {
    throw Error("parse", fmt::format("malformed pipeline config: {}", e.what()));
  }
}

json config_to_json(const PipelineConfig& c) {
  json inputs = {{"dataset", opt_json(c.inputs.dataset)},
                 {"synthetic", c.inputs.synthetic ? json{{"n", c.inputs.synthetic->n}, {"seed", c.inputs.synthetic->seed}}
                                                  : json(nullptr)},
                 {"scores", opt_json(c.inputs.scores)},
                 {"transcripts", opt_json(c.inputs.transcripts)},
                 {"audio_dir", opt_json(c.inputs.audio_dir)},
                 {"segments", opt_json(c.inputs.segments)},
                 {"neural_metrics", opt_json(c.inputs.neural_metrics)},
                 {"segmentations", opt_json(c.inputs.segmentations)},
                 {"collocations", opt_json(c.inputs.collocations)},
                 {"errors_dir", opt_json(c.inputs.errors_dir)},
                 {"min_confidence", c.inputs.min_confidence},
                 {"include_total_rttr", c.inputs.include_total_rttr}};
  return {{"dimension", std::string(to_string(c.dimension))},
          {"output_dir", c.output_dir},
          {"scaler_mode", std::string(to_string(c.scaler_mode))},
          {"plots", c.plots},
          {"inputs", inputs},
          {"augmentation",
           {{"enabled", c.augmentation.enabled},
            {"target_total", c.augmentation.target_total},
            {"seed", c.augmentation.seed},
            {"cvae", augment::cvae_config_to_json(c.augmentation.cvae)}}},
          {"model",
           {{"kind", std::string(to_string(c.model.kind))},
            {"seed", c.model.seed},
            {"grid", c.model.grid ? models::grid_to_json(*c.model.grid) : json(nullptr)}}},
          {"evaluation", {{"test_fraction", c.evaluation.test_fraction}, {"k", c.evaluation.k}}},
          {"explanation",
           {{"enabled", c.explanation.enabled},
            {"seed", c.explanation.seed},
            {"bootstrap", c.explanation.bootstrap},
            {"background_cap", c.explanation.background_cap},
            {"n_permutations", c.explanation.n_permutations},
            {"local_samples", c.explanation.local_samples}}}};
}

void validate_config(const PipelineConfig& c) {
  const auto& in = c.inputs;
  const bool extraction = in.transcripts || in.segments || in.neural_metrics || in.segmentations ||
                          in.collocations || in.errors_dir;
  const int sources = (in.dataset ? 1 : 0) + (in.synthetic ? 1 : 0) + (extraction ? 1 : 0);
  if (sources != 1)
    throw Error("schema", "inputs must name exactly one source: dataset, synthetic, or extraction inputs");
  if (extraction) {
    if (!in.scores) throw Error("schema", "extraction inputs need inputs.scores");
    switch (c.dimension) {
      case Dimension::FluDel:
        if (!in.transcripts) throw Error("schema", "FluDel extraction needs inputs.transcripts");
        break;
      case Dimension::InfoCom:
        if (!in.segments || !in.neural_metrics)
          throw Error("schema", "InfoCom extraction needs inputs.segments and inputs.neural_metrics");
        break;
      case Dimension::TLQual:
        if (!in.segmentations || !in.collocations || !in.errors_dir)
          throw Error("schema", "TLQual extraction needs inputs.segmentations, inputs.collocations and inputs.errors_dir");
        break;
    }
  }
  if (c.augmentation.enabled && c.augmentation.target_total < 2)
    throw Error("schema", "augmentation.target_total must be at least 2");
  if (!(c.evaluation.test_fraction > 0.0 && c.evaluation.test_fraction < 1.0))
    throw Error("schema", "evaluation.test_fraction must lie in (0, 1)");
  if (c.evaluation.k < 2) throw Error("schema", "evaluation.k must be at least 2");
  if (c.explanation.enabled && c.explanation.bootstrap != 0 && c.explanation.bootstrap < 2)
    throw Error("schema", "explanation.bootstrap must be 0 or at least 2");
  if (c.explanation.background_cap == 0) throw Error("schema", "explanation.background_cap must be positive");
  if (c.output_dir.empty()) throw Error("schema", "output_dir is empty");
  c.augmentation.cvae.validate();
}

PipelineConfig load_config(const fs::path& path) {
  PipelineConfig c = config_from_json(read_json_file(path));
  const fs::path base = path.parent_path();
  auto resolve = [&](std::optional<std::string>& p) {
    if (p && fs::path(*p).is_relative()) p = (base / *p).lexically_normal().string();
  };
  resolve(c.inputs.dataset);
  resolve(c.inputs.scores);
  resolve(c.inputs.transcripts);
  resolve(c.inputs.audio_dir);
  resolve(c.inputs.segments);
  resolve(c.inputs.neural_metrics);
  resolve(c.inputs.segmentations);
  resolve(c.inputs.collocations);
  resolve(c.inputs.errors_dir);
  std::optional<std::string> out = c.output_dir;
  resolve(out);
  c.output_dir = *out;
  return c;
}

std::vector<FileDigest> RunManifest::artifacts() const {
  std::vector<FileDigest> out;
  for (const auto& s : stages) out.insert(out.end(), s.outputs.begin(), s.outputs.end());
  return out;
}

namespace {

json digests_to_json(const std::vector<FileDigest>& files) {
  json a = json::array();
  for (const auto& f : files) a.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return a;
}

}  // namespace

json manifest_to_json(const RunManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages)
    stages.push_back({{"name", s.name},
                      {"skipped", s.skipped},
                      {"seeds", s.seeds},
                      {"inputs", digests_to_json(s.inputs)},
                      {"outputs", digests_to_json(s.outputs)},
                      {"wall_clock_s", s.wall_clock_s}});
  return {{"tool_version", m.tool_version},
          {"config_digest", m.config_digest},
          {"provenance", m.provenance},
          {"stages", stages},
          {"artifacts", digests_to_json(m.artifacts())}};
}

namespace {

class OutputLock {
 public:
  explicit OutputLock(fs::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw Error("locked", fmt::format("{} exists; another run may be using this output directory", path_.string()));
    std::fputs(tool_version(), f);
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

std::string file_safe(std::string_view id) {
  std::string out;
  for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out;
}

FileDigest digest_of(const fs::path& path, const std::string& label) {
  return {label, sha256_file(path), fs::file_size(path)};
}

class Run {
 public:
  Run(const PipelineConfig& config) : config_(config), out_(config.output_dir) {}

  RunManifest execute() {
    fs::create_directories(out_);
    OutputLock lock(out_ / kLockName);
    try {
      stage("extract", [&](StageRecord& r) { extract(r); });
      stage("augment", [&](StageRecord& r) { augment(r); });
      stage("train", [&](StageRecord& r) { train(r); });
      stage("evaluate", [&](StageRecord& r) { evaluate(r); });
      stage("explain", [&](StageRecord& r) { explain(r); });
      stage("plot", [&](StageRecord& r) { plot(r); });
      manifest_.tool_version = tool_version();
      manifest_.config_digest = sha256_hex(config_to_json(config_).dump());
      manifest_.provenance = std::string(to_string(data_.provenance));
      write_json_file(out_ / kManifestName, manifest_to_json(manifest_));
    } catch (...) {
      cleanup();
      throw;
    }
    return manifest_;
  }

 private:
  void stage(const std::string& name, const std::function<void(StageRecord&)>& body) {
    StageRecord rec;
    rec.name = name;
    const auto start = std::chrono::steady_clock::now();
    current_ = &rec;
    try {
      body(rec);
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("stage '{}': {}", name, e.what()));
    } catch (const fs::filesystem_error& e) {
      throw Error("io", fmt::format("stage '{}': {}", name, e.what()));
    } catch (const std::exception& e) {
      throw Error("internal", fmt::format("stage '{}': {}", name, e.what()));
    }
    current_ = nullptr;
    rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    manifest_.stages.push_back(std::move(rec));
  }

  void input(const std::optional<std::string>& p) {
    if (!p) return;
    if (fs::is_directory(*p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(*p))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) current_->inputs.push_back(digest_of(f, f.string()));
    } else {
      current_->inputs.push_back(digest_of(*p, *p));
    }
  }

  void own_input(const std::string& name) { current_->inputs.push_back(digest_of(out_ / name, name)); }

  void emit(const std::string& name, std::string_view content) {
    const fs::path path = out_ / name;
    written_.push_back(path);
    write_text_file(path, content);
    current_->outputs.push_back(digest_of(path, name));
  }
  void emit_json(const std::string& name, const json& j) { emit(name, j.dump(2) + "\n"); }

  void cleanup() {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    fs::remove(out_ / kManifestName, ec);
  }

  void extract(StageRecord& r) {
    const auto& in = config_.inputs;
    if (in.dataset) {
      r.skipped = true;
      input(in.dataset);
      data_ = load_dataset(*in.dataset, builtin_schema(config_.dimension, SchemaOptions{in.include_total_rttr}));
      if (std::any_of(data_.samples.begin(), data_.samples.end(),
                      [](const Sample& s) { return s.id.rfind("syn-", 0) == 0; }))
        data_.provenance = Provenance::Augmented;
      return;
    }
    if (in.synthetic) {
      r.seeds["synthetic"] = in.synthetic->seed;
      data_ = synth::generate_synthetic_corpus(config_.dimension, in.synthetic->n, in.synthetic->seed);
      emit("raw.csv", dataset_to_csv(data_));
      return;
    }
    input(in.scores);
    const auto scores = extract::load_score_map(*in.scores);
    switch (config_.dimension) {
      case Dimension::FluDel: {
        input(in.transcripts);
        input(in.audio_dir);
        const auto source = in.audio_dir ? extract::SilenceSource::Audio : extract::SilenceSource::Transcript;
        data_ = extract::fluency_dataset(extract::load_transcripts(*in.transcripts), scores, source,
                                         in.audio_dir ? fs::path(*in.audio_dir) : fs::path{});
        break;
      }
      case Dimension::InfoCom:
        input(in.segments);
        input(in.neural_metrics);
        data_ = extract::fidelity_dataset(fidelity::load_segment_pairs(*in.segments),
                                          fidelity::ingest_neural_metrics(*in.neural_metrics), scores);
        break;
      case Dimension::TLQual:
        input(in.segmentations);
        input(in.collocations);
        input(in.errors_dir);
        data_ = extract::tlqual_dataset(tlqual::load_segmentations(*in.segmentations),
                                        tlqual::load_collocations(*in.collocations), *in.errors_dir, scores,
                                        {in.min_confidence, in.include_total_rttr});
        break;
    }
    emit("raw.csv", dataset_to_csv(data_));
  }

  void augment(StageRecord& r) {
    const auto& a = config_.augmentation;
    if (!a.enabled) {
      r.skipped = true;
      return;
    }
    r.seeds["cvae"] = a.cvae.seed;
    r.seeds["generation"] = a.seed;
    const auto model = augment::train_cvae(data_, a.cvae);
    data_ = augment::augment_dataset(data_, model, a.target_total, a.seed);
    emit_json("cvae.json", augment::cvae_to_json(model));
    emit("aug.csv", dataset_to_csv(data_));
    emit("score-histograms.json", [&] {
      json panels = json::array();
      for (const auto& p : plot::augmentation_panels(data_)) panels.push_back({{"title", p.title}, {"scores", p.scores}});
      return json{{"panels", panels}}.dump(2) + "\n";
    }());
  }

  void train(StageRecord& r) {
    r.seeds["protocol"] = config_.model.seed;
    const auto grid = config_.model.grid.value_or(models::default_grid(config_.model.kind));
    models::ProtocolOptions options;
    options.test_fraction = config_.evaluation.test_fraction;
    options.k = config_.evaluation.k;
    options.scaler_mode = config_.scaler_mode;
    result_ = models::run_training_protocol(data_, grid, config_.model.seed, options);
    emit("train.csv", dataset_to_csv(result_->split.train));
    emit("test.csv", dataset_to_csv(result_->split.test));
    emit_json("grid.json", models::grid_result_to_json(result_->grid));
    json model = models::model_to_json(result_->model);
    model["provenance"] = std::string(to_string(data_.provenance));
    model["scaler_mode"] = std::string(to_string(config_.scaler_mode));
    emit_json("model.json", model);
  }

  void evaluate(StageRecord&) {
    own_input("model.json");
    own_input("test.csv");
    std::string csv = "sample_id,actual,predicted\n";
    for (std::size_t i = 0; i < result_->split.test.size(); ++i)
      csv += fmt::format("{},{},{}\n", result_->split.test.samples[i].id, format_double(result_->split.test.samples[i].score),
                         format_double(result_->test_predictions[i]));
    emit("predictions.csv", csv);
    emit_json("eval.json", eval::report_to_json(result_->report));
  }

  void explain(StageRecord& r) {
    const auto& ex = config_.explanation;
    if (!ex.enabled) {
      r.skipped = true;
      return;
    }
    r.seeds["explanation"] = ex.seed;
    own_input("model.json");
    const auto background = explain::make_background(result_->split.train, ex.background_cap, ex.seed);
    explain::ExplainOptions options;
    options.n_permutations = ex.n_permutations;
    options.seed = ex.seed;
    const auto global = explain::global_importance(result_->model, data_, background, options);
    std::optional<explain::BootstrapCi> ci;
    if (ex.bootstrap > 0) ci = explain::bootstrap_ci(global.phi, global.features, ex.bootstrap, ex.seed);
    global_json_ = explain::global_to_json(global, ci ? &*ci : nullptr);
    emit_json("shap-global.json", global_json_);

    std::vector<std::string> ids = ex.local_samples;
    if (ids.empty()) ids.push_back(result_->split.test.samples.front().id);
    const auto& schema = models::schema_of(result_->model);
    for (const auto& id : ids) {
      const auto it = std::find_if(data_.samples.begin(), data_.samples.end(), [&](const Sample& s) { return s.id == id; });
      if (it == data_.samples.end()) throw Error("missing", fmt::format("local explanation sample '{}' not in the data", id));
      const std::size_t row = static_cast<std::size_t>(it - data_.samples.begin());
      explain::ShapExplanation e{id, global.method, global.base, global.predictions[row], global.phi[row], std::nullopt};
      auto local = explain::make_local(e, schema, it->features);
      if (ci) {
        for (auto& c : local.contributions) {
          const std::size_t j = *schema.index_of(c.feature);
          c.ci = std::pair{ci->lower[j], ci->upper[j]};
        }
      }
      local_json_.emplace_back(id, explain::explanation_to_json(local));
      emit_json(fmt::format("shap-local-{}.json", file_safe(id)), local_json_.back().second);
    }
  }

  void plot(StageRecord& r) {
    if (!config_.plots) {
      r.skipped = true;
      return;
    }
    if (config_.augmentation.enabled) emit("score-histograms.svg", plot::score_histograms_svg(plot::augmentation_panels(data_)));
    if (!global_json_.is_null()) {
      emit("shap-importance.svg", plot::importance_bar_svg(global_json_));
      emit("shap-beeswarm.svg", plot::beeswarm_svg(global_json_));
    }
    for (const auto& [id, j] : local_json_) {
      emit(fmt::format("shap-waterfall-{}.svg", file_safe(id)), plot::waterfall_svg(j));
      emit(fmt::format("shap-force-{}.svg", file_safe(id)), plot::force_svg(j));
    }
  }

  const PipelineConfig& config_;
  fs::path out_;
  RunManifest manifest_;
  StageRecord* current_ = nullptr;
  std::vector<fs::path> written_;
  Dataset data_;
  std::optional<models::ProtocolResult> result_;
  json global_json_;
  std::vector<std::pair<std::string, json>> local_json_;
};

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config) {
  validate_config(config);
  Run run(config);
  return run.execute();
}

}  // namespace iqa::pipeline
