// her2score: tile slides, train the two-level pipeline, score slides and
// run leave-one-patient-out evaluations.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "her2/error.hpp"
#include "her2/evaluation.hpp"
#include "her2/fileutil.hpp"
#include "her2/image_io.hpp"
#include "her2/manifest.hpp"
#include "her2/model_io.hpp"
#include "her2/parallel.hpp"
#include "her2/run_config.hpp"
#include "her2/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace her2;

namespace {

constexpr const char* kImageModelFile = "image_model.json";
constexpr const char* kPatientModelFile = "patient_model.json";

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string output;
  std::vector<std::string> overrides;
};

struct TissueFlags {
  std::optional<double> background_luma;
  std::optional<double> max_background;
  std::optional<double> min_stddev;
};

RunConfig resolve_config(const GlobalOptions& g, const TissueFlags& t = {}) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = parse_run_config(read_file(g.config_path));
  for (const std::string& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.pipeline.seed = *g.seed;
  if (g.threads) cfg.pipeline.threads = *g.threads;
  if (!g.output.empty()) cfg.output_dir = g.output;
  if (t.background_luma) cfg.tissue.background_luma_threshold = *t.background_luma;
  if (t.max_background) cfg.tissue.max_background_fraction = *t.max_background;
  if (t.min_stddev) cfg.tissue.min_luma_stddev = *t.min_stddev;
  cfg.pipeline.threads = resolve_threads(cfg.pipeline.threads);
  cfg.tissue.validate();
  cfg.pipeline.validate();
  return cfg;
}

void print_reproduce(const RunConfig& cfg, const std::string& command) {
  std::printf("reproduce: her2score %s (config %s, seed %llu)\n", command.c_str(),
              config_hash(cfg).c_str(), static_cast<unsigned long long>(cfg.pipeline.seed));
}

void write_json(const fs::path& path, const json& doc) {
  write_file_atomic(path, doc.dump(2) + "\n");
}

json tissue_to_json(const TissueFilterConfig& t) {
  return {{"background_luma_threshold", t.background_luma_threshold},
          {"max_background_fraction", t.max_background_fraction},
          {"min_luma_stddev", t.min_luma_stddev}};
}

TissueFilterConfig tissue_from_json(const json& j) {
  TissueFilterConfig t;
  t.background_luma_threshold = j.at("background_luma_threshold").get<double>();
  t.max_background_fraction = j.at("max_background_fraction").get<double>();
  t.min_luma_stddev = j.at("min_luma_stddev").get<double>();
  t.validate();
  return t;
}

// ---- tile -----------------------------------------------------------------

int cmd_tile(const GlobalOptions& g, const TissueFlags& t, const std::string& input) {
  const RunConfig cfg = resolve_config(g, t);
  const fs::path out_dir = cfg.output_dir;
  const auto images = list_images(input);

  json slides = json::array();
  for (const fs::path& path : images) {
    const std::string slide_id = path.stem().string();
    const RasterImage slide = load_image(path);
    TilingSummary summary;
    const auto kept =
        tile_and_filter(slide, slide_id, cfg.tissue, cfg.pipeline.threads, &summary);
    for (const RasterPatch& p : kept) save_png(out_dir / slide_id / patch_file_name(p), p.data);
    slides.push_back({{"slide_id", slide_id},
                      {"source", path.filename().string()},
                      {"tiles", summary.tiles},
                      {"kept", summary.kept},
                      {"rejected", summary.tiles - summary.kept}});
    std::printf("%s: %zu tiles, %zu kept, %zu rejected\n", slide_id.c_str(), summary.tiles,
                summary.kept, summary.tiles - summary.kept);
  }
  fs::create_directories(out_dir);
  write_json(out_dir / "tiling_report.json",
             {{"tile_size", kPatchSize}, {"tissue", tissue_to_json(cfg.tissue)}, {"slides", slides}});
  print_reproduce(cfg, "tile --input " + input);
  return 0;
}

// ---- train ----------------------------------------------------------------

json model_metadata(const RunConfig& cfg, const std::string& role) {
  const LabelSpace labels = cfg.pipeline.labels();
  return {{"role", role},
          {"pipeline", pipeline_config_to_json(cfg.pipeline)},
          {"tissue", tissue_to_json(cfg.tissue)},
          {"config_hash", config_hash(cfg)},
          {"patch_classes", labels.patch_class_names()},
          {"scores", labels.score_names()}};
}

json log_to_json(const TrainingLog& log) {
  return log.grid ? grid_search_to_json(*log.grid) : json(nullptr);
}

int cmd_train(const GlobalOptions& g, std::string manifest_path, std::string model_dir) {
  RunConfig cfg = resolve_config(g);
  if (manifest_path.empty()) manifest_path = cfg.manifest;
  if (manifest_path.empty()) throw InputError("train needs --manifest or a manifest config key");
  if (!model_dir.empty()) cfg.model_dir = model_dir;

  const Manifest manifest = load_manifest(manifest_path);
  require_ground_truth(manifest);
  const auto cases = load_cases(manifest, cfg.pipeline.labels(), cfg.tissue, cfg.pipeline.threads);
  const PipelineModels models = train_pipeline(cases, cfg.pipeline);

  const fs::path dir = cfg.model_dir;
  fs::create_directories(dir);
  save_model(dir / kImageModelFile, models.image, model_metadata(cfg, "image"));
  save_model(dir / kPatientModelFile, models.patient, model_metadata(cfg, "patient"));
  std::size_t curated = 0;
  for (const CaseRecord& c : cases) curated += c.curated.size();
  write_json(dir / "training_log.json", {{"label", cfg.pipeline.label()},
                                         {"slides", cases.size()},
                                         {"curated_patches", curated},
                                         {"image_grid_search", log_to_json(models.image_log)},
                                         {"patient_grid_search", log_to_json(models.patient_log)}});
  std::printf("trained %s on %zu slides (%zu curated patches); models in %s\n",
              cfg.pipeline.label().c_str(), cases.size(), curated, dir.string().c_str());
  print_reproduce(cfg, "train --manifest " + manifest_path);
  return 0;
}

// ---- score ----------------------------------------------------------------

std::string clinical_name(const LabelSpace& labels, int score) {
  if (score == labels.positive_score()) return "positive";
  if (score == labels.equivocal_score()) return "equivocal";
  return "negative";
}

int cmd_score(const GlobalOptions& g, std::string model_dir, const std::vector<std::string>& slides,
              const std::vector<std::string>& patch_dirs, std::string report_path) {
  RunConfig cfg = resolve_config(g);
  if (!model_dir.empty()) cfg.model_dir = model_dir;
  if (slides.empty() && patch_dirs.empty()) throw InputError("score needs --slide or --patch-dir");

  const fs::path dir = cfg.model_dir;
  const ModelFile image = load_model(dir / kImageModelFile);
  const ModelFile patient = load_model(dir / kPatientModelFile);
  if (image.metadata.value("pipeline", json()) != patient.metadata.value("pipeline", json())) {
    throw InputError("image and patient models were trained with different pipelines");
  }
  PipelineConfig pipeline = pipeline_config_from_json(image.metadata.at("pipeline"));
  pipeline.threads = cfg.pipeline.threads;
  const TissueFilterConfig tissue = tissue_from_json(image.metadata.at("tissue"));
  const LabelSpace labels = pipeline.labels();
  const json model_ids = {
      {"image", fnv1a_hex(read_file(dir / kImageModelFile))},
      {"patient", fnv1a_hex(read_file(dir / kPatientModelFile))}};

  std::vector<std::pair<CaseRecord, std::string>> inputs;
  for (const std::string& s : slides) {
    CaseRecord c;
    c.slide_id = fs::path(s).stem().string();
    c.patches = tile_and_filter(load_image(s), c.slide_id, tissue, pipeline.threads);
    inputs.emplace_back(std::move(c), s);
  }
  for (const std::string& d : patch_dirs) {
    CaseRecord c;
    c.slide_id = fs::path(d).lexically_normal().filename().string();
    if (c.slide_id.empty()) c.slide_id = fs::path(d).lexically_normal().parent_path().filename().string();
    for (const fs::path& p : list_images(d)) {
      c.patches.push_back({c.slide_id, 0, 0, load_image(p)});
    }
    inputs.emplace_back(std::move(c), d);
  }

  json report = json::array();
  std::size_t unscorable = 0;
  for (const auto& [c, source] : inputs) {
    json entry = {{"slide_id", c.slide_id}, {"source", source}, {"model_ids", model_ids}};
    try {
      const SlideScore s = score_wsi_detailed(image.model, patient.model, c, pipeline);
      entry["status"] = "scored";
      entry["score"] = labels.score_name(s.score);
      entry["score_index"] = s.score;
      entry["clinical"] = clinical_name(labels, s.score);
      entry["patch_counts"] = {{"classes", labels.patch_class_names()}, {"counts", s.counts.counts}};
      std::vector<std::string> occ_classes = labels.patch_class_names();
      if (!pipeline.include_noise_fraction) occ_classes.pop_back();
      entry["occurrence_vector"] = {{"classes", occ_classes}, {"fractions", s.occurrence.fractions}};
      entry["total_patches"] = s.counts.total();
      std::printf("%s: %s (%s)\n", c.slide_id.c_str(), labels.score_name(s.score).c_str(),
                  clinical_name(labels, s.score).c_str());
    } catch (const DataError& e) {
      ++unscorable;
      entry["status"] = "unscorable";
      entry["reason"] = e.what();
      entry["total_patches"] = c.patches.size();
      std::printf("%s: unscorable (%s)\n", c.slide_id.c_str(), e.what());
    }
    report.push_back(entry);
  }

  const fs::path out =
      report_path.empty() ? fs::path(cfg.output_dir) / "score_report.json" : fs::path(report_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json(out, {{"label", pipeline.label()}, {"slides", report}});
  print_reproduce(cfg, "score --models " + dir.string());
  return unscorable > 0 ? static_cast<int>(ExitCode::kDataError) : 0;
}

// ---- evaluate -------------------------------------------------------------

struct SyntheticFlags {
  bool enabled = false;
  int cases_per_score = 10;
  int patches_per_slide = 40;
  int curated_per_slide = 10;
  int patch_size = kPatchSize;
  double noise_rate = 0.10;
  double heterogeneity = 0.15;
};

std::string confusion_csv(const ConfusionMatrix& m) {
  std::string out = "truth\\predicted";
  for (const auto& n : m.class_names()) out += "," + n;
  out += "\n";
  for (int r = 0; r < static_cast<int>(m.size()); ++r) {
    out += m.class_names()[static_cast<std::size_t>(r)];
    for (int c = 0; c < static_cast<int>(m.size()); ++c) out += "," + std::to_string(m.at(r, c));
    out += "\n";
  }
  return out;
}

int cmd_evaluate(const GlobalOptions& g, std::string manifest_path, const SyntheticFlags& sf,
                 bool sweep) {
  RunConfig cfg = resolve_config(g);
  std::vector<CaseRecord> cases;
  json source;
  std::string command = "evaluate";
  if (sf.enabled) {
    SyntheticCohortSpec spec = SyntheticCohortSpec::defaults(cfg.pipeline.class_mode);
    spec.cases_per_score = sf.cases_per_score;
    spec.patches_per_slide = sf.patches_per_slide;
    spec.curated_per_slide = sf.curated_per_slide;
    spec.patch_size = sf.patch_size;
    spec.noise_rate = sf.noise_rate;
    spec.heterogeneity = sf.heterogeneity;
    spec.seed = cfg.pipeline.seed;
    cases = cohort_records(generate_synthetic_cohort(spec));
    source = {{"synthetic", true},
              {"cases_per_score", spec.cases_per_score},
              {"patches_per_slide", spec.patches_per_slide},
              {"curated_per_slide", spec.curated_per_slide},
              {"patch_size", spec.patch_size},
              {"noise_rate", spec.noise_rate},
              {"heterogeneity", spec.heterogeneity},
              {"seed", spec.seed}};
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  " --synthetic --cases-per-score %d --patches-per-slide %d --curated-per-slide "
                  "%d --patch-size %d --noise-rate %.10g --heterogeneity %.10g",
                  sf.cases_per_score, sf.patches_per_slide, sf.curated_per_slide, sf.patch_size,
                  sf.noise_rate, sf.heterogeneity);
    command += buf;
  } else {
    if (manifest_path.empty()) manifest_path = cfg.manifest;
    if (manifest_path.empty()) throw InputError("evaluate needs --manifest or --synthetic");
    const Manifest manifest = load_manifest(manifest_path);
    cases = load_cases(manifest, cfg.pipeline.labels(), cfg.tissue, cfg.pipeline.threads);
    source = {{"synthetic", false}, {"manifest", manifest_path}};
    command += " --manifest " + manifest_path;
  }
  if (sweep) command += " --sweep";

  const fs::path out = cfg.output_dir;
  fs::create_directories(out);

  std::vector<ResultEntry> entries;
  json results = json::array();
  auto run_one = [&](const PipelineConfig& pc, std::span<const CaseFeatures> features,
                     bool with_image_level) {
    if (with_image_level) {
      const ImageLopoResult img = run_image_lopo(cases, features, pc);
      entries.push_back({pc.descriptor, pc.image_classifier.kind, std::nullopt, img.accuracy});
    }
    LopoResult r = run_lopo(cases, features, pc);
    entries.push_back({pc.descriptor, pc.image_classifier.kind, pc.patient_classifier.kind, r.accuracy});
    for (const std::string& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("%s: accuracy %.2f%%", pc.label().c_str(), 100.0 * r.accuracy);
    if (r.sens_spec) {
      std::printf(", sensitivity %.4f, specificity %.4f", r.sens_spec->sensitivity,
                  r.sens_spec->specificity);
    }
    std::printf("\n");
    return r;
  };

  if (!sweep) {
    const auto features = extract_cohort_features(cases, cfg.pipeline);
    const LopoResult r = run_one(cfg.pipeline, features, true);
    json doc = lopo_to_json(r);
    doc["source"] = source;
    doc["config_hash"] = config_hash(cfg);
    write_json(out / "results.json", doc);
    write_file_atomic(out / "confusion_matrix.csv", confusion_csv(r.matrix));
  } else {
    constexpr ClassifierKind kKinds[] = {ClassifierKind::kSvm, ClassifierKind::kKnn,
                                         ClassifierKind::kMlp, ClassifierKind::kTree};
    for (DescriptorId d : kAllDescriptors) {
      PipelineConfig pc = cfg.pipeline;
      pc.descriptor = d;
      const auto features = extract_cohort_features(cases, pc);
      const bool colour = d == DescriptorId::kHsvHist || d == DescriptorId::kHsvMs ||
                          d == DescriptorId::kHsvRgb;
      for (ClassifierKind img : kKinds) {
        pc.image_classifier.kind = img;
        if (!colour) {
          const ImageLopoResult r = run_image_lopo(cases, features, pc);
          entries.push_back({d, img, std::nullopt, r.accuracy});
          continue;
        }
        bool first = true;
        for (ClassifierKind pat : kKinds) {
          pc.patient_classifier.kind = pat;
          json doc = lopo_to_json(run_one(pc, features, first));
          first = false;
          results.push_back(doc);
        }
      }
    }
    write_json(out / "results.json", {{"source", source},
                                      {"config_hash", config_hash(cfg)},
                                      {"results", results}});
  }

  const ReportTables tables = report_tables(entries);
  write_file_atomic(out / "image_table.csv", tables.image_csv);
  write_file_atomic(out / "patient_table.csv", tables.patient_csv);
  write_file_atomic(out / "tables.txt", "Image level accuracy (%)\n" + tables.image_text +
                                            "\nPatient level accuracy (%)\n" + tables.patient_text);
  write_file_atomic(out / "run_config.txt", format_run_config(cfg));
  std::printf("%s", tables.patient_text.c_str());
  print_reproduce(cfg, command);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HER2 immunohistochemistry scoring: tiling, training, scoring, evaluation"};
  app.fallthrough();
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Run config file (key = value lines)");
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--threads", g.threads, "Worker threads; 0 = machine parallelism");
  app.add_option("--output", g.output, "Output directory (overrides the config)");
  app.add_option("--set", g.overrides, "Override a config key, e.g. --set descriptor=HSV_MS");

  TissueFlags tissue;
  std::string input;
  auto* tile = app.add_subcommand("tile", "Cut slide images into 250x250 patches and keep tissue");
  tile->add_option("--input", input, "Directory of slide images (PNG/TIFF)")->required();
  tile->add_option("--background-luma", tissue.background_luma, "Luma at or above which a pixel is background");
  tile->add_option("--max-background", tissue.max_background, "Largest background fraction kept");
  tile->add_option("--min-stddev", tissue.min_stddev, "Smallest luma standard deviation kept");

  std::string manifest, model_dir, report;
  auto* train = app.add_subcommand("train", "Train image-level and patient-level models");
  train->add_option("--manifest", manifest, "Dataset manifest (JSON)");
  train->add_option("--model-dir", model_dir, "Where to write the model files");

  std::vector<std::string> slides, patch_dirs;
  auto* score = app.add_subcommand("score", "Score slides with trained models");
  score->add_option("--models", model_dir, "Directory holding the model files");
  score->add_option("--slide", slides, "Slide image to tile and score (repeatable)");
  score->add_option("--patch-dir", patch_dirs, "Directory of pre-cut patches of one slide (repeatable)");
  score->add_option("--report", report, "Report path (default: <output>/score_report.json)");

  SyntheticFlags sf;
  bool sweep = false;
  auto* evaluate = app.add_subcommand("evaluate", "Leave-one-patient-out evaluation");
  evaluate->add_option("--manifest", manifest, "Dataset manifest (JSON)");
  evaluate->add_flag("--synthetic", sf.enabled, "Generate a synthetic cohort instead of a manifest");
  evaluate->add_option("--cases-per-score", sf.cases_per_score, "Synthetic slides per score class");
  evaluate->add_option("--patches-per-slide", sf.patches_per_slide, "Synthetic patches per slide");
  evaluate->add_option("--curated-per-slide", sf.curated_per_slide, "Synthetic curated patches per slide");
  evaluate->add_option("--patch-size", sf.patch_size, "Synthetic patch edge in pixels");
  evaluate->add_option("--noise-rate", sf.noise_rate, "Share of synthetic noise patches");
  evaluate->add_option("--heterogeneity", sf.heterogeneity, "Share of patches from adjacent grades");
  evaluate->add_flag("--sweep", sweep, "Run every descriptor and classifier combination");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kInputError);
  }

  try {
    if (*tile) return cmd_tile(g, tissue, input);
    if (*train) return cmd_train(g, manifest, model_dir);
    if (*score) return cmd_score(g, model_dir, slides, patch_dirs, report);
    if (*evaluate) return cmd_evaluate(g, manifest, sf, sweep);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return static_cast<int>(ExitCode::kInvariantFailure);
  }
  return static_cast<int>(ExitCode::kInvariantFailure);
}
