// Drives the built her2score binary end to end.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "her2/fileutil.hpp"
#include "her2/image_io.hpp"
#include "her2/model_io.hpp"
#include "her2/pipeline.hpp"
#include "her2/random.hpp"
#include "her2/run_config.hpp"
#include "her2/synthetic.hpp"

using namespace her2;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "her2_cli_test";

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::string& args) {
  const fs::path out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = std::string(HER2SCORE_PATH) + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

RasterImage tissue_like(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  RasterImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto v = static_cast<std::uint8_t>(80 + rng.below(100));
      img.set(x, y, {v, static_cast<std::uint8_t>(v - 30), static_cast<std::uint8_t>(v / 2)});
    }
  return img;
}

std::string slurp(const fs::path& p) { return read_file(p); }

// Writes a synthetic cohort as patch directories plus a manifest.
fs::path write_cohort(const fs::path& dir, const SyntheticCohortSpec& spec, bool with_truth = true) {
  const LabelSpace labels(spec.class_mode);
  json cases = json::array();
  for (const SyntheticCase& sc : generate_synthetic_cohort(spec)) {
    const CaseRecord& c = sc.record;
    const fs::path pdir = dir / c.slide_id;
    for (const RasterPatch& p : c.patches) save_png(pdir / patch_file_name(p), p.data);
    json curated = json::array();
    for (std::size_t i = 0; i < c.curated.size(); ++i) {
      const std::string name = "cur_" + std::to_string(i) + ".png";
      save_png(dir / "curated" / c.slide_id / name, c.curated[i].patch.data);
      curated.push_back({{"path", "curated/" + c.slide_id + "/" + name},
                         {"label", labels.patch_class_name(c.curated[i].label)}});
    }
    json row = {{"patient_id", c.patient_id}, {"slide_id", c.slide_id}, {"patch_dir", c.slide_id},
                {"curated", curated}};
    if (with_truth) row["ground_truth"] = labels.score_name(*c.ground_truth);
    cases.push_back(row);
  }
  const fs::path manifest = dir / "manifest.json";
  write_file_atomic(manifest, json{{"cases", cases}}.dump(1));
  return manifest;
}

SyntheticCohortSpec toy_spec() {
  auto spec = SyntheticCohortSpec::defaults(ClassMode::kFourClass);
  spec.cases_per_score = 2;
  spec.patches_per_slide = 8;
  spec.curated_per_slide = 6;
  spec.patch_size = 40;
  spec.noise_rate = 0.2;
  spec.seed = 21;
  return spec;
}

const char* kToyConfig =
    "bins = 16\n"
    "patient.classifier = KNN\n"
    "seed = 5\n";

}  // namespace

TEST_CASE("cli") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);

  SUBCASE("usage errors exit 2") {
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    write_file_atomic(kRoot / "bad.cfg", "no_such_key = 1\n");
    const Run r = run("--config " + (kRoot / "bad.cfg").string() + " evaluate --synthetic");
    CHECK(r.code == 2);
    CHECK(r.err.find("no_such_key") != std::string::npos);
    CHECK(run("--help").code == 0);
  }

  SUBCASE("tile") {
    fs::create_directories(kRoot / "empty");
    Run r = run("tile --input " + (kRoot / "empty").string() + " --output " + (kRoot / "t0").string());
    CHECK(r.code == 0);
    CHECK(json::parse(slurp(kRoot / "t0" / "tiling_report.json"))["slides"].empty());
    CHECK(r.out.find("reproduce:") != std::string::npos);

    fs::create_directories(kRoot / "slides");
    save_png(kRoot / "slides" / "S9.png", tissue_like(250, 250, 1));
    for (const char* out : {"t1", "t2"}) {
      r = run("tile --input " + (kRoot / "slides").string() + " --output " + (kRoot / out).string());
      CHECK(r.code == 0);
    }
    const json report = json::parse(slurp(kRoot / "t1" / "tiling_report.json"));
    CHECK(report["slides"][0]["kept"] == 1);
    CHECK(report["slides"][0]["rejected"] == 0);
    const fs::path patch = fs::path("S9") / "S9_x0_y0.png";
    CHECK(load_image(kRoot / "t1" / patch) == tissue_like(250, 250, 1));
    CHECK(slurp(kRoot / "t1" / patch) == slurp(kRoot / "t2" / patch));
    CHECK(slurp(kRoot / "t1" / "tiling_report.json") == slurp(kRoot / "t2" / "tiling_report.json"));

    CHECK(run("tile --input " + (kRoot / "missing").string()).code == 2);
    write_file_atomic(kRoot / "slides" / "broken.png", "garbage");
    CHECK(run("tile --input " + (kRoot / "slides").string() + " --output " + (kRoot / "t3").string()).code == 2);
  }

  SUBCASE("train, score and determinism") {
    const fs::path data = kRoot / "data";
    const fs::path manifest = write_cohort(data, toy_spec());
    write_file_atomic(kRoot / "toy.cfg", kToyConfig);
    const std::string cfg = "--config " + (kRoot / "toy.cfg").string();

    Run r = run(cfg + " train --manifest " + manifest.string() + " --model-dir " + (kRoot / "m1").string());
    REQUIRE(r.code == 0);
    CHECK(r.out.find("reproduce:") != std::string::npos);
    r = run(cfg + " --threads 2 train --manifest " + manifest.string() + " --model-dir " + (kRoot / "m2").string());
    REQUIRE(r.code == 0);
    for (const char* f : {"image_model.json", "patient_model.json", "training_log.json"}) {
      CHECK(slurp(kRoot / "m1" / f) == slurp(kRoot / "m2" / f));
    }

    // Resubstitution through the CLI, and agreement with direct library calls.
    const ModelFile image = load_model(kRoot / "m1" / "image_model.json");
    const ModelFile patient = load_model(kRoot / "m1" / "patient_model.json");
    const PipelineConfig pc = pipeline_config_from_json(image.metadata["pipeline"]);
    const LabelSpace labels = pc.labels();
    std::string dirs;
    const auto cohort = generate_synthetic_cohort(toy_spec());
    for (const auto& sc : cohort) dirs += " --patch-dir " + (data / sc.record.slide_id).string();
    r = run(cfg + " score --models " + (kRoot / "m1").string() + dirs + " --report " +
            (kRoot / "report.json").string());
    REQUIRE(r.code == 0);
    const json rep = json::parse(slurp(kRoot / "report.json"));
    REQUIRE(rep["slides"].size() == cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      const json& e = rep["slides"][i];
      const CaseRecord& c = cohort[i].record;
      CHECK(e["status"] == "scored");
      CHECK(e["score"] == labels.score_name(*c.ground_truth));
      CaseRecord sorted = c;
      std::sort(sorted.patches.begin(), sorted.patches.end(), [](const RasterPatch& a, const RasterPatch& b) {
        return patch_file_name(a) < patch_file_name(b);
      });
      const SlideScore s = score_wsi_detailed(image.model, patient.model, sorted, pc);
      CHECK(e["score_index"] == s.score);
      CHECK(e["patch_counts"]["counts"] == json(s.counts.counts));
      CHECK(e["occurrence_vector"]["fractions"] == json(s.occurrence.fractions));
      CHECK(e["model_ids"]["image"] == fnv1a_hex(slurp(kRoot / "m1" / "image_model.json")));
    }
    const std::size_t last = cohort.size() - 1;  // a 3+ slide
    CHECK(rep["slides"][last]["clinical"] == "positive");

    // All-noise slide without the noise fraction is unscorable.
    write_file_atomic(kRoot / "nonoise.cfg", std::string(kToyConfig) + "include_noise = false\n");
    r = run("--config " + (kRoot / "nonoise.cfg").string() + " train --manifest " + manifest.string() +
            " --model-dir " + (kRoot / "m3").string());
    REQUIRE(r.code == 0);
    fs::path noise_dir = kRoot / "noise_slide";
    for (int i = 0; i < 4; ++i) {
      save_png(noise_dir / ("n_x" + std::to_string(40 * i) + "_y0.png"), RasterImage(40, 40, Rgb{247, 247, 247}));
    }
    r = run("score --models " + (kRoot / "m3").string() + " --patch-dir " + noise_dir.string() +
            " --report " + (kRoot / "noise.json").string());
    CHECK(r.code == 3);
    const json nrep = json::parse(slurp(kRoot / "noise.json"));
    CHECK(nrep["slides"][0]["status"] == "unscorable");

    CHECK(run("score --models " + (kRoot / "nowhere").string() + " --patch-dir " + noise_dir.string()).code == 2);
  }

  SUBCASE("train rejects a manifest without ground truth") {
    const fs::path manifest = write_cohort(kRoot / "nogt", toy_spec(), false);
    const Run r = run("train --manifest " + manifest.string() + " --model-dir " + (kRoot / "mx").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("manifest row 1") != std::string::npos);
    CHECK(r.err.find("ground_truth") != std::string::npos);
    CHECK_FALSE(fs::exists(kRoot / "mx" / "image_model.json"));
  }

  SUBCASE("train reports missing class coverage") {
    auto spec = toy_spec();
    spec.noise_rate = 0.0;
    const fs::path manifest = write_cohort(kRoot / "nonoise_data", spec);
    const Run r = run("train --manifest " + manifest.string() + " --model-dir " + (kRoot / "my").string());
    CHECK(r.code == 3);
    CHECK(r.err.find("coverage") != std::string::npos);
  }

  SUBCASE("evaluate synthetic is reproducible") {
    const std::string args =
        "--seed 4 --set patient.svm.grid.c=1,32 --set patient.svm.grid.gamma=0.5,8 evaluate --synthetic "
        "--cases-per-score 3 --patches-per-slide 10 --curated-per-slide 5 --patch-size 32 --output ";
    REQUIRE(run(args + (kRoot / "e1").string()).code == 0);
    const Run r = run("--threads 3 " + args + (kRoot / "e2").string());
    REQUIRE(r.code == 0);
    CHECK(r.out.find("reproduce:") != std::string::npos);
    for (const char* f : {"results.json", "confusion_matrix.csv", "patient_table.csv", "image_table.csv"}) {
      CHECK(slurp(kRoot / "e1" / f) == slurp(kRoot / "e2" / f));
    }
    const json res = json::parse(slurp(kRoot / "e1" / "results.json"));
    CHECK(res["folds"].size() == 9);
    CHECK(res["confusion_matrix"]["classes"] == json({"0/1+", "2+", "3+"}));
  }

  SUBCASE("evaluate from a manifest") {
    const fs::path manifest = write_cohort(kRoot / "evdata", toy_spec());
    write_file_atomic(kRoot / "toy.cfg", kToyConfig);
    const Run r = run("--config " + (kRoot / "toy.cfg").string() + " evaluate --manifest " +
                      manifest.string() + " --output " + (kRoot / "e3").string());
    CHECK(r.code == 0);
    CHECK(fs::exists(kRoot / "e3" / "results.json"));
  }

  fs::remove_all(kRoot);
}
