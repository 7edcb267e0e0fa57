#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "her2/error.hpp"
#include "her2/evaluation.hpp"
#include "her2/random.hpp"
#include "her2/synthetic.hpp"

using namespace her2;

namespace {

const std::vector<std::string> kThree = {"0/1+", "2+", "3+"};

ConfusionMatrix table3_hsv_knn() { return {kThree, {{24, 0, 0}, {2, 11, 1}, {0, 0, 13}}}; }
ConfusionMatrix table3_hsv_ms_knn() { return {kThree, {{23, 1, 0}, {1, 12, 1}, {0, 0, 13}}}; }
ConfusionMatrix table3_hsv_rgb_knn() { return {kThree, {{23, 1, 0}, {1, 12, 1}, {0, 0, 13}}}; }

std::vector<CaseRecord> small_cohort(std::uint64_t seed) {
  auto spec = SyntheticCohortSpec::defaults(ClassMode::kFourClass);
  spec.cases_per_score = 3;
  spec.patches_per_slide = 12;
  spec.curated_per_slide = 6;
  spec.patch_size = 24;
  spec.seed = seed;
  return cohort_records(generate_synthetic_cohort(spec));
}

PipelineConfig fast_config() {
  PipelineConfig cfg;
  cfg.histogram.bins_per_channel = 16;
  cfg.patient_classifier.grid = {{1.0, 32.0}, {0.5, 8.0}, {SvmKernel::kLinear, SvmKernel::kRbf}};
  return cfg;
}

}  // namespace

TEST_CASE("table 3 accuracy and sensitivity/specificity") {
  for (const auto& m : {table3_hsv_knn(), table3_hsv_ms_knn(), table3_hsv_rgb_knn()}) {
    CHECK(m.total() == 51);
    CHECK(accuracy(m) == 48.0 / 51.0);
    CHECK(std::round(accuracy(m) * 10000.0) / 100.0 == 94.12);
    const auto ss = sensitivity_specificity(m, 2, 0);
    CHECK(ss.sensitivity == 1.0);
    CHECK(ss.specificity == 1.0);
  }
}

TEST_CASE("accuracy trivia and errors") {
  CHECK(accuracy(ConfusionMatrix(kThree, {{3, 0, 0}, {0, 5, 0}, {0, 0, 1}})) == 1.0);
  CHECK_THROWS_AS(accuracy(ConfusionMatrix(kThree)), DataError);
  CHECK_THROWS_AS(ConfusionMatrix(kThree, {{1, 0}, {0, 1}}), InputError);
  ConfusionMatrix m(kThree);
  m.add(0, 2);
  CHECK(m.at(0, 2) == 1);
  CHECK(m.row_sum(0) == 1);
  CHECK_THROWS(m.add(3, 0));
}

TEST_CASE("sensitivity drops with a missed positive") {
  const ConfusionMatrix m(kThree, {{5, 0, 0}, {0, 3, 0}, {1, 0, 4}});
  const auto ss = sensitivity_specificity(m, 2, 0);
  CHECK(ss.sensitivity == 0.8);
  CHECK(ss.specificity == 1.0);
  const ConfusionMatrix no_pos(kThree, {{5, 0, 0}, {0, 3, 0}, {0, 0, 0}});
  CHECK_THROWS_AS(sensitivity_specificity(no_pos, 2, 0), DataError);
}

TEST_CASE("sensitivity/specificity agree with a naive recount") {
  Rng rng(77);
  const std::vector<std::string> four = {"0", "1+", "2+", "3+"};
  for (int trial = 0; trial < 300; ++trial) {
    const bool five = trial % 2;
    const auto& names = five ? four : kThree;
    const int k = static_cast<int>(names.size());
    ConfusionMatrix m(names);
    std::vector<std::pair<int, int>> slides;
    for (int i = 0; i < 40; ++i) {
      const int t = static_cast<int>(rng.below(static_cast<std::size_t>(k)));
      const int p = static_cast<int>(rng.below(static_cast<std::size_t>(k)));
      m.add(t, p);
      slides.push_back({t, p});
    }
    const std::vector<int> pos = {k - 1};
    const std::vector<int> neg = five ? std::vector<int>{0, 1} : std::vector<int>{0};
    auto in = [](const std::vector<int>& s, int v) { return std::find(s.begin(), s.end(), v) != s.end(); };
    double tp = 0, fn = 0, tn = 0, fp = 0;
    for (const auto& [t, p] : slides) {
      if (in(pos, t) && in(pos, p)) ++tp;
      if (in(pos, t) && in(neg, p)) ++fn;
      if (in(neg, t) && in(neg, p)) ++tn;
      if (in(neg, t) && in(pos, p)) ++fp;
    }
    if (tp + fn == 0 || tn + fp == 0) {
      CHECK_THROWS_AS(sensitivity_specificity(m, pos, neg), DataError);
      continue;
    }
    const auto ss = sensitivity_specificity(m, pos, neg);
    CHECK(ss.sensitivity == tp / (tp + fn));
    CHECK(ss.specificity == tn / (tn + fp));
    double trace = 0;
    for (int i = 0; i < k; ++i) trace += static_cast<double>(m.at(i, i));
    CHECK(accuracy(m) == trace / 40.0);
  }
}

TEST_CASE("disjointness assertion") {
  const std::vector<std::string> train = {"A", "B"};
  CHECK_NOTHROW(assert_disjoint_patients(train, "C"));
  CHECK_THROWS_AS(assert_disjoint_patients(train, "B"), InvariantError);
}

TEST_CASE("lopo on a two-patient toy cohort") {
  std::vector<CaseRecord> cohort = small_cohort(1);
  std::vector<CaseRecord> two = {cohort[0], cohort.back()};
  PipelineConfig cfg = fast_config();
  const LopoResult r = run_lopo(two, cfg);
  CHECK(r.folds.size() == 2);
  CHECK(r.folds[0].training_patients == std::vector<std::string>{two[1].patient_id});
  CHECK(r.folds[1].training_patients == std::vector<std::string>{two[0].patient_id});
  // Each fold lacks a score class at patient level, so both are skipped.
  CHECK(r.folds[0].skipped);
  CHECK(r.warnings.size() >= 2);
  CHECK_THROWS_AS(run_lopo(std::vector<CaseRecord>{cohort[0]}, cfg), DataError);
}

TEST_CASE("lopo structure, leak sentinel and fold replay") {
  std::vector<CaseRecord> cases = small_cohort(2);
  // Sentinel patient: curated patches of a colour nobody else has, labelled
  // with the positive class, on a negative slide made of the same colour.
  CaseRecord sentinel;
  sentinel.patient_id = "SENTINEL";
  sentinel.slide_id = "SENTINEL_S0";
  sentinel.ground_truth = 0;
  const RasterImage odd(24, 24, Rgb{10, 200, 240});
  for (int i = 0; i < 4; ++i) {
    sentinel.curated.push_back({{sentinel.slide_id, 24 * i, 0, odd}, 2});
    sentinel.patches.push_back({sentinel.slide_id, 24 * i, 0, odd});
  }
  cases.push_back(sentinel);

  PipelineConfig cfg = fast_config();
  const auto features = extract_cohort_features(cases, cfg);
  const LopoResult r = run_lopo(cases, features, cfg);

  std::set<std::string> patients;
  for (const auto& c : cases) patients.insert(c.patient_id);
  REQUIRE(r.folds.size() == patients.size());
  std::size_t predicted = 0;
  std::set<std::string> seen;
  for (const auto& f : r.folds) {
    CHECK(std::find(f.training_patients.begin(), f.training_patients.end(), f.held_out) ==
          f.training_patients.end());
    CHECK(f.training_patients.size() == patients.size() - 1);
    for (const auto& p : f.predictions) {
      CHECK(p.patient_id == f.held_out);
      CHECK(seen.insert(p.slide_id).second);
      ++predicted;
    }
  }
  CHECK(predicted == r.matrix.total());
  CHECK(r.matrix.total() == cases.size());

  // Replay every fold by hand. A leak of the sentinel's curated patches into
  // its own fold would make its patches match exactly and flip the counts.
  for (const auto& f : r.folds) {
    std::vector<CaseRecord> train;
    for (const auto& c : cases)
      if (c.patient_id != f.held_out) train.push_back(c);
    const PipelineModels models = train_pipeline(train, cfg);
    std::size_t p = 0;
    for (const auto& c : cases) {
      if (c.patient_id != f.held_out) continue;
      const SlideScore s = score_wsi_detailed(models.image, models.patient, c, cfg);
      REQUIRE(p < f.predictions.size());
      CHECK(f.predictions[p].predicted == s.score);
      CHECK(f.predictions[p].counts == s.counts.counts);
      ++p;
    }
    if (f.held_out == "SENTINEL") {
      CHECK(f.predictions[0].counts[2] == 0);
    }
  }
}

TEST_CASE("lopo is deterministic and thread-count independent") {
  const auto cases = small_cohort(3);
  PipelineConfig cfg = fast_config();
  const auto a = lopo_to_json(run_lopo(cases, cfg)).dump();
  cfg.threads = 3;
  auto b_res = run_lopo(cases, cfg);
  CHECK(lopo_to_json(b_res).dump() == a);
}

TEST_CASE("image-level lopo") {
  const auto cases = small_cohort(4);
  PipelineConfig cfg = fast_config();
  const auto features = extract_cohort_features(cases, cfg);
  const auto r = run_image_lopo(cases, features, cfg);
  std::size_t curated = 0;
  for (const auto& c : cases) curated += c.curated.size();
  CHECK(r.folds == cases.size());
  CHECK(r.matrix.total() <= curated);
  CHECK(r.accuracy >= 0.0);
  CHECK(r.accuracy <= 1.0);
}

TEST_CASE("json and report tables") {
  const auto j = confusion_to_json(table3_hsv_knn());
  CHECK(j["classes"] == nlohmann::json(kThree));
  CHECK(j["rows"][1] == nlohmann::json({2, 11, 1}));

  const auto empty = report_tables({});
  CHECK(empty.image_csv == "descriptor\n");
  CHECK(empty.patient_csv == "pipeline\n");

  std::vector<ResultEntry> one = {{DescriptorId::kHsvHist, ClassifierKind::kKnn, ClassifierKind::kSvm, 48.0 / 51.0}};
  const auto t1 = report_tables(one);
  CHECK(t1.patient_csv == "pipeline,SVM\nHSV+KNN,94.1176\n");
  CHECK(t1.patient_text.find("94.12") != std::string::npos);

  std::vector<ResultEntry> grid;
  Rng rng(5);
  for (DescriptorId d : {DescriptorId::kLbp, DescriptorId::kHsvHist}) {
    for (ClassifierKind k : {ClassifierKind::kTree, ClassifierKind::kSvm}) {
      grid.push_back({d, k, std::nullopt, rng.uniform()});
    }
  }
  const auto t2 = report_tables(grid);
  std::istringstream in(t2.image_csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "descriptor,SVM,Tree");
  int rows = 0;
  while (std::getline(in, line)) {
    const std::string desc = line.substr(0, line.find(','));
    CHECK(desc == (rows == 0 ? "HSV" : "LBP"));
    std::istringstream cells(line.substr(line.find(',') + 1));
    std::string cell;
    for (ClassifierKind k : {ClassifierKind::kSvm, ClassifierKind::kTree}) {
      std::getline(cells, cell, ',');
      for (const auto& e : grid) {
        if (std::string(descriptor_name(e.descriptor)) == desc && e.image_classifier == k) {
          CHECK(std::abs(std::stod(cell) - 100.0 * e.accuracy) <= 5e-5);
        }
      }
    }
    ++rows;
  }
  CHECK(rows == 2);
}
