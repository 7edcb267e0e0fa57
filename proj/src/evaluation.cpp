#include "her2/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "her2/error.hpp"
#include "her2/parallel.hpp"
#include "her2/run_config.hpp"

namespace her2 {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names,
                                 std::vector<std::vector<std::size_t>> counts)
    : ConfusionMatrix(std::move(class_names)) {
  if (counts.size() != names_.size()) throw InputError("confusion matrix must be square");
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (counts[r].size() != names_.size()) throw InputError("confusion matrix must be square");
    std::copy(counts[r].begin(), counts[r].end(),
              counts_.begin() + static_cast<std::ptrdiff_t>(r * names_.size()));
  }
}

void ConfusionMatrix::add(int truth, int predicted) {
  const auto n = static_cast<int>(size());
  if (truth < 0 || truth >= n || predicted < 0 || predicted >= n) {
    throw InvariantError("confusion matrix index out of range");
  }
  ++counts_[static_cast<std::size_t>(truth) * size() + static_cast<std::size_t>(predicted)];
}

std::size_t ConfusionMatrix::at(int truth, int predicted) const {
  const auto n = static_cast<int>(size());
  if (truth < 0 || truth >= n || predicted < 0 || predicted >= n) {
    throw InvariantError("confusion matrix index out of range");
  }
  return counts_[static_cast<std::size_t>(truth) * size() + static_cast<std::size_t>(predicted)];
}

std::size_t ConfusionMatrix::total() const noexcept {
  std::size_t t = 0;
  for (std::size_t c : counts_) t += c;
  return t;
}

std::size_t ConfusionMatrix::row_sum(int truth) const {
  std::size_t t = 0;
  for (int p = 0; p < static_cast<int>(size()); ++p) t += at(truth, p);
  return t;
}

double accuracy(const ConfusionMatrix& m) {
  const std::size_t total = m.total();
  if (total == 0) throw DataError("accuracy of an empty confusion matrix is undefined");
  std::size_t trace = 0;
  for (int i = 0; i < static_cast<int>(m.size()); ++i) trace += m.at(i, i);
  return static_cast<double>(trace) / static_cast<double>(total);
}

SensitivitySpecificity sensitivity_specificity(const ConfusionMatrix& m,
                                               std::span<const int> positive,
                                               std::span<const int> negative) {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (int t : positive) {
    for (int p : positive) tp += m.at(t, p);
    for (int p : negative) fn += m.at(t, p);
  }
  for (int t : negative) {
    for (int p : negative) tn += m.at(t, p);
    for (int p : positive) fp += m.at(t, p);
  }
  if (tp + fn == 0) throw DataError("sensitivity undefined: no positive slides in the restriction");
  if (tn + fp == 0) throw DataError("specificity undefined: no negative slides in the restriction");
  return {static_cast<double>(tp) / static_cast<double>(tp + fn),
          static_cast<double>(tn) / static_cast<double>(tn + fp)};
}

SensitivitySpecificity sensitivity_specificity(const ConfusionMatrix& m, int positive,
                                               int negative) {
  const int pos[] = {positive};
  const int neg[] = {negative};
  return sensitivity_specificity(m, pos, neg);
}

void assert_disjoint_patients(std::span<const std::string> training_patients,
                              std::string_view held_out) {
  for (const std::string& p : training_patients) {
    if (p == held_out) {
      throw InvariantError("leave-one-patient-out leak: patient " + std::string(held_out) +
                           " is in its own training fold");
    }
  }
}

namespace {

std::vector<std::string> patient_order(std::span<const CaseRecord> cases) {
  std::set<std::string> ids;
  for (const CaseRecord& c : cases) {
    if (c.patient_id.empty()) throw InputError("case " + c.slide_id + " has no patient id");
    ids.insert(c.patient_id);
  }
  return {ids.begin(), ids.end()};
}

LopoFold run_fold(std::span<const CaseRecord> cases, std::span<const CaseFeatures> features,
                  const PipelineConfig& fold_config, const std::string& held_out) {
  LopoFold fold;
  fold.held_out = held_out;

  std::vector<CaseRecord> train_cases;
  std::vector<CaseFeatures> train_features;
  std::vector<std::size_t> test_idx;
  std::set<std::string> training_ids;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (cases[i].patient_id == held_out) {
      if (cases[i].ground_truth) test_idx.push_back(i);
      continue;
    }
    // Only metadata and features are needed to train.
    CaseRecord meta{cases[i].patient_id, cases[i].slide_id, cases[i].ground_truth, {}, {}};
    train_cases.push_back(std::move(meta));
    train_features.push_back(features[i]);
    training_ids.insert(cases[i].patient_id);
  }
  fold.training_patients.assign(training_ids.begin(), training_ids.end());
  assert_disjoint_patients(fold.training_patients, held_out);
  for (const CaseRecord& c : train_cases) {
    if (c.patient_id == held_out) throw InvariantError("held-out case reached training data");
  }
  if (test_idx.empty()) {
    fold.skipped = true;
    fold.warning = "patient " + held_out + " has no slide with a ground truth";
    return fold;
  }

  const LabelSpace labels = fold_config.labels();
  try {
    const PipelineModels models = train_pipeline(train_cases, train_features, fold_config);
    for (std::size_t i : test_idx) {
      const PatchCounts counts = classify_slide_patches(models.image, cases[i], features[i], fold_config);
      const OccurrenceVector occ =
          occurrence_vector(counts, labels, fold_config.include_noise_fraction);
      fold.predictions.push_back({cases[i].patient_id, cases[i].slide_id, *cases[i].ground_truth,
                                  models.patient.predict(occ.fractions), counts.counts,
                                  occ.fractions});
    }
  } catch (const DataError& e) {
    fold.skipped = true;
    fold.predictions.clear();
    fold.warning = "fold " + held_out + " skipped: " + e.what();
  }
  return fold;
}

}  // namespace

LopoResult run_lopo(std::span<const CaseRecord> cases, std::span<const CaseFeatures> features,
                    const PipelineConfig& config) {
  config.validate();
  if (features.size() != cases.size()) throw InvariantError("features not aligned with cases");
  const std::vector<std::string> patients = patient_order(cases);
  if (patients.size() < 2) throw DataError("leave-one-patient-out needs at least two patients");

  // Folds run in parallel; each fold trains single-threaded.
  PipelineConfig fold_config = config;
  fold_config.threads = 1;

  LopoResult result;
  result.config = config;
  result.folds.resize(patients.size());
  parallel_for(patients.size(), config.threads, [&](std::size_t f) {
    result.folds[f] = run_fold(cases, features, fold_config, patients[f]);
  });

  const LabelSpace labels = config.labels();
  result.matrix = ConfusionMatrix(labels.score_names());
  std::size_t scored = 0, expected = 0;
  for (const CaseRecord& c : cases) expected += c.ground_truth ? 1 : 0;
  for (const LopoFold& fold : result.folds) {
    if (fold.skipped) {
      result.warnings.push_back(fold.warning);
      continue;
    }
    for (const SlidePrediction& p : fold.predictions) {
      result.matrix.add(p.truth, p.predicted);
      ++scored;
    }
  }
  std::size_t skipped_slides = 0;
  for (const LopoFold& fold : result.folds) {
    if (!fold.skipped) continue;
    for (const CaseRecord& c : cases) {
      if (c.patient_id == fold.held_out && c.ground_truth) ++skipped_slides;
    }
  }
  if (scored + skipped_slides != expected) {
    throw InvariantError("every slide must be predicted exactly once");
  }
  if (result.matrix.total() > 0) {
    result.accuracy = accuracy(result.matrix);
    try {
      const std::vector<int> pos = {labels.positive_score()};
      const std::vector<int> neg = labels.negative_scores();
      result.sens_spec = sensitivity_specificity(result.matrix, pos, neg);
    } catch (const DataError& e) {
      result.warnings.push_back(e.what());
    }
  }
  return result;
}

LopoResult run_lopo(std::span<const CaseRecord> cases, const PipelineConfig& config) {
  const auto features = extract_cohort_features(cases, config);
  return run_lopo(cases, features, config);
}

ImageLopoResult run_image_lopo(std::span<const CaseRecord> cases,
                               std::span<const CaseFeatures> features,
                               const PipelineConfig& config) {
  config.validate();
  const std::vector<std::string> patients = patient_order(cases);
  if (patients.size() < 2) throw DataError("leave-one-patient-out needs at least two patients");
  const LabelSpace labels = config.labels();
  PipelineConfig fold_config = config;
  fold_config.threads = 1;

  std::vector<std::optional<ConfusionMatrix>> per_fold(patients.size());
  parallel_for(patients.size(), config.threads, [&](std::size_t f) {
    std::vector<CaseRecord> train_cases;
    std::vector<CaseFeatures> train_features;
    std::vector<std::string> train_ids;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (cases[i].patient_id == patients[f]) continue;
      train_cases.push_back({cases[i].patient_id, cases[i].slide_id, cases[i].ground_truth, {}, {}});
      train_features.push_back(features[i]);
      train_ids.push_back(cases[i].patient_id);
    }
    assert_disjoint_patients(train_ids, patients[f]);
    try {
      const TrainedModel model = train_image_level(train_cases, train_features, fold_config);
      ConfusionMatrix m(labels.patch_class_names());
      for (std::size_t i = 0; i < cases.size(); ++i) {
        if (cases[i].patient_id != patients[f]) continue;
        for (std::size_t j = 0; j < features[i].curated.size(); ++j) {
          m.add(features[i].curated_labels[j], model.predict(features[i].curated[j]));
        }
      }
      per_fold[f] = std::move(m);
    } catch (const DataError&) {
      per_fold[f].reset();
    }
  });

  ImageLopoResult result;
  result.matrix = ConfusionMatrix(labels.patch_class_names());
  result.folds = patients.size();
  for (const auto& m : per_fold) {
    if (!m) {
      ++result.skipped;
      continue;
    }
    for (int t = 0; t < static_cast<int>(m->size()); ++t) {
      for (int p = 0; p < static_cast<int>(m->size()); ++p) {
        for (std::size_t k = 0; k < m->at(t, p); ++k) result.matrix.add(t, p);
      }
    }
  }
  if (result.matrix.total() > 0) result.accuracy = accuracy(result.matrix);
  return result;
}

json confusion_to_json(const ConfusionMatrix& m) {
  json rows = json::array();
  for (int t = 0; t < static_cast<int>(m.size()); ++t) {
    json row = json::array();
    for (int p = 0; p < static_cast<int>(m.size()); ++p) row.push_back(m.at(t, p));
    rows.push_back(row);
  }
  return {{"classes", m.class_names()}, {"rows", rows}};
}

json lopo_to_json(const LopoResult& result) {
  const LabelSpace labels = result.config.labels();
  json folds = json::array();
  for (const LopoFold& f : result.folds) {
    json preds = json::array();
    for (const SlidePrediction& p : f.predictions) {
      preds.push_back({{"patient_id", p.patient_id},
                       {"slide_id", p.slide_id},
                       {"truth", labels.score_name(p.truth)},
                       {"predicted", labels.score_name(p.predicted)},
                       {"patch_counts", p.counts},
                       {"occurrence", p.occurrence}});
    }
    json fold = {{"held_out", f.held_out},
                 {"training_patients", f.training_patients},
                 {"skipped", f.skipped},
                 {"predictions", preds}};
    if (!f.warning.empty()) fold["warning"] = f.warning;
    folds.push_back(fold);
  }
  json out = {{"config", pipeline_config_to_json(result.config)},
              {"label", result.config.label()},
              {"confusion_matrix", confusion_to_json(result.matrix)},
              {"accuracy", result.accuracy},
              {"folds", folds},
              {"warnings", result.warnings}};
  if (result.sens_spec) {
    out["sensitivity"] = result.sens_spec->sensitivity;
    out["specificity"] = result.sens_spec->specificity;
  } else {
    out["sensitivity"] = nullptr;
    out["specificity"] = nullptr;
  }
  return out;
}

namespace {

std::string percent(double accuracy, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, 100.0 * accuracy);
  return buf;
}

struct Grid {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::map<std::pair<std::string, std::string>, double> cells;
};

void render(const Grid& g, const std::string& corner, std::string& csv, std::string& text) {
  std::ostringstream c;
  c << corner;
  for (const auto& col : g.cols) c << ',' << col;
  c << '\n';
  for (const auto& row : g.rows) {
    c << row;
    for (const auto& col : g.cols) {
      c << ',';
      if (auto it = g.cells.find({row, col}); it != g.cells.end()) c << percent(it->second, 4);
    }
    c << '\n';
  }
  csv = c.str();

  std::size_t first = corner.size();
  for (const auto& row : g.rows) first = std::max(first, row.size());
  std::ostringstream t;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  t << pad(corner, first);
  for (const auto& col : g.cols) t << "  " << pad(col, 7);
  t << '\n';
  for (const auto& row : g.rows) {
    t << pad(row, first);
    for (const auto& col : g.cols) {
      const auto it = g.cells.find({row, col});
      t << "  " << pad(it == g.cells.end() ? "-" : percent(it->second, 2), 7);
    }
    t << '\n';
  }
  text = t.str();
}

template <typename T, std::size_t N>
void add_ordered(std::vector<std::string>& out, const std::set<std::string>& present,
                 const std::array<T, N>& order, auto&& name) {
  for (const T& item : order) {
    const std::string n(name(item));
    if (present.count(n)) out.push_back(n);
  }
}

}  // namespace

ReportTables report_tables(std::span<const ResultEntry> results) {
  constexpr std::array<ClassifierKind, 4> kClassifierOrder = {
      ClassifierKind::kSvm, ClassifierKind::kKnn, ClassifierKind::kMlp, ClassifierKind::kTree};

  Grid image, patient;
  std::set<std::string> image_rows, image_cols, patient_cols;
  std::vector<std::string> patient_row_order;
  // Patient rows follow descriptor order, then image-classifier order.
  std::set<std::pair<int, int>> patient_rows;
  for (const ResultEntry& r : results) {
    const std::string desc(descriptor_name(r.descriptor));
    const std::string clf(classifier_name(r.image_classifier));
    if (!r.patient_classifier) {
      image_rows.insert(desc);
      image_cols.insert(clf);
      image.cells[{desc, clf}] = r.accuracy;
    } else {
      const std::string row = desc + "+" + clf;
      const std::string col(classifier_name(*r.patient_classifier));
      patient_cols.insert(col);
      patient.cells[{row, col}] = r.accuracy;
      const auto d = std::find(kAllDescriptors.begin(), kAllDescriptors.end(), r.descriptor) -
                     kAllDescriptors.begin();
      const auto c = std::find(kClassifierOrder.begin(), kClassifierOrder.end(),
                               r.image_classifier) - kClassifierOrder.begin();
      patient_rows.insert({static_cast<int>(d), static_cast<int>(c)});
    }
  }
  add_ordered(image.rows, image_rows, kAllDescriptors, descriptor_name);
  add_ordered(image.cols, image_cols, kClassifierOrder, classifier_name);
  add_ordered(patient.cols, patient_cols, kClassifierOrder, classifier_name);
  for (const auto& [d, c] : patient_rows) {
    patient.rows.push_back(std::string(descriptor_name(kAllDescriptors[static_cast<std::size_t>(d)])) +
                           "+" +
                           std::string(classifier_name(kClassifierOrder[static_cast<std::size_t>(c)])));
  }

  ReportTables out;
  render(image, "descriptor", out.image_csv, out.image_text);
  render(patient, "pipeline", out.patient_csv, out.patient_text);
  return out;
}

}  // namespace her2
