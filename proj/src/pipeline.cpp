#include "her2/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "her2/error.hpp"
#include "her2/parallel.hpp"

namespace her2 {

std::string_view class_mode_name(ClassMode mode) noexcept {
  return mode == ClassMode::kFourClass ? "four" : "five";
}

ClassMode parse_class_mode(std::string_view name) {
  if (name == "four" || name == "4") return ClassMode::kFourClass;
  if (name == "five" || name == "5") return ClassMode::kFiveClass;
  throw InputError("unknown class mode '" + std::string(name) + "' (expected four or five)");
}

std::vector<int> LabelSpace::negative_scores() const {
  if (mode_ == ClassMode::kFourClass) return {0};
  return {0, 1};
}

std::vector<std::string> LabelSpace::patch_class_names() const {
  if (mode_ == ClassMode::kFourClass) return {"0/1+", "2+", "3+", "noise"};
  return {"0", "1+", "2+", "3+", "noise"};
}

std::vector<std::string> LabelSpace::score_names() const {
  auto names = patch_class_names();
  names.pop_back();
  return names;
}

std::string LabelSpace::patch_class_name(int label) const {
  const auto names = patch_class_names();
  if (label < 0 || label >= static_cast<int>(names.size())) {
    throw InvariantError("patch class index out of range");
  }
  return names[static_cast<std::size_t>(label)];
}

std::string LabelSpace::score_name(int score) const {
  if (score < 0 || score >= score_count()) throw InvariantError("score index out of range");
  return patch_class_name(score);
}

int LabelSpace::parse_patch_class(std::string_view name) const {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const bool four = mode_ == ClassMode::kFourClass;
  if (s == "noise") return noise();
  if (s == "3+" || s == "3" || s == "positive") return four ? 2 : 3;
  if (s == "2+" || s == "2" || s == "equivocal" || s == "limit") return four ? 1 : 2;
  if (four && (s == "0" || s == "1+" || s == "1" || s == "0/1+" || s == "negative")) return 0;
  if (!four && s == "0") return 0;
  if (!four && (s == "1+" || s == "1")) return 1;
  throw InputError("unknown label '" + std::string(name) + "' for " +
                   std::string(class_mode_name(mode_)) + "-class mode");
}

int LabelSpace::parse_score(std::string_view name) const {
  const int label = parse_patch_class(name);
  if (label == noise()) throw InputError("noise is not a slide score");
  return label;
}

void PipelineConfig::validate() const {
  histogram.validate();
  for (const ClassifierSpec* spec : {&image_classifier, &patient_classifier}) {
    switch (spec->kind) {
      case ClassifierKind::kKnn:
        if (spec->knn.k < 1 || spec->knn.k > 9) throw InputError("KNN k must be in 1..9");
        break;
      case ClassifierKind::kSvm:
        spec->svm.validate();
        if (spec->grid_search && spec->grid_folds < 2) {
          throw InputError("grid search needs at least 2 folds");
        }
        break;
      case ClassifierKind::kMlp: spec->mlp.validate(); break;
      case ClassifierKind::kTree: spec->tree.validate(); break;
    }
  }
}

std::string PipelineConfig::label() const {
  return std::string(descriptor_name(descriptor)) + "+" +
         std::string(classifier_name(image_classifier.kind)) + "/" +
         std::string(classifier_name(patient_classifier.kind));
}

CaseFeatures extract_case_features(const CaseRecord& c, const PipelineConfig& config) {
  CaseFeatures out;
  out.curated.resize(c.curated.size());
  out.curated_labels.resize(c.curated.size());
  out.patches.resize(c.patches.size());
  parallel_for(c.curated.size(), config.threads, [&](std::size_t i) {
    out.curated[i] =
        extract_descriptor(config.descriptor, c.curated[i].patch.data, config.histogram).values;
    out.curated_labels[i] = c.curated[i].label;
  });
  parallel_for(c.patches.size(), config.threads, [&](std::size_t i) {
    out.patches[i] = extract_descriptor(config.descriptor, c.patches[i].data, config.histogram).values;
  });
  return out;
}

std::vector<CaseFeatures> extract_cohort_features(std::span<const CaseRecord> cases,
                                                  const PipelineConfig& config) {
  std::vector<CaseFeatures> out;
  out.reserve(cases.size());
  for (const CaseRecord& c : cases) out.push_back(extract_case_features(c, config));
  return out;
}

std::size_t PatchCounts::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

TrainedModel train_classifier(const ClassifierSpec& spec, std::span<const LabeledSample> samples,
                              std::uint64_t seed, int threads, TrainingLog* log) {
  switch (spec.kind) {
    case ClassifierKind::kKnn: return knn_train(samples, spec.knn);
    case ClassifierKind::kTree: return tree_train(samples, spec.tree);
    case ClassifierKind::kMlp: {
      MlpParams p = spec.mlp;
      p.seed = seed;
      return mlp_train(samples, p);
    }
    case ClassifierKind::kSvm: {
      if (!spec.grid_search) return svm_train(samples, spec.svm);
      GridSearchResult grid = grid_search_svm(samples, spec.grid, spec.grid_folds, spec.svm, threads);
      const SvmParams best = grid.best;
      if (log) log->grid = std::move(grid);
      return svm_train(samples, best);
    }
  }
  throw InvariantError("unhandled classifier kind");
}

namespace {

void require_coverage(const std::vector<int>& present, int count, const char* what) {
  for (int k = 0; k < count; ++k) {
    if (!std::binary_search(present.begin(), present.end(), k)) {
      throw DataError(std::string("missing class coverage: no ") + what + " of class index " +
                      std::to_string(k));
    }
  }
}

}  // namespace

TrainedModel train_image_level(std::span<const CaseRecord> cases,
                               std::span<const CaseFeatures> features,
                               const PipelineConfig& config, TrainingLog* log) {
  if (features.size() != cases.size()) throw InvariantError("features not aligned with cases");
  const LabelSpace labels = config.labels();
  std::vector<LabeledSample> samples;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (std::size_t j = 0; j < features[i].curated.size(); ++j) {
      const int label = features[i].curated_labels[j];
      if (label < 0 || label >= labels.patch_class_count()) {
        throw InputError("curated patch label out of range in slide " + cases[i].slide_id);
      }
      samples.push_back({features[i].curated[j], label, cases[i].patient_id});
    }
  }
  if (samples.empty()) throw DataError("no curated patches to train the image level");
  require_coverage(distinct_labels(samples), labels.patch_class_count(), "curated patch");
  return train_classifier(config.image_classifier, samples, config.seed, config.threads, log);
}

TrainedModel train_image_level(std::span<const CaseRecord> cases, const PipelineConfig& config,
                               TrainingLog* log) {
  const auto features = extract_cohort_features(cases, config);
  return train_image_level(cases, features, config, log);
}

PatchCounts classify_slide_patches(const TrainedModel& image_model, const CaseRecord& c,
                                   const CaseFeatures& features, const PipelineConfig& config) {
  if (features.patches.empty()) throw DataError("slide " + c.slide_id + " has no patches");
  const LabelSpace labels = config.labels();
  std::vector<int> predicted(features.patches.size());
  parallel_for(predicted.size(), config.threads,
               [&](std::size_t i) { predicted[i] = image_model.predict(features.patches[i]); });
  PatchCounts out{c.slide_id, std::vector<std::size_t>(static_cast<std::size_t>(labels.patch_class_count()), 0)};
  for (int p : predicted) {
    if (p < 0 || p >= labels.patch_class_count()) {
      throw InvariantError("image model predicted a label outside the active class set");
    }
    ++out.counts[static_cast<std::size_t>(p)];
  }
  return out;
}

PatchCounts classify_slide_patches(const TrainedModel& image_model, const CaseRecord& c,
                                   const PipelineConfig& config) {
  if (c.patches.empty()) throw DataError("slide " + c.slide_id + " has no patches");
  CaseRecord patches_only{c.patient_id, c.slide_id, c.ground_truth, {}, c.patches};
  return classify_slide_patches(image_model, c, extract_case_features(patches_only, config), config);
}

OccurrenceVector occurrence_vector(const PatchCounts& counts, const LabelSpace& labels,
                                   bool include_noise) {
  if (counts.counts.size() != static_cast<std::size_t>(labels.patch_class_count())) {
    throw InvariantError("patch counts do not match the class mode");
  }
  const std::size_t active =
      include_noise ? counts.counts.size() : counts.counts.size() - 1;
  std::size_t total = 0;
  for (std::size_t k = 0; k < active; ++k) total += counts.counts[k];
  if (counts.total() == 0) throw DataError("slide " + counts.slide_id + " has no patches");
  if (total == 0) {
    throw DataError("slide " + counts.slide_id + " is unscorable: every patch is noise");
  }
  OccurrenceVector out{counts.slide_id, std::vector<double>(active), total};
  for (std::size_t k = 0; k < active; ++k) {
    out.fractions[k] = static_cast<double>(counts.counts[k]) / static_cast<double>(total);
  }
  return out;
}

TrainedModel train_patient_level(std::span<const OccurrenceVector> vectors,
                                 std::span<const int> ground_truth, const PipelineConfig& config,
                                 TrainingLog* log) {
  if (vectors.size() != ground_truth.size()) {
    throw InvariantError("occurrence vectors and ground truths differ in length");
  }
  const LabelSpace labels = config.labels();
  std::vector<LabeledSample> samples;
  samples.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (ground_truth[i] < 0 || ground_truth[i] >= labels.score_count()) {
      throw InputError("ground truth out of range for slide " + vectors[i].slide_id);
    }
    samples.push_back({vectors[i].fractions, ground_truth[i], vectors[i].slide_id});
  }
  if (samples.empty()) throw DataError("no slides to train the patient level");
  require_coverage(distinct_labels(samples), labels.score_count(), "slide");
  return train_classifier(config.patient_classifier, samples, config.seed, config.threads, log);
}

SlideScore score_wsi_detailed(const TrainedModel& image_model, const TrainedModel& patient_model,
                              const CaseRecord& c, const PipelineConfig& config) {
  SlideScore out;
  out.counts = classify_slide_patches(image_model, c, config);
  out.occurrence = occurrence_vector(out.counts, config.labels(), config.include_noise_fraction);
  out.score = patient_model.predict(out.occurrence.fractions);
  return out;
}

int score_wsi(const TrainedModel& image_model, const TrainedModel& patient_model,
              const CaseRecord& c, const PipelineConfig& config) {
  return score_wsi_detailed(image_model, patient_model, c, config).score;
}

PipelineModels train_pipeline(std::span<const CaseRecord> cases,
                              std::span<const CaseFeatures> features,
                              const PipelineConfig& config) {
  config.validate();
  TrainingLog image_log;
  TrainedModel image = train_image_level(cases, features, config, &image_log);

  std::vector<OccurrenceVector> vectors;
  std::vector<int> truths;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!cases[i].ground_truth) continue;
    const PatchCounts counts = classify_slide_patches(image, cases[i], features[i], config);
    vectors.push_back(occurrence_vector(counts, config.labels(), config.include_noise_fraction));
    truths.push_back(*cases[i].ground_truth);
  }
  TrainingLog patient_log;
  TrainedModel patient = train_patient_level(vectors, truths, config, &patient_log);
  return {std::move(image), std::move(patient), std::move(image_log), std::move(patient_log)};
}

PipelineModels train_pipeline(std::span<const CaseRecord> cases, const PipelineConfig& config) {
  const auto features = extract_cohort_features(cases, config);
  return train_pipeline(cases, features, config);
}

}  // namespace her2
