#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "her2/classifiers.hpp"
#include "her2/features.hpp"
#include "her2/grid_search.hpp"
#include "her2/imaging.hpp"

namespace her2 {

/// Image-level label set. kFourClass: {0/1+, 2+, 3+, noise};
/// kFiveClass: {0, 1+, 2+, 3+, noise}. The slide-level scores are the same
/// labels without noise, so score index k and patch class index k name the
/// same grade.
enum class ClassMode { kFourClass, kFiveClass };

std::string_view class_mode_name(ClassMode mode) noexcept;  // "four" / "five"
ClassMode parse_class_mode(std::string_view name);

/// Index <-> name mapping for patch classes and slide scores of one mode.
class LabelSpace {
 public:
  explicit LabelSpace(ClassMode mode) : mode_(mode) {}

  ClassMode mode() const noexcept { return mode_; }
  int patch_class_count() const noexcept { return mode_ == ClassMode::kFourClass ? 4 : 5; }
  int score_count() const noexcept { return patch_class_count() - 1; }
  int noise() const noexcept { return patch_class_count() - 1; }
  int positive_score() const noexcept { return score_count() - 1; }
  /// Score indices counted as clinically negative (0/1+ or {0, 1+}).
  std::vector<int> negative_scores() const;
  int equivocal_score() const noexcept { return score_count() - 2; }

  std::string patch_class_name(int label) const;
  std::string score_name(int score) const;
  std::vector<std::string> score_names() const;
  std::vector<std::string> patch_class_names() const;

  /// Accepts "0", "1+", "0/1+", "2+", "3+", "noise" (and "negative",
  /// "equivocal", "positive"). In four-class mode 0 and 1+ merge into 0/1+.
  /// Throws InputError for unknown names.
  int parse_patch_class(std::string_view name) const;
  /// As parse_patch_class, rejecting noise.
  int parse_score(std::string_view name) const;

 private:
  ClassMode mode_;
};

/// Classifier choice plus its parameters. SVM runs a grid search before
/// training when `grid_search` is set.
struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::kKnn;
  KnnParams knn;
  SvmParams svm;
  MlpParams mlp;
  TreeParams tree;
  bool grid_search = true;
  SvmGrid grid = SvmGrid::defaults();
  int grid_folds = 3;
};

inline ClassifierSpec classifier_spec(ClassifierKind kind) {
  ClassifierSpec spec;
  spec.kind = kind;
  return spec;
}

struct PipelineConfig {
  DescriptorId descriptor = DescriptorId::kHsvHist;
  HistogramConfig histogram;
  ClassifierSpec image_classifier = classifier_spec(ClassifierKind::kKnn);
  ClassifierSpec patient_classifier = classifier_spec(ClassifierKind::kSvm);
  ClassMode class_mode = ClassMode::kFourClass;
  bool include_noise_fraction = true;
  std::uint64_t seed = 0;
  int threads = 1;

  LabelSpace labels() const { return LabelSpace(class_mode); }
  /// Throws InputError on invalid parameters.
  void validate() const;
  /// e.g. "HSV+KNN/SVM".
  std::string label() const;
};

struct CuratedPatch {
  RasterPatch patch;
  int label = 0;  // patch class index
};

struct CaseRecord {
  std::string patient_id;
  std::string slide_id;
  std::optional<int> ground_truth;  // score index
  std::vector<CuratedPatch> curated;
  std::vector<RasterPatch> patches;  // tissue-filtered patches of the whole slide
};

/// Descriptor vectors of one case, in the same order as its patches.
struct CaseFeatures {
  std::vector<std::vector<double>> curated;
  std::vector<int> curated_labels;
  std::vector<std::vector<double>> patches;
};

CaseFeatures extract_case_features(const CaseRecord& c, const PipelineConfig& config);
std::vector<CaseFeatures> extract_cohort_features(std::span<const CaseRecord> cases,
                                                  const PipelineConfig& config);

/// Per-class patch counts of one slide, indexed by patch class.
struct PatchCounts {
  std::string slide_id;
  std::vector<std::size_t> counts;

  std::size_t total() const noexcept;
};

struct OccurrenceVector {
  std::string slide_id;
  std::vector<double> fractions;
  std::size_t total_patches = 0;
};

struct TrainingLog {
  std::optional<GridSearchResult> grid;
};

/// Trains `spec` on `samples`; SVM specs run grid search first when enabled.
TrainedModel train_classifier(const ClassifierSpec& spec, std::span<const LabeledSample> samples,
                              std::uint64_t seed, int threads = 1, TrainingLog* log = nullptr);

TrainedModel train_image_level(std::span<const CaseRecord> cases, const PipelineConfig& config,
                               TrainingLog* log = nullptr);
/// Same, over precomputed features (one entry per case, aligned with `cases`).
TrainedModel train_image_level(std::span<const CaseRecord> cases,
                               std::span<const CaseFeatures> features,
                               const PipelineConfig& config, TrainingLog* log = nullptr);

PatchCounts classify_slide_patches(const TrainedModel& image_model, const CaseRecord& c,
                                   const PipelineConfig& config);
PatchCounts classify_slide_patches(const TrainedModel& image_model, const CaseRecord& c,
                                   const CaseFeatures& features, const PipelineConfig& config);

/// Fractions over the active classes. Without noise the noise count leaves
/// both numerator and denominator; an all-noise slide then raises DataError.
OccurrenceVector occurrence_vector(const PatchCounts& counts, const LabelSpace& labels,
                                   bool include_noise);

/// Needs at least one slide for every score class.
TrainedModel train_patient_level(std::span<const OccurrenceVector> vectors,
                                 std::span<const int> ground_truth, const PipelineConfig& config,
                                 TrainingLog* log = nullptr);

struct SlideScore {
  int score = 0;
  PatchCounts counts;
  OccurrenceVector occurrence;
};

SlideScore score_wsi_detailed(const TrainedModel& image_model, const TrainedModel& patient_model,
                              const CaseRecord& c, const PipelineConfig& config);
int score_wsi(const TrainedModel& image_model, const TrainedModel& patient_model,
              const CaseRecord& c, const PipelineConfig& config);

struct PipelineModels {
  TrainedModel image;
  TrainedModel patient;
  TrainingLog image_log;
  TrainingLog patient_log;
};

/// Image level on all curated patches, then patient level on the occurrence
/// vectors of every case with a ground truth.
PipelineModels train_pipeline(std::span<const CaseRecord> cases, const PipelineConfig& config);
PipelineModels train_pipeline(std::span<const CaseRecord> cases,
                              std::span<const CaseFeatures> features,
                              const PipelineConfig& config);

}  // namespace her2
