#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "her2/pipeline.hpp"

namespace her2 {

/// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> class_names);
  /// Throws InputError unless `counts` is square and matches the names.
  ConfusionMatrix(std::vector<std::string> class_names,
                  std::vector<std::vector<std::size_t>> counts);

  void add(int truth, int predicted);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return names_; }
  std::size_t at(int truth, int predicted) const;
  std::size_t total() const noexcept;
  std::size_t row_sum(int truth) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::size_t> counts_;  // row-major
};

/// trace / total. Throws DataError on an empty matrix.
double accuracy(const ConfusionMatrix& m);

struct SensitivitySpecificity {
  double sensitivity = 0.0;
  double specificity = 0.0;
};

/// Computed on the positive-vs-negative restriction: rows and columns of
/// classes in neither set (the equivocal grade) are ignored. Throws
/// DataError when either side has no restricted truth count.
SensitivitySpecificity sensitivity_specificity(const ConfusionMatrix& m,
                                               std::span<const int> positive,
                                               std::span<const int> negative);
SensitivitySpecificity sensitivity_specificity(const ConfusionMatrix& m, int positive,
                                               int negative);

/// Throws InvariantError if `held_out` appears among the training patients.
void assert_disjoint_patients(std::span<const std::string> training_patients,
                              std::string_view held_out);

struct SlidePrediction {
  std::string patient_id;
  std::string slide_id;
  int truth = 0;
  int predicted = 0;
  std::vector<std::size_t> counts;
  std::vector<double> occurrence;
};

struct LopoFold {
  std::string held_out;
  std::vector<std::string> training_patients;  // sorted, distinct
  bool skipped = false;
  std::string warning;
  std::vector<SlidePrediction> predictions;
};

struct LopoResult {
  PipelineConfig config;
  std::vector<LopoFold> folds;  // one per patient, sorted by patient id
  ConfusionMatrix matrix;
  double accuracy = 0.0;
  std::optional<SensitivitySpecificity> sens_spec;
  std::vector<std::string> warnings;
};

/// Leave-one-patient-out over both pipeline levels. Only slides with a
/// ground truth are scored. Folds lacking class coverage are skipped and
/// recorded. Throws DataError with fewer than two patients.
LopoResult run_lopo(std::span<const CaseRecord> cases, const PipelineConfig& config);
LopoResult run_lopo(std::span<const CaseRecord> cases, std::span<const CaseFeatures> features,
                    const PipelineConfig& config);

struct ImageLopoResult {
  ConfusionMatrix matrix;  // over patch classes
  double accuracy = 0.0;
  std::size_t folds = 0;
  std::size_t skipped = 0;
};

/// Leave-one-patient-out on the curated patches only (image level).
ImageLopoResult run_image_lopo(std::span<const CaseRecord> cases,
                               std::span<const CaseFeatures> features,
                               const PipelineConfig& config);

nlohmann::json confusion_to_json(const ConfusionMatrix& m);
nlohmann::json lopo_to_json(const LopoResult& result);

struct ResultEntry {
  DescriptorId descriptor = DescriptorId::kHsvHist;
  ClassifierKind image_classifier = ClassifierKind::kKnn;
  std::optional<ClassifierKind> patient_classifier;  // empty for image-level results
  double accuracy = 0.0;
};

struct ReportTables {
  std::string image_csv;
  std::string image_text;
  std::string patient_csv;
  std::string patient_text;
};

/// Descriptor x classifier grid (image level) and descriptor+image
/// classifier x patient classifier grid (patient level). Only rows and
/// columns that occur in `results` are emitted. CSV cells are accuracy
/// percentages with four decimals; text cells use two.
ReportTables report_tables(std::span<const ResultEntry> results);

}  // namespace her2
