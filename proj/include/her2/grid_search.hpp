#pragma once

#include <span>
#include <vector>

#include "her2/classifiers.hpp"

namespace her2 {

struct SvmGrid {
  std::vector<double> c_values;
  std::vector<double> gamma_values;
  std::vector<SvmKernel> kernels;

  /// c in {2^-5, 2^-3, ..., 2^15}, gamma in {2^-15, 2^-13, ..., 2^3},
  /// both kernels.
  static SvmGrid defaults();
};

struct GridCell {
  SvmParams params;
  double accuracy = 0.0;
};

struct GridSearchResult {
  SvmParams best;
  double best_accuracy = 0.0;
  std::vector<GridCell> trace;  // every evaluated combination, in tie-break order
};

/// Fold index per sample: within each class, samples are dealt round-robin
/// in input order. Throws DataError when samples.size() < folds.
std::vector<int> stratified_folds(std::span<const LabeledSample> samples, int folds);

/// Exhaustive stratified k-fold search. Ties on accuracy go to the smaller
/// c, then the smaller gamma, then linear before rbf. The linear kernel
/// ignores gamma and is evaluated once per c, reported with the smallest
/// gamma. `base` supplies the solver settings (tolerance, iteration cap).
GridSearchResult grid_search_svm(std::span<const LabeledSample> samples, const SvmGrid& grid,
                                 int folds, const SvmParams& base = {}, int threads = 1);

}  // namespace her2
