#include "her2/grid_search.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "her2/error.hpp"
#include "her2/parallel.hpp"

namespace her2 {

SvmGrid SvmGrid::defaults() {
  SvmGrid grid;
  for (int e = -5; e <= 15; e += 2) grid.c_values.push_back(std::ldexp(1.0, e));
  for (int e = -15; e <= 3; e += 2) grid.gamma_values.push_back(std::ldexp(1.0, e));
  grid.kernels = {SvmKernel::kLinear, SvmKernel::kRbf};
  return grid;
}

std::vector<int> stratified_folds(std::span<const LabeledSample> samples, int folds) {
  if (folds < 2) throw InputError("grid search needs at least 2 folds");
  if (samples.size() < static_cast<std::size_t>(folds)) {
    throw DataError("fewer samples than cross-validation folds");
  }
  std::vector<int> assignment(samples.size());
  std::vector<int> next_fold;
  const std::vector<int> classes = distinct_labels(samples);
  next_fold.assign(classes.size(), 0);
  // Continue each class where the previous one stopped so fold sizes stay
  // balanced when classes are small.
  int offset = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    int k = offset;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].label != classes[c]) continue;
      assignment[i] = k % folds;
      ++k;
    }
    offset = k % folds;
  }
  return assignment;
}

namespace {

double cv_accuracy(std::span<const LabeledSample> samples, const std::vector<int>& folds,
                   int fold_count, const SvmParams& params) {
  std::size_t correct = 0;
  for (int f = 0; f < fold_count; ++f) {
    std::vector<LabeledSample> train;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (folds[i] != f) train.push_back(samples[i]);
    }
    const std::vector<int> classes = distinct_labels(train);
    if (classes.size() < 2) {
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (folds[i] == f && samples[i].label == classes.front()) ++correct;
      }
      continue;
    }
    const TrainedModel model = svm_train(train, params);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (folds[i] == f && model.predict(samples[i].features) == samples[i].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace

GridSearchResult grid_search_svm(std::span<const LabeledSample> samples, const SvmGrid& grid,
                                 int folds, const SvmParams& base, int threads) {
  if (grid.c_values.empty() || grid.kernels.empty()) throw InputError("empty SVM grid");
  const bool has_rbf = std::find(grid.kernels.begin(), grid.kernels.end(), SvmKernel::kRbf) !=
                       grid.kernels.end();
  if (has_rbf && grid.gamma_values.empty()) throw InputError("rbf grid needs gamma values");
  checked_feature_dim(samples);
  const std::vector<int> assignment = stratified_folds(samples, folds);

  std::vector<double> cs = grid.c_values;
  std::vector<double> gammas = grid.gamma_values;
  std::sort(cs.begin(), cs.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
  std::sort(gammas.begin(), gammas.end());
  gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());

  std::vector<GridCell> cells;
  for (double c : cs) {
    for (SvmKernel kernel : {SvmKernel::kLinear, SvmKernel::kRbf}) {
      if (std::find(grid.kernels.begin(), grid.kernels.end(), kernel) == grid.kernels.end()) {
        continue;
      }
      if (kernel == SvmKernel::kLinear) {
        SvmParams p = base;
        p.c = c;
        p.kernel = kernel;
        p.gamma = gammas.empty() ? base.gamma : gammas.front();
        cells.push_back({p, 0.0});
        continue;
      }
      for (double g : gammas) {
        SvmParams p = base;
        p.c = c;
        p.gamma = g;
        p.kernel = kernel;
        cells.push_back({p, 0.0});
      }
    }
  }
  for (auto& cell : cells) cell.params.validate();

  parallel_for(cells.size(), threads, [&](std::size_t i) {
    cells[i].accuracy = cv_accuracy(samples, assignment, folds, cells[i].params);
  });

  auto key = [](const SvmParams& p) {
    return std::make_tuple(p.c, p.gamma, p.kernel == SvmKernel::kLinear ? 0 : 1);
  };
  std::stable_sort(cells.begin(), cells.end(),
                   [&](const GridCell& a, const GridCell& b) { return key(a.params) < key(b.params); });

  GridSearchResult result;
  result.best = cells.front().params;
  result.best_accuracy = cells.front().accuracy;
  for (const GridCell& cell : cells) {
    if (cell.accuracy > result.best_accuracy) {
      result.best = cell.params;
      result.best_accuracy = cell.accuracy;
    }
  }
  result.trace = std::move(cells);
  return result;
}

}  // namespace her2
