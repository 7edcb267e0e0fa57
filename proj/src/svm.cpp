#include <algorithm>
#include <cmath>
#include <limits>

#include "her2/classifiers.hpp"
#include "her2/error.hpp"

namespace her2 {

double kernel_value(const SvmParams& params, std::span<const double> a,
                    std::span<const double> b) {
  if (params.kernel == SvmKernel::kLinear) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::exp(-params.gamma * sq);
}

double svm_decision_value(const BinarySvm& machine, const SvmParams& params,
                          std::span<const double> x) {
  const std::size_t dim = x.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < machine.coef.size(); ++i) {
    sum += machine.coef[i] *
           kernel_value(params, std::span(machine.support_vectors).subspan(i * dim, dim), x);
  }
  return sum - machine.rho;
}

namespace {

// Sequential minimal optimization on the soft-margin dual
//   min 1/2 a'Qa - e'a   s.t. 0 <= a <= C, y'a = 0,   Q_ij = y_i y_j K_ij
// with the maximal-violating-pair working set.
BinarySvm solve_binary(const std::vector<const std::vector<double>*>& rows,
                       const std::vector<double>& y, const SvmParams& params,
                       int positive_label, int negative_label) {
  const std::size_t n = rows.size();
  const double c = params.c;

  std::vector<double> kernel(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double k = kernel_value(params, *rows[i], *rows[j]);
      kernel[i * n + j] = k;
      kernel[j * n + i] = k;
    }
  }

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);
  auto in_up = [&](std::size_t t) {
    return (y[t] > 0 && alpha[t] < c) || (y[t] < 0 && alpha[t] > 0);
  };
  auto in_low = [&](std::size_t t) {
    return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < c);
  };

  BinarySvm out;
  out.positive_label = positive_label;
  out.negative_label = negative_label;
  out.converged = false;

  std::int64_t iter = 0;
  for (; iter < params.max_iterations; ++iter) {
    double m = -std::numeric_limits<double>::infinity();
    double big_m = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      if (in_up(t) && v > m) {
        m = v;
        i = t;
      }
      if (in_low(t) && v < big_m) {
        big_m = v;
        j = t;
      }
    }
    if (i == n || j == n || m - big_m < params.tolerance) {
      out.converged = true;
      break;
    }

    double eta = kernel[i * n + i] + kernel[j * n + j] - 2.0 * kernel[i * n + j];
    if (eta <= 0.0) eta = params.epsilon;
    double step = (m - big_m) / eta;

    // Moving along a_i += y_i*step, a_j -= y_j*step keeps y'a fixed.
    const double room_i = y[i] > 0 ? c - alpha[i] : alpha[i];
    const double room_j = y[j] > 0 ? alpha[j] : c - alpha[j];
    bool clip_i = false, clip_j = false;
    if (step >= room_i) {
      step = room_i;
      clip_i = true;
    }
    if (step >= room_j) {
      if (step > room_j) clip_i = false;
      step = room_j;
      clip_j = true;
    }

    alpha[i] += y[i] * step;
    alpha[j] -= y[j] * step;
    if (clip_i) alpha[i] = y[i] > 0 ? c : 0.0;
    if (clip_j) alpha[j] = y[j] > 0 ? 0.0 : c;
    alpha[i] = std::clamp(alpha[i], 0.0, c);
    alpha[j] = std::clamp(alpha[j], 0.0, c);

    for (std::size_t t = 0; t < n; ++t) {
      grad[t] += y[t] * step * (kernel[t * n + i] - kernel[t * n + j]);
    }
  }
  out.iterations = iter;

  // rho: mean of y_t*G_t over free multipliers, else the midpoint of the
  // feasible interval implied by the bounded ones.
  double upper = std::numeric_limits<double>::infinity();
  double lower = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= c) {
      if (y[t] < 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] > 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else {
      free_sum += yg;
      ++free_count;
    }
  }
  out.rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : (upper + lower) / 2.0;

  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] <= 0.0) continue;
    out.support_vectors.insert(out.support_vectors.end(), rows[t]->begin(), rows[t]->end());
    out.coef.push_back(alpha[t] * y[t]);
  }
  return out;
}

}  // namespace

TrainedModel svm_train(std::span<const LabeledSample> samples, const SvmParams& params) {
  params.validate();
  const std::size_t dim = checked_feature_dim(samples);
  const std::vector<int> classes = distinct_labels(samples);
  if (classes.size() < 2) throw DataError("SVM training needs at least two classes");

  SvmState state;
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      std::vector<const std::vector<double>*> rows;
      std::vector<double> y;
      for (const auto& s : samples) {
        if (s.label == classes[a]) {
          rows.push_back(&s.features);
          y.push_back(1.0);
        } else if (s.label == classes[b]) {
          rows.push_back(&s.features);
          y.push_back(-1.0);
        }
      }
      state.machines.push_back(solve_binary(rows, y, params, classes[a], classes[b]));
    }
  }
  return TrainedModel(ClassifierKind::kSvm, classes, dim, params, std::move(state));
}

int svm_predict(const TrainedModel& model, std::span<const double> x) {
  if (model.kind() != ClassifierKind::kSvm) throw InputError("model kind mismatch");
  if (x.size() != model.feature_dim()) throw InputError("feature dimension mismatch");
  const auto& params = std::get<SvmParams>(model.params());
  const auto& classes = model.class_set();
  std::vector<int> votes(classes.size(), 0);
  for (const BinarySvm& m : std::get<SvmState>(model.state()).machines) {
    const int winner = svm_decision_value(m, params, x) > 0.0 ? m.positive_label : m.negative_label;
    ++votes[static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), winner) - classes.begin())];
  }
  // max_element returns the first maximum: ties go to the lowest class index.
  return classes[static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) -
                                          votes.begin())];
}

}  // namespace her2
