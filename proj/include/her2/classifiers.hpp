#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace her2 {

enum class ClassifierKind { kSvm, kKnn, kMlp, kTree };

/// SVM, KNN, MLP, Tree.
std::string_view classifier_name(ClassifierKind kind) noexcept;
ClassifierKind parse_classifier(std::string_view name);

struct LabeledSample {
  std::vector<double> features;
  int label = 0;
  std::string group_id;
};

struct KnnParams {
  int k = 1;
  friend bool operator==(const KnnParams&, const KnnParams&) = default;
};

enum class SvmKernel { kLinear, kRbf };

struct SvmParams {
  double c = 1.0;
  double gamma = 1.0;
  SvmKernel kernel = SvmKernel::kRbf;
  double tolerance = 1e-3;  // stop when the maximal KKT violation drops below this
  double epsilon = 1e-12;   // floor for non-positive curvature
  std::int64_t max_iterations = 10'000'000;

  void validate() const;
  friend bool operator==(const SvmParams&, const SvmParams&) = default;
};

struct MlpParams {
  int hidden_units = 100;
  double learning_rate = 1e-3;
  int max_epochs = 200;
  int batch_size = 200;  // clipped to the training-set size
  double l2_penalty = 1e-4;
  double tolerance = 1e-4;
  int no_improvement_epochs = 10;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct TreeParams {
  int max_depth = 0;  // 0 = unlimited
  int min_samples_split = 2;

  void validate() const;
  friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

struct KnnState {
  std::vector<double> points;  // row-major, one row per training sample
  std::vector<int> labels;
  friend bool operator==(const KnnState&, const KnnState&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;  // taken when x[feature] <= threshold
  int right = -1;
  int label = 0;
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct TreeState {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  friend bool operator==(const TreeState&, const TreeState&) = default;
};

struct MlpState {
  int inputs = 0;
  int hidden = 0;
  int outputs = 0;
  std::vector<double> w1;  // inputs x hidden, row-major
  std::vector<double> b1;
  std::vector<double> w2;  // hidden x outputs, row-major
  std::vector<double> b2;
  int epochs_run = 0;
  double final_loss = 0.0;
  friend bool operator==(const MlpState&, const MlpState&) = default;
};

/// One binary machine. decision(x) = sum_i coef[i] * K(sv_i, x) - rho;
/// positive values vote for `positive_label`.
struct BinarySvm {
  int positive_label = 0;
  int negative_label = 0;
  std::vector<double> support_vectors;  // row-major
  std::vector<double> coef;             // alpha_i * y_i
  double rho = 0.0;
  std::int64_t iterations = 0;
  bool converged = true;
  friend bool operator==(const BinarySvm&, const BinarySvm&) = default;
};

struct SvmState {
  std::vector<BinarySvm> machines;  // one per class pair (i < j) in class_set order
  friend bool operator==(const SvmState&, const SvmState&) = default;
};

using ModelParams = std::variant<SvmParams, KnnParams, MlpParams, TreeParams>;
using ModelState = std::variant<SvmState, KnnState, MlpState, TreeState>;

/// Immutable trained classifier. Safe to share across threads for prediction.
class TrainedModel {
 public:
  TrainedModel(ClassifierKind kind, std::vector<int> class_set, std::size_t feature_dim,
               ModelParams params, ModelState state);

  ClassifierKind kind() const noexcept { return kind_; }
  const std::vector<int>& class_set() const noexcept { return class_set_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  const ModelParams& params() const noexcept { return params_; }
  const ModelState& state() const noexcept { return state_; }

  /// Throws InputError when x.size() != feature_dim().
  int predict(std::span<const double> x) const;

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;

 private:
  ClassifierKind kind_;
  std::vector<int> class_set_;
  std::size_t feature_dim_;
  ModelParams params_;
  ModelState state_;
};

/// Sorted distinct labels of a training set.
std::vector<int> distinct_labels(std::span<const LabeledSample> samples);

/// Throws DataError for an empty set, InputError for ragged feature rows.
std::size_t checked_feature_dim(std::span<const LabeledSample> samples);

TrainedModel knn_train(std::span<const LabeledSample> samples, const KnnParams& params);
int knn_predict(const TrainedModel& model, std::span<const double> x);

TrainedModel tree_train(std::span<const LabeledSample> samples, const TreeParams& params);
int tree_predict(const TrainedModel& model, std::span<const double> x);

TrainedModel mlp_train(std::span<const LabeledSample> samples, const MlpParams& params);
int mlp_predict(const TrainedModel& model, std::span<const double> x);

/// Mean cross-entropy of the softmax outputs over a batch (rows of `x`,
/// class indices in `targets`) plus 0.5 * l2_penalty * ||W||^2 / batch.
/// When `grad` is non-null it receives the gradient in the same layout.
double mlp_loss_and_gradient(const MlpState& net, std::span<const double> x,
                             std::span<const int> targets, double l2_penalty, MlpState* grad);

/// Class scores before the softmax.
std::vector<double> mlp_logits(const MlpState& net, std::span<const double> x);

TrainedModel svm_train(std::span<const LabeledSample> samples, const SvmParams& params);
int svm_predict(const TrainedModel& model, std::span<const double> x);

double kernel_value(const SvmParams& params, std::span<const double> a, std::span<const double> b);
double svm_decision_value(const BinarySvm& machine, const SvmParams& params,
                          std::span<const double> x);
}  // namespace her2
