#include "her2/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "her2/error.hpp"

namespace her2 {

std::string_view classifier_name(ClassifierKind kind) noexcept {
  switch (kind) {
    case ClassifierKind::kSvm: return "SVM";
    case ClassifierKind::kKnn: return "KNN";
    case ClassifierKind::kMlp: return "MLP";
    case ClassifierKind::kTree: return "Tree";
  }
  return "?";
}

ClassifierKind parse_classifier(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "svm") return ClassifierKind::kSvm;
  if (lower == "knn") return ClassifierKind::kKnn;
  if (lower == "mlp") return ClassifierKind::kMlp;
  if (lower == "tree") return ClassifierKind::kTree;
  throw InputError("unknown classifier '" + std::string(name) + "'");
}

void SvmParams::validate() const {
  if (!(c > 0.0)) throw InputError("SVM c must be positive");
  if (kernel == SvmKernel::kRbf && !(gamma > 0.0)) throw InputError("SVM gamma must be positive");
  if (!(tolerance > 0.0)) throw InputError("SVM tolerance must be positive");
  if (max_iterations < 1) throw InputError("SVM max_iterations must be positive");
}

void MlpParams::validate() const {
  if (hidden_units < 1) throw InputError("MLP hidden_units must be at least 1");
  if (!(learning_rate > 0.0)) throw InputError("MLP learning_rate must be positive");
  if (max_epochs < 1) throw InputError("MLP max_epochs must be positive");
  if (batch_size < 1) throw InputError("MLP batch_size must be positive");
  if (l2_penalty < 0.0) throw InputError("MLP l2_penalty must be non-negative");
}

void TreeParams::validate() const {
  if (min_samples_split < 2) throw InputError("tree min_samples_split must be at least 2");
  if (max_depth < 0) throw InputError("tree max_depth must be non-negative");
}

TrainedModel::TrainedModel(ClassifierKind kind, std::vector<int> class_set,
                           std::size_t feature_dim, ModelParams params, ModelState state)
    : kind_(kind),
      class_set_(std::move(class_set)),
      feature_dim_(feature_dim),
      params_(std::move(params)),
      state_(std::move(state)) {
  const bool consistent =
      (kind_ == ClassifierKind::kSvm && std::holds_alternative<SvmState>(state_) &&
       std::holds_alternative<SvmParams>(params_)) ||
      (kind_ == ClassifierKind::kKnn && std::holds_alternative<KnnState>(state_) &&
       std::holds_alternative<KnnParams>(params_)) ||
      (kind_ == ClassifierKind::kMlp && std::holds_alternative<MlpState>(state_) &&
       std::holds_alternative<MlpParams>(params_)) ||
      (kind_ == ClassifierKind::kTree && std::holds_alternative<TreeState>(state_) &&
       std::holds_alternative<TreeParams>(params_));
  if (!consistent) throw InvariantError("model kind does not match its state");
  if (class_set_.empty()) throw InvariantError("model has an empty class set");
}

int TrainedModel::predict(std::span<const double> x) const {
  switch (kind_) {
    case ClassifierKind::kSvm: return svm_predict(*this, x);
    case ClassifierKind::kKnn: return knn_predict(*this, x);
    case ClassifierKind::kMlp: return mlp_predict(*this, x);
    case ClassifierKind::kTree: return tree_predict(*this, x);
  }
  throw InvariantError("unhandled classifier kind");
}

std::vector<int> distinct_labels(std::span<const LabeledSample> samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

std::size_t checked_feature_dim(std::span<const LabeledSample> samples) {
  if (samples.empty()) throw DataError("empty training set");
  const std::size_t dim = samples.front().features.size();
  if (dim == 0) throw InputError("training samples have no features");
  for (const auto& s : samples) {
    if (s.features.size() != dim) throw InputError("training samples have ragged feature vectors");
  }
  return dim;
}

namespace {

void check_query(const TrainedModel& model, std::span<const double> x, ClassifierKind kind) {
  if (model.kind() != kind) throw InputError("model kind mismatch");
  if (x.size() != model.feature_dim()) {
    throw InputError("feature dimension mismatch: model expects " +
                     std::to_string(model.feature_dim()) + ", got " + std::to_string(x.size()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// KNN

TrainedModel knn_train(std::span<const LabeledSample> samples, const KnnParams& params) {
  const std::size_t dim = checked_feature_dim(samples);
  if (params.k < 1) throw InputError("KNN k must be at least 1");
  if (static_cast<std::size_t>(params.k) > samples.size()) {
    throw DataError("KNN k exceeds the training-set size");
  }
  KnnState state;
  state.points.reserve(samples.size() * dim);
  for (const auto& s : samples) {
    state.points.insert(state.points.end(), s.features.begin(), s.features.end());
    state.labels.push_back(s.label);
  }
  return TrainedModel(ClassifierKind::kKnn, distinct_labels(samples), dim, params,
                      std::move(state));
}

int knn_predict(const TrainedModel& model, std::span<const double> x) {
  check_query(model, x, ClassifierKind::kKnn);
  const auto& state = std::get<KnnState>(model.state());
  const auto k = static_cast<std::size_t>(std::get<KnnParams>(model.params()).k);
  const std::size_t dim = model.feature_dim();
  const std::size_t n = state.labels.size();

  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = state.points.data() + i * dim;
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = row[j] - x[j];
      d += diff * diff;
    }
    dist[i] = {d, i};
  }
  // (distance, index) ordering breaks distance ties by training order.
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

  // Label -> (votes, rank of its closest member).
  std::map<int, std::pair<std::size_t, std::size_t>> votes;
  for (std::size_t r = 0; r < k; ++r) {
    auto [it, inserted] = votes.try_emplace(state.labels[dist[r].second], 0, r);
    ++it->second.first;
  }
  int best = 0;
  std::size_t best_votes = 0, best_rank = 0;
  for (const auto& [label, v] : votes) {
    if (v.first > best_votes || (v.first == best_votes && v.second < best_rank)) {
      best = label;
      best_votes = v.first;
      best_rank = v.second;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// CART

namespace {

struct TreeBuilder {
  std::span<const LabeledSample> samples;
  const TreeParams& params;
  std::size_t dim;
  std::vector<int> classes;
  std::vector<TreeNode> nodes;

  std::size_t class_index(int label) const {
    return static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), label) - classes.begin());
  }

  static double gini(const std::vector<double>& counts, double total) {
    if (total <= 0.0) return 0.0;
    double sq = 0.0;
    for (double c : counts) sq += c * c;
    return 1.0 - sq / (total * total);
  }

  int majority(const std::vector<std::size_t>& idx) const {
    std::vector<std::size_t> counts(classes.size(), 0);
    for (std::size_t i : idx) ++counts[class_index(samples[i].label)];
    const auto best = std::max_element(counts.begin(), counts.end()) - counts.begin();
    return classes[static_cast<std::size_t>(best)];
  }

  int build(std::vector<std::size_t> idx, int depth) {
    const int node_id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[static_cast<std::size_t>(node_id)].label = majority(idx);

    const int first = samples[idx.front()].label;
    const bool pure = std::all_of(idx.begin(), idx.end(),
                                  [&](std::size_t i) { return samples[i].label == first; });
    const bool depth_reached = params.max_depth > 0 && depth >= params.max_depth;
    if (pure || depth_reached || idx.size() < static_cast<std::size_t>(params.min_samples_split)) {
      return node_id;
    }

    const double n = static_cast<double>(idx.size());
    std::vector<double> total_counts(classes.size(), 0.0);
    for (std::size_t i : idx) total_counts[class_index(samples[i].label)] += 1.0;

    double best_impurity = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order = idx;
    std::vector<double> left(classes.size());
    std::vector<double> right(classes.size());
    for (std::size_t f = 0; f < dim; ++f) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return samples[a].features[f] < samples[b].features[f];
      });
      std::fill(left.begin(), left.end(), 0.0);
      right = total_counts;
      for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
        const std::size_t c = class_index(samples[order[pos]].label);
        left[c] += 1.0;
        right[c] -= 1.0;
        const double v = samples[order[pos]].features[f];
        const double next = samples[order[pos + 1]].features[f];
        if (!(v < next)) continue;
        const double nl = static_cast<double>(pos + 1);
        const double nr = n - nl;
        const double impurity = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
        if (impurity < best_impurity) {
          best_impurity = impurity;
          best_feature = static_cast<int>(f);
          double mid = v + (next - v) / 2.0;
          if (!(mid < next)) mid = v;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return node_id;  // every feature constant

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : idx) {
      (samples[i].features[static_cast<std::size_t>(best_feature)] <= best_threshold ? left_idx
                                                                                      : right_idx)
          .push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(std::move(left_idx), depth + 1);
    const int r = build(std::move(right_idx), depth + 1);
    TreeNode& node = nodes[static_cast<std::size_t>(node_id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return node_id;
  }
};

}  // namespace

TrainedModel tree_train(std::span<const LabeledSample> samples, const TreeParams& params) {
  params.validate();
  const std::size_t dim = checked_feature_dim(samples);
  TreeBuilder builder{samples, params, dim, distinct_labels(samples), {}};
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  builder.build(std::move(idx), 0);
  return TrainedModel(ClassifierKind::kTree, builder.classes, dim, params,
                      TreeState{std::move(builder.nodes)});
}

int tree_predict(const TrainedModel& model, std::span<const double> x) {
  check_query(model, x, ClassifierKind::kTree);
  const auto& nodes = std::get<TreeState>(model.state()).nodes;
  std::size_t at = 0;
  while (nodes[at].feature >= 0) {
    const TreeNode& node = nodes[at];
    at = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                      ? node.left
                                      : node.right);
  }
  return nodes[at].label;
}

}  // namespace her2
