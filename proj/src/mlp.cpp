#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "her2/classifiers.hpp"
#include "her2/error.hpp"
#include "her2/random.hpp"

namespace her2 {

namespace {

void init_layer(std::vector<double>& w, std::vector<double>& b, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  w.resize(static_cast<std::size_t>(fan_in) * static_cast<std::size_t>(fan_out));
  b.resize(static_cast<std::size_t>(fan_out));
  for (double& v : w) v = rng.uniform(-bound, bound);
  for (double& v : b) v = rng.uniform(-bound, bound);
}

// Hidden activations and softmax probabilities for one row.
void forward(const MlpState& net, const double* x, std::vector<double>& hidden,
             std::vector<double>& probs) {
  const auto in = static_cast<std::size_t>(net.inputs);
  const auto hid = static_cast<std::size_t>(net.hidden);
  const auto out = static_cast<std::size_t>(net.outputs);
  hidden.assign(net.b1.begin(), net.b1.end());
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = net.w1.data() + i * hid;
    for (std::size_t h = 0; h < hid; ++h) hidden[h] += xi * row[h];
  }
  for (double& v : hidden) v = std::max(0.0, v);
  probs.assign(net.b2.begin(), net.b2.end());
  for (std::size_t h = 0; h < hid; ++h) {
    const double a = hidden[h];
    if (a == 0.0) continue;
    const double* row = net.w2.data() + h * out;
    for (std::size_t k = 0; k < out; ++k) probs[k] += a * row[k];
  }
  const double top = *std::max_element(probs.begin(), probs.end());
  double z = 0.0;
  for (double& v : probs) {
    v = std::exp(v - top);
    z += v;
  }
  for (double& v : probs) v /= z;
}

MlpState zeros_like(const MlpState& net) {
  MlpState g;
  g.inputs = net.inputs;
  g.hidden = net.hidden;
  g.outputs = net.outputs;
  g.w1.assign(net.w1.size(), 0.0);
  g.b1.assign(net.b1.size(), 0.0);
  g.w2.assign(net.w2.size(), 0.0);
  g.b2.assign(net.b2.size(), 0.0);
  return g;
}

std::vector<double*> parameter_views(MlpState& s) {
  std::vector<double*> out;
  for (auto* v : {&s.w1, &s.b1, &s.w2, &s.b2}) {
    for (double& x : *v) out.push_back(&x);
  }
  return out;
}

}  // namespace

std::vector<double> mlp_logits(const MlpState& net, std::span<const double> x) {
  const auto hid = static_cast<std::size_t>(net.hidden);
  const auto out = static_cast<std::size_t>(net.outputs);
  std::vector<double> hidden(net.b1.begin(), net.b1.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t h = 0; h < hid; ++h) hidden[h] += x[i] * net.w1[i * hid + h];
  }
  std::vector<double> logits(net.b2.begin(), net.b2.end());
  for (std::size_t h = 0; h < hid; ++h) {
    const double a = std::max(0.0, hidden[h]);
    for (std::size_t k = 0; k < out; ++k) logits[k] += a * net.w2[h * out + k];
  }
  return logits;
}

double mlp_loss_and_gradient(const MlpState& net, std::span<const double> x,
                             std::span<const int> targets, double l2_penalty, MlpState* grad) {
  const auto in = static_cast<std::size_t>(net.inputs);
  const auto hid = static_cast<std::size_t>(net.hidden);
  const auto out = static_cast<std::size_t>(net.outputs);
  const std::size_t batch = targets.size();
  if (batch == 0 || x.size() != batch * in) throw InvariantError("MLP batch shape mismatch");

  if (grad) *grad = zeros_like(net);
  std::vector<double> hidden, probs, delta_hidden(hid);
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* row = x.data() + r * in;
    forward(net, row, hidden, probs);
    const auto target = static_cast<std::size_t>(targets[r]);
    loss -= std::log(std::max(probs[target], std::numeric_limits<double>::min()));
    if (!grad) continue;

    // Softmax + cross-entropy: d loss / d logits = p - onehot.
    probs[target] -= 1.0;
    std::fill(delta_hidden.begin(), delta_hidden.end(), 0.0);
    for (std::size_t h = 0; h < hid; ++h) {
      const double a = hidden[h];
      const double* w2row = net.w2.data() + h * out;
      double* g2row = grad->w2.data() + h * out;
      double back = 0.0;
      for (std::size_t k = 0; k < out; ++k) {
        g2row[k] += a * probs[k];
        back += w2row[k] * probs[k];
      }
      delta_hidden[h] = a > 0.0 ? back : 0.0;
    }
    for (std::size_t k = 0; k < out; ++k) grad->b2[k] += probs[k];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = row[i];
      if (xi == 0.0) continue;
      double* g1row = grad->w1.data() + i * hid;
      for (std::size_t h = 0; h < hid; ++h) g1row[h] += xi * delta_hidden[h];
    }
    for (std::size_t h = 0; h < hid; ++h) grad->b1[h] += delta_hidden[h];
  }

  const double n = static_cast<double>(batch);
  double sq = 0.0;
  for (double w : net.w1) sq += w * w;
  for (double w : net.w2) sq += w * w;
  loss = loss / n + 0.5 * l2_penalty * sq / n;

  if (grad) {
    for (std::size_t i = 0; i < net.w1.size(); ++i) {
      grad->w1[i] = (grad->w1[i] + l2_penalty * net.w1[i]) / n;
    }
    for (std::size_t i = 0; i < net.w2.size(); ++i) {
      grad->w2[i] = (grad->w2[i] + l2_penalty * net.w2[i]) / n;
    }
    for (double& v : grad->b1) v /= n;
    for (double& v : grad->b2) v /= n;
  }
  return loss;
}

TrainedModel mlp_train(std::span<const LabeledSample> samples, const MlpParams& params) {
  params.validate();
  const std::size_t dim = checked_feature_dim(samples);
  const std::vector<int> classes = distinct_labels(samples);
  if (classes.size() < 2) throw DataError("MLP training needs at least two classes");

  const std::size_t n = samples.size();
  std::vector<double> x(n * dim);
  std::vector<int> targets(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy(samples[r].features.begin(), samples[r].features.end(),
              x.begin() + static_cast<std::ptrdiff_t>(r * dim));
    targets[r] = static_cast<int>(
        std::lower_bound(classes.begin(), classes.end(), samples[r].label) - classes.begin());
  }

  Rng rng(params.seed);
  MlpState net;
  net.inputs = static_cast<int>(dim);
  net.hidden = params.hidden_units;
  net.outputs = static_cast<int>(classes.size());
  init_layer(net.w1, net.b1, net.inputs, net.hidden, rng);
  init_layer(net.w2, net.b2, net.hidden, net.outputs, rng);

  // Adam state, one slot per parameter in w1,b1,w2,b2 order.
  std::vector<double*> theta = parameter_views(net);
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::int64_t step = 0;

  const std::size_t batch_size = std::min<std::size_t>(static_cast<std::size_t>(params.batch_size), n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> bx;
  std::vector<int> by;
  MlpState grad;

  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  int epoch = 0;
  double epoch_loss = 0.0;
  while (epoch < params.max_epochs) {
    rng.shuffle(std::span(order));
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(n, start + batch_size);
      bx.clear();
      by.clear();
      for (std::size_t p = start; p < end; ++p) {
        const std::size_t r = order[p];
        bx.insert(bx.end(), x.begin() + static_cast<std::ptrdiff_t>(r * dim),
                  x.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
        by.push_back(targets[r]);
      }
      const double loss = mlp_loss_and_gradient(net, bx, by, params.l2_penalty, &grad);
      epoch_loss += loss * static_cast<double>(end - start);

      ++step;
      const double lr = params.learning_rate *
                        std::sqrt(1.0 - std::pow(kBeta2, static_cast<double>(step))) /
                        (1.0 - std::pow(kBeta1, static_cast<double>(step)));
      std::vector<double*> g = parameter_views(grad);
      for (std::size_t p = 0; p < theta.size(); ++p) {
        m[p] = kBeta1 * m[p] + (1.0 - kBeta1) * *g[p];
        v[p] = kBeta2 * v[p] + (1.0 - kBeta2) * *g[p] * *g[p];
        *theta[p] -= lr * m[p] / (std::sqrt(v[p]) + kEps);
      }
    }
    epoch_loss /= static_cast<double>(n);
    ++epoch;

    if (epoch_loss > best_loss - params.tolerance) {
      ++stale;
    } else {
      stale = 0;
    }
    best_loss = std::min(best_loss, epoch_loss);
    if (stale >= params.no_improvement_epochs) break;
  }
  net.epochs_run = epoch;
  net.final_loss = epoch_loss;
  return TrainedModel(ClassifierKind::kMlp, classes, dim, params, std::move(net));
}

int mlp_predict(const TrainedModel& model, std::span<const double> x) {
  if (model.kind() != ClassifierKind::kMlp) throw InputError("model kind mismatch");
  if (x.size() != model.feature_dim()) throw InputError("feature dimension mismatch");
  const std::vector<double> logits = mlp_logits(std::get<MlpState>(model.state()), x);
  return model.class_set()[static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin())];
}

}  // namespace her2
