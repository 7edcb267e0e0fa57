#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "her2/classifiers.hpp"
#include "her2/error.hpp"
#include "her2/grid_search.hpp"
#include "her2/model_io.hpp"
#include "oracles.hpp"

using namespace her2;

namespace {

std::vector<LabeledSample> random_samples(Rng& rng, std::size_t n, std::size_t dim, int classes,
                                          bool integer_grid = false) {
  std::vector<LabeledSample> out(n);
  for (auto& s : out) {
    s.features.resize(dim);
    for (auto& v : s.features) {
      v = integer_grid ? static_cast<double>(rng.below(4)) : rng.uniform(-1.0, 1.0);
    }
    s.label = static_cast<int>(rng.below(static_cast<std::size_t>(classes)));
  }
  return out;
}

// Labels follow the sign of a random direction plus a class-dependent shift,
// giving instances that are mostly but not entirely separable.
std::vector<LabeledSample> blob_samples(Rng& rng, std::size_t n, std::size_t dim, double sep) {
  std::vector<LabeledSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].label = static_cast<int>(i % 2);
    out[i].features.resize(dim);
    for (auto& v : out[i].features) v = rng.normal(out[i].label ? sep : -sep, 1.0);
  }
  return out;
}

std::vector<std::vector<double>> rows_of(const std::vector<LabeledSample>& s) {
  std::vector<std::vector<double>> out;
  for (const auto& x : s) out.push_back(x.features);
  return out;
}

std::vector<int> labels_of(const std::vector<LabeledSample>& s) {
  std::vector<int> out;
  for (const auto& x : s) out.push_back(x.label);
  return out;
}

double resubstitution(const TrainedModel& m, const std::vector<LabeledSample>& s) {
  std::size_t ok = 0;
  for (const auto& x : s) ok += m.predict(x.features) == x.label;
  return static_cast<double>(ok) / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("classifier names") {
  CHECK(classifier_name(ClassifierKind::kTree) == "Tree");
  CHECK(parse_classifier("svm") == ClassifierKind::kSvm);
  CHECK(parse_classifier("KNN") == ClassifierKind::kKnn);
  CHECK_THROWS_AS(parse_classifier("forest"), InputError);
}

TEST_CASE("knn trivial cases and errors") {
  std::vector<LabeledSample> one = {{{0.5, 0.5}, 3, ""}};
  const auto m = knn_train(one, {1});
  CHECK(m.predict(std::vector<double>{100.0, -7.0}) == 3);
  CHECK_THROWS_AS(m.predict(std::vector<double>{1.0}), InputError);
  CHECK_THROWS_AS(knn_train(std::vector<LabeledSample>{}, {1}), DataError);
  std::vector<LabeledSample> ragged = {{{1.0}, 0, ""}, {{1.0, 2.0}, 1, ""}};
  CHECK_THROWS_AS(knn_train(ragged, {1}), InputError);

  Rng rng(1);
  const auto s = random_samples(rng, 50, 3, 4);
  const auto mk = knn_train(s, {1});
  for (const auto& x : s) {
    // Exact duplicates resolve to the lowest index among them.
    std::size_t first = 0;
    while (s[first].features != x.features) ++first;
    CHECK(mk.predict(x.features) == s[first].label);
  }
}

TEST_CASE("knn matches exhaustive scan on 200 random 2-D points") {
  Rng rng(2);
  const auto s = random_samples(rng, 200, 2, 3);
  const auto m = knn_train(s, {1});
  for (int q = 0; q < 50; ++q) {
    const std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    CHECK(m.predict(x) == oracle::knn(rows_of(s), labels_of(s), 1, x));
  }
}

TEST_CASE("knn vote ties go to the label ranked first") {
  // Neighbours of the origin by distance: A at 1, B at 2, B at 3, A at 4.
  std::vector<LabeledSample> s = {
      {{4.0}, 0, ""}, {{-2.0}, 1, ""}, {{1.0}, 0, ""}, {{3.0}, 1, ""}};
  CHECK(knn_train(s, {2}).predict(std::vector<double>{0.0}) == 0);
  s[2].label = 1;
  s[1].label = 0;  // A at 2, B at 1
  CHECK(knn_train(s, {2}).predict(std::vector<double>{0.0}) == 1);
  CHECK(knn_train(s, {4}).predict(std::vector<double>{0.0}) == 1);
}

TEST_CASE("tree examples") {
  std::vector<LabeledSample> pure = {{{1.0}, 2, ""}, {{5.0}, 2, ""}};
  const auto leaf = tree_train(pure, {});
  CHECK(std::get<TreeState>(leaf.state()).nodes.size() == 1);
  CHECK(leaf.predict(std::vector<double>{-40.0}) == 2);

  std::vector<LabeledSample> line = {{{0.0}, 0, ""}, {{1.0}, 0, ""}, {{10.0}, 1, ""}, {{11.0}, 1, ""}};
  const auto t = tree_train(line, {});
  const auto& nodes = std::get<TreeState>(t.state()).nodes;
  REQUIRE(nodes.size() == 3);
  CHECK(nodes[0].feature == 0);
  CHECK(nodes[0].threshold > 1.0);
  CHECK(nodes[0].threshold < 10.0);
  CHECK(resubstitution(t, line) == 1.0);
}

TEST_CASE("tree depth limit") {
  Rng rng(8);
  const auto s = random_samples(rng, 60, 3, 3);
  const auto t = tree_train(s, {1, 2});
  CHECK(std::get<TreeState>(t.state()).nodes.size() <= 3);
}

TEST_CASE("mlp trains XOR and blobs") {
  std::vector<LabeledSample> xr = {
      {{0.0, 0.0}, 0, ""}, {{1.0, 1.0}, 0, ""}, {{0.0, 1.0}, 1, ""}, {{1.0, 0.0}, 1, ""}};
  MlpParams p;
  p.hidden_units = 8;
  p.seed = 7;
  p.learning_rate = 0.05;
  p.max_epochs = 2000;
  p.tolerance = 1e-6;
  p.no_improvement_epochs = 50;
  const auto m = mlp_train(xr, p);
  CHECK(resubstitution(m, xr) == 1.0);
  CHECK(mlp_train(xr, p) == m);

  Rng rng(3);
  const auto blobs = blob_samples(rng, 200, 2, 2.0);
  MlpParams q;
  q.seed = 1;
  CHECK(resubstitution(mlp_train(blobs, q), blobs) >= 0.99);

  std::vector<LabeledSample> single = {{{0.0}, 1, ""}, {{1.0}, 1, ""}};
  CHECK_THROWS_AS(mlp_train(single, q), DataError);
}

TEST_CASE("mlp loss matches an independent forward pass") {
  Rng rng(17);
  MlpState net;
  net.inputs = 3;
  net.hidden = 4;
  net.outputs = 3;
  for (auto* v : {&net.w1, &net.b1, &net.w2, &net.b2}) {
    const std::size_t len = v == &net.w1 ? 12 : v == &net.w2 ? 12 : v == &net.b1 ? 4 : 3;
    v->resize(len);
    for (double& w : *v) w = rng.uniform(-1, 1);
  }
  std::vector<double> x(15);
  for (double& v : x) v = rng.uniform(-1, 1);
  const std::vector<int> t = {0, 2, 1, 1, 0};
  double expect = 0.0;
  for (std::size_t r = 0; r < 5; ++r) {
    std::vector<double> h(4);
    for (std::size_t j = 0; j < 4; ++j) {
      double a = net.b1[j];
      for (std::size_t i = 0; i < 3; ++i) a += x[r * 3 + i] * net.w1[i * 4 + j];
      h[j] = std::max(0.0, a);
    }
    std::vector<double> z(3);
    for (std::size_t k = 0; k < 3; ++k) {
      z[k] = net.b2[k];
      for (std::size_t j = 0; j < 4; ++j) z[k] += h[j] * net.w2[j * 3 + k];
    }
    double norm = 0.0;
    for (double v : z) norm += std::exp(v);
    expect += -(z[static_cast<std::size_t>(t[r])] - std::log(norm));
  }
  double sq = 0.0;
  for (double w : net.w1) sq += w * w;
  for (double w : net.w2) sq += w * w;
  expect = expect / 5.0 + 0.5 * 0.3 * sq / 5.0;
  CHECK(mlp_loss_and_gradient(net, x, t, 0.3, nullptr) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("svm symmetric pair") {
  std::vector<LabeledSample> s = {{{-1.0}, 0, ""}, {{1.0}, 1, ""}};
  SvmParams p;
  p.kernel = SvmKernel::kLinear;
  const auto m = svm_train(s, p);
  const auto& machine = std::get<SvmState>(m.state()).machines.at(0);
  CHECK(svm_decision_value(machine, p, std::vector<double>{0.0}) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(resubstitution(m, s) == 1.0);
  CHECK_THROWS_AS(svm_train(std::vector<LabeledSample>{{{1.0}, 0, ""}}, p), DataError);
}

TEST_CASE("svm dual feasibility and KKT") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_samples(rng, 40, 3, 3);
    SvmParams p;
    p.c = std::pow(2.0, static_cast<double>(rng.below(8)) - 2.0);
    p.gamma = rng.uniform(0.2, 3.0);
    p.kernel = trial % 2 ? SvmKernel::kLinear : SvmKernel::kRbf;
    const auto m = svm_train(s, p);
    for (const auto& machine : std::get<SvmState>(m.state()).machines) {
      CHECK(machine.converged);
      double sum = 0.0;
      for (double a : machine.coef) {
        CHECK(std::abs(a) > 0.0);
        CHECK(std::abs(a) <= p.c);
        sum += a;
      }
      CHECK(std::abs(sum) < 1e-6);
    }
  }
}

TEST_CASE("svm matches a dense QP on a 20-point separable set") {
  Rng rng(20);
  std::vector<LabeledSample> s;
  for (int i = 0; i < 20; ++i) {
    const int label = i % 2;
    s.push_back({{rng.uniform(0.0, 1.0) + 2.0 * label, rng.uniform(0.0, 1.0)}, label, ""});
  }
  for (SvmKernel kernel : {SvmKernel::kLinear, SvmKernel::kRbf}) {
    SvmParams p;
    p.kernel = kernel;
    p.c = 10.0;
    p.tolerance = 1e-8;
    const auto m = svm_train(s, p);
    const auto& machine = std::get<SvmState>(m.state()).machines.at(0);
    std::vector<std::vector<double>> k(20, std::vector<double>(20));
    std::vector<double> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      y[i] = s[i].label == machine.positive_label ? 1.0 : -1.0;
      for (std::size_t j = 0; j < 20; ++j) k[i][j] = kernel_value(p, s[i].features, s[j].features);
    }
    const auto ref = oracle::svm_dual(k, y, p.c);
    REQUIRE(ref.violation < 1e-9);
    for (int q = 0; q < 30; ++q) {
      const std::vector<double> x = {rng.uniform(-1, 4), rng.uniform(-1, 2)};
      double f = -ref.rho;
      for (std::size_t i = 0; i < 20; ++i) f += ref.alpha[i] * y[i] * kernel_value(p, s[i].features, x);
      CHECK(svm_decision_value(machine, p, x) == doctest::Approx(f).epsilon(0).scale(1).epsilon(1e-6));
    }
  }
}

TEST_CASE("svm one-vs-one voting ties go to the lowest class") {
  // Three classes arranged so that a query at the centre wins one duel each.
  std::vector<LabeledSample> s = {{{0.0, 1.0}, 0, ""}, {{0.866, -0.5}, 1, ""}, {{-0.866, -0.5}, 2, ""}};
  SvmParams p;
  p.kernel = SvmKernel::kLinear;
  const auto m = svm_train(s, p);
  // Rotate slightly off-centre toward class 0's bisector with class 1 so each
  // class gets exactly one vote.
  const std::vector<double> x = {0.3, 0.1};
  std::vector<int> votes(3, 0);
  for (const auto& machine : std::get<SvmState>(m.state()).machines) {
    votes[static_cast<std::size_t>(svm_decision_value(machine, p, x) > 0.0 ? machine.positive_label
                                                                          : machine.negative_label)]++;
  }
  const int top = *std::max_element(votes.begin(), votes.end());
  const int first = static_cast<int>(std::find(votes.begin(), votes.end(), top) - votes.begin());
  CHECK(m.predict(x) == first);
}

TEST_CASE("grid search") {
  Rng rng(31);
  // Concentric rings: only the rbf kernel separates them.
  std::vector<LabeledSample> rings;
  for (int i = 0; i < 60; ++i) {
    const double r = i % 2 ? 2.0 : 0.5;
    const double t = rng.uniform(0, 6.283);
    rings.push_back({{r * std::cos(t), r * std::sin(t)}, i % 2, ""});
  }
  SvmGrid grid{{1.0}, {1.0}, {SvmKernel::kLinear, SvmKernel::kRbf}};
  const auto res = grid_search_svm(rings, grid, 3);
  CHECK(res.best.kernel == SvmKernel::kRbf);
  CHECK(res.best_accuracy == 1.0);
  REQUIRE(res.trace.size() == 2);
  CHECK(res.trace[0].params.kernel == SvmKernel::kLinear);
  CHECK(res.trace[0].accuracy < 1.0);

  SvmGrid single{{4.0}, {0.25}, {SvmKernel::kRbf}};
  const auto one = grid_search_svm(rings, single, 3);
  CHECK(one.best.c == 4.0);
  CHECK(one.best.gamma == 0.25);

  // Separable blobs: every c reaches 100%, so the smallest wins.
  std::vector<LabeledSample> easy;
  for (int i = 0; i < 30; ++i) easy.push_back({{i % 2 ? 5.0 + 0.01 * i : -5.0 - 0.01 * i}, i % 2, ""});
  SvmGrid ties{{8.0, 2.0, 32.0}, {0.5}, {SvmKernel::kRbf}};
  CHECK(grid_search_svm(easy, ties, 3).best.c == 2.0);
  CHECK_THROWS_AS(grid_search_svm(std::span(easy).first(2), ties, 3), DataError);
}

TEST_CASE("grid defaults") {
  const auto g = SvmGrid::defaults();
  CHECK(g.c_values.size() == 11);
  CHECK(g.c_values.front() == std::pow(2.0, -5));
  CHECK(g.c_values.back() == std::pow(2.0, 15));
  CHECK(g.gamma_values.size() == 10);
  CHECK(g.gamma_values.front() == std::pow(2.0, -15));
  CHECK(g.gamma_values.back() == std::pow(2.0, 3));
}

TEST_CASE("stratified folds deal each class round-robin") {
  std::vector<LabeledSample> s;
  for (int label : {0, 0, 0, 1, 1, 1, 1, 0}) s.push_back({{0.0}, label, ""});
  const auto f = stratified_folds(s, 3);
  std::vector<std::vector<int>> per(3, std::vector<int>(2, 0));
  for (std::size_t i = 0; i < s.size(); ++i) per[static_cast<std::size_t>(f[i])][static_cast<std::size_t>(s[i].label)]++;
  for (int k = 0; k < 3; ++k) {
    CHECK(per[static_cast<std::size_t>(k)][0] >= 1);
    CHECK(per[static_cast<std::size_t>(k)][1] >= 1);
  }
}

TEST_CASE("model files round trip") {
  Rng rng(40);
  const auto s = random_samples(rng, 50, 4, 3);
  MlpParams mp;
  mp.hidden_units = 6;
  mp.max_epochs = 20;
  SvmParams sp;
  sp.gamma = 0.5;
  const std::vector<TrainedModel> models = {knn_train(s, {3}), tree_train(s, {}), mlp_train(s, mp),
                                            svm_train(s, sp)};
  const auto dir = std::filesystem::temp_directory_path() / "her2_model_io_test";
  std::filesystem::create_directories(dir);
  for (const auto& m : models) {
    const auto path = dir / (std::string(classifier_name(m.kind())) + ".json");
    save_model(path, m, {{"note", "x"}});
    const ModelFile loaded = load_model(path);
    CHECK(loaded.model == m);
    CHECK(loaded.metadata["note"] == "x");
    for (int q = 0; q < 30; ++q) {
      std::vector<double> x(4);
      for (double& v : x) v = rng.uniform(-1, 1);
      CHECK(loaded.model.predict(x) == m.predict(x));
    }
    auto doc = model_to_json(m);
    doc["version"] = 99;
    CHECK_THROWS_AS(model_from_json(doc), InputError);
  }
  std::filesystem::remove_all(dir);
}
