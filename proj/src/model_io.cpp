#include "her2/model_io.hpp"

#include "her2/error.hpp"
#include "her2/fileutil.hpp"

namespace her2 {

using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "her2-model";

std::string_view kernel_name(SvmKernel k) { return k == SvmKernel::kLinear ? "linear" : "rbf"; }

SvmKernel parse_kernel(const std::string& s) {
  if (s == "linear") return SvmKernel::kLinear;
  if (s == "rbf") return SvmKernel::kRbf;
  throw InputError("unknown SVM kernel '" + s + "'");
}

json params_to_json(const ModelParams& params) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SvmParams>) {
          return svm_params_to_json(p);
        } else if constexpr (std::is_same_v<T, KnnParams>) {
          return {{"k", p.k}};
        } else if constexpr (std::is_same_v<T, MlpParams>) {
          return {{"hidden_units", p.hidden_units}, {"learning_rate", p.learning_rate},
                  {"max_epochs", p.max_epochs},     {"batch_size", p.batch_size},
                  {"l2_penalty", p.l2_penalty},     {"tolerance", p.tolerance},
                  {"no_improvement_epochs", p.no_improvement_epochs},
                  {"seed", p.seed}};
        } else {
          return {{"max_depth", p.max_depth}, {"min_samples_split", p.min_samples_split}};
        }
      },
      params);
}

json state_to_json(const ModelState& state) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SvmState>) {
          json machines = json::array();
          for (const BinarySvm& m : s.machines) {
            machines.push_back({{"positive_label", m.positive_label},
                                {"negative_label", m.negative_label},
                                {"support_vectors", m.support_vectors},
                                {"coef", m.coef},
                                {"rho", m.rho},
                                {"iterations", m.iterations},
                                {"converged", m.converged}});
          }
          return {{"machines", machines}};
        } else if constexpr (std::is_same_v<T, KnnState>) {
          return {{"points", s.points}, {"labels", s.labels}};
        } else if constexpr (std::is_same_v<T, MlpState>) {
          return {{"inputs", s.inputs}, {"hidden", s.hidden}, {"outputs", s.outputs},
                  {"w1", s.w1},         {"b1", s.b1},         {"w2", s.w2},
                  {"b2", s.b2},         {"epochs_run", s.epochs_run},
                  {"final_loss", s.final_loss}};
        } else {
          json nodes = json::array();
          for (const TreeNode& n : s.nodes) {
            nodes.push_back({n.feature, n.threshold, n.left, n.right, n.label});
          }
          return {{"nodes", nodes}};
        }
      },
      state);
}

}  // namespace

json svm_params_to_json(const SvmParams& p) {
  return {{"c", p.c},
          {"gamma", p.gamma},
          {"kernel", kernel_name(p.kernel)},
          {"tolerance", p.tolerance},
          {"epsilon", p.epsilon},
          {"max_iterations", p.max_iterations}};
}

SvmParams svm_params_from_json(const json& j) {
  SvmParams p;
  p.c = j.at("c").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.kernel = parse_kernel(j.at("kernel").get<std::string>());
  p.tolerance = j.at("tolerance").get<double>();
  p.epsilon = j.at("epsilon").get<double>();
  p.max_iterations = j.at("max_iterations").get<std::int64_t>();
  return p;
}

json grid_search_to_json(const GridSearchResult& result) {
  json trace = json::array();
  for (const GridCell& cell : result.trace) {
    trace.push_back({{"c", cell.params.c},
                     {"gamma", cell.params.gamma},
                     {"kernel", kernel_name(cell.params.kernel)},
                     {"accuracy", cell.accuracy}});
  }
  return {{"best", svm_params_to_json(result.best)},
          {"best_accuracy", result.best_accuracy},
          {"trace", trace}};
}

json model_to_json(const TrainedModel& model) {
  return {{"format", kFormatTag},
          {"version", kModelFormatVersion},
          {"kind", classifier_name(model.kind())},
          {"class_set", model.class_set()},
          {"feature_dim", model.feature_dim()},
          {"params", params_to_json(model.params())},
          {"state", state_to_json(model.state())}};
}

TrainedModel model_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kFormatTag) {
      throw InputError("not a model file");
    }
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw InputError("unsupported model format version " + std::to_string(version) +
                       " (expected " + std::to_string(kModelFormatVersion) + ")");
    }
    const ClassifierKind kind = parse_classifier(doc.at("kind").get<std::string>());
    auto class_set = doc.at("class_set").get<std::vector<int>>();
    const auto dim = doc.at("feature_dim").get<std::size_t>();
    const json& p = doc.at("params");
    const json& s = doc.at("state");

    switch (kind) {
      case ClassifierKind::kSvm: {
        SvmState state;
        for (const json& m : s.at("machines")) {
          BinarySvm b;
          b.positive_label = m.at("positive_label").get<int>();
          b.negative_label = m.at("negative_label").get<int>();
          b.support_vectors = m.at("support_vectors").get<std::vector<double>>();
          b.coef = m.at("coef").get<std::vector<double>>();
          b.rho = m.at("rho").get<double>();
          b.iterations = m.at("iterations").get<std::int64_t>();
          b.converged = m.at("converged").get<bool>();
          if (b.support_vectors.size() != b.coef.size() * dim) {
            throw InputError("support vector array has the wrong length");
          }
          state.machines.push_back(std::move(b));
        }
        return TrainedModel(kind, std::move(class_set), dim, svm_params_from_json(p),
                            std::move(state));
      }
      case ClassifierKind::kKnn: {
        KnnState state;
        state.points = s.at("points").get<std::vector<double>>();
        state.labels = s.at("labels").get<std::vector<int>>();
        if (state.points.size() != state.labels.size() * dim) {
          throw InputError("KNN point array has the wrong length");
        }
        return TrainedModel(kind, std::move(class_set), dim, KnnParams{p.at("k").get<int>()},
                            std::move(state));
      }
      case ClassifierKind::kMlp: {
        MlpParams mp;
        mp.hidden_units = p.at("hidden_units").get<int>();
        mp.learning_rate = p.at("learning_rate").get<double>();
        mp.max_epochs = p.at("max_epochs").get<int>();
        mp.batch_size = p.at("batch_size").get<int>();
        mp.l2_penalty = p.at("l2_penalty").get<double>();
        mp.tolerance = p.at("tolerance").get<double>();
        mp.no_improvement_epochs = p.at("no_improvement_epochs").get<int>();
        mp.seed = p.at("seed").get<std::uint64_t>();
        MlpState state;
        state.inputs = s.at("inputs").get<int>();
        state.hidden = s.at("hidden").get<int>();
        state.outputs = s.at("outputs").get<int>();
        state.w1 = s.at("w1").get<std::vector<double>>();
        state.b1 = s.at("b1").get<std::vector<double>>();
        state.w2 = s.at("w2").get<std::vector<double>>();
        state.b2 = s.at("b2").get<std::vector<double>>();
        state.epochs_run = s.at("epochs_run").get<int>();
        state.final_loss = s.at("final_loss").get<double>();
        const auto in = static_cast<std::size_t>(state.inputs);
        const auto hid = static_cast<std::size_t>(state.hidden);
        const auto out = static_cast<std::size_t>(state.outputs);
        if (in != dim || state.w1.size() != in * hid || state.b1.size() != hid ||
            state.w2.size() != hid * out || state.b2.size() != out || out != class_set.size()) {
          throw InputError("MLP weight arrays have inconsistent shapes");
        }
        return TrainedModel(kind, std::move(class_set), dim, mp, std::move(state));
      }
      case ClassifierKind::kTree: {
        TreeParams tp;
        tp.max_depth = p.at("max_depth").get<int>();
        tp.min_samples_split = p.at("min_samples_split").get<int>();
        TreeState state;
        for (const json& n : s.at("nodes")) {
          state.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                                 n.at(3).get<int>(), n.at(4).get<int>()});
        }
        const auto count = static_cast<int>(state.nodes.size());
        if (count == 0) throw InputError("tree has no nodes");
        for (const TreeNode& n : state.nodes) {
          if (n.feature >= static_cast<int>(dim) ||
              (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count ||
                                  n.right >= count))) {
            throw InputError("tree node references are out of range");
          }
        }
        return TrainedModel(kind, std::move(class_set), dim, tp, std::move(state));
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model document: ") + e.what());
  }
  throw InputError("malformed model document");
}

void save_model(const std::filesystem::path& path, const TrainedModel& model,
                const json& metadata) {
  json doc = model_to_json(model);
  doc["metadata"] = metadata;
  write_file_atomic(path, doc.dump(1) + "\n");
}

ModelFile load_model(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError("cannot parse model file " + path.string() + ": " + e.what());
  }
  TrainedModel model = model_from_json(doc);
  json metadata = doc.contains("metadata") ? doc["metadata"] : json::object();
  return {std::move(model), std::move(metadata)};
}

}  // namespace her2
