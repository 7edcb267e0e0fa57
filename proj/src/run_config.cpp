#include "her2/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

#include "her2/error.hpp"
#include "her2/fileutil.hpp"
#include "her2/model_io.hpp"

namespace her2 {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string bad_value(std::string_view key, std::string_view value) {
  return "invalid value '" + std::string(value) + "' for " + std::string(key);
}

double to_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw InputError(bad_value(key, value));
    return v;
  } catch (const std::logic_error&) {
    throw InputError(bad_value(key, value));
  }
}

template <typename Int>
Int to_int(std::string_view key, std::string_view value) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw InputError(bad_value(key, value));
  }
  return v;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw InputError(bad_value(key, value));
}

std::vector<std::string_view> split_list(std::string_view value) {
  std::vector<std::string_view> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    out.push_back(trim(value.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

SvmKernel to_kernel(std::string_view key, std::string_view value) {
  if (value == "linear") return SvmKernel::kLinear;
  if (value == "rbf") return SvmKernel::kRbf;
  throw InputError(bad_value(key, value));
}

std::string_view kernel_text(SvmKernel k) { return k == SvmKernel::kLinear ? "linear" : "rbf"; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_numbers(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + num(values[i]);
  return out;
}

bool apply_classifier_setting(ClassifierSpec& spec, std::string_view key, std::string_view sub,
                              std::string_view value) {
  if (sub == "classifier") spec.kind = parse_classifier(value);
  else if (sub == "knn.k") spec.knn.k = to_int<int>(key, value);
  else if (sub == "svm.c") spec.svm.c = to_double(key, value);
  else if (sub == "svm.gamma") spec.svm.gamma = to_double(key, value);
  else if (sub == "svm.kernel") spec.svm.kernel = to_kernel(key, value);
  else if (sub == "svm.tolerance") spec.svm.tolerance = to_double(key, value);
  else if (sub == "svm.max_iterations") spec.svm.max_iterations = to_int<std::int64_t>(key, value);
  else if (sub == "svm.grid_search") spec.grid_search = to_bool(key, value);
  else if (sub == "svm.grid_folds") spec.grid_folds = to_int<int>(key, value);
  else if (sub == "svm.grid.c") {
    spec.grid.c_values.clear();
    for (auto v : split_list(value)) spec.grid.c_values.push_back(to_double(key, v));
  } else if (sub == "svm.grid.gamma") {
    spec.grid.gamma_values.clear();
    for (auto v : split_list(value)) spec.grid.gamma_values.push_back(to_double(key, v));
  } else if (sub == "svm.grid.kernels") {
    spec.grid.kernels.clear();
    for (auto v : split_list(value)) spec.grid.kernels.push_back(to_kernel(key, v));
  } else if (sub == "mlp.hidden_units") spec.mlp.hidden_units = to_int<int>(key, value);
  else if (sub == "mlp.learning_rate") spec.mlp.learning_rate = to_double(key, value);
  else if (sub == "mlp.max_epochs") spec.mlp.max_epochs = to_int<int>(key, value);
  else if (sub == "mlp.batch_size") spec.mlp.batch_size = to_int<int>(key, value);
  else if (sub == "mlp.l2_penalty") spec.mlp.l2_penalty = to_double(key, value);
  else if (sub == "tree.max_depth") spec.tree.max_depth = to_int<int>(key, value);
  else if (sub == "tree.min_samples_split") spec.tree.min_samples_split = to_int<int>(key, value);
  else return false;
  return true;
}

void format_classifier(std::ostringstream& out, const std::string& prefix,
                       const ClassifierSpec& spec) {
  std::string grid_kernels;
  for (std::size_t i = 0; i < spec.grid.kernels.size(); ++i) {
    grid_kernels += (i ? "," : "") + std::string(kernel_text(spec.grid.kernels[i]));
  }
  out << prefix << ".classifier = " << classifier_name(spec.kind) << '\n'
      << prefix << ".knn.k = " << spec.knn.k << '\n'
      << prefix << ".svm.c = " << num(spec.svm.c) << '\n'
      << prefix << ".svm.gamma = " << num(spec.svm.gamma) << '\n'
      << prefix << ".svm.kernel = " << kernel_text(spec.svm.kernel) << '\n'
      << prefix << ".svm.tolerance = " << num(spec.svm.tolerance) << '\n'
      << prefix << ".svm.max_iterations = " << spec.svm.max_iterations << '\n'
      << prefix << ".svm.grid_search = " << (spec.grid_search ? "true" : "false") << '\n'
      << prefix << ".svm.grid_folds = " << spec.grid_folds << '\n'
      << prefix << ".svm.grid.c = " << join_numbers(spec.grid.c_values) << '\n'
      << prefix << ".svm.grid.gamma = " << join_numbers(spec.grid.gamma_values) << '\n'
      << prefix << ".svm.grid.kernels = " << grid_kernels << '\n'
      << prefix << ".mlp.hidden_units = " << spec.mlp.hidden_units << '\n'
      << prefix << ".mlp.learning_rate = " << num(spec.mlp.learning_rate) << '\n'
      << prefix << ".mlp.max_epochs = " << spec.mlp.max_epochs << '\n'
      << prefix << ".mlp.batch_size = " << spec.mlp.batch_size << '\n'
      << prefix << ".mlp.l2_penalty = " << num(spec.mlp.l2_penalty) << '\n'
      << prefix << ".tree.max_depth = " << spec.tree.max_depth << '\n'
      << prefix << ".tree.min_samples_split = " << spec.tree.min_samples_split << '\n';
}

}  // namespace

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  PipelineConfig& p = config.pipeline;
  if (key == "descriptor") p.descriptor = parse_descriptor(value);
  else if (key == "bins") p.histogram.bins_per_channel = to_int<int>(key, value);
  else if (key == "normalize") p.histogram.normalize = to_bool(key, value);
  else if (key == "class_mode") p.class_mode = parse_class_mode(value);
  else if (key == "include_noise") p.include_noise_fraction = to_bool(key, value);
  else if (key == "seed") p.seed = to_int<std::uint64_t>(key, value);
  else if (key == "threads") p.threads = to_int<int>(key, value);
  else if (key == "tissue.background_luma_threshold") config.tissue.background_luma_threshold = to_double(key, value);
  else if (key == "tissue.max_background_fraction") config.tissue.max_background_fraction = to_double(key, value);
  else if (key == "tissue.min_luma_stddev") config.tissue.min_luma_stddev = to_double(key, value);
  else if (key == "manifest") config.manifest = std::string(value);
  else if (key == "model_dir") config.model_dir = std::string(value);
  else if (key == "output_dir") config.output_dir = std::string(value);
  else if (key.starts_with("image.") &&
           apply_classifier_setting(p.image_classifier, key, key.substr(6), value)) {
  } else if (key.starts_with("patient.") &&
             apply_classifier_setting(p.patient_classifier, key, key.substr(8), value)) {
  } else {
    throw InputError("unknown config key '" + std::string(key) + "'");
  }
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::set<std::string> seen;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InputError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) {
      throw InputError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    try {
      apply_setting(base, key, line.substr(eq + 1));
    } catch (const InputError& e) {
      throw InputError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

std::string format_run_config(const RunConfig& config) {
  const PipelineConfig& p = config.pipeline;
  std::ostringstream out;
  out << "descriptor = " << descriptor_name(p.descriptor) << '\n'
      << "bins = " << p.histogram.bins_per_channel << '\n'
      << "normalize = " << (p.histogram.normalize ? "true" : "false") << '\n'
      << "class_mode = " << class_mode_name(p.class_mode) << '\n'
      << "include_noise = " << (p.include_noise_fraction ? "true" : "false") << '\n'
      << "seed = " << p.seed << '\n';
  format_classifier(out, "image", p.image_classifier);
  format_classifier(out, "patient", p.patient_classifier);
  out << "tissue.background_luma_threshold = " << num(config.tissue.background_luma_threshold) << '\n'
      << "tissue.max_background_fraction = " << num(config.tissue.max_background_fraction) << '\n'
      << "tissue.min_luma_stddev = " << num(config.tissue.min_luma_stddev) << '\n'
      << "threads = " << p.threads << '\n'
      << "manifest = " << config.manifest << '\n'
      << "model_dir = " << config.model_dir << '\n'
      << "output_dir = " << config.output_dir << '\n';
  return out.str();
}

std::string config_hash(const RunConfig& config) {
  RunConfig c = config;
  c.pipeline.threads = 1;
  c.manifest.clear();
  c.model_dir.clear();
  c.output_dir.clear();
  return fnv1a_hex(format_run_config(c));
}

namespace {

json classifier_to_json(const ClassifierSpec& s) {
  json grid = {{"c", s.grid.c_values}, {"gamma", s.grid.gamma_values}, {"kernels", json::array()}};
  for (SvmKernel k : s.grid.kernels) grid["kernels"].push_back(kernel_text(k));
  return {{"kind", classifier_name(s.kind)},
          {"knn_k", s.knn.k},
          {"svm", svm_params_to_json(s.svm)},
          {"grid_search", s.grid_search},
          {"grid_folds", s.grid_folds},
          {"grid", grid},
          {"mlp",
           {{"hidden_units", s.mlp.hidden_units},
            {"learning_rate", s.mlp.learning_rate},
            {"max_epochs", s.mlp.max_epochs},
            {"batch_size", s.mlp.batch_size},
            {"l2_penalty", s.mlp.l2_penalty},
            {"tolerance", s.mlp.tolerance},
            {"no_improvement_epochs", s.mlp.no_improvement_epochs}}},
          {"tree",
           {{"max_depth", s.tree.max_depth}, {"min_samples_split", s.tree.min_samples_split}}}};
}

ClassifierSpec classifier_from_json(const json& j) {
  ClassifierSpec s;
  s.kind = parse_classifier(j.at("kind").get<std::string>());
  s.knn.k = j.at("knn_k").get<int>();
  s.svm = svm_params_from_json(j.at("svm"));
  s.grid_search = j.at("grid_search").get<bool>();
  s.grid_folds = j.at("grid_folds").get<int>();
  const json& g = j.at("grid");
  s.grid.c_values = g.at("c").get<std::vector<double>>();
  s.grid.gamma_values = g.at("gamma").get<std::vector<double>>();
  s.grid.kernels.clear();
  for (const auto& k : g.at("kernels")) s.grid.kernels.push_back(to_kernel("kernel", k.get<std::string>()));
  const json& m = j.at("mlp");
  s.mlp.hidden_units = m.at("hidden_units").get<int>();
  s.mlp.learning_rate = m.at("learning_rate").get<double>();
  s.mlp.max_epochs = m.at("max_epochs").get<int>();
  s.mlp.batch_size = m.at("batch_size").get<int>();
  s.mlp.l2_penalty = m.at("l2_penalty").get<double>();
  s.mlp.tolerance = m.at("tolerance").get<double>();
  s.mlp.no_improvement_epochs = m.at("no_improvement_epochs").get<int>();
  s.tree.max_depth = j.at("tree").at("max_depth").get<int>();
  s.tree.min_samples_split = j.at("tree").at("min_samples_split").get<int>();
  return s;
}

}  // namespace

json pipeline_config_to_json(const PipelineConfig& c) {
  return {{"descriptor", descriptor_name(c.descriptor)},
          {"bins", c.histogram.bins_per_channel},
          {"normalize", c.histogram.normalize},
          {"class_mode", class_mode_name(c.class_mode)},
          {"include_noise", c.include_noise_fraction},
          {"seed", c.seed},
          {"image_classifier", classifier_to_json(c.image_classifier)},
          {"patient_classifier", classifier_to_json(c.patient_classifier)}};
}

PipelineConfig pipeline_config_from_json(const json& doc) {
  try {
    PipelineConfig c;
    c.descriptor = parse_descriptor(doc.at("descriptor").get<std::string>());
    c.histogram.bins_per_channel = doc.at("bins").get<int>();
    c.histogram.normalize = doc.at("normalize").get<bool>();
    c.class_mode = parse_class_mode(doc.at("class_mode").get<std::string>());
    c.include_noise_fraction = doc.at("include_noise").get<bool>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.image_classifier = classifier_from_json(doc.at("image_classifier"));
    c.patient_classifier = classifier_from_json(doc.at("patient_classifier"));
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed pipeline config: ") + e.what());
  }
}

}  // namespace her2
