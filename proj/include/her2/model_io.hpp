#pragma once

#include <filesystem>

#include "json.hpp"

#include "her2/classifiers.hpp"
#include "her2/grid_search.hpp"

namespace her2 {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const TrainedModel& model);
/// Throws InputError on schema violations or a version other than
/// kModelFormatVersion.
TrainedModel model_from_json(const nlohmann::json& doc);

nlohmann::json svm_params_to_json(const SvmParams& p);
SvmParams svm_params_from_json(const nlohmann::json& j);

/// {"best": params, "best_accuracy", "trace": [{c, gamma, kernel, accuracy}]}.
nlohmann::json grid_search_to_json(const GridSearchResult& result);

struct ModelFile {
  TrainedModel model;
  nlohmann::json metadata;
};

/// Self-describing JSON container: format tag, version, classifier kind,
/// params, class set, learned arrays, plus caller metadata.
void save_model(const std::filesystem::path& path, const TrainedModel& model,
                const nlohmann::json& metadata = nlohmann::json::object());
ModelFile load_model(const std::filesystem::path& path);

}  // namespace her2
