#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "her2/imaging.hpp"
#include "her2/pipeline.hpp"

namespace her2 {

/// Everything a CLI run needs. Serialized as flat `key = value` lines.
struct RunConfig {
  PipelineConfig pipeline;
  TissueFilterConfig tissue;
  std::string manifest;
  std::string model_dir = "models";
  std::string output_dir = "out";
};

/// Applies one setting. Throws InputError for unknown keys or bad values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Parses `key = value` lines; `#` starts a comment. Unknown keys and
/// repeated keys are rejected with the offending line number.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});

/// Canonical text: every key, fixed order. Parsing it yields the same config.
std::string format_run_config(const RunConfig& config);

/// Hash of the settings that determine outputs (threads and paths excluded).
std::string config_hash(const RunConfig& config);

nlohmann::json pipeline_config_to_json(const PipelineConfig& config);
/// Inverse of pipeline_config_to_json; throws InputError on bad documents.
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc);

}  // namespace her2
