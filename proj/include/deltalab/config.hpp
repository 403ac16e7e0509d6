#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "deltalab/trainer.hpp"

namespace deltalab {

struct IoConfig {
  /// Parent directory for run directories; empty means $DELTALAB_RUNS, else ./runs.
  std::string runs_root;
  /// Steps whose rollout batch and coefficients are written as JSON lines.
  std::vector<std::size_t> dump_steps;
  bool token_weight_report = true;
};

/// Everything one `train` invocation needs. Sections: task, policy, rollout,
/// objective, delta, trainer, eval, io. Every field has a default and unknown
/// keys are rejected.
struct RunConfig {
  TrainConfig train;
  ExperimentVariant variant;
  IoConfig io;

  void validate() const;
};

/// Parses and validates a config document. Errors name the offending field
/// as "section.key".
RunConfig parse_run_config(const nlohmann::json& doc);
/// Fully resolved document; parse_run_config(to_json(c)) reproduces c.
nlohmann::ordered_json to_json(const RunConfig& cfg);

nlohmann::json read_config_document(const std::filesystem::path& path);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "section.key=value" to a raw document. The value is read as JSON
/// when it parses as JSON and as a plain string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

}  // namespace deltalab
