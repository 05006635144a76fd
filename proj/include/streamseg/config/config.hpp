// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "streamseg/runtime/stream.hpp"
#include "streamseg/sim/scene.hpp"

namespace streamseg::config {

/// Thrown on malformed configuration; message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

sim::SceneConfig scene_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json scene_config_to_json(const sim::SceneConfig& cfg);

runtime::RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json run_config_to_json(const runtime::RunConfig& cfg);

struct ExperimentSpec {
  runtime::RunConfig base;
  sim::SceneConfig scene;
  std::string scene_path;  // native sequence input; overrides `scene` if set
  enum class Sweep { none, fps, latency, strategy };
  Sweep sweep = Sweep::none;
  std::vector<double> fps_values;
  std::vector<double> latency_values;
  std::vector<align::StrategyKind> strategies;
  std::string out_dir = ".";
};

ExperimentSpec experiment_from_json(const nlohmann::json& j);

nlohmann::json load_json_file(const std::string& path);

}  // namespace streamseg::config
