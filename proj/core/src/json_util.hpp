// SPDX-License-Identifier: Apache-2.0
// Private helpers: config structs <-> JSON, with field-level error context.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "talkit/error.hpp"
#include "talkit/model.hpp"

namespace talkit::detail {

using nlohmann::json;

template <class T>
T get_field(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ConfigError(ctx + "." + key + ": missing required field");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(ctx + "." + key + ": wrong type");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(ctx + "." + key + ": wrong type");
  }
}

json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const json& j, const std::string& ctx);

json fusion_plan_to_json(const FusionPlan& plan);
FusionPlan fusion_plan_from_json(const json& j, const std::string& ctx);

}  // namespace talkit::detail
