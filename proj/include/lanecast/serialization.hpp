#pragma once

#include "lanecast/model.hpp"

#include <json.hpp>

namespace lanecast {

void to_json(nlohmann::json& j, const GraphMLPConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, GraphMLPConfig& c);

} // namespace lanecast
