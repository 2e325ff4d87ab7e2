#pragma once

#include <json.hpp>

#include "tbsim/scenario.hpp"

namespace tbsim {

// JSON conversion shared by the scenario files and the rollout files that
// embed a scenario copy.
nlohmann::ordered_json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j, const std::string& origin);

}  // namespace tbsim
