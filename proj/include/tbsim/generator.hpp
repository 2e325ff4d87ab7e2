#pragma once

#include <cstdint>

#include "tbsim/scenario.hpp"

namespace tbsim {

enum class SceneFamily { straight, curve, intersection };

SceneFamily scene_family_from(const std::string& s);
const char* to_string(SceneFamily f);

struct GenSpec {
  SceneFamily family = SceneFamily::intersection;
  int n_agents = 8;
  int episode_len = 91;
  double dt = 0.1;
  bool with_traffic_lights = true;  // intersection only
};

// Deterministic synthetic scenario: lane-following agents driven through the
// unicycle integrator, so every GT track is kinematically feasible by
// construction.
Scenario generate_synthetic(uint64_t seed, const GenSpec& spec);

}  // namespace tbsim
