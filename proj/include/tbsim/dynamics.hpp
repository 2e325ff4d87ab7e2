#pragma once

#include <vector>

#include "tbsim/geometry.hpp"
#include "tbsim/scenario.hpp"

namespace tbsim {

// Simulated kinematic state: position, heading, signed scalar speed. The
// altitude is carried through untouched.
struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;
  double z_const = 0.0;
};

// Unicycle control.
struct Action {
  double accel = 0.0;     // m/s^2
  double yaw_rate = 0.0;  // rad/s
};

// Heuristic per-kind limits; accel range is [-max_decel, max_accel].
struct KindParams {
  double max_accel = 4.0;
  double max_decel = 6.0;
  double max_yaw_rate = 0.8;
  double max_speed = 30.0;
};

KindParams default_kind_params(AgentKind kind);

Action clamp_action(const Action& a, const KindParams& p);

// Semi-implicit unicycle update: speed and heading first, then position from
// the updated values. Zero action keeps straight-line motion exact.
AgentState step(const AgentState& state, const Action& action, double dt, const KindParams& p);

// Recovers the (unclamped) action that maps `from` to `to` under step().
Action inverse_dynamics(const AgentState& from, const AgentState& to, double dt);

// Oriented bounding boxes with boundary contact counting as collision
// (separating axis test).
bool collide(const AgentState& a, double len_a, double wid_a, const AgentState& b, double len_b,
             double wid_b);

// AgentState from a recorded GT step (speed projected on heading).
AgentState state_from_track(const AgentTrack& track, int t);

// Log-replay override: for controlled == false agents, replaces the proposed
// next state with GT at step t (holding the previous state over invalid GT
// steps). `proposed` is indexed like scenario.agents.
void apply_override(std::vector<AgentState>& proposed, const std::vector<AgentState>& previous,
                    const Scenario& scenario, int t);

}  // namespace tbsim
