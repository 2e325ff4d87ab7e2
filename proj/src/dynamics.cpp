#include "tbsim/dynamics.hpp"

#include <cmath>

#include "tbsim/common.hpp"

namespace tbsim {

KindParams default_kind_params(AgentKind kind) {
  switch (kind) {
    case AgentKind::vehicle: return {4.0, 6.0, 0.8, 30.0};
    case AgentKind::pedestrian: return {2.0, 2.0, 2.0, 3.0};
    case AgentKind::cyclist: return {3.0, 3.0, 1.5, 10.0};
  }
  return {4.0, 6.0, 0.8, 30.0};
}

Action clamp_action(const Action& a, const KindParams& p) {
  Action out;
  out.accel = std::min(std::max(a.accel, -p.max_decel), p.max_accel);
  out.yaw_rate = std::min(std::max(a.yaw_rate, -p.max_yaw_rate), p.max_yaw_rate);
  return out;
}

AgentState step(const AgentState& state, const Action& action, double dt, const KindParams& p) {
  if (!std::isfinite(state.x) || !std::isfinite(state.y) || !std::isfinite(state.theta) ||
      !std::isfinite(state.v) || !std::isfinite(action.accel) || !std::isfinite(action.yaw_rate))
    throw NumericError("dynamics step: non-finite state or action");
  const Action a = clamp_action(action, p);
  AgentState out;
  out.v = std::min(std::max(state.v + a.accel * dt, -p.max_speed), p.max_speed);
  out.theta = wrap_angle(state.theta + a.yaw_rate * dt);
  out.x = state.x + out.v * std::cos(out.theta) * dt;
  out.y = state.y + out.v * std::sin(out.theta) * dt;
  out.z_const = state.z_const;
  return out;
}

Action inverse_dynamics(const AgentState& from, const AgentState& to, double dt) {
  Action a;
  a.accel = (to.v - from.v) / dt;
  a.yaw_rate = wrap_angle(to.theta - from.theta) / dt;
  return a;
}

namespace {

// Projection radius of an OBB onto a unit axis.
double obb_radius(double cos_t, double sin_t, double axis_x, double axis_y, double half_len,
                  double half_wid) {
  const double along = std::abs(axis_x * cos_t + axis_y * sin_t);
  const double across = std::abs(-axis_x * sin_t + axis_y * cos_t);
  return half_len * along + half_wid * across;
}

}  // namespace

bool collide(const AgentState& a, double len_a, double wid_a, const AgentState& b, double len_b,
             double wid_b) {
  const double ca = std::cos(a.theta), sa = std::sin(a.theta);
  const double cb = std::cos(b.theta), sb = std::sin(b.theta);
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double axes[4][2] = {{ca, sa}, {-sa, ca}, {cb, sb}, {-sb, cb}};
  for (const auto& axis : axes) {
    const double dist = std::abs(dx * axis[0] + dy * axis[1]);
    const double ra = obb_radius(ca, sa, axis[0], axis[1], 0.5 * len_a, 0.5 * wid_a);
    const double rb = obb_radius(cb, sb, axis[0], axis[1], 0.5 * len_b, 0.5 * wid_b);
    if (dist > ra + rb) return false;  // strict: touching still collides
  }
  return true;
}

AgentState state_from_track(const AgentTrack& track, int t) {
  const AgentStep& s = track.states[static_cast<size_t>(t)];
  AgentState out;
  out.x = s.x;
  out.y = s.y;
  out.theta = s.theta;
  out.v = s.vx * std::cos(s.theta) + s.vy * std::sin(s.theta);
  return out;
}

void apply_override(std::vector<AgentState>& proposed, const std::vector<AgentState>& previous,
                    const Scenario& scenario, int t) {
  TBSIM_CHECK(proposed.size() == scenario.agents.size() && previous.size() == proposed.size(),
              "apply_override: state count mismatch");
  for (size_t i = 0; i < proposed.size(); ++i) {
    const AgentTrack& track = scenario.agents[i];
    if (track.controlled) continue;
    if (t < scenario.episode_len && track.states[static_cast<size_t>(t)].valid) {
      proposed[i] = state_from_track(track, t);
    } else {
      proposed[i] = previous[i];  // hold last state over invalid GT steps
    }
  }
}

}  // namespace tbsim
