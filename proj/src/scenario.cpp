#include "tbsim/scenario.hpp"

#include <cmath>

#include "tbsim/common.hpp"

namespace tbsim {

const char* to_string(AgentKind k) {
  switch (k) {
    case AgentKind::vehicle: return "vehicle";
    case AgentKind::pedestrian: return "pedestrian";
    case AgentKind::cyclist: return "cyclist";
  }
  return "vehicle";
}

const char* to_string(LaneType t) {
  switch (t) {
    case LaneType::lane: return "lane";
    case LaneType::edge: return "edge";
    case LaneType::crosswalk: return "crosswalk";
    case LaneType::other: return "other";
  }
  return "other";
}

AgentKind agent_kind_from(const std::string& s) {
  if (s == "vehicle") return AgentKind::vehicle;
  if (s == "pedestrian") return AgentKind::pedestrian;
  if (s == "cyclist") return AgentKind::cyclist;
  throw DataError("unknown agent kind '" + s + "'");
}

LaneType lane_type_from(const std::string& s) {
  if (s == "lane") return LaneType::lane;
  if (s == "edge") return LaneType::edge;
  if (s == "crosswalk") return LaneType::crosswalk;
  if (s == "other") return LaneType::other;
  throw DataError("unknown lane type '" + s + "'");
}

double MapPolyline::arc_length() const {
  double acc = 0.0;
  for (size_t i = 1; i < points.size(); ++i)
    acc += std::hypot(points[i][0] - points[i - 1][0], points[i][1] - points[i - 1][1]);
  return acc;
}

int AgentTrack::valid_count() const {
  int n = 0;
  for (const auto& s : states) n += s.valid ? 1 : 0;
  return n;
}

double AgentTrack::speed_at(int t) const {
  const AgentStep& s = states[static_cast<size_t>(t)];
  return s.vx * std::cos(s.theta) + s.vy * std::sin(s.theta);
}

const MapPolyline* Scenario::find_polyline(int id) const {
  for (const auto& p : map)
    if (p.id == id) return &p;
  return nullptr;
}

bool scenario_equal(const Scenario& a, const Scenario& b) {
  if (a.version != b.version || a.dt != b.dt || a.episode_len != b.episode_len) return false;
  if (a.map.size() != b.map.size() || a.traffic_lights.size() != b.traffic_lights.size() ||
      a.agents.size() != b.agents.size())
    return false;
  for (size_t i = 0; i < a.map.size(); ++i) {
    const auto& pa = a.map[i];
    const auto& pb = b.map[i];
    if (pa.id != pb.id || pa.lane_type != pb.lane_type || pa.points != pb.points) return false;
  }
  for (size_t i = 0; i < a.traffic_lights.size(); ++i) {
    if (a.traffic_lights[i].polyline_id != b.traffic_lights[i].polyline_id ||
        a.traffic_lights[i].states != b.traffic_lights[i].states)
      return false;
  }
  for (size_t i = 0; i < a.agents.size(); ++i) {
    const auto& ta = a.agents[i];
    const auto& tb = b.agents[i];
    if (ta.id != tb.id || ta.kind != tb.kind || ta.length != tb.length || ta.width != tb.width ||
        ta.controlled != tb.controlled || ta.states.size() != tb.states.size())
      return false;
    for (size_t t = 0; t < ta.states.size(); ++t) {
      const auto& sa = ta.states[t];
      const auto& sb = tb.states[t];
      if (sa.x != sb.x || sa.y != sb.y || sa.theta != sb.theta || sa.vx != sb.vx ||
          sa.vy != sb.vy || sa.valid != sb.valid)
        return false;
    }
  }
  return true;
}

}  // namespace tbsim
