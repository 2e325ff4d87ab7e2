#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tbsim/geometry.hpp"

namespace tbsim {

enum class AgentKind { vehicle = 0, pedestrian = 1, cyclist = 2 };
enum class LaneType { lane = 0, edge = 1, crosswalk = 2, other = 3 };
enum class TlState { unknown = 0, red = 1, yellow = 2, green = 3 };

const char* to_string(AgentKind k);
const char* to_string(LaneType t);
AgentKind agent_kind_from(const std::string& s);
LaneType lane_type_from(const std::string& s);

struct MapPolyline {
  int id = 0;
  LaneType lane_type = LaneType::lane;
  std::vector<std::array<double, 2>> points;

  double arc_length() const;
};

struct TrafficLight {
  int polyline_id = 0;
  std::vector<TlState> states;  // one per step
};

struct AgentStep {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  bool valid = false;
};

struct AgentTrack {
  int id = 0;
  AgentKind kind = AgentKind::vehicle;
  double length = 4.5;
  double width = 2.0;
  bool controlled = true;
  std::vector<AgentStep> states;  // one per step

  int valid_count() const;
  // Signed scalar speed: velocity projected on the heading.
  double speed_at(int t) const;
};

struct Scenario {
  int version = 1;
  double dt = 0.1;
  int episode_len = 91;
  std::vector<MapPolyline> map;
  std::vector<TrafficLight> traffic_lights;
  std::vector<AgentTrack> agents;

  const MapPolyline* find_polyline(int id) const;
};

bool scenario_equal(const Scenario& a, const Scenario& b);

// Structured-text (JSON) scenario files. Read validates the schema and
// reports the offending field; write emits a stable field order so equal
// scenarios serialize byte-identically.
Scenario read_scenario(const std::string& path);
void write_scenario(const Scenario& s, const std::string& path);
Scenario scenario_from_json_text(const std::string& text, const std::string& origin);
std::string scenario_to_json_text(const Scenario& s);

}  // namespace tbsim
