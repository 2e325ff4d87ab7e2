#include <fstream>
#include <sstream>

#include "tbsim/common.hpp"
#include "tbsim/scenario.hpp"
#include "tbsim/scenario_json.hpp"

namespace tbsim {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const json& require_field(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(ctx + ": missing required field '" + key + "'");
  return *it;
}

template <class T>
T field_as(const json& j, const char* key, const std::string& ctx) {
  try {
    return require_field(j, key, ctx).get<T>();
  } catch (const json::exception& e) {
    throw DataError(ctx + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

ordered_json scenario_to_json(const Scenario& s) {
  ordered_json j;
  j["version"] = s.version;
  j["dt"] = s.dt;
  j["episode_len"] = s.episode_len;
  j["map"] = ordered_json::array();
  for (const auto& p : s.map) {
    ordered_json jp;
    jp["id"] = p.id;
    jp["lane_type"] = to_string(p.lane_type);
    jp["points"] = p.points;
    j["map"].push_back(std::move(jp));
  }
  j["traffic_lights"] = ordered_json::array();
  for (const auto& tl : s.traffic_lights) {
    ordered_json jt;
    jt["polyline_id"] = tl.polyline_id;
    std::vector<int> states;
    states.reserve(tl.states.size());
    for (TlState st : tl.states) states.push_back(static_cast<int>(st));
    jt["states"] = states;
    j["traffic_lights"].push_back(std::move(jt));
  }
  j["agents"] = ordered_json::array();
  for (const auto& a : s.agents) {
    ordered_json ja;
    ja["id"] = a.id;
    ja["kind"] = to_string(a.kind);
    ja["length"] = a.length;
    ja["width"] = a.width;
    ja["controlled"] = a.controlled;
    ordered_json states = ordered_json::array();
    for (const auto& st : a.states)
      states.push_back({st.x, st.y, st.theta, st.vx, st.vy, st.valid ? 1 : 0});
    ja["states"] = std::move(states);
    j["agents"].push_back(std::move(ja));
  }
  return j;
}

Scenario scenario_from_json(const json& j, const std::string& origin) {
  Scenario s;
  s.version = field_as<int>(j, "version", origin);
  s.dt = field_as<double>(j, "dt", origin);
  s.episode_len = field_as<int>(j, "episode_len", origin);
  if (s.dt <= 0.0) throw DataError(origin + ": field 'dt' must be positive");
  if (s.episode_len <= 0) throw DataError(origin + ": field 'episode_len' must be positive");

  int poly_i = 0;
  for (const auto& jp : require_field(j, "map", origin)) {
    const std::string ctx = origin + ": map[" + std::to_string(poly_i) + "]";
    MapPolyline p;
    p.id = field_as<int>(jp, "id", ctx);
    p.lane_type = lane_type_from(field_as<std::string>(jp, "lane_type", ctx));
    for (const auto& pt : require_field(jp, "points", ctx)) {
      if (!pt.is_array() || pt.size() != 2)
        throw DataError(ctx + ": field 'points' entries must be [x, y]");
      p.points.push_back({pt[0].get<double>(), pt[1].get<double>()});
    }
    if (p.points.size() < 2) throw DataError(ctx + ": polylines need at least 2 points");
    s.map.push_back(std::move(p));
    ++poly_i;
  }

  int tl_i = 0;
  for (const auto& jt : require_field(j, "traffic_lights", origin)) {
    const std::string ctx = origin + ": traffic_lights[" + std::to_string(tl_i) + "]";
    TrafficLight tl;
    tl.polyline_id = field_as<int>(jt, "polyline_id", ctx);
    for (const auto& st : require_field(jt, "states", ctx)) {
      const int v = st.get<int>();
      if (v < 0 || v > 3) throw DataError(ctx + ": traffic light state out of range [0, 3]");
      tl.states.push_back(static_cast<TlState>(v));
    }
    if (static_cast<int>(tl.states.size()) != s.episode_len)
      throw DataError(ctx + ": field 'states' must have episode_len entries");
    s.traffic_lights.push_back(std::move(tl));
    ++tl_i;
  }

  int ag_i = 0;
  for (const auto& ja : require_field(j, "agents", origin)) {
    const std::string ctx = origin + ": agents[" + std::to_string(ag_i) + "]";
    AgentTrack a;
    a.id = field_as<int>(ja, "id", ctx);
    a.kind = agent_kind_from(field_as<std::string>(ja, "kind", ctx));
    a.length = field_as<double>(ja, "length", ctx);
    a.width = field_as<double>(ja, "width", ctx);
    a.controlled = field_as<bool>(ja, "controlled", ctx);
    for (const auto& st : require_field(ja, "states", ctx)) {
      if (!st.is_array() || st.size() != 6)
        throw DataError(ctx + ": each state must be [x, y, theta, vx, vy, valid]");
      AgentStep step;
      step.x = st[0].get<double>();
      step.y = st[1].get<double>();
      step.theta = st[2].get<double>();
      step.vx = st[3].get<double>();
      step.vy = st[4].get<double>();
      step.valid = st[5].get<double>() != 0.0;
      a.states.push_back(step);
    }
    if (static_cast<int>(a.states.size()) != s.episode_len)
      throw DataError(ctx + ": field 'states' must have episode_len entries");
    s.agents.push_back(std::move(a));
    ++ag_i;
  }

  for (const auto& tl : s.traffic_lights) {
    if (!s.find_polyline(tl.polyline_id))
      throw DataError(origin + ": traffic light references unknown polyline id " +
                      std::to_string(tl.polyline_id));
  }
  return s;
}

Scenario scenario_from_json_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(origin + ": " + e.what());
  }
  return scenario_from_json(j, origin);
}

std::string scenario_to_json_text(const Scenario& s) { return scenario_to_json(s).dump(1); }

Scenario read_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return scenario_from_json_text(buf.str(), path);
}

void write_scenario(const Scenario& s, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open scenario file for writing: " + path);
  os << scenario_to_json_text(s) << "\n";
  if (!os) throw DataError("write failed: " + path);
}

}  // namespace tbsim
