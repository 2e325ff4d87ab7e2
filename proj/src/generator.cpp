#include "tbsim/generator.hpp"

#include <cmath>

#include "tbsim/common.hpp"
#include "tbsim/dynamics.hpp"
#include "tbsim/rng.hpp"

namespace tbsim {

SceneFamily scene_family_from(const std::string& s) {
  if (s == "straight") return SceneFamily::straight;
  if (s == "curve") return SceneFamily::curve;
  if (s == "intersection") return SceneFamily::intersection;
  throw DataError("unknown scenario family '" + s + "'");
}

const char* to_string(SceneFamily f) {
  switch (f) {
    case SceneFamily::straight: return "straight";
    case SceneFamily::curve: return "curve";
    case SceneFamily::intersection: return "intersection";
  }
  return "straight";
}

namespace {

struct PathSeg {
  enum class Type { straight, arc } type = Type::straight;
  // straight
  double ax = 0, ay = 0, heading = 0, length = 0;
  // arc: center, signed radius (positive = left turn), start angle from center
  double cx = 0, cy = 0, radius = 0, a0 = 0, sweep = 0;

  double arc_len() const {
    return type == Type::straight ? length : std::abs(radius * sweep);
  }
};

struct Path {
  std::vector<PathSeg> segs;

  double total() const {
    double acc = 0.0;
    for (const auto& s : segs) acc += s.arc_len();
    return acc;
  }

  Pose2D pose_at(double s) const {
    for (const auto& seg : segs) {
      const double l = seg.arc_len();
      if (s <= l || &seg == &segs.back()) {
        const double u = std::min(s, l);
        if (seg.type == PathSeg::Type::straight) {
          return {seg.ax + u * std::cos(seg.heading), seg.ay + u * std::sin(seg.heading),
                  seg.heading};
        }
        const double sign = seg.sweep >= 0 ? 1.0 : -1.0;
        const double ang = seg.a0 + sign * u / std::abs(seg.radius);
        return {seg.cx + std::abs(seg.radius) * std::cos(ang),
                seg.cy + std::abs(seg.radius) * std::sin(ang),
                wrap_angle(ang + sign * kPi / 2.0)};
      }
      s -= l;
    }
    return {0, 0, 0};
  }

  double curvature_at(double s) const {
    for (const auto& seg : segs) {
      const double l = seg.arc_len();
      if (s <= l || &seg == &segs.back())
        return seg.type == PathSeg::Type::straight ? 0.0
                                                   : (seg.sweep >= 0 ? 1.0 : -1.0) / std::abs(seg.radius);
      s -= l;
    }
    return 0.0;
  }
};

PathSeg straight_seg(double ax, double ay, double heading, double length) {
  PathSeg s;
  s.type = PathSeg::Type::straight;
  s.ax = ax;
  s.ay = ay;
  s.heading = heading;
  s.length = length;
  return s;
}

PathSeg arc_seg(double cx, double cy, double radius, double a0, double sweep) {
  PathSeg s;
  s.type = PathSeg::Type::arc;
  s.cx = cx;
  s.cy = cy;
  s.radius = radius;
  s.a0 = a0;
  s.sweep = sweep;
  return s;
}

std::vector<std::array<double, 2>> path_points(const Path& p, double spacing) {
  std::vector<std::array<double, 2>> out;
  const double total = p.total();
  for (double s = 0.0; s < total; s += spacing) {
    const Pose2D q = p.pose_at(s);
    out.push_back({q.x, q.y});
  }
  const Pose2D end = p.pose_at(total);
  out.push_back({end.x, end.y});
  return out;
}

struct LaneSet {
  std::vector<Path> driving;                 // agents spawn here
  std::vector<Path> extra;                   // edges etc., map only
  std::vector<LaneType> extra_types;
  std::vector<int> tl_on;                    // indices into driving lanes
};

LaneSet build_straight() {
  LaneSet ls;
  ls.driving.push_back({{straight_seg(-75, -1.75, 0.0, 150)}});
  ls.driving.push_back({{straight_seg(75, 1.75, kPi, 150)}});
  ls.extra.push_back({{straight_seg(-75, -5.25, 0.0, 150)}});
  ls.extra_types.push_back(LaneType::edge);
  ls.extra.push_back({{straight_seg(-75, 5.25, 0.0, 150)}});
  ls.extra_types.push_back(LaneType::edge);
  return ls;
}

LaneSet build_curve() {
  LaneSet ls;
  // two concentric arcs around the origin, opposite directions
  ls.driving.push_back({{arc_seg(0, 0, 41.75, -kPi / 2.0, 2.2)}});
  Path inner;
  inner.segs.push_back(arc_seg(0, 0, 38.25, -kPi / 2.0 + 2.2, -2.2));
  ls.driving.push_back(inner);
  ls.extra.push_back({{arc_seg(0, 0, 45.0, -kPi / 2.0, 2.2)}});
  ls.extra_types.push_back(LaneType::edge);
  return ls;
}

LaneSet build_intersection() {
  LaneSet ls;
  // east-bound and west-bound
  ls.driving.push_back({{straight_seg(-75, -1.75, 0.0, 150)}});
  ls.driving.push_back({{straight_seg(75, 1.75, kPi, 150)}});
  // north-bound and south-bound
  ls.driving.push_back({{straight_seg(1.75, -75, kPi / 2.0, 150)}});
  ls.driving.push_back({{straight_seg(-1.75, 75, -kPi / 2.0, 150)}});
  // left turn: east-bound onto north-bound
  {
    Path p;
    p.segs.push_back(straight_seg(-75, -1.75, 0.0, 65));
    p.segs.push_back(arc_seg(-10, 10, 11.75, -kPi / 2.0, kPi / 2.0));
    p.segs.push_back(straight_seg(1.75, 10, kPi / 2.0, 60));
    ls.driving.push_back(p);
  }
  // right turn: east-bound onto south-bound
  {
    Path p;
    p.segs.push_back(straight_seg(-75, -1.75, 0.0, 65));
    p.segs.push_back(arc_seg(-10, -10, 8.25, kPi / 2.0, -kPi / 2.0));
    p.segs.push_back(straight_seg(-1.75, -10, -kPi / 2.0, 60));
    ls.driving.push_back(p);
  }
  ls.extra.push_back({{straight_seg(-75, -5.25, 0.0, 150)}});
  ls.extra_types.push_back(LaneType::edge);
  ls.extra.push_back({{straight_seg(5.25, -75, kPi / 2.0, 150)}});
  ls.extra_types.push_back(LaneType::edge);
  ls.tl_on = {0, 1, 2, 3};
  return ls;
}

}  // namespace

Scenario generate_synthetic(uint64_t seed, const GenSpec& spec) {
  TBSIM_CHECK(spec.episode_len > 0 && spec.dt > 0.0, "generate_synthetic: bad episode shape");
  if (spec.n_agents < 0 || spec.n_agents > 64)
    throw DataError("generate_synthetic: n_agents must be in [0, 64]");

  LaneSet lanes;
  switch (spec.family) {
    case SceneFamily::straight: lanes = build_straight(); break;
    case SceneFamily::curve: lanes = build_curve(); break;
    case SceneFamily::intersection: lanes = build_intersection(); break;
  }
  const int n_lanes = static_cast<int>(lanes.driving.size());
  const int slots_per_lane = 4;
  if (spec.n_agents > n_lanes * slots_per_lane)
    throw DataError("generate_synthetic: too many agents for the lane capacity");

  Scenario s;
  s.dt = spec.dt;
  s.episode_len = spec.episode_len;

  int next_id = 0;
  for (int li = 0; li < n_lanes; ++li) {
    MapPolyline p;
    p.id = next_id++;
    p.lane_type = LaneType::lane;
    p.points = path_points(lanes.driving[static_cast<size_t>(li)], 2.0);
    s.map.push_back(std::move(p));
  }
  for (size_t ei = 0; ei < lanes.extra.size(); ++ei) {
    MapPolyline p;
    p.id = next_id++;
    p.lane_type = lanes.extra_types[ei];
    p.points = path_points(lanes.extra[ei], 2.0);
    s.map.push_back(std::move(p));
  }

  if (spec.family == SceneFamily::intersection && spec.with_traffic_lights) {
    const int switch_at = spec.episode_len / 2;
    for (int lane : lanes.tl_on) {
      TrafficLight tl;
      tl.polyline_id = lane;
      tl.states.resize(static_cast<size_t>(spec.episode_len));
      const bool ew = lane < 2;
      for (int t = 0; t < spec.episode_len; ++t) {
        if (ew)
          tl.states[static_cast<size_t>(t)] =
              t < switch_at - 3 ? TlState::green : (t < switch_at ? TlState::yellow : TlState::red);
        else
          tl.states[static_cast<size_t>(t)] = t < switch_at ? TlState::red : TlState::green;
      }
      s.traffic_lights.push_back(std::move(tl));
    }
  }

  Rng rng(seed ^ 0x7bc15u);
  for (int ai = 0; ai < spec.n_agents; ++ai) {
    const int lane = ai % n_lanes;
    const int slot = ai / n_lanes;
    const Path& path = lanes.driving[static_cast<size_t>(lane)];
    AgentTrack track;
    track.id = ai;
    track.kind = AgentKind::vehicle;
    track.length = rng.uniform(4.2, 5.0);
    track.width = rng.uniform(1.8, 2.1);
    track.controlled = true;
    track.states.resize(static_cast<size_t>(spec.episode_len));

    const double v_target = rng.uniform(4.0, 8.0);
    const double s0 = 4.0 + slot * 16.0 + rng.uniform(0.0, 6.0);
    const double total = path.total();
    const KindParams kp = default_kind_params(track.kind);

    AgentState st;
    const Pose2D start = path.pose_at(s0);
    st.x = start.x;
    st.y = start.y;
    st.theta = start.theta;
    st.v = 0.6 * v_target;
    double arc = s0;
    for (int t = 0; t < spec.episode_len; ++t) {
      AgentStep& gt = track.states[static_cast<size_t>(t)];
      gt.x = st.x;
      gt.y = st.y;
      gt.theta = st.theta;
      gt.vx = st.v * std::cos(st.theta);
      gt.vy = st.v * std::sin(st.theta);
      gt.valid = true;

      Action act;
      if (arc > total - 6.0) {
        act.accel = -std::min(kp.max_decel, st.v / spec.dt);  // brake out at the path end
      } else if (st.v < v_target) {
        act.accel = std::min(1.5, (v_target - st.v) / spec.dt);
      }
      const double v_next = std::min(st.v + std::max(-kp.max_decel, std::min(act.accel, kp.max_accel)) * spec.dt,
                                     kp.max_speed);
      act.yaw_rate = v_next * path.curvature_at(arc);
      st = step(st, act, spec.dt, kp);
      arc += st.v * spec.dt;
    }
    s.agents.push_back(std::move(track));
  }
  return s;
}

}  // namespace tbsim
