#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tbsim/generator.hpp"
#include "tbsim/geometry.hpp"
#include "tbsim/rng.hpp"
#include "tbsim/tokenize.hpp"

using namespace tbsim;

namespace {

Scenario map_only(std::vector<MapPolyline> polys) {
  Scenario s;
  s.episode_len = 1;
  s.map = std::move(polys);
  return s;
}

Scenario transformed(const Scenario& s, const Pose2D& g) {
  Scenario out = s;
  const double c = std::cos(g.theta), si = std::sin(g.theta);
  auto move_pt = [&](double x, double y, double* ox, double* oy) {
    *ox = g.x + c * x - si * y;
    *oy = g.y + si * x + c * y;
  };
  for (auto& p : out.map)
    for (auto& pt : p.points) move_pt(pt[0], pt[1], &pt[0], &pt[1]);
  for (auto& a : out.agents) {
    for (auto& st : a.states) {
      move_pt(st.x, st.y, &st.x, &st.y);
      st.theta = wrap_angle(st.theta + g.theta);
      const double vx = c * st.vx - si * st.vy;
      const double vy = si * st.vx + c * st.vy;
      st.vx = vx;
      st.vy = vy;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("straight 40 m polyline becomes 2 tokens of 20 segments") {
  MapPolyline p;
  p.id = 0;
  p.points = {{0, 0}, {40, 0}};
  const MapTokens toks = tokenize_map(map_only({p}));
  REQUIRE(toks.count() == 2);
  for (int t = 0; t < 2; ++t)
    for (int nsi = 0; nsi < 20; ++nsi) CHECK(toks.node_valid[static_cast<size_t>(t * 20 + nsi)] == 1);
  CHECK(toks.poses[0].x == doctest::Approx(0.0));
  CHECK(toks.poses[1].x == doctest::Approx(20.0));
  CHECK(toks.poses[1].theta == doctest::Approx(0.0));
}

TEST_CASE("half-meter polyline yields one token with one segment and 19 masked nodes") {
  MapPolyline p;
  p.id = 0;
  p.points = {{3, 2}, {3.5, 2}};
  const MapTokens toks = tokenize_map(map_only({p}));
  REQUIRE(toks.count() == 1);
  CHECK(toks.node_valid[0] == 1);
  for (int nsi = 1; nsi < 20; ++nsi) CHECK(toks.node_valid[static_cast<size_t>(nsi)] == 0);
  CHECK(toks.node_feats.at(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("L-shaped polyline node features match the frame-transform oracle") {
  MapPolyline p;
  p.id = 0;
  p.points = {{0, 0}, {2, 0}, {2, 2}};
  const MapTokens toks = tokenize_map(map_only({p}));
  REQUIRE(toks.count() == 1);
  // 4 segments: starts (0,0),(1,0),(2,0),(2,1); headings 0,0,pi/2,pi/2
  const double want[4][3] = {{0, 0, 0}, {1, 0, 0}, {2, 0, kPi / 2}, {2, 1, kPi / 2}};
  for (int seg = 0; seg < 4; ++seg) {
    CHECK(toks.node_feats.at(seg, 0) == doctest::Approx(want[seg][0]).epsilon(1e-9));
    CHECK(toks.node_feats.at(seg, 1) == doctest::Approx(want[seg][1]).epsilon(1e-9));
    CHECK(toks.node_feats.at(seg, 2) == doctest::Approx(want[seg][2]).epsilon(1e-9));
    CHECK(toks.node_feats.at(seg, 3) == 1.0);  // lane one-hot
  }
  CHECK(toks.node_valid[4] == 0);
}

TEST_CASE("map resampling preserves arc length within one segment") {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    MapPolyline p;
    p.id = 0;
    double x = rng.uniform(-50, 50), y = rng.uniform(-50, 50);
    p.points.push_back({x, y});
    for (int i = 0; i < 12; ++i) {  // road-like: gentle corner angles
      x += rng.uniform(3.0, 8.0);
      y += rng.uniform(-0.8, 0.8);
      p.points.push_back({x, y});
    }
    const double want = p.arc_length();
    const MapTokens toks = tokenize_map(map_only({p}));
    double got = 0.0;
    for (const auto& tok : toks.token_points)
      for (size_t i = 0; i + 1 < tok.size(); ++i)
        got += std::hypot(tok[i + 1][0] - tok[i][0], tok[i + 1][1] - tok[i][1]);
    CHECK(std::abs(got - want) < 1.0);
  }
}

TEST_CASE("map token budget keeps the tokens nearest the centroid") {
  std::vector<MapPolyline> polys;
  for (int i = 0; i < 6; ++i) {
    MapPolyline p;
    p.id = i;
    const double off = i * 100.0;  // progressively farther from the centroid
    p.points = {{off, 0}, {off + 10, 0}};
    polys.push_back(std::move(p));
  }
  const MapTokens toks = tokenize_map(map_only(polys), 3);
  CHECK(toks.truncated);
  REQUIRE(toks.count() == 3);
  // centroid sits at x=255 -> nearest three polylines are 2, 3, 4
  CHECK(toks.token_polyline[0] == 2);
  CHECK(toks.token_polyline[1] == 3);
  CHECK(toks.token_polyline[2] == 4);
}

TEST_CASE("agent selection keeps the 64 tracks with most valid steps, ties by index") {
  Scenario s;
  s.episode_len = 3;
  for (int i = 0; i < 70; ++i) {
    AgentTrack t;
    t.id = i;
    t.states.resize(3);
    const int nvalid = (i < 5) ? 1 : 3;  // first five are mostly invalid
    for (int st = 0; st < nvalid; ++st) t.states[static_cast<size_t>(st)].valid = true;
    s.agents.push_back(std::move(t));
  }
  const auto sel = select_agents(s, 64);
  REQUIRE(sel.size() == 64);
  for (int i : sel) CHECK(i >= 5);  // the five 1-step tracks lose the tie-free comparison
  CHECK(sel.front() == 5);
  CHECK(sel.back() == 68);  // 64 lowest-index full tracks: 5..68
}

TEST_CASE("agent window: boundary at t=0 and stationary agent") {
  Scenario s;
  s.episode_len = 12;
  AgentTrack t;
  t.id = 0;
  t.states.resize(12);
  for (auto& st : t.states) {
    st.x = 4.0;
    st.y = -2.0;
    st.theta = 0.9;
    st.valid = true;
  }
  s.agents.push_back(t);

  const TokenPart at0 = tokenize_agents(s, {0}, 0, 11);
  CHECK(at0.valid[0] == 1);
  int n_valid = 0;
  for (uint8_t v : at0.node_valid) n_valid += v;
  CHECK(n_valid == 1);  // only the current step exists

  const TokenPart at11 = tokenize_agents(s, {0}, 11, 11);
  for (int w = 0; w < 11; ++w) {
    CHECK(at11.node_valid[static_cast<size_t>(w)] == 1);
    CHECK(at11.node_feats.at(w, 0) == doctest::Approx(0.0));  // stationary: always at origin
    CHECK(at11.node_feats.at(w, 1) == doctest::Approx(0.0));
    CHECK(at11.node_feats.at(w, 2) == doctest::Approx(1.0));
  }
}

TEST_CASE("moving agent history matches the pose-transform oracle") {
  Scenario s;
  s.episode_len = 11;
  AgentTrack t;
  t.id = 0;
  t.kind = AgentKind::cyclist;
  t.length = 1.9;
  t.width = 0.7;
  t.states.resize(11);
  Rng rng(29);
  for (auto& st : t.states) {
    st.x = rng.uniform(-20, 20);
    st.y = rng.uniform(-20, 20);
    st.theta = rng.uniform(-kPi, kPi);
    st.vx = rng.uniform(-5, 5);
    st.vy = rng.uniform(-5, 5);
    st.valid = true;
  }
  s.agents.push_back(t);
  const TokenPart toks = tokenize_agents(s, {0}, 10, 11);
  const Pose2D frame{t.states[10].x, t.states[10].y, t.states[10].theta};
  for (int w = 0; w < 11; ++w) {
    const auto& st = t.states[static_cast<size_t>(w)];
    const RelativePose rel = relative_pose(frame, {st.x, st.y, st.theta});
    CHECK(toks.node_feats.at(w, 0) == doctest::Approx(rel.x).epsilon(1e-10));
    CHECK(toks.node_feats.at(w, 1) == doctest::Approx(rel.y).epsilon(1e-10));
    CHECK(toks.node_feats.at(w, 2) == doctest::Approx(std::cos(rel.theta)).epsilon(1e-10));
    CHECK(toks.node_feats.at(w, 3) == doctest::Approx(std::sin(rel.theta)).epsilon(1e-10));
    // velocity rotated into the token frame
    const double c = std::cos(frame.theta), si = std::sin(frame.theta);
    CHECK(toks.node_feats.at(w, 4) == doctest::Approx(c * st.vx + si * st.vy).epsilon(1e-10));
    CHECK(toks.node_feats.at(w, 5) == doctest::Approx(-si * st.vx + c * st.vy).epsilon(1e-10));
    CHECK(toks.node_feats.at(w, 8 + 2) == 1.0);  // cyclist one-hot
    CHECK(toks.node_feats.at(w, 11) == 1.0);
  }
}

TEST_CASE("tokenization is rigid-transform covariant: local features identical") {
  Rng rng(31);
  const Scenario base = generate_synthetic(7, {SceneFamily::intersection, 5, 31, 0.1, true});
  const Pose2D g{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-kPi, kPi)};
  const Scenario moved = transformed(base, g);

  const MapTokens ma = tokenize_map(base);
  const MapTokens mb = tokenize_map(moved);
  REQUIRE(ma.count() == mb.count());
  for (int64_t i = 0; i < ma.node_feats.numel(); ++i)
    CHECK(std::abs(ma.node_feats[i] - mb.node_feats[i]) < 1e-9);
  for (int tok = 0; tok < ma.count(); ++tok) {
    const Pose2D want = pose_compose(g, ma.poses[static_cast<size_t>(tok)]);
    CHECK(std::abs(want.x - mb.poses[static_cast<size_t>(tok)].x) < 1e-9);
    CHECK(std::abs(want.y - mb.poses[static_cast<size_t>(tok)].y) < 1e-9);
    CHECK(std::abs(wrap_angle(want.theta - mb.poses[static_cast<size_t>(tok)].theta)) < 1e-9);
  }

  const auto sel = select_agents(base, 64);
  const TokenPart aa = tokenize_agents(base, sel, 20, 11);
  const TokenPart ab = tokenize_agents(moved, sel, 20, 11);
  for (int64_t i = 0; i < aa.node_feats.numel(); ++i)
    CHECK(std::abs(aa.node_feats[i] - ab.node_feats[i]) < 1e-9);
}

TEST_CASE("destination label is the nearest map token to the last valid position") {
  const Scenario s = generate_synthetic(11, {SceneFamily::straight, 4, 51, 0.1, false});
  const MapTokens toks = tokenize_map(s);
  const auto sel = select_agents(s, 64);
  const auto labels = destination_labels(s, sel, toks);
  REQUIRE(labels.size() == sel.size());
  for (size_t ai = 0; ai < sel.size(); ++ai) {
    const AgentTrack& tr = s.agents[static_cast<size_t>(sel[ai])];
    int last = -1;
    for (int t = s.episode_len - 1; t >= 0; --t)
      if (tr.states[static_cast<size_t>(t)].valid) {
        last = t;
        break;
      }
    REQUIRE(last >= 0);
    // brute force over all tokens
    double best = 1e300;
    int best_tok = -1;
    for (int tok = 0; tok < toks.count(); ++tok) {
      const double d = point_to_token_distance(toks, tok, tr.states[static_cast<size_t>(last)].x,
                                               tr.states[static_cast<size_t>(last)].y);
      if (d < best) {
        best = d;
        best_tok = tok;
      }
    }
    CHECK(labels[ai] == best_tok);
  }
}

TEST_CASE("traffic light tokens carry per-step state one-hots and map poses") {
  const Scenario s = generate_synthetic(13, {SceneFamily::intersection, 2, 91, 0.1, true});
  REQUIRE(!s.traffic_lights.empty());
  const MapTokens mt = tokenize_map(s);
  const TokenPart tl = tokenize_traffic_lights(s, mt, 50, 11);
  REQUIRE(tl.count() == static_cast<int>(s.traffic_lights.size()));
  for (int ti = 0; ti < tl.count(); ++ti) {
    CHECK(tl.valid[static_cast<size_t>(ti)] == 1);
    for (int w = 0; w < 11; ++w) {
      const int t = 50 - 10 + w;
      const int row = ti * 11 + w;
      const int state = static_cast<int>(s.traffic_lights[static_cast<size_t>(ti)].states[static_cast<size_t>(t)]);
      CHECK(tl.node_feats.at(row, state) == 1.0);
    }
  }
}
