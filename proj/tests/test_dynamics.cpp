#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tbsim/common.hpp"
#include "tbsim/dynamics.hpp"
#include "tbsim/generator.hpp"
#include "tbsim/rng.hpp"

using namespace tbsim;

TEST_CASE("step: constant velocity and stated integrator arithmetic") {
  const KindParams kp = default_kind_params(AgentKind::vehicle);
  AgentState s{0, 0, 0, 2.0, 0.0};
  const AgentState a = step(s, {0.0, 0.0}, 0.1, kp);
  CHECK(a.x == doctest::Approx(0.2));
  CHECK(a.y == 0.0);
  CHECK(a.theta == 0.0);
  CHECK(a.v == 2.0);

  const AgentState b = step(s, {1.0, 0.0}, 0.1, kp);
  CHECK(b.v == doctest::Approx(2.1));
  CHECK(b.x == doctest::Approx(0.21));
}

TEST_CASE("step clamps speed, accel and yaw rate per kind") {
  const KindParams kp = default_kind_params(AgentKind::pedestrian);
  AgentState s{0, 0, 0, 2.9, 0.0};
  const AgentState a = step(s, {100.0, 100.0}, 0.1, kp);
  CHECK(a.v == doctest::Approx(3.0));                 // max_speed
  CHECK(a.theta == doctest::Approx(kp.max_yaw_rate * 0.1));
  const AgentState b = step(s, {-100.0, 0.0}, 0.1, kp);
  CHECK(b.v == doctest::Approx(2.9 - kp.max_decel * 0.1));
}

TEST_CASE("constant yaw-rate rollout traces a circle of radius v/omega within 1%") {
  const KindParams kp = default_kind_params(AgentKind::vehicle);
  for (double omega : {0.2, 0.5, -0.4}) {
    const double v = 5.0;
    AgentState s{0, 0, 0, v, 0.0};
    std::vector<AgentState> traj{s};
    for (int t = 0; t < 91; ++t) {
      s = step(s, {0.0, omega}, 0.1, kp);
      traj.push_back(s);
    }
    // circumcenter from three well-separated samples
    const auto& p0 = traj[0];
    const auto& p1 = traj[30];
    const auto& p2 = traj[60];
    const double ax = p0.x, ay = p0.y, bx = p1.x, by = p1.y, cx = p2.x, cy = p2.y;
    const double d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
    const double ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) +
                       (cx * cx + cy * cy) * (ay - by)) / d;
    const double uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) +
                       (cx * cx + cy * cy) * (bx - ax)) / d;
    const double want_r = std::abs(v / omega);
    for (const auto& p : traj) {
      const double r = std::hypot(p.x - ux, p.y - uy);
      CHECK(std::abs(r - want_r) / want_r < 0.01);
    }
  }
}

TEST_CASE("inverse dynamics followed by step reproduces the successor") {
  Rng rng(43);
  const KindParams kp = default_kind_params(AgentKind::vehicle);
  for (int trial = 0; trial < 200; ++trial) {
    AgentState s{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-kPi, kPi),
                 rng.uniform(0, 20), 0.0};
    const Action act{rng.uniform(-3, 3), rng.uniform(-0.7, 0.7)};  // inside clamps
    const AgentState next = step(s, act, 0.1, kp);
    const Action rec = inverse_dynamics(s, next, 0.1);
    const AgentState redo = step(s, rec, 0.1, kp);
    CHECK(std::abs(redo.x - next.x) < 1e-9);
    CHECK(std::abs(redo.y - next.y) < 1e-9);
    CHECK(std::abs(wrap_angle(redo.theta - next.theta)) < 1e-9);
    CHECK(std::abs(redo.v - next.v) < 1e-9);
  }
}

TEST_CASE("generated straight-road GT satisfies the unicycle residual bound") {
  const Scenario s = generate_synthetic(3, {SceneFamily::straight, 4, 91, 0.1, false});
  const KindParams kp = default_kind_params(AgentKind::vehicle);
  for (const auto& track : s.agents) {
    for (int t = 0; t + 1 < s.episode_len; ++t) {
      const AgentState from = state_from_track(track, t);
      const AgentState to = state_from_track(track, t + 1);
      const Action rec = inverse_dynamics(from, to, s.dt);
      const AgentState redo = step(from, rec, s.dt, kp);
      CHECK(std::abs(redo.x - to.x) < 1e-6);
      CHECK(std::abs(redo.y - to.y) < 1e-6);
    }
  }
}

TEST_CASE("collide: identical poses, distant boxes, symmetry") {
  AgentState a{0, 0, 0.3, 0};
  AgentState b{0, 0, 0.3, 0};
  CHECK(collide(a, 4, 2, b, 4, 2));
  AgentState far{100, 0, 0, 0};
  CHECK(!collide(a, 5, 2, far, 5, 2));
  Rng rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    AgentState p{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-kPi, kPi), 0};
    AgentState q{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-kPi, kPi), 0};
    const double la = rng.uniform(1, 6), wa = rng.uniform(1, 3);
    const double lb = rng.uniform(1, 6), wb = rng.uniform(1, 3);
    CHECK(collide(p, la, wa, q, lb, wb) == collide(q, lb, wb, p, la, wa));
  }
}

TEST_CASE("collide detects boundary contact") {
  AgentState a{0, 0, 0, 0};
  AgentState touching{4.0, 0, 0, 0};  // half lengths 2 + 2 meet exactly
  CHECK(collide(a, 4, 2, touching, 4, 2));
  AgentState apart{4.0 + 1e-9, 0, 0, 0};
  CHECK(!collide(a, 4, 2, apart, 4, 2));
}

TEST_CASE("collide agrees with the point-containment oracle on random pairs") {
  Rng rng(53);
  auto inside = [](const AgentState& s, double len, double wid, double px, double py) {
    const double c = std::cos(s.theta), si = std::sin(s.theta);
    const double dx = px - s.x, dy = py - s.y;
    const double lx = c * dx + si * dy, ly = -si * dx + c * dy;
    return std::abs(lx) <= 0.5 * len && std::abs(ly) <= 0.5 * wid;
  };
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    AgentState a{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-kPi, kPi), 0};
    AgentState b{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-kPi, kPi), 0};
    const double la = rng.uniform(1.5, 5.5), wa = rng.uniform(1.0, 2.5);
    const double lb = rng.uniform(1.5, 5.5), wb = rng.uniform(1.0, 2.5);
    bool any = false;
    // corners of each box in the other
    for (int sx = -1; sx <= 1; sx += 2)
      for (int sy = -1; sy <= 1; sy += 2) {
        {
          const double c = std::cos(a.theta), si = std::sin(a.theta);
          const double px = a.x + c * sx * la / 2 - si * sy * wa / 2;
          const double py = a.y + si * sx * la / 2 + c * sy * wa / 2;
          any = any || inside(b, lb, wb, px, py);
        }
        {
          const double c = std::cos(b.theta), si = std::sin(b.theta);
          const double px = b.x + c * sx * lb / 2 - si * sy * wb / 2;
          const double py = b.y + si * sx * lb / 2 + c * sy * wb / 2;
          any = any || inside(a, la, wa, px, py);
        }
      }
    // 10^4 sampled interior points per box
    for (int k = 0; k < 10000 && !any; ++k) {
      const double ux = rng.uniform(-0.5, 0.5) * la, uy = rng.uniform(-0.5, 0.5) * wa;
      const double c = std::cos(a.theta), si = std::sin(a.theta);
      any = inside(b, lb, wb, a.x + c * ux - si * uy, a.y + si * ux + c * uy);
      if (!any) {
        const double vx2 = rng.uniform(-0.5, 0.5) * lb, vy2 = rng.uniform(-0.5, 0.5) * wb;
        const double cb = std::cos(b.theta), sib = std::sin(b.theta);
        any = inside(a, la, wa, b.x + cb * vx2 - sib * vy2, b.y + sib * vx2 + cb * vy2);
      }
    }
    CHECK(collide(a, la, wa, b, lb, wb) == any);
    ++checked;
  }
  CHECK(checked == 500);
}

TEST_CASE("override: all controlled is identity, uncontrolled follows the log") {
  Scenario s = generate_synthetic(17, {SceneFamily::straight, 3, 31, 0.1, false});
  s.agents[1].controlled = false;
  // make one GT step invalid to exercise hold-last
  s.agents[1].states[20].valid = false;

  std::vector<AgentState> prev(3), proposed(3);
  for (int i = 0; i < 3; ++i) {
    prev[static_cast<size_t>(i)] = state_from_track(s.agents[static_cast<size_t>(i)], 19);
    proposed[static_cast<size_t>(i)] = AgentState{999, 999, 0, 0};
  }
  auto result = proposed;
  apply_override(result, prev, s, 20);
  CHECK(result[0].x == 999);  // controlled agents keep the proposal
  CHECK(result[2].x == 999);
  CHECK(result[1].x == prev[1].x);  // invalid GT -> hold last

  apply_override(result, prev, s, 21);
  CHECK(result[1].x == s.agents[1].states[21].x);

  Scenario all_controlled = s;
  all_controlled.agents[1].controlled = true;
  auto untouched = proposed;
  apply_override(untouched, prev, all_controlled, 20);
  for (int i = 0; i < 3; ++i) CHECK(untouched[static_cast<size_t>(i)].x == 999);
}

TEST_CASE("non-finite state raises a numeric error") {
  const KindParams kp = default_kind_params(AgentKind::vehicle);
  AgentState bad{std::nan(""), 0, 0, 0};
  CHECK_THROWS_AS(step(bad, {0, 0}, 0.1, kp), NumericError);
}
