#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "tbsim/geometry.hpp"
#include "tbsim/rng.hpp"

using namespace tbsim;

namespace {

// Independent oracle: compose 3x3 homogeneous transforms and read the
// relative pose back off the matrix.
std::array<std::array<double, 3>, 3> pose_mat(const Pose2D& p) {
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  return {{{c, -s, p.x}, {s, c, p.y}, {0, 0, 1}}};
}

RelativePose relative_pose_oracle(const Pose2D& a, const Pose2D& b) {
  auto ta = pose_mat(a);
  auto tb = pose_mat(b);
  // inv(ta) * tb
  std::array<std::array<double, 3>, 3> inv{};
  inv[0][0] = ta[0][0];
  inv[0][1] = ta[1][0];
  inv[1][0] = ta[0][1];
  inv[1][1] = ta[1][1];
  inv[0][2] = -(inv[0][0] * ta[0][2] + inv[0][1] * ta[1][2]);
  inv[1][2] = -(inv[1][0] * ta[0][2] + inv[1][1] * ta[1][2]);
  inv[2][2] = 1;
  std::array<std::array<double, 3>, 3> m{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) m[r][c] += inv[r][k] * tb[k][c];
  return {m[0][2], m[1][2], std::atan2(m[1][0], m[0][0])};
}

Pose2D random_pose(Rng& rng, double span = 100.0) {
  return {rng.uniform(-span, span), rng.uniform(-span, span), rng.uniform(-kPi, kPi)};
}

}  // namespace

TEST_CASE("wrap_angle lands in (-pi, pi]") {
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(kPi + 1e-6) == doctest::Approx(-kPi + 1e-6));
  CHECK(wrap_angle(3.0 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(0.0) == 0.0);
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double w = wrap_angle(rng.uniform(-50.0, 50.0));
    CHECK(w > -kPi);
    CHECK(w <= kPi);
  }
}

TEST_CASE("relative_pose of a pose with itself is exactly zero") {
  const Pose2D p{3.0, -1.0, 0.7};
  const RelativePose r = relative_pose(p, p);
  CHECK(r.x == 0.0);
  CHECK(r.y == 0.0);
  CHECK(r.theta == 0.0);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Pose2D q = random_pose(rng);
    const RelativePose rr = relative_pose(q, q);
    CHECK(rr.x == 0.0);
    CHECK(rr.y == 0.0);
    CHECK(rr.theta == 0.0);
  }
}

TEST_CASE("relative_pose matches stated examples") {
  const RelativePose a = relative_pose({0, 0, kPi / 2}, {0, 1, kPi / 2});
  CHECK(a.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.theta == doctest::Approx(0.0).epsilon(1e-12));

  const RelativePose b = relative_pose({0, 0, 0}, {2, 3, kPi});
  CHECK(b.x == doctest::Approx(2.0));
  CHECK(b.y == doctest::Approx(3.0));
  CHECK(b.theta == doctest::Approx(kPi));
}

TEST_CASE("relative_pose agrees with homogeneous-matrix oracle") {
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    const Pose2D a = random_pose(rng);
    const Pose2D b = random_pose(rng);
    const RelativePose got = relative_pose(a, b);
    const RelativePose want = relative_pose_oracle(a, b);
    CHECK(got.x == doctest::Approx(want.x).epsilon(1e-10));
    CHECK(got.y == doctest::Approx(want.y).epsilon(1e-10));
    CHECK(std::abs(wrap_angle(got.theta - want.theta)) < 1e-10);
  }
}

TEST_CASE("relative_pose is invariant under global rigid transforms") {
  Rng rng(23);
  for (int i = 0; i < 300; ++i) {
    const Pose2D a = random_pose(rng);
    const Pose2D b = random_pose(rng);
    const Pose2D g = random_pose(rng, 300.0);
    const Pose2D ga = pose_compose(g, a);
    const Pose2D gb = pose_compose(g, b);
    const RelativePose r0 = relative_pose(a, b);
    const RelativePose r1 = relative_pose(ga, gb);
    CHECK(std::abs(r0.x - r1.x) < 1e-9);
    CHECK(std::abs(r0.y - r1.y) < 1e-9);
    CHECK(std::abs(wrap_angle(r0.theta - r1.theta)) < 1e-9);
  }
}

TEST_CASE("relative_pose wraps theta differences near +-pi") {
  const RelativePose r = relative_pose({0, 0, kPi - 0.01}, {0, 0, -kPi + 0.01});
  CHECK(r.theta == doctest::Approx(0.02));
  const RelativePose r2 = relative_pose({0, 0, -kPi + 0.01}, {0, 0, kPi - 0.01});
  CHECK(r2.theta == doctest::Approx(-0.02));
}

TEST_CASE("relative_pose rejects non-finite input") {
  CHECK_THROWS(relative_pose({std::nan(""), 0, 0}, {0, 0, 0}));
  CHECK_THROWS(relative_pose({0, 0, 0}, {0, std::numeric_limits<double>::infinity(), 0}));
}

TEST_CASE("pe basics") {
  RpeConfig cfg{4, 1000.0};
  const auto v = pe(0.0, cfg);
  REQUIRE(v.size() == 4);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 1.0);
  CHECK(v[2] == 0.0);
  CHECK(v[3] == 1.0);

  // first frequency is omega^0 = 1, so element 0 is sin(x)
  RpeConfig cfg8{8, 1000.0};
  for (double x : {0.3, -2.0, 7.5}) CHECK(pe(x, cfg8)[0] == doctest::Approx(std::sin(x)));
}

TEST_CASE("pe matches scalar recomputation") {
  RpeConfig cfg{8, 1000.0};
  const auto v = pe(1.5, cfg);
  for (int i = 0; i < 4; ++i) {
    const double freq = std::pow(1000.0, 2.0 * i / 8.0);
    CHECK(v[2 * i] == doctest::Approx(std::sin(1.5 * freq)).epsilon(1e-12));
    CHECK(v[2 * i + 1] == doctest::Approx(std::cos(1.5 * freq)).epsilon(1e-12));
  }
}

TEST_CASE("ae basics and exact trig values") {
  RpeConfig cfg6{6, 1000.0};
  const auto v = ae(0.0, cfg6);
  REQUIRE(v.size() == 6);
  for (int i = 0; i < 3; ++i) {
    CHECK(v[2 * i] == 0.0);
    CHECK(v[2 * i + 1] == 1.0);
  }
  RpeConfig cfg4{4, 1000.0};
  const auto w = ae(kPi, cfg4);
  CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(-1.0));
  CHECK(w[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(w[3] == doctest::Approx(1.0));
}

TEST_CASE("ae is 2-pi periodic") {
  RpeConfig cfg{10, 1000.0};
  const auto a0 = ae(0.3, cfg);
  const auto a1 = ae(0.3 + 2.0 * kPi, cfg);
  for (size_t i = 0; i < a0.size(); ++i) CHECK(a0[i] == doctest::Approx(a1[i]).epsilon(1e-12));
}

TEST_CASE("pe/ae pairs stay on the unit circle") {
  Rng rng(31);
  RpeConfig cfg{12, 1000.0};
  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.uniform(-400.0, 400.0);
    const auto p = pe(x, cfg);
    const auto a = ae(wrap_angle(x), cfg);
    for (int i = 0; i < cfg.dim / 2; ++i) {
      CHECK(p[2 * i] * p[2 * i] + p[2 * i + 1] * p[2 * i + 1] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(a[2 * i] * a[2 * i] + a[2 * i + 1] * a[2 * i + 1] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("rpe concatenates pe, pe, ae in order") {
  RpeConfig cfg{4, 1000.0};
  const auto z = rpe({0, 0, 0}, cfg);
  REQUIRE(z.size() == 12);
  for (int i = 0; i < 6; ++i) {
    CHECK(z[2 * i] == 0.0);
    CHECK(z[2 * i + 1] == 1.0);
  }

  RpeConfig cfg8{8, 50.0};
  const RelativePose r{1.0, -2.0, kPi / 2};
  const auto full = rpe(r, cfg8);
  REQUIRE(full.size() == 24);
  const auto px = pe(r.x, cfg8);
  const auto py = pe(r.y, cfg8);
  const auto at = ae(r.theta, cfg8);
  for (int i = 0; i < 8; ++i) {
    CHECK(full[i] == px[static_cast<size_t>(i)]);
    CHECK(full[8 + i] == py[static_cast<size_t>(i)]);
    CHECK(full[16 + i] == at[static_cast<size_t>(i)]);
  }
}
