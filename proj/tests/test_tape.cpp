#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "tbsim/common.hpp"
#include "tbsim/dist.hpp"
#include "tbsim/gradcheck.hpp"
#include "tbsim/params.hpp"
#include "tbsim/rng.hpp"
#include "tbsim/tape.hpp"

using namespace tbsim;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double span = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-span, span);
  return t;
}

Parameter* make_param(ParamStore& store, const std::string& name, std::vector<int> shape,
                      Rng& rng, double span = 1.0) {
  Parameter* p = store.create(name, shape);
  for (int64_t i = 0; i < p->data.numel(); ++i) p->data[i] = rng.uniform(-span, span);
  return p;
}

}  // namespace

TEST_CASE("matmul identity and naive triple-loop oracle") {
  Rng rng(3);
  Tape t;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Tensor a = random_tensor({3, 3}, rng);
  Value out = t.matmul(t.constant(eye), t.constant(a));
  for (int64_t i = 0; i < 9; ++i) CHECK(out.val()[i] == doctest::Approx(a[i]).epsilon(1e-15));

  Tensor x = random_tensor({4, 5}, rng);
  Tensor y = random_tensor({5, 3}, rng);
  Value prod = t.matmul(t.constant(x), t.constant(y));
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 5; ++k) acc += x.at(r, k) * y.at(k, c);
      CHECK(prod.val().at(r, c) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("add gradient is one everywhere") {
  Rng rng(4);
  ParamStore store;
  Parameter* a = make_param(store, "a", {2, 3}, rng);
  Parameter* b = make_param(store, "b", {2, 3}, rng);
  Tape t;
  Value loss = t.sum_all(t.add(t.param(*a), t.param(*b)));
  t.backward(loss);
  for (int64_t i = 0; i < 6; ++i) {
    CHECK(a->grad[i] == 1.0);
    CHECK(b->grad[i] == 1.0);
  }
}

TEST_CASE("softmax examples and scalar oracle") {
  Tape t;
  Value u = t.softmax(t.constant(Tensor({1, 3}, {0.0, 0.0, 0.0})));
  for (int i = 0; i < 3; ++i) CHECK(u.val()[i] == doctest::Approx(1.0 / 3.0));

  Value single = t.softmax(t.constant(Tensor({1, 1}, {4.2})));
  CHECK(single.val()[0] == doctest::Approx(1.0));

  Value v = t.softmax(t.constant(Tensor({1, 3}, {1.0, 2.0, 3.0})));
  const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  const double z = e1 + e2 + e3;
  CHECK(v.val()[0] == doctest::Approx(e1 / z).epsilon(1e-12));
  CHECK(v.val()[1] == doctest::Approx(e2 / z).epsilon(1e-12));
  CHECK(v.val()[2] == doctest::Approx(e3 / z).epsilon(1e-12));

  double sum = 0.0;
  for (int i = 0; i < 3; ++i) sum += v.val()[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("masked softmax zeroes fully masked rows") {
  Tape t;
  Tensor logits({2, 3}, {1.0, 2.0, 3.0, 5.0, 5.0, 5.0});
  std::vector<uint8_t> valid = {1, 0, 1, 0, 0, 0};
  Value s = t.masked_softmax(t.constant(logits), valid);
  CHECK(s.val().at(0, 0) + s.val().at(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.val().at(0, 1) == 0.0);
  for (int c = 0; c < 3; ++c) CHECK(s.val().at(1, c) == 0.0);
}

TEST_CASE("mask_fill writes the surrogate into masked positions") {
  Tape t;
  Tensor x({1, 4}, {1.0, 2.0, 3.0, 4.0});
  Value filled = t.mask_fill(t.constant(x), {1, 0, 1, 0}, -1e9);
  CHECK(filled.val()[0] == 1.0);
  CHECK(filled.val()[1] == -1e9);
  CHECK(filled.val()[2] == 3.0);
  CHECK(filled.val()[3] == -1e9);
}

TEST_CASE("layer_norm constant input yields zeros, unit stats otherwise") {
  Rng rng(5);
  Tape t;
  Value gain = t.constant(Tensor::full({8}, 1.0));
  Value bias = t.constant(Tensor::zeros({8}));
  Value c = t.layer_norm(t.constant(Tensor::full({2, 8}, 3.7)), gain, bias);
  for (int64_t i = 0; i < 16; ++i) CHECK(std::abs(c.val()[i]) < 1e-6);

  Tensor x = random_tensor({4, 8}, rng, 2.0);
  Value n = t.layer_norm(t.constant(x), gain, bias);
  for (int r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (int col = 0; col < 8; ++col) mean += n.val().at(r, col);
    mean /= 8;
    for (int col = 0; col < 8; ++col) {
      const double d = n.val().at(r, col) - mean;
      var += d * d;
    }
    var /= 8;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("smoothed_l1 closed forms") {
  Tape t;
  Tensor target({3}, {1.0, 2.0, 3.0});
  std::vector<uint8_t> all = {1, 1, 1};
  Value zero = t.smoothed_l1(t.constant(target), target, all, 1.0);
  CHECK(zero.scalar() == 0.0);

  // d = 2, delta = 1 -> |d| - 0.5*delta = 1.5
  Tensor pred({1}, {2.0});
  Tensor tgt({1}, {0.0});
  Value v = t.smoothed_l1(t.constant(pred), tgt, {1}, 1.0);
  CHECK(v.scalar() == doctest::Approx(1.5));

  // random tensors vs scalar oracle
  Rng rng(6);
  Tensor p = random_tensor({10}, rng, 3.0);
  Tensor q = random_tensor({10}, rng, 3.0);
  std::vector<uint8_t> mask(10, 1);
  mask[3] = 0;
  const double delta = 0.7;
  Value loss = t.smoothed_l1(t.constant(p), q, mask, delta);
  double acc = 0.0;
  int cnt = 0;
  for (int i = 0; i < 10; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const double d = p[i] - q[i];
    acc += std::abs(d) < delta ? 0.5 * d * d / delta : std::abs(d) - 0.5 * delta;
    ++cnt;
  }
  CHECK(loss.scalar() == doctest::Approx(acc / cnt).epsilon(1e-12));
}

TEST_CASE("cross entropy of uniform logits over 4 valid classes is ln 4") {
  Tape t;
  Tensor logits({1, 6}, {0.5, 0.5, 0.5, 0.5, 9.0, -9.0});
  std::vector<uint8_t> class_valid = {1, 1, 1, 1, 0, 0};
  Value ce = t.cross_entropy(t.constant(logits), {2}, class_valid, {1});
  CHECK(ce.scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("kl of matching gaussians is zero; unit-shift closed form") {
  Tape t;
  Value m0 = t.constant(Tensor::zeros({1, 1}));
  Value s0 = t.constant(Tensor::zeros({1, 1}));
  Value kl0 = kl_diag_gaussian(t, m0, s0, m0, s0);
  CHECK(kl0.val()[0] == 0.0);

  Value m2 = t.constant(Tensor({1, 1}, {2.0}));
  Value kl2 = kl_diag_gaussian(t, m2, s0, m0, s0);
  CHECK(kl2.val()[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("kl against monte-carlo estimate") {
  Rng rng(7);
  DiagGaussian post{Tensor({1, 2}, {0.4, -0.8}), Tensor({1, 2}, {0.2, -0.3})};
  DiagGaussian prior{Tensor({1, 2}, {-0.1, 0.3}), Tensor({1, 2}, {0.1, 0.0})};
  const Tensor closed = post.kl_to(prior);

  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    for (int dim = 0; dim < 2; ++dim) {
      const double s1 = std::exp(post.log_std[dim]);
      const double s0 = std::exp(prior.log_std[dim]);
      const double x = post.mean[dim] + s1 * rng.gaussian();
      const double lp1 = -0.5 * (x - post.mean[dim]) * (x - post.mean[dim]) / (s1 * s1) -
                         post.log_std[dim];
      const double lp0 = -0.5 * (x - prior.mean[dim]) * (x - prior.mean[dim]) / (s0 * s0) -
                         prior.log_std[dim];
      acc += lp1 - lp0;
    }
  }
  const double mc = acc / n;
  CHECK(std::abs(mc - closed[0]) / closed[0] < 0.01);
}

TEST_CASE("reparameterize: determinism, degenerate std, statistical mean") {
  Tape t;
  Value mean = t.constant(Tensor({1, 3}, {1.0, -2.0, 0.5}));
  Value log_std = t.constant(Tensor::full({1, 3}, -40.0));  // std ~ 0
  Rng rng_a(9);
  Tensor eps = draw_standard_normal({1, 3}, rng_a);
  Value z = reparameterize(t, mean, log_std, eps);
  CHECK(z.val()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(z.val()[1] == doctest::Approx(-2.0).epsilon(1e-12));

  Rng rng_b(9);
  Tensor eps2 = draw_standard_normal({1, 3}, rng_b);
  for (int i = 0; i < 3; ++i) CHECK(eps[i] == eps2[i]);

  Rng rng_c(10);
  DiagGaussian d{Tensor({1, 1}, {0.7}), Tensor({1, 1}, {std::log(2.0)})};
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += d.sample(rng_c)[0];
  const double se = 2.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(acc / n - 0.7) < 3.0 * se);
}

TEST_CASE("categorical probs sum to one and sampling is seeded") {
  Categorical c{Tensor({4}, {0.1, 1.2, -0.3, 0.8})};
  const Tensor p = c.probs();
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) sum += p[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  Rng r1(12), r2(12);
  for (int i = 0; i < 50; ++i) CHECK(c.sample(r1) == c.sample(r2));
}

TEST_CASE("backward twice over the same graph is deterministic") {
  Rng rng(13);
  ParamStore store;
  Parameter* w = make_param(store, "w", {4, 4}, rng);
  Tape t;
  Tensor x = random_tensor({3, 4}, rng);
  Value loss = t.sum_all(t.relu(t.matmul(t.constant(x), t.param(*w))));
  t.backward(loss, false);
  Tensor g1 = w->grad;
  store.zero_grad();
  t.zero_node_grads();
  t.backward(loss, false);
  for (int64_t i = 0; i < g1.numel(); ++i) CHECK(w->grad[i] == g1[i]);
}

// ---------------------------------------------------------------------------
// finite-difference gradient checks, one per op
// ---------------------------------------------------------------------------

namespace {

void expect_gradcheck(const std::function<Value(Tape&)>& build, ParamStore& store,
                      double tol = 1e-6) {
  GradCheckOptions opt;
  opt.max_probes_per_tensor = 16;
  const GradCheckResult res = grad_check(build, store, opt);
  INFO("worst param ", res.worst_param, " idx ", res.worst_index, " ad ", res.worst_analytic,
       " fd ", res.worst_numeric);
  CHECK(res.max_rel_err < tol);
}

}  // namespace

TEST_CASE("gradients match finite differences for every op") {
  Rng rng(21);
  ParamStore store;
  Parameter* a = make_param(store, "a", {3, 4}, rng);
  Parameter* b = make_param(store, "b", {3, 4}, rng);
  Parameter* w = make_param(store, "w", {4, 5}, rng);
  Parameter* w2 = make_param(store, "w2", {6, 4}, rng);
  Parameter* bias = make_param(store, "bias", {4}, rng);
  Parameter* gain = make_param(store, "gain", {4}, rng, 0.5);

  SUBCASE("add/sub/mul/scale/add_scalar") {
    expect_gradcheck(
        [&](Tape& t) {
          Value va = t.param(*a), vb = t.param(*b);
          Value u = t.add(va, vb);
          Value v = t.sub(t.mul(u, va), t.scale(vb, 0.7));
          return t.sum_all(t.add_scalar(v, 1.3));
        },
        store);
  }
  SUBCASE("matmul and matmul_nt") {
    expect_gradcheck(
        [&](Tape& t) { return t.sum_all(t.matmul(t.param(*a), t.param(*w))); }, store);
    expect_gradcheck(
        [&](Tape& t) { return t.sum_all(t.matmul_nt(t.param(*a), t.param(*w2))); }, store);
  }
  SUBCASE("unary elementwise") {
    expect_gradcheck(
        [&](Tape& t) {
          Value va = t.param(*a);
          Value u = t.add(t.sin(va), t.cos(t.scale(va, 0.5)));
          Value v = t.add(t.exp(t.scale(va, 0.3)), t.log(t.add_scalar(t.mul(va, va), 1.0)));
          return t.sum_all(t.add(u, v));
        },
        store);
  }
  SUBCASE("relu away from the kink") {
    expect_gradcheck(
        [&](Tape& t) { return t.sum_all(t.relu(t.add_scalar(t.param(*a), 0.01))); }, store, 1e-5);
  }
  SUBCASE("clamp pass-through inside bounds") {
    expect_gradcheck(
        [&](Tape& t) { return t.sum_all(t.clamp(t.param(*a), -0.8, 0.8)); }, store, 1e-5);
  }
  SUBCASE("wrap_angle identity gradient") {
    expect_gradcheck(
        [&](Tape& t) { return t.sum_all(t.wrap_angle(t.scale(t.param(*a), 4.0))); }, store);
  }
  SUBCASE("add_rowwise and layer_norm") {
    expect_gradcheck(
        [&](Tape& t) {
          Value x = t.add_rowwise(t.param(*a), t.param(*bias));
          return t.sum_all(t.mul(t.layer_norm(x, t.param(*gain), t.param(*bias)), t.param(*b)));
        },
        store);
  }
  SUBCASE("shape ops") {
    expect_gradcheck(
        [&](Tape& t) {
          Value va = t.param(*a);
          Value r = t.reshape(va, {4, 3});
          Value cr = t.concat_rows({r, r});
          Value cc = t.concat_cols({t.slice_cols(cr, 0, 2), t.slice_cols(cr, 1, 2)});
          Value g = t.gather_rows(cc, {0, 3, 3, 7, 1});
          Value il = t.interleave_rows({g, t.scale(g, 0.5)});
          return t.sum_all(t.mul(il, il));
        },
        store);
  }
  SUBCASE("grouped dot and weighted sum") {
    expect_gradcheck(
        [&](Tape& t) {
          Value q = t.param(*a);                      // [3,4]
          Value kv = t.concat_rows({t.param(*b), t.param(*b)});  // [6,4]
          Value e = t.grouped_dot(q, kv, 2);          // [3,2]
          Value alpha = t.softmax(e);
          Value z = t.grouped_weighted_sum(alpha, kv);
          return t.sum_all(t.mul(z, z));
        },
        store);
  }
  SUBCASE("masked softmax") {
    std::vector<uint8_t> valid = {1, 1, 0, 1, 0, 0, 1, 1, 1, 1, 1, 1};
    expect_gradcheck(
        [&](Tape& t) {
          Value e = t.masked_softmax(t.param(*a), valid);
          return t.sum_all(t.mul(e, t.param(*b)));
        },
        store);
  }
  SUBCASE("masked max rows") {
    std::vector<uint8_t> valid = {1, 0, 1};
    expect_gradcheck(
        [&](Tape& t) {
          Value m = t.masked_max_rows(t.param(*a), valid, 3);  // [1,4]
          return t.sum_all(t.mul(m, m));
        },
        store, 1e-5);
  }
  SUBCASE("reductions") {
    std::vector<uint8_t> valid(12, 1);
    valid[5] = 0;
    expect_gradcheck(
        [&](Tape& t) {
          Value va = t.param(*a);
          Value u = t.sum_cols(va);
          return t.add(t.masked_mean(va, valid), t.sum_all(t.mul(u, u)));
        },
        store);
  }
  SUBCASE("losses") {
    Rng lr(33);
    Tensor target = random_tensor({3, 4}, lr);
    std::vector<uint8_t> valid(12, 1);
    valid[2] = 0;
    std::vector<uint8_t> class_valid = {1, 1, 1, 0};
    expect_gradcheck(
        [&](Tape& t) {
          Value sl = t.smoothed_l1(t.param(*a), target, valid, 0.9);
          Value ce = t.cross_entropy(t.param(*b), {0, 2, 1}, class_valid, {1, 1, 0});
          return t.add(sl, ce);
        },
        store, 1e-5);
  }
  SUBCASE("kl and reparameterize") {
    Rng kr(35);
    Tensor eps = draw_standard_normal({3, 4}, kr);
    expect_gradcheck(
        [&](Tape& t) {
          Value mean = t.param(*a);
          Value log_std = t.scale(t.param(*b), 0.3);
          Value prior_m = t.constant(Tensor::zeros({3, 4}));
          Value prior_s = t.constant(Tensor::zeros({3, 4}));
          Value kl = kl_diag_gaussian(t, mean, log_std, prior_m, prior_s);
          Value z = reparameterize(t, mean, log_std, eps);
          return t.add(t.sum_all(kl), t.sum_all(t.mul(z, z)));
        },
        store);
  }
}

TEST_CASE("fused rpe pair encoding matches scalar geometry and finite differences") {
  Rng rng(41);
  ParamStore store;
  Parameter* qxy = make_param(store, "qxy", {2, 2}, rng, 5.0);
  Parameter* qth = make_param(store, "qth", {2}, rng, 1.5);
  Parameter* sxy = make_param(store, "sxy", {6, 2}, rng, 5.0);
  Parameter* sth = make_param(store, "sth", {6}, rng, 1.5);
  RpeConfig cfg{6, 100.0};

  Tape t;
  Value enc = t.rpe_encode_pairs(t.param(*qxy), t.param(*qth), t.param(*sxy), t.param(*sth), 3, cfg);
  REQUIRE(enc.shape() == std::vector<int>{6, 18});
  for (int q = 0; q < 2; ++q) {
    for (int j = 0; j < 3; ++j) {
      const int p = q * 3 + j;
      const Pose2D pq{qxy->data.at(q, 0), qxy->data.at(q, 1), qth->data[q]};
      const Pose2D ps{sxy->data.at(p, 0), sxy->data.at(p, 1), sth->data[p]};
      const auto expect = rpe(relative_pose(pq, ps), cfg);
      for (int c = 0; c < 18; ++c)
        CHECK(enc.val().at(p, c) == doctest::Approx(expect[static_cast<size_t>(c)]).epsilon(1e-12));
    }
  }

  Rng wr(42);
  Tensor weights = random_tensor({6, 18}, wr);
  expect_gradcheck(
      [&](Tape& tt) {
        Value e = tt.rpe_encode_pairs(tt.param(*qxy), tt.param(*qth), tt.param(*sxy),
                                      tt.param(*sth), 3, cfg);
        return tt.sum_all(tt.mul(e, tt.constant(weights)));
      },
      store, 1e-5);
}

TEST_CASE("shape mismatches raise contract violations naming both shapes") {
  Tape t;
  Value a = t.constant(Tensor::zeros({2, 3}));
  Value b = t.constant(Tensor::zeros({3, 2}));
  CHECK_THROWS_WITH_AS(t.add(a, b), doctest::Contains("[2, 3]"), ContractViolation);
  CHECK_THROWS_AS(t.matmul(a, a), ContractViolation);
}
