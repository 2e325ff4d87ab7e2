#include "tbsim/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tbsim/common.hpp"
#include "tbsim/rng.hpp"

namespace tbsim {

namespace {

double eval_loss(const std::function<Value(Tape&)>& build) {
  Tape t(false);
  Value loss = build(t);
  TBSIM_CHECK(loss.numel() == 1, "grad_check: build must return a scalar");
  return loss.scalar();
}

}  // namespace

GradCheckResult grad_check(const std::function<Value(Tape&)>& build, ParamStore& params,
                           const GradCheckOptions& opt) {
  params.zero_grad();
  {
    Tape t(true);
    Value loss = build(t);
    t.backward(loss);
  }

  GradCheckResult res;
  Rng rng(opt.seed);
  for (Parameter* p : params.all()) {
    const int64_t n = p->data.numel();
    std::vector<int64_t> probe;
    if (n <= opt.max_probes_per_tensor) {
      for (int64_t i = 0; i < n; ++i) probe.push_back(i);
    } else {
      for (int i = 0; i < opt.max_probes_per_tensor; ++i)
        probe.push_back(static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(n)));
      std::sort(probe.begin(), probe.end());
      probe.erase(std::unique(probe.begin(), probe.end()), probe.end());
    }
    for (int64_t i : probe) {
      const double orig = p->data[i];
      p->data[i] = orig + opt.h;
      const double fp = eval_loss(build);
      p->data[i] = orig - opt.h;
      const double fm = eval_loss(build);
      p->data[i] = orig;
      const double fd = (fp - fm) / (2.0 * opt.h);
      const double ad = p->grad[i];
      const double denom = std::max({opt.rel_floor, std::abs(ad), std::abs(fd)});
      const double rel = std::abs(ad - fd) / denom;
      ++res.probes;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = p->name;
        res.worst_index = i;
        res.worst_analytic = ad;
        res.worst_numeric = fd;
      }
    }
  }
  params.zero_grad();
  return res;
}

}  // namespace tbsim
