#pragma once

#include <functional>
#include <string>

#include "tbsim/params.hpp"
#include "tbsim/tape.hpp"

namespace tbsim {

struct GradCheckOptions {
  double h = 1e-6;                // central-difference step
  int max_probes_per_tensor = 8;  // entries probed per parameter tensor
  uint64_t seed = 7;              // probe-entry sampling
  double rel_floor = 1e-4;        // |ad-fd| / max(floor, |ad|, |fd|)
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int probes = 0;
};

// Compares reverse-mode gradients of a scalar-valued build against central
// finite differences in double precision. `build` must be deterministic and
// read parameter data through Tape::param.
GradCheckResult grad_check(const std::function<Value(Tape&)>& build, ParamStore& params,
                           const GradCheckOptions& opt = {});

}  // namespace tbsim
