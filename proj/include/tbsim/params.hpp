#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "tbsim/rng.hpp"
#include "tbsim/tape.hpp"
#include "tbsim/tensor.hpp"

namespace tbsim {

// Owns every learnable tensor of a model. Addresses are stable for the
// lifetime of the store.
class ParamStore {
 public:
  Parameter* create(const std::string& name, std::vector<int> shape);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  size_t count() const { return params_.size(); }
  int64_t total_numel() const;

  void zero_grad();
  double grad_norm() const;

 private:
  std::deque<Parameter> params_;
  std::map<std::string, size_t> index_;
};

// Glorot-uniform fan-in/fan-out init for weight matrices.
void init_xavier(Parameter& p, Rng& rng);
void init_uniform(Parameter& p, Rng& rng, double lo, double hi);
void init_constant(Parameter& p, double v);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

// Adam with global gradient-norm clipping. Moments live on the parameters.
class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg);

  // Applies one update from the accumulated grads; returns the pre-clip
  // global gradient norm. Grads are zeroed afterwards.
  double step();

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  ParamStore& store_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// Flat binary checkpoint: magic "TBV15", u32 format version, then per-tensor
// records (u32 name length, UTF-8 name, u32 rank, u64 dims, f64 payload),
// everything little-endian. Round-trips are bit-exact.
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path);

// Persists parameters plus optimizer state (reserved "opt/" names).
void save_checkpoint(const std::string& path, const ParamStore& store, const Adam* opt = nullptr);
// Loads into an existing store; every parameter must be present with a
// matching shape. Returns the stored optimizer step (0 when absent).
int64_t load_checkpoint(const std::string& path, ParamStore& store, bool restore_opt = true);

}  // namespace tbsim
