#pragma once

#include <vector>

#include "tbsim/rng.hpp"
#include "tbsim/tape.hpp"
#include "tbsim/tensor.hpp"

namespace tbsim {

// Diagonal Gaussian over the last axis; mean and log_std share a shape.
struct DiagGaussian {
  Tensor mean;
  Tensor log_std;

  Tensor sample(Rng& rng) const;
  // Closed-form KL(this || other) summed over the last axis; both must be
  // [N, Z] (or [Z], treated as one row). Returns [N].
  Tensor kl_to(const DiagGaussian& other) const;

  static DiagGaussian standard(int rows, int dim);
};

// Categorical over class logits; masked classes carry the -1e9 surrogate.
struct Categorical {
  Tensor logits;  // [C]

  Tensor probs() const;
  int sample(Rng& rng) const;
  int argmax() const;
};

// Graph-side helpers -----------------------------------------------------

// KL of diagonal Gaussians per row, summed over the last axis -> [N].
// Inputs are [N, Z] Values (prior usually constants).
Value kl_diag_gaussian(Tape& t, const Value& mean_post, const Value& log_std_post,
                       const Value& mean_prior, const Value& log_std_prior);

// mean + exp(log_std) * eps with eps pre-drawn; gradient reaches both heads.
Value reparameterize(Tape& t, const Value& mean, const Value& log_std, const Tensor& eps);

Tensor draw_standard_normal(std::vector<int> shape, Rng& rng);

}  // namespace tbsim
