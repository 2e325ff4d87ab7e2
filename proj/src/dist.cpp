#include "tbsim/dist.hpp"

#include <cmath>

#include "tbsim/common.hpp"

namespace tbsim {

Tensor DiagGaussian::sample(Rng& rng) const {
  TBSIM_CHECK(mean.same_shape(log_std), "DiagGaussian: mean/log_std shape mismatch");
  Tensor out(mean.shape());
  for (int64_t i = 0; i < mean.numel(); ++i)
    out[i] = mean[i] + std::exp(log_std[i]) * rng.gaussian();
  return out;
}

Tensor DiagGaussian::kl_to(const DiagGaussian& other) const {
  TBSIM_CHECK(mean.same_shape(other.mean) && log_std.same_shape(other.log_std),
              "DiagGaussian::kl_to: dimension mismatch " + mean.shape_str() + " vs " +
                  other.mean.shape_str());
  const int rows = mean.rank() == 2 ? mean.dim(0) : 1;
  const int z = mean.rank() == 2 ? mean.dim(1) : mean.dim(0);
  Tensor out({rows});
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < z; ++c) {
      const int64_t i = static_cast<int64_t>(r) * z + c;
      const double ls1 = log_std[i], ls0 = other.log_std[i];
      const double dm = mean[i] - other.mean[i];
      acc += ls0 - ls1 + 0.5 * (std::exp(2.0 * (ls1 - ls0)) + dm * dm * std::exp(-2.0 * ls0)) - 0.5;
    }
    out[r] = acc;
  }
  return out;
}

DiagGaussian DiagGaussian::standard(int rows, int dim) {
  return {Tensor::zeros({rows, dim}), Tensor::zeros({rows, dim})};
}

Tensor Categorical::probs() const {
  const int c = static_cast<int>(logits.numel());
  TBSIM_CHECK(c > 0, "Categorical: empty logits");
  double mx = logits[0];
  for (int i = 1; i < c; ++i) mx = std::max(mx, logits[i]);
  Tensor out(logits.shape());
  double sum = 0.0;
  for (int i = 0; i < c; ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (int i = 0; i < c; ++i) out[i] /= sum;
  return out;
}

int Categorical::sample(Rng& rng) const {
  const Tensor p = probs();
  const double u = rng.uniform01();
  double acc = 0.0;
  const int c = static_cast<int>(p.numel());
  for (int i = 0; i < c; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return c - 1;
}

int Categorical::argmax() const {
  int best = 0;
  for (int64_t i = 1; i < logits.numel(); ++i)
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  return best;
}

Value kl_diag_gaussian(Tape& t, const Value& mean_post, const Value& log_std_post,
                       const Value& mean_prior, const Value& log_std_prior) {
  TBSIM_CHECK(mean_post.val().same_shape(mean_prior.val()) &&
                  log_std_post.val().same_shape(log_std_prior.val()),
              "kl_diag_gaussian: dimension mismatch " + mean_post.val().shape_str() + " vs " +
                  mean_prior.val().shape_str());
  // ls0 - ls1 + 0.5*exp(2(ls1-ls0)) + 0.5*(m1-m0)^2*exp(-2 ls0) - 0.5, summed
  // over the last axis.
  Value dls = t.sub(log_std_post, log_std_prior);
  Value var_ratio = t.exp(t.scale(dls, 2.0));
  Value dm = t.sub(mean_post, mean_prior);
  Value inv_var0 = t.exp(t.scale(log_std_prior, -2.0));
  Value quad = t.mul(t.mul(dm, dm), inv_var0);
  Value per_dim = t.add_scalar(t.add(t.scale(dls, -1.0), t.scale(t.add(var_ratio, quad), 0.5)), -0.5);
  return t.sum_cols(per_dim);
}

Value reparameterize(Tape& t, const Value& mean, const Value& log_std, const Tensor& eps) {
  TBSIM_CHECK(mean.val().same_shape(eps), "reparameterize: eps shape mismatch");
  return t.add(mean, t.mul(t.exp(log_std), t.constant(eps)));
}

Tensor draw_standard_normal(std::vector<int> shape, Rng& rng) {
  Tensor out(std::move(shape));
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = rng.gaussian();
  return out;
}

}  // namespace tbsim
