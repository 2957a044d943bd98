#pragma once

// Noise schedule and the closed-form pieces of the forward and reverse
// diffusion processes. Images live in [-1, 1] value space as tensors of shape
// [C, H, W] or [N, C, H, W]; every function here is elementwise and works in
// whatever dtype it is handed.

#include <torch/torch.h>

#include <vector>

namespace dada {

class NoiseSchedule {
 public:
  /// betas[0] is beta_1. Every beta must lie in (0, 1).
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }

  // 1-based accessors, t in [1, T].
  double beta(int t) const { return betas_.at(index(t)); }
  double alpha(int t) const { return alphas_.at(index(t)); }
  double alpha_bar(int t) const { return alpha_bars_.at(index(t)); }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  /// alpha_bar gathered for a batch of 1-based steps, shaped [N, 1, 1, 1].
  torch::Tensor alpha_bar_at(const torch::Tensor& t, torch::ScalarType dtype) const;

 private:
  std::size_t index(int t) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

/// Betas linearly interpolated between the endpoints, both inclusive.
NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end);

/// x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps.
torch::Tensor forward_diffuse(const torch::Tensor& x0, int t, const torch::Tensor& eps,
                              const NoiseSchedule& sched);
/// Per-sample steps: t is an int64 tensor of shape [N] and x0 is [N, C, H, W].
torch::Tensor forward_diffuse(const torch::Tensor& x0, const torch::Tensor& t,
                              const torch::Tensor& eps, const NoiseSchedule& sched);

/// mu = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_pred) / sqrt(alpha_t).
torch::Tensor posterior_mean(const torch::Tensor& x_t, const torch::Tensor& eps_pred, int t,
                             const NoiseSchedule& sched);

/// posterior_mean + sqrt(beta_t) * noise.
torch::Tensor reverse_step(const torch::Tensor& x_t, const torch::Tensor& eps_pred, int t,
                           const NoiseSchedule& sched, const torch::Tensor& noise);

}  // namespace dada
