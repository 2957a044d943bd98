#include "dada/diffusion.hpp"

#include <cmath>
#include <string>

#include "dada/error.hpp"

namespace dada {

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes())
    fail(ErrorKind::kInvalidArgument, std::string(what) + ": shape mismatch");
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  require(!betas_.empty(), "noise schedule needs at least one step");
  alphas_.reserve(betas_.size());
  alpha_bars_.reserve(betas_.size());
  double acc = 1.0;
  for (double b : betas_) {
    require(b > 0.0 && b < 1.0, "beta outside (0,1): " + std::to_string(b));
    alphas_.push_back(1.0 - b);
    acc *= 1.0 - b;
    alpha_bars_.push_back(acc);
  }
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps())
    fail(ErrorKind::kInvalidArgument,
         "step " + std::to_string(t) + " outside [1," + std::to_string(steps()) + "]");
  return static_cast<std::size_t>(t - 1);
}

torch::Tensor NoiseSchedule::alpha_bar_at(const torch::Tensor& t, torch::ScalarType dtype) const {
  auto table = torch::tensor(alpha_bars_, torch::kFloat64);
  auto idx = t.to(torch::kLong) - 1;
  require(idx.min().item<int64_t>() >= 0 && idx.max().item<int64_t>() < steps(),
          "step index outside schedule");
  return table.index_select(0, idx).to(dtype).view({-1, 1, 1, 1});
}

NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end) {
  require(steps >= 1, "schedule needs T >= 1, got " + std::to_string(steps));
  require(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end,
          "need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : double(i) / double(steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * f;
  }
  return NoiseSchedule(std::move(betas));
}

torch::Tensor forward_diffuse(const torch::Tensor& x0, int t, const torch::Tensor& eps,
                              const NoiseSchedule& sched) {
  check_same_shape(x0, eps, "forward_diffuse");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor forward_diffuse(const torch::Tensor& x0, const torch::Tensor& t,
                              const torch::Tensor& eps, const NoiseSchedule& sched) {
  check_same_shape(x0, eps, "forward_diffuse");
  require(x0.dim() == 4 && t.dim() == 1 && t.size(0) == x0.size(0),
          "forward_diffuse: batched steps need x0 [N,C,H,W] and t [N]");
  auto ab = sched.alpha_bar_at(t, x0.scalar_type());
  return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps;
}

torch::Tensor posterior_mean(const torch::Tensor& x_t, const torch::Tensor& eps_pred, int t,
                             const NoiseSchedule& sched) {
  check_same_shape(x_t, eps_pred, "posterior_mean");
  const double a = sched.alpha(t);
  const double ab = sched.alpha_bar(t);
  const double coef = (1.0 - a) / std::sqrt(1.0 - ab);
  return (x_t - coef * eps_pred) / std::sqrt(a);
}

torch::Tensor reverse_step(const torch::Tensor& x_t, const torch::Tensor& eps_pred, int t,
                           const NoiseSchedule& sched, const torch::Tensor& noise) {
  check_same_shape(x_t, noise, "reverse_step");
  return posterior_mean(x_t, eps_pred, t, sched) + std::sqrt(sched.beta(t)) * noise;
}

}  // namespace dada
