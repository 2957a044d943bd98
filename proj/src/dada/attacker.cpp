#include "dada/attacker.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "dada/error.hpp"

namespace dada {

void AttackConfig::validate() const {
  require(alpha >= 0.0 && std::isfinite(alpha), "attack alpha must be finite and >= 0");
  require(inner_iters >= 1, "attack needs at least one inner iteration");
  require(reference_steps >= 0, "reference_steps must be >= 0");
  if (window) require(window->first <= window->second, "attack window is empty");
}

torch::Tensor dada_update(const torch::Tensor& eta, const torch::Tensor& grad, double alpha) {
  require(eta.sizes() == grad.sizes(), "dada_update: eta and grad shapes differ");
  require(torch::isfinite(grad).all().item<bool>(), "dada_update: non-finite gradient");
  return eta - alpha * torch::sign(grad);
}

torch::Tensor compose_step_input(const torch::Tensor& x_real_t, const torch::Tensor& x_t, const torch::Tensor& eta,
                                 const torch::Tensor& m_b) {
  require(x_real_t.sizes() == x_t.sizes() && x_t.sizes() == eta.sizes(), "compose_step_input: shape mismatch");
  require(m_b.dim() == x_t.dim() || m_b.dim() == 2, "compose_step_input: mask rank mismatch");
  require(m_b.size(-1) == x_t.size(-1) && m_b.size(-2) == x_t.size(-2), "compose_step_input: mask size mismatch");
  return (1.0 - m_b) * x_real_t + m_b * (x_t + eta);
}

torch::Tensor emit_step(const StepContext& ctx, const torch::Tensor& eta) {
  auto x_in = compose_step_input(ctx.x_real_t, ctx.x_t, eta, ctx.region_mask);
  auto eps = ctx.denoiser.predict(x_in, ctx.t);
  return reverse_step(x_in, eps, ctx.t, ctx.schedule, ctx.eps_fixed);
}

GradientResult attack_gradient(const StepContext& ctx, const torch::Tensor& eta) {
  torch::AutoGradMode enable(true);
  auto leaf = eta.detach().clone().set_requires_grad(true);
  auto x_prev = emit_step(ctx, leaf);
  auto loss = detection_loss_illusory(ctx.detector, to_detector_range(x_prev), ctx.regions).per_image;
  auto grad = torch::autograd::grad({loss.sum()}, {leaf}).front();
  // eta only enters through m_b * (x_t + eta); zero exactly outside the region.
  grad = torch::where(ctx.region_mask.expand_as(grad) > 0, grad, torch::zeros_like(grad));
  return {grad.detach(), loss.detach()};
}

torch::Tensor run_attack_step(const StepContext& ctx, AttackState& state, const AttackConfig& cfg) {
  const int64_t n = ctx.x_t.size(0);
  if (!state.eta.defined() || cfg.eta_mode == EtaMode::kReset) state.eta = torch::zeros_like(ctx.x_t);
  if (state.traces.size() != static_cast<std::size_t>(n)) state.traces.resize(static_cast<std::size_t>(n));

  const double step = cfg.step_size(ctx.schedule.steps());
  const bool attack = step > 0.0 && cfg.active_at(ctx.t);
  std::vector<StepTrace> rows(static_cast<std::size_t>(n));
  for (auto& r : rows) r.t = ctx.t;

  torch::Tensor before;
  bool skipped = false;
  if (attack) {
    try {
      for (int k = 0; k < cfg.inner_iters; ++k) {
        auto g = attack_gradient(ctx, state.eta);
        if (k == 0) before = g.loss;
        state.eta = dada_update(state.eta, g.grad, step);
      }
    } catch (const NoCandidatesError&) {
      // Attack cannot proceed this step; emit the unperturbed sample.
      skipped = true;
      state.eta = torch::zeros_like(ctx.x_t);
    }
  }

  torch::Tensor x_prev;
  torch::Tensor after;
  {
    torch::NoGradGuard guard;
    x_prev = emit_step(ctx, state.eta);
    try {
      after = detection_loss_illusory(ctx.detector, to_detector_range(x_prev), ctx.regions).per_image;
    } catch (const NoCandidatesError&) {
      skipped = true;
    }
  }
  if (!before.defined()) before = after;

  auto eta_inf = state.eta.abs().flatten(1).amax(1);
  for (int64_t i = 0; i < n; ++i) {
    auto& r = rows[static_cast<std::size_t>(i)];
    r.skipped = skipped;
    r.loss_before = before.defined() ? before[i].item<double>() : std::nan("");
    r.loss_after = after.defined() ? after[i].item<double>() : std::nan("");
    r.eta_inf = eta_inf[i].item<double>();
    state.traces[static_cast<std::size_t>(i)].push_back(r);
  }
  return x_prev.detach();
}

void write_attack_trace(const std::vector<StepTrace>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kData, "cannot write trace " + path);
  out << "# t loss_before loss_after eta_inf\n" << std::setprecision(9);
  for (const auto& r : trace) {
    out << r.t << ' ' << r.loss_before << ' ' << r.loss_after << ' ' << r.eta_inf;
    if (r.skipped) out << " skipped";
    out << '\n';
  }
}

}  // namespace dada
