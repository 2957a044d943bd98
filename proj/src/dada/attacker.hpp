#pragma once

// Detector-guided adversarial perturbation of the reverse diffusion process.
// Each denoising step optimizes a perturbation eta on the sampler input with
// signed gradients of the illusory detection loss, then emits x_{t-1}.
//
// All tensors are batched over independent synthesis jobs: [N, C, H, W].

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "dada/bg_denoiser.hpp"
#include "dada/detector.hpp"
#include "dada/diffusion.hpp"

namespace dada {

enum class EtaMode {
  kReset,   // eta starts from zero at every timestep
  kPersist  // eta carries over from the previous timestep
};

struct AttackConfig {
  double alpha = 0.003;
  int inner_iters = 1;
  /// Inclusive [lo, hi] range of timesteps where the attack runs; unset means all.
  std::optional<std::pair<int, int>> window;
  EtaMode eta_mode = EtaMode::kReset;
  /// When positive, the per-step size is alpha * reference_steps / T so the
  /// total perturbation budget of a T-step trajectory matches that of a
  /// reference_steps-long one. Zero applies alpha literally.
  int reference_steps = 0;

  bool active_at(int t) const { return !window || (t >= window->first && t <= window->second); }
  double step_size(int total_steps) const {
    return reference_steps > 0 ? alpha * double(reference_steps) / double(total_steps) : alpha;
  }
  void validate() const;
};

struct StepTrace {
  int t = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double eta_inf = 0.0;
  bool skipped = false;
};

/// Per-job bookkeeping carried through a trajectory.
struct AttackState {
  torch::Tensor eta;                           // [N, C, H, W]
  std::vector<std::vector<StepTrace>> traces;  // traces[job] in the order steps ran
};

/// eta - alpha * sgn(grad), with sgn(0) = 0.
torch::Tensor dada_update(const torch::Tensor& eta, const torch::Tensor& grad, double alpha);

/// Everything that stays fixed while eta is optimized within one timestep.
struct StepContext {
  const Denoiser& denoiser;
  const DetectorModel& detector;
  const NoiseSchedule& schedule;
  int t = 0;
  torch::Tensor x_real_t;   // noisy real image at step t
  torch::Tensor x_t;        // current sample
  torch::Tensor region_mask;  // [N, 1, H, W], 1 inside each job's region
  std::vector<PixelBox> regions;
  torch::Tensor eps_fixed;  // reparameterization noise of this step (zeros at t = 1)
};

/// (1 - m) * x_real_t + m * (x_t + eta).
torch::Tensor compose_step_input(const torch::Tensor& x_real_t, const torch::Tensor& x_t, const torch::Tensor& eta,
                                 const torch::Tensor& m_b);

/// x_{t-1} from the composed, perturbed input using the fixed noise.
torch::Tensor emit_step(const StepContext& ctx, const torch::Tensor& eta);

struct GradientResult {
  torch::Tensor grad;  // d L_det / d eta, [N, C, H, W]
  torch::Tensor loss;  // per-job L_det at the given eta, [N]
};

/// Gradient of the illusory loss on x_{t-1} with respect to eta, flowing
/// through the denoiser mean and the detector range mapping.
GradientResult attack_gradient(const StepContext& ctx, const torch::Tensor& eta);

/// Runs the inner signed-gradient iterations and emits x_{t-1}. Appends one
/// StepTrace per job to state.traces.
torch::Tensor run_attack_step(const StepContext& ctx, AttackState& state, const AttackConfig& cfg);

/// Writes "t loss_before loss_after eta_inf" lines, one per step.
void write_attack_trace(const std::vector<StepTrace>& trace, const std::string& path);

}  // namespace dada
