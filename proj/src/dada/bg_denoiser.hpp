#pragma once

// Background-only denoiser: an epsilon-prediction UNet trained with the noise
// matching loss restricted to pixels outside the ground-truth polyp boxes.

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dada/checkpoint.hpp"
#include "dada/diffusion.hpp"
#include "dada/geometry.hpp"
#include "dada/unet.hpp"

namespace dada {

/// Binary [H, W] float mask, 1 inside the union of the boxes.
torch::Tensor mask_from_boxes(const std::vector<PixelBox>& boxes, int height, int width);

enum class LossNormalization {
  kAllElements,        // mean over every element, masked ones included as zeros
  kBackgroundElements  // sum over unmasked elements divided by their count
};

/// || (1 - m) * (eps_true - eps_pred) ||^2 normalized per `norm`. The mask is
/// [H, W], [N, H, W] or [N, 1, H, W] and broadcasts over channels.
torch::Tensor regional_noise_matching_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred,
                                           const torch::Tensor& gtb_mask,
                                           LossNormalization norm = LossNormalization::kAllElements);

struct TrainingSample {
  torch::Tensor image;  // [C, H, W] in [-1, 1]
  torch::Tensor gtb_mask;  // [H, W], 1 inside GT boxes
};

class Denoiser {
 public:
  Denoiser(UNetConfig arch, NoiseSchedule schedule);

  /// Noise estimate for x_t ([N, C, H, W]) at 1-based steps t ([N] int64).
  torch::Tensor predict(const torch::Tensor& x_t, const torch::Tensor& t) const;
  torch::Tensor predict(const torch::Tensor& x_t, int t) const;

  UNet& net() { return net_; }
  const UNet& net() const { return net_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const UNetConfig& arch() const { return arch_; }

  /// Disables parameter gradients; the denoiser is read-only during sampling.
  void freeze();

  std::int64_t iteration = 0;
  std::string fold = "all";  // training fold tag: "a", "b" or "all"
  bool regional_mask = true;  // false for the unmasked ablation model

  Checkpoint to_checkpoint() const;
  static Denoiser from_checkpoint(const Checkpoint& ckpt);

 private:
  UNetConfig arch_;
  NoiseSchedule schedule_;
  UNet net_;
};

struct DenoiserTrainConfig {
  std::int64_t iterations = 2000;
  int batch_size = 32;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  LossNormalization normalization = LossNormalization::kAllElements;
  bool use_mask = true;  // false trains a plain DDPM on the same data
  int log_every = 100;
  std::function<void(std::int64_t iteration, double loss)> on_log;
};

struct DenoiserTrainLog {
  std::vector<double> losses;  // one per iteration
};

/// Trains `model` in place for cfg.iterations further iterations.
DenoiserTrainLog train_bg_denoiser(Denoiser& model, const std::vector<TrainingSample>& dataset,
                                   const DenoiserTrainConfig& cfg);

/// Exponential moving average used to report smoothed training loss.
std::vector<double> smooth_losses(const std::vector<double>& losses, double decay = 0.98);

}  // namespace dada
