#pragma once

#include <torch/torch.h>

namespace dada {

struct UNetConfig {
  int in_channels = 3;
  int base_width = 32;
  int time_embed_dim = 64;
  int groups = 8;
};

/// Residual conv block with a per-channel timestep shift.
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in_ch, int out_ch, int temb_dim, int groups);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Linear temb_proj_{nullptr};
};
TORCH_MODULE(ResBlock);

/// Three-resolution encoder-decoder with skip connections and a sinusoidal
/// timestep embedding; predicts the noise that produced x_t.
class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(UNetConfig cfg);
  /// x: [N, C, H, W] with H and W divisible by 4; t: int64 [N] of 1-based steps.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t);
  const UNetConfig& config() const { return cfg_; }

 private:
  torch::Tensor embed_time(const torch::Tensor& t) const;

  UNetConfig cfg_;
  torch::nn::Conv2d stem_{nullptr}, head_{nullptr};
  torch::nn::Sequential time_mlp_{nullptr};
  ResBlock down1_{nullptr}, down2_{nullptr}, mid_{nullptr}, up2_{nullptr}, up1_{nullptr};
};
TORCH_MODULE(UNet);

}  // namespace dada
