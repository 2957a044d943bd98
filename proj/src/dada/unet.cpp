#include "dada/unet.hpp"

#include <cmath>

namespace dada {

namespace F = torch::nn::functional;

ResBlockImpl::ResBlockImpl(int in_ch, int out_ch, int temb_dim, int groups) {
  conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
  conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)));
  norm1_ = register_module("norm1", torch::nn::GroupNorm(groups, out_ch));
  norm2_ = register_module("norm2", torch::nn::GroupNorm(groups, out_ch));
  temb_proj_ = register_module("temb", torch::nn::Linear(temb_dim, out_ch));
  if (in_ch != out_ch)
    skip_ = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = F::silu(norm1_(conv1_(x)));
  h = h + temb_proj_(temb).unsqueeze(-1).unsqueeze(-1);
  h = F::silu(norm2_(conv2_(h)));
  return h + (skip_ ? skip_(x) : x);
}

UNetImpl::UNetImpl(UNetConfig cfg) : cfg_(cfg) {
  const int w = cfg.base_width;
  const int e = cfg.time_embed_dim;
  const int g = cfg.groups;
  stem_ = register_module("stem", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.in_channels, w, 3).padding(1)));
  time_mlp_ = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(e, e), torch::nn::SiLU(),
                                                                 torch::nn::Linear(e, e)));
  down1_ = register_module("down1", ResBlock(w, w, e, g));
  down2_ = register_module("down2", ResBlock(w, 2 * w, e, g));
  mid_ = register_module("mid", ResBlock(2 * w, 4 * w, e, g));
  up2_ = register_module("up2", ResBlock(4 * w + 2 * w, 2 * w, e, g));
  up1_ = register_module("up1", ResBlock(2 * w + w, w, e, g));
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, cfg.in_channels, 3).padding(1)));
}

torch::Tensor UNetImpl::embed_time(const torch::Tensor& t) const {
  const int half = cfg_.time_embed_dim / 2;
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / half);
  auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({args.sin(), args.cos()}, 1);
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x, const torch::Tensor& t) {
  auto temb = time_mlp_->forward(embed_time(t).to(x.scalar_type()));
  auto h0 = down1_(stem_(x), temb);
  auto h1 = down2_(F::avg_pool2d(h0, F::AvgPool2dFuncOptions(2)), temb);
  auto h2 = mid_(F::avg_pool2d(h1, F::AvgPool2dFuncOptions(2)), temb);
  auto up = F::interpolate(h2, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest));
  up = up2_(torch::cat({up, h1}, 1), temb);
  up = F::interpolate(up, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest));
  up = up1_(torch::cat({up, h0}, 1), temb);
  return head_(up);
}

}  // namespace dada
