#include "dada/bg_denoiser.hpp"

#include <cmath>

#include "dada/error.hpp"
#include "dada/random.hpp"

namespace dada {

torch::Tensor mask_from_boxes(const std::vector<PixelBox>& boxes, int height, int width) {
  require(height > 0 && width > 0, "mask needs a positive size");
  auto mask = torch::zeros({height, width}, torch::kFloat32);
  for (const auto& b : boxes) {
    validate_box(b, height, width);
    mask.slice(0, b.y1, b.y2).slice(1, b.x1, b.x2).fill_(1.0f);
  }
  return mask;
}

torch::Tensor regional_noise_matching_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred,
                                           const torch::Tensor& gtb_mask, LossNormalization norm) {
  require(eps_true.sizes() == eps_pred.sizes(), "noise matching loss: eps shapes differ");
  require(gtb_mask.dim() >= 2 && eps_true.dim() >= 2 &&
              gtb_mask.size(-1) == eps_true.size(-1) && gtb_mask.size(-2) == eps_true.size(-2),
          "noise matching loss: mask spatial shape differs");
  require(((gtb_mask == 0) | (gtb_mask == 1)).all().item<bool>(), "gtb mask must be binary");

  auto m = gtb_mask.to(eps_true.scalar_type());
  if (m.dim() == 3 && eps_true.dim() == 4) m = m.unsqueeze(1);
  auto keep = (1.0 - m).expand_as(eps_true);
  auto sq = (keep * (eps_true - eps_pred)).pow(2);
  if (norm == LossNormalization::kAllElements) return sq.mean();
  auto count = keep.sum();
  return count.item<double>() > 0 ? sq.sum() / count : sq.sum() * 0.0;
}

Denoiser::Denoiser(UNetConfig arch, NoiseSchedule schedule)
    : arch_(arch), schedule_(std::move(schedule)), net_(arch) {}

torch::Tensor Denoiser::predict(const torch::Tensor& x_t, const torch::Tensor& t) const {
  return const_cast<UNet&>(net_)->forward(x_t, t);
}

torch::Tensor Denoiser::predict(const torch::Tensor& x_t, int t) const {
  return predict(x_t, torch::full({x_t.size(0)}, t, torch::kLong));
}

void Denoiser::freeze() {
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
}

Checkpoint Denoiser::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = "bg_denoiser";
  ckpt.arch = {{"type", "unet3"},
               {"in_channels", arch_.in_channels},
               {"base_width", arch_.base_width},
               {"time_embed_dim", arch_.time_embed_dim},
               {"groups", arch_.groups}};
  ckpt.schedule = {{"T", schedule_.steps()}, {"betas", schedule_.betas()}};
  ckpt.meta = {{"iteration", iteration}, {"fold", fold}, {"regional_mask", regional_mask}};
  export_module(*net_, "net.", ckpt);
  return ckpt;
}

Denoiser Denoiser::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "bg_denoiser") fail(ErrorKind::kData, "checkpoint holds a '" + ckpt.kind + "', not a denoiser");
  UNetConfig arch;
  arch.in_channels = ckpt.arch.at("in_channels").get<int>();
  arch.base_width = ckpt.arch.at("base_width").get<int>();
  arch.time_embed_dim = ckpt.arch.at("time_embed_dim").get<int>();
  arch.groups = ckpt.arch.at("groups").get<int>();
  Denoiser d(arch, NoiseSchedule(ckpt.schedule.at("betas").get<std::vector<double>>()));
  import_module(*d.net_, "net.", ckpt);
  d.iteration = ckpt.meta.value("iteration", std::int64_t{0});
  d.fold = ckpt.meta.value("fold", std::string("all"));
  d.regional_mask = ckpt.meta.value("regional_mask", true);
  return d;
}

DenoiserTrainLog train_bg_denoiser(Denoiser& model, const std::vector<TrainingSample>& dataset,
                                   const DenoiserTrainConfig& cfg) {
  require(!dataset.empty(), "denoiser training needs a non-empty dataset");
  require(cfg.iterations >= 1, "denoiser training needs at least one iteration");
  require(cfg.batch_size >= 1, "batch size must be positive");
  torch::AutoGradMode grad_on(true);

  std::vector<torch::Tensor> imgs, masks;
  for (const auto& s : dataset) {
    require(s.image.dim() == 3, "training image must be [C,H,W]");
    require(s.gtb_mask.dim() == 2 && s.gtb_mask.size(0) == s.image.size(1) && s.gtb_mask.size(1) == s.image.size(2),
            "gtb mask must match the image's spatial shape");
    imgs.push_back(s.image.to(torch::kFloat32));
    masks.push_back(cfg.use_mask ? s.gtb_mask.to(torch::kFloat32) : torch::zeros_like(s.gtb_mask, torch::kFloat32));
  }
  auto images = torch::stack(imgs);
  auto mask_stack = torch::stack(masks).unsqueeze(1);

  auto gen = make_generator(mix_seed(cfg.seed, static_cast<std::uint64_t>(model.iteration)));
  auto& net = model.net();
  net->train();
  for (auto& p : net->parameters()) p.set_requires_grad(true);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  const auto& sched = model.schedule();
  const auto n = static_cast<int64_t>(dataset.size());

  DenoiserTrainLog log;
  log.losses.reserve(static_cast<std::size_t>(cfg.iterations));
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    auto idx = torch::randint(n, {cfg.batch_size}, gen, torch::kLong);
    auto t = torch::randint(1, sched.steps() + 1, {cfg.batch_size}, gen, torch::kLong);
    auto x0 = images.index_select(0, idx);
    auto eps = torch::randn(x0.sizes(), gen, torch::kFloat32);
    auto x_t = forward_diffuse(x0, t, eps, sched);
    auto loss = regional_noise_matching_loss(eps, net->forward(x_t, t), mask_stack.index_select(0, idx),
                                             cfg.normalization);
    const double value = loss.item<double>();
    if (!std::isfinite(value))
      fail(ErrorKind::kNumeric, "denoiser loss became non-finite at iteration " + std::to_string(model.iteration));
    opt.zero_grad();
    loss.backward();
    opt.step();
    log.losses.push_back(value);
    ++model.iteration;
    if (cfg.on_log && cfg.log_every > 0 && (it + 1) % cfg.log_every == 0) cfg.on_log(model.iteration, value);
  }
  model.regional_mask = cfg.use_mask;
  net->eval();
  return log;
}

std::vector<double> smooth_losses(const std::vector<double>& losses, double decay) {
  std::vector<double> out;
  out.reserve(losses.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    acc = i == 0 ? losses[i] : decay * acc + (1.0 - decay) * losses[i];
    out.push_back(acc);
  }
  return out;
}

}  // namespace dada
