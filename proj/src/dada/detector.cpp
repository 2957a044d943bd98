#include "dada/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dada/error.hpp"
#include "dada/hungarian.hpp"
#include "dada/random.hpp"

namespace dada {

namespace F = torch::nn::functional;

namespace {

Box box_at(const torch::TensorAccessor<float, 2>& boxes, int64_t j) {
  return {boxes[j][0], boxes[j][1], boxes[j][2], boxes[j][3]};
}

torch::Tensor region_tensor(const PixelBox& b) {
  return torch::tensor({float(b.x1), float(b.y1), float(b.x2), float(b.y2)}, torch::kFloat32);
}

}  // namespace

std::vector<ImageDetections> DetectorModel::predict(const torch::Tensor& images) const {
  return predict(images, score_threshold());
}

std::vector<ImageDetections> DetectorModel::predict(const torch::Tensor& images, double threshold) const {
  torch::NoGradGuard guard;
  const int h = static_cast<int>(images.size(2));
  const int w = static_cast<int>(images.size(3));
  auto cand = candidates(images);
  auto scores = cand.logits.sigmoid().to(torch::kFloat32).contiguous();
  auto boxes = cand.boxes.to(torch::kFloat32).contiguous();
  auto sa = scores.accessor<float, 2>();
  auto ba = boxes.accessor<float, 3>();

  std::vector<ImageDetections> out(static_cast<std::size_t>(images.size(0)));
  for (int64_t i = 0; i < scores.size(0); ++i) {
    std::vector<Detection> kept_candidates;
    for (int64_t j = 0; j < scores.size(1); ++j) {
      if (sa[i][j] < threshold) continue;
      Box b{std::clamp<double>(ba[i][j][0], 0, w), std::clamp<double>(ba[i][j][1], 0, h),
            std::clamp<double>(ba[i][j][2], 0, w), std::clamp<double>(ba[i][j][3], 0, h)};
      if (!b.well_formed()) continue;
      kept_candidates.push_back({b, sa[i][j]});
    }
    // stable: equal scores keep candidate order
    std::stable_sort(kept_candidates.begin(), kept_candidates.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    auto& dets = out[static_cast<std::size_t>(i)];
    for (const auto& c : kept_candidates) {
      bool suppressed = false;
      for (const auto& k : dets)
        if (iou(k.box, c.box) > nms_iou()) {
          suppressed = true;
          break;
        }
      if (!suppressed) dets.push_back(c);
    }
  }
  return out;
}

void DetectorModel::freeze() const {
  for (auto p : parameters()) p.set_requires_grad(false);
}

torch::Tensor to_detector_range(const torch::Tensor& x) {
  auto y = (x + 1.0) / 2.0;
  return y + (y.clamp(0.0, 1.0) - y).detach();
}

torch::Tensor generalized_iou(const torch::Tensor& a, const torch::Tensor& b) {
  auto area = [](const torch::Tensor& t) {
    return (t.select(-1, 2) - t.select(-1, 0)).clamp_min(0) * (t.select(-1, 3) - t.select(-1, 1)).clamp_min(0);
  };
  auto ix1 = torch::max(a.select(-1, 0), b.select(-1, 0));
  auto iy1 = torch::max(a.select(-1, 1), b.select(-1, 1));
  auto ix2 = torch::min(a.select(-1, 2), b.select(-1, 2));
  auto iy2 = torch::min(a.select(-1, 3), b.select(-1, 3));
  auto inter = (ix2 - ix1).clamp_min(0) * (iy2 - iy1).clamp_min(0);
  auto uni = area(a) + area(b) - inter;
  auto ex1 = torch::min(a.select(-1, 0), b.select(-1, 0));
  auto ey1 = torch::min(a.select(-1, 1), b.select(-1, 1));
  auto ex2 = torch::max(a.select(-1, 2), b.select(-1, 2));
  auto ey2 = torch::max(a.select(-1, 3), b.select(-1, 3));
  auto enclose = (ex2 - ex1).clamp_min(0) * (ey2 - ey1).clamp_min(0);
  constexpr double kEps = 1e-7;
  return inter / (uni + kEps) - (enclose - uni) / (enclose + kEps);
}

IllusoryBox IllusoryBox::make(const PixelBox& box, int height, int width) {
  validate_box(box, height, width);
  auto mask = torch::zeros({height, width}, torch::kFloat32);
  mask.slice(0, box.y1, box.y2).slice(1, box.x1, box.x2).fill_(1.0f);
  return {box, mask};
}

int assign_candidate(const torch::Tensor& scores, const torch::Tensor& boxes, const PixelBox& target,
                     AssignmentRule rule, int image_size) {
  const int64_t p = scores.size(0);
  if (p == 0) throw NoCandidatesError("detector produced no candidates");
  auto s = scores.detach().to(torch::kFloat32).contiguous();
  auto bx = boxes.detach().to(torch::kFloat32).contiguous();
  auto sa = s.accessor<float, 1>();
  auto ba = bx.accessor<float, 2>();
  const Box tb = target.to_box();

  if (rule == AssignmentRule::kHungarian) {
    // DETR-style matching cost: -p + normalized L1 + (1 - GIoU).
    auto giou = generalized_iou(bx, region_tensor(target).unsqueeze(0).expand({p, 4}));
    auto ga = giou.accessor<float, 1>();
    std::vector<std::vector<double>> cost(1, std::vector<double>(static_cast<std::size_t>(p)));
    for (int64_t j = 0; j < p; ++j) {
      const Box c = box_at(ba, j);
      const double l1 = (std::abs(c.x1 - tb.x1) + std::abs(c.y1 - tb.y1) + std::abs(c.x2 - tb.x2) +
                         std::abs(c.y2 - tb.y2)) /
                        (4.0 * image_size);
      cost[0][static_cast<std::size_t>(j)] = -double(sa[j]) + l1 + (1.0 - ga[j]);
    }
    return hungarian_assign(cost).pred_for_gt.front();
  }

  int best = -1;
  double best_iou = 0.0;
  for (int64_t j = 0; j < p; ++j) {
    const double v = iou(box_at(ba, j), tb);
    if (v <= 0.0) continue;
    if (best < 0 || v > best_iou || (v == best_iou && sa[j] > sa[best])) {
      best = static_cast<int>(j);
      best_iou = v;
    }
  }
  if (best >= 0) return best;
  // Nothing overlaps the target: fall back to the highest-scoring candidate.
  best = 0;
  for (int64_t j = 1; j < p; ++j)
    if (sa[j] > sa[best]) best = static_cast<int>(j);
  return best;
}

IllusoryLoss detection_loss_illusory(const DetectorModel& detector, const torch::Tensor& images,
                                     const std::vector<PixelBox>& regions) {
  require(images.dim() == 4, "illusory loss expects [N,3,H,W] images");
  require(static_cast<int64_t>(regions.size()) == images.size(0), "one region per image required");
  const int h = static_cast<int>(images.size(2));
  const int w = static_cast<int>(images.size(3));
  for (const auto& r : regions) validate_box(r, h, w);

  auto cand = detector.candidates(images);
  if (cand.logits.size(1) == 0) throw NoCandidatesError("detector produced no candidates");
  auto scores = cand.logits.detach().sigmoid();

  IllusoryLoss out;
  std::vector<torch::Tensor> losses;
  for (int64_t i = 0; i < images.size(0); ++i) {
    const int j = assign_candidate(scores[i], cand.boxes[i], regions[static_cast<std::size_t>(i)],
                                   detector.assignment_rule(), std::max(h, w));
    out.assigned.push_back(j);
    auto logit = cand.logits[i][j];
    auto pred_box = cand.boxes[i][j];
    auto target = region_tensor(regions[static_cast<std::size_t>(i)]);
    auto cls = F::softplus(-logit);  // BCE toward label 1
    torch::Tensor loc;
    if (detector.loc_loss() == LocLoss::kGIoU) {
      loc = 1.0 - generalized_iou(pred_box.unsqueeze(0), target.unsqueeze(0)).squeeze(0);
    } else {
      loc = (pred_box - target).abs().mean() / double(std::max(h, w));
    }
    losses.push_back(cls + loc);
  }
  out.per_image = torch::stack(losses);
  return out;
}

torch::Tensor detection_loss_illusory(const DetectorModel& detector, const torch::Tensor& image,
                                      const IllusoryBox& b) {
  require(image.dim() == 3, "single-image illusory loss expects [3,H,W]");
  return detection_loss_illusory(detector, image.unsqueeze(0), std::vector<PixelBox>{b.box}).per_image.squeeze(0);
}

ToyNetImpl::ToyNetImpl(int width) {
  using torch::nn::Conv2dOptions;
  c1_ = register_module("c1", torch::nn::Conv2d(Conv2dOptions(3, width, 3).padding(1)));
  c2_ = register_module("c2", torch::nn::Conv2d(Conv2dOptions(width, 2 * width, 3).stride(2).padding(1)));
  c3_ = register_module("c3", torch::nn::Conv2d(Conv2dOptions(2 * width, 2 * width, 3).stride(2).padding(1)));
  c4_ = register_module("c4", torch::nn::Conv2d(Conv2dOptions(2 * width, 2 * width, 3).padding(1)));
  head_ = register_module("head", torch::nn::Conv2d(Conv2dOptions(2 * width, 5, 1)));
}

torch::Tensor ToyNetImpl::backbone(const torch::Tensor& x) {
  auto h = F::silu(c1_(x));
  h = F::silu(c2_(h));
  h = F::silu(c3_(h));
  return F::silu(c4_(h));
}

torch::Tensor ToyNetImpl::forward(const torch::Tensor& x) { return head_(backbone(x)); }

ToyDetector::ToyDetector(ToyDetectorConfig cfg) : cfg_(cfg), net_(cfg.width) {
  require(cfg.stride == 4, "toy detector has a fixed stride of 4");
  net_->eval();
}

Candidates ToyDetector::candidates(const torch::Tensor& images) const {
  require(images.dim() == 4 && images.size(1) == 3, "toy detector expects [N,3,H,W]");
  require(images.size(2) % cfg_.stride == 0 && images.size(3) % cfg_.stride == 0,
          "image size must be a multiple of the detector stride");
  // Runs in the dtype of the weights, so a float64 copy gives float64 candidates.
  const auto dtype = net_->parameters().front().scalar_type();
  auto out = const_cast<ToyNet&>(net_)->forward(images.to(dtype));
  const int64_t n = out.size(0), gh = out.size(2), gw = out.size(3);
  const double s = cfg_.stride;
  auto gy = torch::arange(gh, out.options()).view({1, gh, 1}).expand({n, gh, gw});
  auto gx = torch::arange(gw, out.options()).view({1, 1, gw}).expand({n, gh, gw});
  auto cx = (gx + out.select(1, 1).sigmoid()) * s;
  auto cy = (gy + out.select(1, 2).sigmoid()) * s;
  auto bw = s * out.select(1, 3).clamp(-4, 4).exp();
  auto bh = s * out.select(1, 4).clamp(-4, 4).exp();
  auto boxes = torch::stack({cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2}, -1).reshape({n, gh * gw, 4});
  return {out.select(1, 0).reshape({n, gh * gw}), boxes};
}

torch::Tensor ToyDetector::features(const torch::Tensor& images) const {
  const auto dtype = net_->parameters().front().scalar_type();
  return const_cast<ToyNet&>(net_)->backbone(images.to(dtype)).mean({2, 3});
}

torch::Tensor ToyDetector::loss_for_targets(const torch::Tensor& images,
                                            const std::vector<std::vector<PixelBox>>& gt_boxes,
                                            double pos_weight) const {
  require(static_cast<int64_t>(gt_boxes.size()) == images.size(0), "one box list per image required");
  auto cand = candidates(images);
  const int64_t n = images.size(0);
  const int64_t gw = images.size(3) / cfg_.stride;
  const int64_t gh = images.size(2) / cfg_.stride;
  auto target = torch::zeros_like(cand.logits);
  std::vector<int64_t> pos_img, pos_cell;
  std::vector<float> pos_box;
  for (int64_t i = 0; i < n; ++i) {
    for (const auto& b : gt_boxes[static_cast<std::size_t>(i)]) {
      const double cx = 0.5 * (b.x1 + b.x2), cy = 0.5 * (b.y1 + b.y2);
      const int64_t col = std::min<int64_t>(static_cast<int64_t>(cx / cfg_.stride), gw - 1);
      const int64_t row = std::min<int64_t>(static_cast<int64_t>(cy / cfg_.stride), gh - 1);
      const int64_t cell = row * gw + col;
      target[i][cell] = 1.0f;
      pos_img.push_back(i);
      pos_cell.push_back(cell);
      pos_box.insert(pos_box.end(), {float(b.x1), float(b.y1), float(b.x2), float(b.y2)});
    }
  }
  auto cls = F::binary_cross_entropy_with_logits(
                 cand.logits, target,
                 F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kSum).pos_weight(
                     torch::tensor({pos_weight}, cand.logits.options()))) /
             double(n);
  if (pos_img.empty()) return cls;
  auto ii = torch::tensor(pos_img, torch::kLong);
  auto cc = torch::tensor(pos_cell, torch::kLong);
  auto pred = cand.boxes.index({ii, cc});
  auto gt = torch::tensor(pos_box, torch::kFloat32).view({-1, 4});
  torch::Tensor loc;
  if (cfg_.loc == LocLoss::kGIoU) {
    loc = (1.0 - generalized_iou(pred, gt)).sum() / double(n);
  } else {
    loc = (pred - gt).abs().mean(1).sum() / (double(n) * double(images.size(3)));
  }
  return cls + loc;
}

std::vector<torch::Tensor> ToyDetector::parameters() const { return net_->parameters(); }

Checkpoint ToyDetector::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = "toy_detector";
  ckpt.arch = {{"type", "toy_grid"},
               {"width", cfg_.width},
               {"stride", cfg_.stride},
               {"score_threshold", cfg_.score_threshold},
               {"nms_iou", cfg_.nms_iou},
               {"loc_loss", to_string(cfg_.loc)},
               {"assignment", to_string(cfg_.assignment)}};
  ckpt.meta = {{"epochs", epochs_trained}};
  export_module(*net_, "net.", ckpt);
  return ckpt;
}

ToyDetector ToyDetector::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "toy_detector") fail(ErrorKind::kData, "checkpoint holds a '" + ckpt.kind + "', not a detector");
  ToyDetectorConfig cfg;
  cfg.width = ckpt.arch.at("width").get<int>();
  cfg.stride = ckpt.arch.at("stride").get<int>();
  cfg.score_threshold = ckpt.arch.at("score_threshold").get<double>();
  cfg.nms_iou = ckpt.arch.at("nms_iou").get<double>();
  cfg.loc = parse_loc_loss(ckpt.arch.at("loc_loss").get<std::string>());
  cfg.assignment = parse_assignment_rule(ckpt.arch.at("assignment").get<std::string>());
  ToyDetector d(cfg);
  import_module(*d.net_, "net.", ckpt);
  d.epochs_trained = ckpt.meta.value("epochs", std::int64_t{0});
  return d;
}

ToyDetector train_detector(const torch::Tensor& images, const std::vector<std::vector<PixelBox>>& boxes,
                           const DetectorTrainConfig& train_cfg, const ToyDetectorConfig& model_cfg) {
  require(images.dim() == 4 && images.size(0) > 0, "detector training needs a non-empty [N,3,H,W] batch");
  require(static_cast<int64_t>(boxes.size()) == images.size(0), "one box list per image required");
  require(train_cfg.epochs >= 1 && train_cfg.batch_size >= 1, "detector training needs epochs and batch size >= 1");
  require(train_cfg.pos_weight > 0.0, "positive weight must be > 0");
  torch::AutoGradMode grad_on(true);

  torch::manual_seed(mix_seed(train_cfg.seed, 0xde7));
  ToyDetector det(model_cfg);
  auto gen = make_generator(mix_seed(train_cfg.seed, 0xba7c4));
  auto& net = det.net();
  net->train();
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(train_cfg.learning_rate));
  const int64_t n = images.size(0);
  auto data = images.to(torch::kFloat32);

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    auto perm = torch::randperm(n, gen, torch::kLong);
    auto pa = perm.accessor<int64_t, 1>();
    double total = 0.0;
    int batches = 0;
    for (int64_t start = 0; start < n; start += train_cfg.batch_size) {
      const int64_t end = std::min<int64_t>(n, start + train_cfg.batch_size);
      auto idx = perm.slice(0, start, end);
      std::vector<std::vector<PixelBox>> batch_boxes;
      for (int64_t k = start; k < end; ++k) batch_boxes.push_back(boxes[static_cast<std::size_t>(pa[k])]);
      auto loss = det.loss_for_targets(data.index_select(0, idx), batch_boxes, train_cfg.pos_weight);
      const double value = loss.item<double>();
      if (!std::isfinite(value))
        fail(ErrorKind::kNumeric, "detector loss diverged in epoch " + std::to_string(epoch + 1));
      opt.zero_grad();
      loss.backward();
      opt.step();
      total += value;
      ++batches;
    }
    ++det.epochs_trained;
    if (train_cfg.on_epoch) train_cfg.on_epoch(epoch + 1, total / batches);
  }
  net->eval();
  return det;
}

std::string to_string(AssignmentRule r) { return r == AssignmentRule::kHungarian ? "hungarian" : "best_iou"; }
std::string to_string(LocLoss l) { return l == LocLoss::kL1 ? "l1" : "giou"; }

AssignmentRule parse_assignment_rule(const std::string& s) {
  if (s == "best_iou") return AssignmentRule::kBestIoU;
  if (s == "hungarian") return AssignmentRule::kHungarian;
  fail(ErrorKind::kInvalidArgument, "unknown assignment rule '" + s + "'");
}

LocLoss parse_loc_loss(const std::string& s) {
  if (s == "giou") return LocLoss::kGIoU;
  if (s == "l1") return LocLoss::kL1;
  fail(ErrorKind::kInvalidArgument, "unknown localization loss '" + s + "'");
}

}  // namespace dada
