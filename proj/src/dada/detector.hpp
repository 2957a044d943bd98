#pragma once

// Differentiable detector abstraction, the desk-scale toy detector, and the
// detection loss that treats a chosen region as if it held a polyp.

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dada/checkpoint.hpp"
#include "dada/geometry.hpp"

namespace dada {

struct Detection {
  Box box;
  double score = 0.0;
};
using ImageDetections = std::vector<Detection>;

enum class AssignmentRule {
  kBestIoU,   // best IoU with the target, then highest score, then lowest index
  kHungarian  // set-prediction matching cost, solved with hungarian_assign
};
enum class LocLoss { kGIoU, kL1 };

/// Dense candidate set of a detector for a batch of images.
struct Candidates {
  torch::Tensor logits;  // [N, P] objectness logits
  torch::Tensor boxes;   // [N, P, 4] as x1, y1, x2, y2 in pixels
};

class DetectorModel {
 public:
  virtual ~DetectorModel() = default;

  /// images: [N, 3, H, W] in [0, 1]. Differentiable with respect to images.
  virtual Candidates candidates(const torch::Tensor& images) const = 0;
  /// Pooled backbone activations, [N, D]; used as the feature space for FID.
  virtual torch::Tensor features(const torch::Tensor& images) const = 0;
  /// Supervised training loss averaged over the batch.
  virtual torch::Tensor loss_for_targets(const torch::Tensor& images,
                                         const std::vector<std::vector<PixelBox>>& gt_boxes,
                                         double pos_weight = 1.0) const = 0;
  virtual std::vector<torch::Tensor> parameters() const = 0;

  virtual AssignmentRule assignment_rule() const { return AssignmentRule::kBestIoU; }
  virtual LocLoss loc_loss() const { return LocLoss::kGIoU; }
  virtual double score_threshold() const { return 0.5; }
  virtual double nms_iou() const { return 0.5; }

  /// Thresholded, NMS-filtered detections clipped to the image.
  std::vector<ImageDetections> predict(const torch::Tensor& images) const;
  std::vector<ImageDetections> predict(const torch::Tensor& images, double score_threshold) const;
  /// Disables parameter gradients.
  void freeze() const;
};

/// Maps diffusion-space values to the detector range: (x + 1) / 2 clamped to
/// [0, 1], with an identity gradient through the clamp.
torch::Tensor to_detector_range(const torch::Tensor& x);

/// Generalized IoU between row-aligned boxes [K, 4]; differentiable.
torch::Tensor generalized_iou(const torch::Tensor& a, const torch::Tensor& b);

struct IllusoryBox {
  PixelBox box;
  torch::Tensor mask;  // [H, W], 1 inside box

  static IllusoryBox make(const PixelBox& box, int height, int width);
};

/// Raised when a detector produced no candidates at all for an image.
class NoCandidatesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IllusoryLoss {
  torch::Tensor per_image;    // [N], BCE toward label 1 plus localization toward b
  std::vector<int> assigned;  // candidate index chosen per image
};

/// Batched loss; regions[i] is the illusory GT of image i.
IllusoryLoss detection_loss_illusory(const DetectorModel& detector, const torch::Tensor& images,
                                     const std::vector<PixelBox>& regions);
/// Single image [3, H, W].
torch::Tensor detection_loss_illusory(const DetectorModel& detector, const torch::Tensor& image,
                                      const IllusoryBox& b);

/// Candidate index assigned to `target` given detached scores and boxes.
int assign_candidate(const torch::Tensor& scores, const torch::Tensor& boxes, const PixelBox& target,
                     AssignmentRule rule, int image_size);

struct ToyDetectorConfig {
  int width = 16;
  int stride = 4;
  double score_threshold = 0.5;
  double nms_iou = 0.5;
  LocLoss loc = LocLoss::kGIoU;
  AssignmentRule assignment = AssignmentRule::kBestIoU;
};

class ToyNetImpl : public torch::nn::Module {
 public:
  explicit ToyNetImpl(int width);
  torch::Tensor backbone(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);  // [N, 5, H/4, W/4]

 private:
  torch::nn::Conv2d c1_{nullptr}, c2_{nullptr}, c3_{nullptr}, c4_{nullptr}, head_{nullptr};
};
TORCH_MODULE(ToyNet);

/// Small convolutional grid detector: each stride-4 cell predicts objectness
/// and a box (sigmoid centre offsets, log sizes in cell units).
class ToyDetector : public DetectorModel {
 public:
  explicit ToyDetector(ToyDetectorConfig cfg = {});

  Candidates candidates(const torch::Tensor& images) const override;
  torch::Tensor features(const torch::Tensor& images) const override;
  torch::Tensor loss_for_targets(const torch::Tensor& images,
                                 const std::vector<std::vector<PixelBox>>& gt_boxes,
                                 double pos_weight = 1.0) const override;
  std::vector<torch::Tensor> parameters() const override;

  AssignmentRule assignment_rule() const override { return cfg_.assignment; }
  LocLoss loc_loss() const override { return cfg_.loc; }
  double score_threshold() const override { return cfg_.score_threshold; }
  double nms_iou() const override { return cfg_.nms_iou; }

  const ToyDetectorConfig& config() const { return cfg_; }
  ToyDetectorConfig& config() { return cfg_; }
  ToyNet& net() { return net_; }

  std::int64_t epochs_trained = 0;

  Checkpoint to_checkpoint() const;
  static ToyDetector from_checkpoint(const Checkpoint& ckpt);

 private:
  ToyDetectorConfig cfg_;
  ToyNet net_;
};

struct DetectorTrainConfig {
  int epochs = 40;
  int batch_size = 32;
  double learning_rate = 2e-3;
  // Weight on positive cells in the objectness BCE; one positive cell per box is heavily outnumbered.
  double pos_weight = 4.0;
  std::uint64_t seed = 0;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

/// images: [N, 3, H, W] in [0, 1]; boxes[i] may be empty (pure negative).
ToyDetector train_detector(const torch::Tensor& images, const std::vector<std::vector<PixelBox>>& boxes,
                           const DetectorTrainConfig& train_cfg, const ToyDetectorConfig& model_cfg = {});

std::string to_string(AssignmentRule r);
std::string to_string(LocLoss l);
AssignmentRule parse_assignment_rule(const std::string& s);
LocLoss parse_loc_loss(const std::string& s);

}  // namespace dada
