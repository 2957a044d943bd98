#pragma once

#include <torch/torch.h>

#include "dada/detector.hpp"

namespace dada::testing {

// Detector with hand-set candidates: candidate k has box boxes[k] and logit
// bias[k] + gain * mean(image inside boxes[k]). Differentiable in the image.
class StubDetector : public DetectorModel {
 public:
  StubDetector(std::vector<PixelBox> boxes, std::vector<double> bias, double gain = 0.0)
      : boxes_(std::move(boxes)), bias_(std::move(bias)), gain_(gain) {}

  Candidates candidates(const torch::Tensor& images) const override {
    const auto n = images.size(0);
    if (boxes_.empty()) return {torch::zeros({n, 0}), torch::zeros({n, 0, 4})};
    std::vector<torch::Tensor> logits;
    for (std::size_t k = 0; k < boxes_.size(); ++k) {
      const auto& b = boxes_[k];
      auto patch = images.index({torch::indexing::Slice(), torch::indexing::Slice(),
                                 torch::indexing::Slice(b.y1, b.y2), torch::indexing::Slice(b.x1, b.x2)});
      logits.push_back(bias_[k] + gain_ * patch.mean({1, 2, 3}));
    }
    auto bx = torch::empty({int64_t(boxes_.size()), 4}, torch::kFloat32);
    for (std::size_t k = 0; k < boxes_.size(); ++k) {
      auto b = boxes_[k].to_box();
      bx[int64_t(k)] = torch::tensor({float(b.x1), float(b.y1), float(b.x2), float(b.y2)});
    }
    return {torch::stack(logits, 1), bx.unsqueeze(0).expand({n, -1, -1}).clone()};
  }
  torch::Tensor features(const torch::Tensor& images) const override { return images.mean({2, 3}); }
  torch::Tensor loss_for_targets(const torch::Tensor& images, const std::vector<std::vector<PixelBox>>&,
                                 double = 1.0) const override {
    return images.sum() * 0.0;
  }
  std::vector<torch::Tensor> parameters() const override { return {}; }

 private:
  std::vector<PixelBox> boxes_;
  std::vector<double> bias_;
  double gain_;
};

inline double max_abs(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).abs().max().item<double>();
}

}  // namespace dada::testing

namespace dada {
inline std::ostream& operator<<(std::ostream& os, const PixelBox& b) { return os << to_string(b); }
}  // namespace dada
