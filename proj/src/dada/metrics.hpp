#pragma once

// Detection metrics (P/R/F1), false-positive generation rate and the Frechet
// distance between feature distributions.

#include <json.hpp>
#include <string>
#include <vector>

#include "dada/detector.hpp"
#include "dada/geometry.hpp"

namespace dada {

struct ImageEval {
  int tp = 0, fp = 0, fn = 0;
};

struct EvalReport {
  int tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::vector<ImageEval> per_image;

  nlohmann::json to_json() const;
};

/// P/R/F1 from counts; any zero denominator yields 0.
EvalReport report_from_counts(int tp, int fp, int fn);
double f1_score(double precision, double recall);

/// Greedy matching per image: predictions by descending score, each taking the
/// unmatched GT with highest IoU >= iou_thresh. Predictions below
/// score_thresh are ignored.
EvalReport evaluate_detections(const std::vector<ImageDetections>& preds,
                               const std::vector<std::vector<PixelBox>>& gts, double iou_thresh = 0.5,
                               double score_thresh = 0.5);

struct FpgrConfig {
  double score_thresh = 0.5;
  double region_iou = 0.3;
  bool image_wide = false;  // count any firing, not only ones overlapping the region
};

/// True when the detections contain a false positive in the attacked region.
bool is_false_positive_hit(const ImageDetections& dets, const PixelBox& region, const FpgrConfig& cfg = {});

/// Fraction of synthesized images (given as post-hoc detections and their
/// attacked regions) on which the detector fires in the region.
double compute_fpgr(const std::vector<ImageDetections>& dets, const std::vector<PixelBox>& regions,
                    const FpgrConfig& cfg = {});

/// Frechet distance between Gaussians fitted to two feature sets
/// (rows are samples). Needs >= 2 rows each and equal dimensionality.
double compute_fid(const std::vector<std::vector<double>>& features_real,
                   const std::vector<std::vector<double>>& features_synth);

}  // namespace dada
