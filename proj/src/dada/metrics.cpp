#include "dada/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>

#include "dada/error.hpp"

namespace dada {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& e : per_image) per.push_back({{"tp", e.tp}, {"fp", e.fp}, {"fn", e.fn}});
  return {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"precision", precision}, {"recall", recall}, {"f1", f1},
          {"per_image", per}};
}

double f1_score(double precision, double recall) {
  return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

EvalReport report_from_counts(int tp, int fp, int fn) {
  EvalReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

EvalReport evaluate_detections(const std::vector<ImageDetections>& preds,
                               const std::vector<std::vector<PixelBox>>& gts, double iou_thresh,
                               double score_thresh) {
  require(preds.size() == gts.size(), "evaluate_detections: prediction and GT image counts differ");
  int tp = 0, fp = 0, fn = 0;
  std::vector<ImageEval> per;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::vector<const Detection*> order;
    for (const auto& d : preds[i])
      if (d.score >= score_thresh) order.push_back(&d);
    std::stable_sort(order.begin(), order.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
    std::vector<char> used(gts[i].size(), 0);
    ImageEval e;
    for (const auto* d : order) {
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t g = 0; g < gts[i].size(); ++g) {
        if (used[g]) continue;
        const double v = iou(d->box, gts[i][g].to_box());
        if (v >= iou_thresh && v > best_iou) {
          best = static_cast<int>(g);
          best_iou = v;
        }
      }
      if (best >= 0) {
        used[static_cast<std::size_t>(best)] = 1;
        ++e.tp;
      } else {
        ++e.fp;
      }
    }
    e.fn = static_cast<int>(std::count(used.begin(), used.end(), 0));
    tp += e.tp;
    fp += e.fp;
    fn += e.fn;
    per.push_back(e);
  }
  auto r = report_from_counts(tp, fp, fn);
  r.per_image = std::move(per);
  return r;
}

bool is_false_positive_hit(const ImageDetections& dets, const PixelBox& region, const FpgrConfig& cfg) {
  for (const auto& d : dets) {
    if (d.score < cfg.score_thresh) continue;
    if (cfg.image_wide || iou(d.box, region.to_box()) >= cfg.region_iou) return true;
  }
  return false;
}

double compute_fpgr(const std::vector<ImageDetections>& dets, const std::vector<PixelBox>& regions,
                    const FpgrConfig& cfg) {
  require(!dets.empty(), "FPGR needs at least one synthesized record");
  require(dets.size() == regions.size(), "FPGR: one region per record required");
  int hits = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) hits += is_false_positive_hit(dets[i], regions[i], cfg) ? 1 : 0;
  return double(hits) / double(dets.size());
}

namespace {

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, std::size_t dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == dim, "FID: feature dimension mismatch");
    for (std::size_t j = 0; j < dim; ++j) m(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  }
  return m;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  return centered.transpose() * centered / double(x.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double compute_fid(const std::vector<std::vector<double>>& features_real,
                   const std::vector<std::vector<double>>& features_synth) {
  require(features_real.size() >= 2 && features_synth.size() >= 2, "FID needs at least 2 samples per set");
  const std::size_t dim = features_real.front().size();
  require(dim > 0 && features_synth.front().size() == dim, "FID: feature dimension mismatch");
  const auto a = to_matrix(features_real, dim);
  const auto b = to_matrix(features_synth, dim);
  const Eigen::VectorXd mu_a = a.colwise().mean();
  const Eigen::VectorXd mu_b = b.colwise().mean();
  const auto cov_a = covariance(a, mu_a);
  const auto cov_b = covariance(b, mu_b);
  // Tr((S_a S_b)^{1/2}) = Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}), which keeps the root symmetric.
  const auto root_a = psd_sqrt(cov_a);
  const auto cross = psd_sqrt(root_a * cov_b * root_a);
  const double fid = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  return std::max(0.0, fid);
}

}  // namespace dada
