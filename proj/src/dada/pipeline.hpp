#pragma once

// Experimental workflows shared by the CLI and the C API: dataset creation,
// per-fold training, cross-fold synthesis, evaluation, alpha sweeps and
// detector retraining.

#include <torch/torch.h>

#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dada/bg_denoiser.hpp"
#include "dada/config.hpp"
#include "dada/data.hpp"
#include "dada/detector.hpp"
#include "dada/inpaint.hpp"
#include "dada/metrics.hpp"

namespace dada {

NoiseSchedule make_schedule(const RunConfig& cfg);
UNetConfig make_unet_config(const RunConfig& cfg);
ToyDetectorConfig make_detector_config(const RunConfig& cfg);
DetectorTrainConfig make_detector_train_config(const RunConfig& cfg, std::uint64_t seed);
AttackConfig make_attack_config(const RunConfig& cfg, double alpha);
SynthesisConfig make_synthesis_config(const RunConfig& cfg, double alpha, std::uint64_t seed);
RegionSamplerConfig make_sampler_config(const RunConfig& cfg);
FpgrConfig make_fpgr_config(const RunConfig& cfg);

struct Dataset {
  std::vector<AnnotatedImage> images;
  DatasetSplits splits;

  std::vector<AnnotatedImage> train() const { return select(images, splits.tvt.train); }
  std::vector<AnnotatedImage> val() const { return select(images, splits.tvt.val); }
  std::vector<AnnotatedImage> test() const { return select(images, splits.tvt.test); }
  /// Training images of fold "a", "b" or "all".
  std::vector<AnnotatedImage> fold(const std::string& name) const;
  /// "a" or "b" for a training id, empty otherwise.
  std::string fold_of(const std::string& id) const;
};

Dataset make_toy_dataset(const RunConfig& cfg);
/// Errors (kData) on an existing non-empty directory unless force.
Dataset write_toy_dataset(const RunConfig& cfg, const std::filesystem::path& out, bool force);
/// Splits come from meta.json when present, else are derived from run.seed.
Dataset open_dataset(const std::filesystem::path& root, const RunConfig& cfg);

std::vector<TrainingSample> to_training_samples(const std::vector<AnnotatedImage>& images);

struct DenoiserJob {
  std::string fold = "all";
  std::int64_t iterations = 0;  // 0 = denoiser.iters from config
  std::optional<std::filesystem::path> resume;
  std::function<void(std::int64_t, double)> on_log;
};

/// Trains (or continues) a denoiser on the fold's training images.
std::pair<Denoiser, DenoiserTrainLog> train_denoiser(const RunConfig& cfg, const Dataset& ds, const DenoiserJob& job);

ToyDetector train_toy_detector(const RunConfig& cfg, const std::vector<AnnotatedImage>& images, std::uint64_t seed,
                               const std::function<void(int, double)>& on_epoch = {});

/// "<id> x1 y1 x2 y2" per line, '#' comments allowed.
std::map<std::string, PixelBox> parse_region_file(const std::filesystem::path& path);

struct SynthesisRequest {
  double alpha = 0.003;
  std::uint64_t seed = 0;
  bool allow_same_fold = false;
  std::map<std::string, PixelBox> regions;  // explicit regions by source id
};

/// Picks, for each image, a denoiser trained on the other fold. Without
/// allow_same_fold, an image with no such denoiser is an error.
BatchResult cross_fold_synthesize(const RunConfig& cfg, const Dataset& ds, const std::vector<AnnotatedImage>& images,
                                  const std::vector<const Denoiser*>& denoisers, const DetectorModel& detector,
                                  const SynthesisRequest& req);

/// Features for FID: the detector backbone, global pooled.
std::vector<std::vector<double>> detector_features(const DetectorModel& det, const torch::Tensor& images);

struct SynthesisMetrics {
  double fid = 0.0;
  double fpgr = 0.0;
};

/// FID of outputs vs their sources, FPGR of the detector on the outputs.
SynthesisMetrics score_synthesis(const RunConfig& cfg, const DetectorModel& det,
                                 const std::vector<SynthesisRecord>& records,
                                 const std::vector<AnnotatedImage>& sources);

EvalReport evaluate_detector(const RunConfig& cfg, const DetectorModel& det, const std::vector<AnnotatedImage>& images);

struct SweepRow {
  double alpha = 0.0;
  double fid = 0.0;
  double fpgr = 0.0;
  std::optional<double> f1;
};

std::vector<double> default_alpha_grid();
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct RetrainReport {
  EvalReport baseline;
  EvalReport augmented;
  std::size_t original_size = 0;
  std::size_t augmented_size = 0;

  nlohmann::json to_json() const;
  std::string table() const;
};

/// Baseline detector on the training split vs one retrained on the training
/// split plus the synthesized images; both evaluated on the test split.
RetrainReport retrain_compare(const RunConfig& cfg, const Dataset& ds, const std::vector<AnnotatedImage>& synthesized,
                              std::uint64_t seed, const ToyDetector* baseline = nullptr,
                              ToyDetector* augmented_out = nullptr);

std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

/// Loads <dir>/images/*.png with their .json sidecars as synthesis records.
std::vector<SynthesisRecord> load_records(const std::filesystem::path& dir);

}  // namespace dada
