#pragma once

// Attack-and-inpaint synthesis: inside the chosen region the sample follows
// the perturbed reverse process, outside it stays on the re-diffused real
// image, and the final output is pasted back onto the source.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dada/attacker.hpp"
#include "dada/bg_denoiser.hpp"
#include "dada/data.hpp"
#include "dada/detector.hpp"

namespace dada {

struct SynthesisConfig {
  AttackConfig attack;
  std::uint64_t seed = 0;
  bool final_paste = true;
  int batch_size = 64;  // jobs advanced together through the trajectory
};

struct SynthesisJob {
  std::string source_id;
  torch::Tensor image;  // [3, H, W] in [0, 1]
  PixelBox region;
  std::vector<PixelBox> gt_boxes;  // GT boxes of the source; region must not overlap them
};

struct SynthesisRecord {
  std::string source_id;
  PixelBox region;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::string denoiser_fold;
  torch::Tensor output;                // [3, H, W] in [0, 1], 8-bit quantized
  std::vector<PixelBox> source_boxes;  // untouched GT boxes carried from the source
  std::vector<StepTrace> trace;
  ImageDetections verdict;  // detector predictions on the output
  double final_loss = 0.0;  // L_det on the emitted x_0

  nlohmann::json sidecar() const;
};

/// Seed of one job's random streams, a function of (global seed, source id) only.
std::uint64_t job_seed(std::uint64_t global_seed, const std::string& source_id);

/// Runs the full T..1 trajectory for every job. Jobs are processed in input
/// order in chunks of cfg.batch_size; results do not depend on job order.
std::vector<SynthesisRecord> synthesize_jobs(const std::vector<SynthesisJob>& jobs, const SynthesisConfig& cfg,
                                             const Denoiser& denoiser, const DetectorModel& detector);

SynthesisRecord synthesize_false_positive(const SynthesisJob& job, const SynthesisConfig& cfg,
                                          const Denoiser& denoiser, const DetectorModel& detector);

/// Plain reverse process from pure noise using each job's trajectory stream.
/// Returns [N, C, H, W] in [-1, 1].
torch::Tensor sample_unconditional(const Denoiser& denoiser, const std::vector<std::uint64_t>& job_seeds,
                                   int channels, int height, int width);

struct RegionSamplerConfig {
  double min_side_frac = 0.15;
  double max_side_frac = 0.40;
  int max_attempts = 100;
};

/// Uniform random box with sides in [min, max] fraction of the image side,
/// rejection-sampled to not intersect any GT box. nullopt after max_attempts.
std::optional<PixelBox> sample_region(int height, int width, const std::vector<PixelBox>& gt_boxes,
                                      std::uint64_t seed, const RegionSamplerConfig& cfg = {});

struct BatchFailure {
  std::string source_id;
  std::string reason;
};

struct BatchResult {
  std::vector<SynthesisRecord> records;
  std::vector<BatchFailure> failures;
};

/// One synthesis per image. Regions come from `explicit_regions` (by id) when
/// present, else from sample_region. Items that cannot be synthesized are
/// reported in failures; records + failures always equals the input count.
BatchResult batch_synthesize(const std::vector<AnnotatedImage>& images, const SynthesisConfig& cfg,
                             const Denoiser& denoiser, const DetectorModel& detector,
                             const RegionSamplerConfig& sampler = {},
                             const std::map<std::string, PixelBox>& explicit_regions = {});

/// Writes <out>/images/<id>.png, <id>.json sidecars, <id>.trace logs and an
/// annotations.txt carrying the source GT boxes, so the output directory
/// loads back as a dataset.
void save_records(const std::vector<SynthesisRecord>& records, const std::filesystem::path& out_dir);

/// Records as training images: the synthesized region carries no annotation.
std::vector<AnnotatedImage> records_as_images(const std::vector<SynthesisRecord>& records);

}  // namespace dada
