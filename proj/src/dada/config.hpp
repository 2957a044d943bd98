#pragma once

// Run configuration: flat key=value text grouped in [sections]. Every field has
// a default; unknown sections/keys are rejected. Layering is
// default < config file < explicit overrides (CLI flags).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dada {

struct RunConfig {
  // [run]
  std::uint64_t seed = 0;
  std::string output_root = "runs";  // DADA_OUTPUT_ROOT overrides this default

  // [data]
  std::string dataset = "data/toy";
  int n_images = 600;
  int image_size = 64;

  // [schedule]
  int steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int beta_reference_steps = 1000;  // betas scaled by reference/steps; 0 keeps them literal

  // [denoiser]
  int denoiser_width = 32;
  int denoiser_iters = 2000;
  int denoiser_batch = 32;
  double denoiser_lr = 1e-4;
  std::string denoiser_normalization = "all";  // all | background
  bool regional_mask = true;

  // [detector]
  int detector_width = 16;
  int detector_epochs = 40;
  int detector_batch = 32;
  double detector_lr = 2e-3;
  double detector_pos_weight = 4.0;
  std::string assignment = "best_iou";  // best_iou | hungarian
  std::string loc_loss = "giou";        // giou | l1
  double detector_score_threshold = 0.5;
  double detector_nms_iou = 0.5;

  // [attack]
  double alpha = 0.003;
  int inner_iters = 1;
  int window_start = 0;  // 0/0 = attack every step
  int window_end = 0;
  std::string eta_mode = "reset";  // reset | persist
  int alpha_reference_steps = 1000;  // per-step alpha scaled by reference/steps; 0 keeps it literal
  bool final_paste = true;
  int synth_batch = 64;

  // [region]
  double region_min_side = 0.15;
  double region_max_side = 0.40;
  int region_max_attempts = 100;

  // [metrics]
  double eval_iou = 0.5;
  double eval_score = 0.5;
  double fpgr_score = 0.5;
  double fpgr_region_iou = 0.3;
  bool fpgr_image_wide = false;

  /// Throws kInvalidArgument on an unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  /// Text with every key and its current value, parseable by apply_text.
  std::string dump() const;
  void apply_text(const std::string& text, const std::string& origin = "<config>");
  void apply_file(const std::filesystem::path& path);
  void validate() const;
};

/// Defaults, then DADA_OUTPUT_ROOT, then the file (if any), then overrides.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace dada
