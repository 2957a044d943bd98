#pragma once

// Datasets: the annotated-image type, the toy generator, on-disk layout and
// the deterministic split protocols.
//
// On-disk layout of a dataset root:
//   images/<id>.png    8-bit RGB
//   annotations.txt    "filename x1 y1 x2 y2" per box, half-open pixel
//                      coordinates; a bare "filename" line lists an image
//                      with no boxes
//   meta.json          optional: generator seed/spec and stored splits

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "dada/geometry.hpp"

namespace dada {

struct AnnotatedImage {
  std::string id;
  torch::Tensor pixels;  // [3, H, W] float in [0, 1], multiples of 1/255
  std::vector<PixelBox> boxes;

  int height() const { return static_cast<int>(pixels.size(1)); }
  int width() const { return static_cast<int>(pixels.size(2)); }
};

struct ToyDataSpec {
  int image_size = 64;
  double polyp_free_fraction = 0.2;
  double two_polyp_fraction = 0.3;  // among images that have polyps
  int max_distractor_blobs = 3;
  int max_folds = 2;
  int max_highlights = 3;

  nlohmann::json to_json() const;
  static ToyDataSpec from_json(const nlohmann::json& j);
};

/// Textured background with a vignette, folds, specular highlights and
/// near-hue distractor blobs, plus 0-2 pseudo-polyp ellipses with exact boxes.
std::vector<AnnotatedImage> generate_toy_dataset(int n, std::uint64_t seed, const ToyDataSpec& spec = {});

struct FoldSplit {
  std::vector<std::string> fold_a;
  std::vector<std::string> fold_b;
};

struct TrainValTestSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Deterministic shuffled halving; fold_a takes the extra id when odd.
FoldSplit two_fold_split(const std::vector<std::string>& ids, std::uint64_t seed);
/// Deterministic 8:1:1 partition: val and test get n/10 each, train the rest.
TrainValTestSplit train_val_test_split(const std::vector<std::string>& ids, std::uint64_t seed);

/// Stored splits, written to meta.json by save_dataset when provided.
struct DatasetSplits {
  TrainValTestSplit tvt;
  FoldSplit folds;

  nlohmann::json to_json() const;
  static DatasetSplits from_json(const nlohmann::json& j);
};

DatasetSplits make_splits(const std::vector<AnnotatedImage>& data, std::uint64_t seed);

void write_png(const std::filesystem::path& path, const torch::Tensor& pixels);
torch::Tensor read_png(const std::filesystem::path& path);

/// Quantizes [0,1] values to the nearest multiple of 1/255.
torch::Tensor quantize_8bit(const torch::Tensor& pixels);

void save_dataset(const std::vector<AnnotatedImage>& data, const std::filesystem::path& root,
                  const nlohmann::json& meta = nlohmann::json::object());
std::vector<AnnotatedImage> load_dataset(const std::filesystem::path& root);
/// meta.json contents, or an empty object when absent.
nlohmann::json load_dataset_meta(const std::filesystem::path& root);

/// Parses annotations.txt into filename -> boxes, in first-seen order.
std::vector<std::pair<std::string, std::vector<PixelBox>>> parse_annotations(const std::filesystem::path& file);

/// Subset of `data` whose ids appear in `ids`, in `ids` order.
std::vector<AnnotatedImage> select(const std::vector<AnnotatedImage>& data, const std::vector<std::string>& ids);

torch::Tensor stack_pixels(const std::vector<AnnotatedImage>& data);
std::vector<std::vector<PixelBox>> collect_boxes(const std::vector<AnnotatedImage>& data);
std::vector<std::string> collect_ids(const std::vector<AnnotatedImage>& data);

}  // namespace dada
