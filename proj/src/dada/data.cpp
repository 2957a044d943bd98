#include "dada/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dada/error.hpp"
#include "dada/random.hpp"

namespace dada {

namespace fs = std::filesystem;

namespace {

using Rgb = std::array<double, 3>;

class Canvas {
 public:
  explicit Canvas(int size) : n_(size), px_(static_cast<std::size_t>(3 * size * size), 0.0) {}
  int size() const { return n_; }
  double& at(int c, int y, int x) { return px_[static_cast<std::size_t>((c * n_ + y) * n_ + x)]; }

  /// Blends `color` in with per-pixel weight w(x, y) in [0, 1].
  template <typename Weight, typename Shade>
  void blend(const Rgb& color, Weight weight, Shade shade) {
    for (int y = 0; y < n_; ++y)
      for (int x = 0; x < n_; ++x) {
        const double w = weight(x + 0.5, y + 0.5);
        if (w <= 1e-6) continue;
        const double s = shade(x + 0.5, y + 0.5);
        for (int c = 0; c < 3; ++c) at(c, y, x) = (1.0 - w) * at(c, y, x) + w * color[c] * s;
      }
  }

  torch::Tensor to_tensor() const {
    auto t = torch::empty({3, n_, n_}, torch::kFloat32);
    auto a = t.accessor<float, 3>();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < n_; ++y)
        for (int x = 0; x < n_; ++x) {
          const double v = std::clamp(px_[static_cast<std::size_t>((c * n_ + y) * n_ + x)], 0.0, 1.0);
          a[c][y][x] = static_cast<float>(std::round(v * 255.0) / 255.0);
        }
    return t;
  }

 private:
  int n_;
  std::vector<double> px_;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  int integer(int lo, int hi_inclusive) { return std::uniform_int_distribution<int>(lo, hi_inclusive)(eng_); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }

 private:
  std::mt19937_64 eng_;
};

double soft_inside(double e, double sharpness = 6.0) { return 1.0 / (1.0 + std::exp((e - 1.0) * sharpness)); }

bool overlaps(const PixelBox& a, const PixelBox& b) {
  return !(a.x2 <= b.x1 || b.x2 <= a.x1 || a.y2 <= b.y1 || b.y2 <= a.y1);
}

const Rgb kPolypColor = {0.72, 0.22, 0.24};
const Rgb kBubbleColor = {0.85, 0.70, 0.45};

AnnotatedImage generate_one(Rng& rng, const ToyDataSpec& spec, std::string id) {
  const int n = spec.image_size;
  const double scale = n / 32.0;
  Canvas cv(n);

  // Smooth texture: bilinear upsampling of a 5x5 Gaussian lattice.
  Rgb base;
  const Rgb tissue = {0.80, 0.52, 0.46};
  for (int c = 0; c < 3; ++c) base[c] = tissue[c] + rng.uniform(-0.05, 0.05);
  std::array<std::array<double, 5>, 5> lattice{};
  for (auto& row : lattice)
    for (auto& v : row) v = rng.normal();
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double gx = (x + 0.5) / n * 4.0, gy = (y + 0.5) / n * 4.0;
      const int ix = std::min(3, int(gx)), iy = std::min(3, int(gy));
      const double fx = gx - ix, fy = gy - iy;
      const double tex = (1 - fx) * (1 - fy) * lattice[iy][ix] + fx * (1 - fy) * lattice[iy][ix + 1] +
                         (1 - fx) * fy * lattice[iy + 1][ix] + fx * fy * lattice[iy + 1][ix + 1];
      const double dx = (x + 0.5 - n / 2.0) / (n / 2.0), dy = (y + 0.5 - n / 2.0) / (n / 2.0);
      const double vignette = 1.0 - 0.35 * (dx * dx + dy * dy);
      for (int c = 0; c < 3; ++c) cv.at(c, y, x) = base[c] * (1.0 + 0.08 * tex) * vignette;
    }

  // Folds: dark sinusoidal bands with a bright rim.
  const int folds = rng.integer(0, spec.max_folds);
  for (int f = 0; f < folds; ++f) {
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    const double freq = rng.uniform(0.5, 1.5) * 2 * std::numbers::pi / n;
    const double offset = rng.uniform(0.2, 0.8) * n;
    const double amp = rng.uniform(1, 4) * scale;
    const bool horizontal = rng.chance(0.5);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double u = horizontal ? x + 0.5 : y + 0.5, v = horizontal ? y + 0.5 : x + 0.5;
        const double d = std::abs(v - (offset + amp * std::sin(freq * u + phase))) / scale;
        const double dark = 1.0 - 0.25 * std::exp(-d * d);
        const double rim = 0.08 * std::exp(-(d - 1.5) * (d - 1.5) / 0.8);
        for (int c = 0; c < 3; ++c) cv.at(c, y, x) = cv.at(c, y, x) * dark + rim;
      }
  }

  // Distractor blobs: polyp-shaped, hue partway between bubble yellow and polyp red, no specular dot.
  const int blobs = rng.integer(0, spec.max_distractor_blobs);
  for (int b = 0; b < blobs; ++b) {
    const double cx = rng.uniform(4 * scale, n - 4 * scale), cy = rng.uniform(4 * scale, n - 4 * scale);
    const double rx = rng.uniform(2.5, 5.5) * scale, ry = rng.uniform(2.5, 5.5) * scale;
    const double f = rng.uniform(0.3, 0.9);
    Rgb col;
    for (int c = 0; c < 3; ++c) col[c] = (1 - f) * kBubbleColor[c] + f * kPolypColor[c] + rng.uniform(-0.04, 0.04);
    auto ell = [=](double x, double y) { return std::hypot((x - cx) / rx, (y - cy) / ry); };
    cv.blend(col, [&](double x, double y) { return soft_inside(ell(x, y)); },
             [&](double x, double y) { const double e = std::min(1.0, ell(x, y)); return 1.0 - 0.3 * e * e; });
  }

  // Pseudo-polyps.
  std::vector<PixelBox> boxes;
  const int want = rng.chance(spec.polyp_free_fraction) ? 0 : (rng.chance(spec.two_polyp_fraction) ? 2 : 1);
  for (int attempt = 0; static_cast<int>(boxes.size()) < want && attempt < 50; ++attempt) {
    const double rx = rng.uniform(3, 6) * scale, ry = rng.uniform(3, 6) * scale;
    const double cx = rng.uniform(rx + 1, n - rx - 1), cy = rng.uniform(ry + 1, n - ry - 1);
    const PixelBox box{int(std::floor(cx - rx)), int(std::floor(cy - ry)), int(std::ceil(cx + rx)),
                       int(std::ceil(cy + ry))};
    if (std::any_of(boxes.begin(), boxes.end(), [&](const PixelBox& o) { return overlaps(o, box); })) continue;
    Rgb col;
    for (int c = 0; c < 3; ++c) col[c] = kPolypColor[c] + rng.uniform(-0.04, 0.04);
    auto ell = [=](double x, double y) { return std::hypot((x - cx) / rx, (y - cy) / ry); };
    cv.blend(col, [&](double x, double y) { return soft_inside(ell(x, y)); },
             [&](double x, double y) { const double e = std::min(1.0, ell(x, y)); return 1.0 - 0.35 * e * e; });
    const double sx = cx - 0.35 * rx, sy = cy - 0.35 * ry;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double w = soft_inside(std::hypot((x + 0.5 - cx) / rx, (y + 0.5 - cy) / ry));
        const double d2 = ((x + 0.5 - sx) * (x + 0.5 - sx) + (y + 0.5 - sy) * (y + 0.5 - sy)) / (scale * scale);
        const double spec_dot = 0.6 * std::exp(-d2 / 0.6) * w;
        for (int c = 0; c < 3; ++c) cv.at(c, y, x) += spec_dot;
      }
    boxes.push_back(box);
  }

  // Specular highlights anywhere.
  const int highlights = rng.integer(0, spec.max_highlights);
  for (int h = 0; h < highlights; ++h) {
    const double sx = rng.uniform(0, n), sy = rng.uniform(0, n), spread = rng.uniform(0.3, 1.0);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double d2 = ((x + 0.5 - sx) * (x + 0.5 - sx) + (y + 0.5 - sy) * (y + 0.5 - sy)) / (scale * scale);
        const double v = 0.7 * std::exp(-d2 / spread);
        for (int c = 0; c < 3; ++c) cv.at(c, y, x) += v;
      }
  }

  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) cv.at(c, y, x) += 0.01 * rng.normal();

  return {std::move(id), cv.to_tensor(), std::move(boxes)};
}

std::vector<std::string> shuffled(std::vector<std::string> ids, std::uint64_t seed) {
  std::mt19937_64 eng(mix_seed(seed, 0x5b117));
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[eng() % i]);
  return ids;
}

[[noreturn]] void data_error(const std::string& what) { fail(ErrorKind::kData, what); }

}  // namespace

nlohmann::json ToyDataSpec::to_json() const {
  return {{"image_size", image_size},
          {"polyp_free_fraction", polyp_free_fraction},
          {"two_polyp_fraction", two_polyp_fraction},
          {"max_distractor_blobs", max_distractor_blobs},
          {"max_folds", max_folds},
          {"max_highlights", max_highlights}};
}

ToyDataSpec ToyDataSpec::from_json(const nlohmann::json& j) {
  ToyDataSpec s;
  s.image_size = j.value("image_size", s.image_size);
  s.polyp_free_fraction = j.value("polyp_free_fraction", s.polyp_free_fraction);
  s.two_polyp_fraction = j.value("two_polyp_fraction", s.two_polyp_fraction);
  s.max_distractor_blobs = j.value("max_distractor_blobs", s.max_distractor_blobs);
  s.max_folds = j.value("max_folds", s.max_folds);
  s.max_highlights = j.value("max_highlights", s.max_highlights);
  return s;
}

std::vector<AnnotatedImage> generate_toy_dataset(int n, std::uint64_t seed, const ToyDataSpec& spec) {
  require(n >= 1, "toy dataset needs n >= 1");
  require(spec.image_size >= 16 && spec.image_size % 4 == 0, "toy image size must be a multiple of 4, >= 16");
  require(spec.polyp_free_fraction >= 0 && spec.polyp_free_fraction <= 1, "polyp_free_fraction outside [0,1]");
  Rng rng(mix_seed(seed, 0x70e));
  std::vector<AnnotatedImage> out;
  out.reserve(static_cast<std::size_t>(n));
  const int width = std::max(3, int(std::to_string(n - 1).size()));
  for (int i = 0; i < n; ++i) {
    std::ostringstream id;
    id << "img_" << std::setw(width) << std::setfill('0') << i;
    out.push_back(generate_one(rng, spec, id.str()));
  }
  return out;
}

FoldSplit two_fold_split(const std::vector<std::string>& ids, std::uint64_t seed) {
  require(ids.size() >= 2, "two-fold split needs at least 2 ids");
  auto order = shuffled(ids, seed);
  const auto half = (order.size() + 1) / 2;
  FoldSplit s;
  s.fold_a.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  s.fold_b.assign(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
  return s;
}

TrainValTestSplit train_val_test_split(const std::vector<std::string>& ids, std::uint64_t seed) {
  require(ids.size() >= 10, "train/val/test split needs at least 10 ids");
  auto order = shuffled(ids, mix_seed(seed, 0x8118));
  const auto tenth = order.size() / 10;
  const auto n_train = order.size() - 2 * tenth;
  TrainValTestSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + tenth));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + tenth), order.end());
  return s;
}

nlohmann::json DatasetSplits::to_json() const {
  return {{"train", tvt.train}, {"val", tvt.val}, {"test", tvt.test}, {"fold_a", folds.fold_a}, {"fold_b", folds.fold_b}};
}

DatasetSplits DatasetSplits::from_json(const nlohmann::json& j) {
  DatasetSplits s;
  s.tvt.train = j.at("train").get<std::vector<std::string>>();
  s.tvt.val = j.at("val").get<std::vector<std::string>>();
  s.tvt.test = j.at("test").get<std::vector<std::string>>();
  s.folds.fold_a = j.at("fold_a").get<std::vector<std::string>>();
  s.folds.fold_b = j.at("fold_b").get<std::vector<std::string>>();
  return s;
}

DatasetSplits make_splits(const std::vector<AnnotatedImage>& data, std::uint64_t seed) {
  DatasetSplits s;
  s.tvt = train_val_test_split(collect_ids(data), seed);
  s.folds = two_fold_split(s.tvt.train, mix_seed(seed, 0xf01d));
  return s;
}

torch::Tensor quantize_8bit(const torch::Tensor& pixels) {
  return (pixels.clamp(0.0, 1.0) * 255.0).round() / 255.0;
}

void write_png(const fs::path& path, const torch::Tensor& pixels) {
  require(pixels.dim() == 3 && pixels.size(0) == 3, "write_png expects [3,H,W]");
  const int h = static_cast<int>(pixels.size(1)), w = static_cast<int>(pixels.size(2));
  auto hwc = (pixels.to(torch::kFloat32).clamp(0, 1) * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, hwc.data_ptr<std::uint8_t>(), 0, nullptr))
    data_error("cannot write " + path.string() + ": " + img.message);
}

torch::Tensor read_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) data_error("cannot read " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  auto hwc = torch::empty({int64_t(img.height), int64_t(img.width), 3}, torch::kUInt8);
  if (!png_image_finish_read(&img, nullptr, hwc.data_ptr<std::uint8_t>(), 0, nullptr))
    data_error("cannot decode " + path.string() + ": " + img.message);
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

void save_dataset(const std::vector<AnnotatedImage>& data, const fs::path& root, const nlohmann::json& meta) {
  fs::create_directories(root / "images");
  std::ofstream ann(root / "annotations.txt");
  if (!ann) data_error("cannot write " + (root / "annotations.txt").string());
  for (const auto& item : data) {
    const std::string file = item.id + ".png";
    write_png(root / "images" / file, item.pixels);
    if (item.boxes.empty()) ann << file << '\n';
    for (const auto& b : item.boxes) ann << file << ' ' << b.x1 << ' ' << b.y1 << ' ' << b.x2 << ' ' << b.y2 << '\n';
  }
  if (!meta.empty()) {
    std::ofstream m(root / "meta.json");
    m << meta.dump(2) << '\n';
  }
}

std::vector<std::pair<std::string, std::vector<PixelBox>>> parse_annotations(const fs::path& file) {
  std::ifstream in(file);
  if (!in) data_error("missing annotation file " + file.string());
  std::vector<std::pair<std::string, std::vector<PixelBox>>> out;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    const std::string where = file.string() + ":" + std::to_string(lineno);
    if (tok.size() != 1 && tok.size() != 5) data_error(where + ": expected 'filename [x1 y1 x2 y2]'");
    auto [it, fresh] = index.emplace(tok[0], out.size());
    if (fresh) out.emplace_back(tok[0], std::vector<PixelBox>{});
    if (tok.size() == 5) {
      std::array<int, 4> v{};
      for (int k = 0; k < 4; ++k) {
        std::size_t used = 0;
        try {
          v[static_cast<std::size_t>(k)] = std::stoi(tok[static_cast<std::size_t>(k + 1)], &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != tok[static_cast<std::size_t>(k + 1)].size()) data_error(where + ": non-integer coordinate");
      }
      out[it->second].second.push_back({v[0], v[1], v[2], v[3]});
    }
  }
  return out;
}

std::vector<AnnotatedImage> load_dataset(const fs::path& root) {
  const auto ann_path = root / "annotations.txt";
  auto ann = parse_annotations(ann_path);
  std::unordered_map<std::string, std::vector<PixelBox>> boxes_for;
  std::vector<std::string> order;
  for (auto& [file, boxes] : ann) {
    order.push_back(file);
    boxes_for.emplace(file, boxes);
  }
  // Images present on disk but absent from the annotation file are negatives.
  std::set<std::string> extra;
  if (fs::is_directory(root / "images"))
    for (const auto& e : fs::directory_iterator(root / "images"))
      if (e.path().extension() == ".png" && !boxes_for.count(e.path().filename().string()))
        extra.insert(e.path().filename().string());
  order.insert(order.end(), extra.begin(), extra.end());

  // Re-scan the annotation file to report the first offending line of a bad box.
  auto line_of = [&](const std::string& file, const PixelBox& b) {
    std::ifstream in(ann_path);
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      std::istringstream ss(line);
      std::string f;
      PixelBox p;
      if (ss >> f >> p.x1 >> p.y1 >> p.x2 >> p.y2 && f == file && p == b) return lineno;
    }
    return 0;
  };

  std::vector<AnnotatedImage> out;
  for (const auto& file : order) {
    const auto path = root / "images" / file;
    if (!fs::exists(path)) data_error("missing image file " + path.string());
    AnnotatedImage item{fs::path(file).stem().string(), read_png(path), {}};
    auto it = boxes_for.find(file);
    if (it != boxes_for.end()) {
      for (const auto& b : it->second) {
        try {
          validate_box(b, item.height(), item.width());
        } catch (const Error& e) {
          data_error(ann_path.string() + ":" + std::to_string(line_of(file, b)) + ": " + e.what());
        }
      }
      item.boxes = it->second;
    }
    out.push_back(std::move(item));
  }
  return out;
}

nlohmann::json load_dataset_meta(const fs::path& root) {
  std::ifstream in(root / "meta.json");
  if (!in) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    data_error("malformed " + (root / "meta.json").string() + ": " + e.what());
  }
}

std::vector<AnnotatedImage> select(const std::vector<AnnotatedImage>& data, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const AnnotatedImage*> by_id;
  for (const auto& d : data) by_id.emplace(d.id, &d);
  std::vector<AnnotatedImage> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) data_error("dataset has no image with id '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

torch::Tensor stack_pixels(const std::vector<AnnotatedImage>& data) {
  require(!data.empty(), "cannot stack an empty dataset");
  std::vector<torch::Tensor> v;
  v.reserve(data.size());
  for (const auto& d : data) v.push_back(d.pixels);
  return torch::stack(v);
}

std::vector<std::vector<PixelBox>> collect_boxes(const std::vector<AnnotatedImage>& data) {
  std::vector<std::vector<PixelBox>> out;
  out.reserve(data.size());
  for (const auto& d : data) out.push_back(d.boxes);
  return out;
}

std::vector<std::string> collect_ids(const std::vector<AnnotatedImage>& data) {
  std::vector<std::string> out;
  out.reserve(data.size());
  for (const auto& d : data) out.push_back(d.id);
  return out;
}

}  // namespace dada
