#include "dada/config.hpp"

#include <array>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <variant>

#include "dada/error.hpp"

namespace dada {

namespace {

using Member = std::variant<std::uint64_t RunConfig::*, int RunConfig::*, double RunConfig::*, bool RunConfig::*,
                            std::string RunConfig::*>;

struct Field {
  const char* key;
  Member member;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"run.seed", &RunConfig::seed},
      {"run.output_root", &RunConfig::output_root},
      {"data.dataset", &RunConfig::dataset},
      {"data.n_images", &RunConfig::n_images},
      {"data.image_size", &RunConfig::image_size},
      {"schedule.steps", &RunConfig::steps},
      {"schedule.beta_start", &RunConfig::beta_start},
      {"schedule.beta_end", &RunConfig::beta_end},
      {"schedule.beta_reference_steps", &RunConfig::beta_reference_steps},
      {"denoiser.width", &RunConfig::denoiser_width},
      {"denoiser.iters", &RunConfig::denoiser_iters},
      {"denoiser.batch_size", &RunConfig::denoiser_batch},
      {"denoiser.lr", &RunConfig::denoiser_lr},
      {"denoiser.normalization", &RunConfig::denoiser_normalization},
      {"denoiser.regional_mask", &RunConfig::regional_mask},
      {"detector.width", &RunConfig::detector_width},
      {"detector.epochs", &RunConfig::detector_epochs},
      {"detector.batch_size", &RunConfig::detector_batch},
      {"detector.lr", &RunConfig::detector_lr},
      {"detector.pos_weight", &RunConfig::detector_pos_weight},
      {"detector.assignment", &RunConfig::assignment},
      {"detector.loc_loss", &RunConfig::loc_loss},
      {"detector.score_threshold", &RunConfig::detector_score_threshold},
      {"detector.nms_iou", &RunConfig::detector_nms_iou},
      {"attack.alpha", &RunConfig::alpha},
      {"attack.inner_iters", &RunConfig::inner_iters},
      {"attack.window_start", &RunConfig::window_start},
      {"attack.window_end", &RunConfig::window_end},
      {"attack.eta_mode", &RunConfig::eta_mode},
      {"attack.alpha_reference_steps", &RunConfig::alpha_reference_steps},
      {"attack.final_paste", &RunConfig::final_paste},
      {"attack.batch_size", &RunConfig::synth_batch},
      {"region.min_side", &RunConfig::region_min_side},
      {"region.max_side", &RunConfig::region_max_side},
      {"region.max_attempts", &RunConfig::region_max_attempts},
      {"metrics.eval_iou", &RunConfig::eval_iou},
      {"metrics.eval_score", &RunConfig::eval_score},
      {"metrics.fpgr_score", &RunConfig::fpgr_score},
      {"metrics.fpgr_region_iou", &RunConfig::fpgr_region_iou},
      {"metrics.fpgr_image_wide", &RunConfig::fpgr_image_wide},
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  fail(ErrorKind::kInvalidArgument, "unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorKind::kInvalidArgument, "bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  fail(ErrorKind::kInvalidArgument, "bad boolean '" + v + "' for " + key);
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const auto& f = find_field(key);
  const auto v = trim(raw);
  std::visit(
      [&](auto m) {
        using T = std::remove_reference_t<decltype(this->*m)>;
        if constexpr (std::is_same_v<T, bool>) {
          this->*m = parse_bool(key, v);
        } else if constexpr (std::is_same_v<T, std::string>) {
          this->*m = v;
        } else {
          this->*m = parse_number<T>(key, v);
        }
      },
      f.member);
}

std::string RunConfig::get(const std::string& key) const {
  const auto& f = find_field(key);
  return std::visit(
      [&](auto m) -> std::string {
        using T = std::remove_cvref_t<decltype(this->*m)>;
        if constexpr (std::is_same_v<T, bool>) {
          return this->*m ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return this->*m;
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(this->*m);
        } else {
          return std::to_string(this->*m);
        }
      },
      f.member);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  std::string section;
  for (const auto& key : keys()) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << get(key) << '\n';
  }
  return os.str();
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorKind::kInvalidArgument, where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kInvalidArgument, where + "expected key = value");
    if (section.empty()) fail(ErrorKind::kInvalidArgument, where + "key outside of a [section]");
    try {
      set(section + "." + trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      fail(ErrorKind::kInvalidArgument, where + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kData, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path.string());
}

void RunConfig::validate() const {
  require(n_images >= 10, "data.n_images must be >= 10");
  require(image_size >= 8 && image_size % 4 == 0, "data.image_size must be a multiple of 4 and >= 8");
  require(steps >= 1, "schedule.steps must be >= 1");
  require(beta_start > 0 && beta_start <= beta_end, "schedule betas must satisfy 0 < beta_start <= beta_end");
  require(beta_reference_steps >= 0 && alpha_reference_steps >= 0, "reference steps must be >= 0");
  require(denoiser_width >= 8 && denoiser_width % 8 == 0, "denoiser.width must be a positive multiple of 8");
  require(denoiser_iters >= 1, "denoiser.iters must be >= 1");
  require(denoiser_batch >= 1 && detector_batch >= 1 && synth_batch >= 1, "batch sizes must be >= 1");
  require(denoiser_lr > 0 && detector_lr > 0, "learning rates must be > 0");
  require(detector_pos_weight > 0, "detector.pos_weight must be > 0");
  require(denoiser_normalization == "all" || denoiser_normalization == "background",
          "denoiser.normalization must be all or background");
  require(detector_width >= 1 && detector_epochs >= 1, "detector width and epochs must be >= 1");
  require(alpha >= 0, "attack.alpha must be >= 0");
  require(inner_iters >= 1, "attack.inner_iters must be >= 1");
  require(eta_mode == "reset" || eta_mode == "persist", "attack.eta_mode must be reset or persist");
  require(window_start >= 0 && window_end >= window_start, "attack window must satisfy 0 <= start <= end");
  require(region_min_side > 0 && region_min_side <= region_max_side && region_max_side <= 1,
          "region sides must satisfy 0 < min <= max <= 1");
  require(region_max_attempts >= 1, "region.max_attempts must be >= 1");
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (const char* root = std::getenv("DADA_OUTPUT_ROOT"); root && *root) cfg.output_root = root;
  if (file) cfg.apply_file(*file);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

}  // namespace dada
