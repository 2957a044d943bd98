#include "dada/inpaint.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "dada/error.hpp"
#include "dada/random.hpp"

namespace dada {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kTrajectoryStream = 1;
constexpr std::uint64_t kRealStream = 2;
constexpr std::uint64_t kRegionStream = 3;

torch::Tensor draw(std::vector<torch::Generator>& gens, at::IntArrayRef shape) {
  std::vector<torch::Tensor> v;
  v.reserve(gens.size());
  for (auto& g : gens) v.push_back(torch::randn(shape, g, torch::kFloat32));
  return torch::stack(v);
}

bool intersects(const PixelBox& a, const PixelBox& b) {
  return !(a.x2 <= b.x1 || b.x2 <= a.x1 || a.y2 <= b.y1 || b.y2 <= a.y1);
}

void validate_job(const SynthesisJob& job) {
  require(job.image.dim() == 3, "synthesis source must be [C,H,W]");
  const int h = static_cast<int>(job.image.size(1)), w = static_cast<int>(job.image.size(2));
  validate_box(job.region, h, w);
  for (const auto& g : job.gt_boxes)
    require(!intersects(job.region, g),
            "region " + to_string(job.region) + " overlaps GT box " + to_string(g) + " of " + job.source_id);
}

std::vector<SynthesisRecord> synthesize_chunk(const std::vector<SynthesisJob>& jobs, const SynthesisConfig& cfg,
                                              const Denoiser& denoiser, const DetectorModel& detector) {
  const auto n = static_cast<int64_t>(jobs.size());
  const auto& sched = denoiser.schedule();
  const int64_t c = jobs.front().image.size(0), h = jobs.front().image.size(1), w = jobs.front().image.size(2);

  std::vector<torch::Tensor> sources, masks;
  std::vector<PixelBox> regions;
  std::vector<torch::Generator> traj, real;
  for (const auto& job : jobs) {
    validate_job(job);
    require(job.image.sizes() == jobs.front().image.sizes(), "synthesis batch mixes image shapes");
    sources.push_back(job.image.to(torch::kFloat32));
    masks.push_back(IllusoryBox::make(job.region, int(h), int(w)).mask.unsqueeze(0));
    regions.push_back(job.region);
    const auto js = job_seed(cfg.seed, job.source_id);
    traj.push_back(make_generator(mix_seed(js, kTrajectoryStream)));
    real.push_back(make_generator(mix_seed(js, kRealStream)));
  }
  const auto src01 = torch::stack(sources);
  const auto x_real = src01 * 2.0 - 1.0;
  const auto m_b = torch::stack(masks);

  AttackState state;
  auto x = draw(traj, {c, h, w});
  for (int t = sched.steps(); t >= 1; --t) {
    auto x_real_t = forward_diffuse(x_real, t, draw(real, {c, h, w}), sched);
    auto eps_fixed = t > 1 ? draw(traj, {c, h, w}) : torch::zeros_like(x);
    StepContext ctx{denoiser, detector, sched, t, x_real_t, x, m_b, regions, eps_fixed};
    x = run_attack_step(ctx, state, cfg.attack);
  }

  auto out01 = quantize_8bit(((x + 1.0) / 2.0).clamp(0.0, 1.0));
  if (cfg.final_paste) out01 = torch::where(m_b.expand_as(out01) > 0, out01, src01);

  auto verdicts = detector.predict(out01);
  std::vector<SynthesisRecord> records;
  records.reserve(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    SynthesisRecord r;
    r.source_id = job.source_id;
    r.region = job.region;
    r.alpha = cfg.attack.alpha;
    r.seed = cfg.seed;
    r.denoiser_fold = denoiser.fold;
    r.output = out01[i].clone();
    r.source_boxes = job.gt_boxes;
    r.trace = state.traces[static_cast<std::size_t>(i)];
    r.verdict = verdicts[static_cast<std::size_t>(i)];
    r.final_loss = r.trace.empty() ? 0.0 : r.trace.back().loss_after;
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace

nlohmann::json SynthesisRecord::sidecar() const {
  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : verdict) dets.push_back({{"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}}, {"score", d.score}});
  return {{"source_id", source_id},
          {"b", {region.x1, region.y1, region.x2, region.y2}},
          {"alpha", alpha},
          {"seed", seed},
          {"final_l_det", final_loss},
          {"denoiser_fold", denoiser_fold},
          {"detections", dets}};
}

std::uint64_t job_seed(std::uint64_t global_seed, const std::string& source_id) {
  return mix_seed(global_seed, fnv1a(source_id));
}

std::vector<SynthesisRecord> synthesize_jobs(const std::vector<SynthesisJob>& jobs, const SynthesisConfig& cfg,
                                             const Denoiser& denoiser, const DetectorModel& detector) {
  cfg.attack.validate();
  require(cfg.batch_size >= 1, "synthesis batch size must be >= 1");
  std::vector<SynthesisRecord> out;
  out.reserve(jobs.size());
  torch::NoGradGuard outer;  // gradients are re-enabled locally by the attacker
  for (std::size_t start = 0; start < jobs.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const auto end = std::min(jobs.size(), start + static_cast<std::size_t>(cfg.batch_size));
    std::vector<SynthesisJob> chunk(jobs.begin() + static_cast<std::ptrdiff_t>(start),
                                    jobs.begin() + static_cast<std::ptrdiff_t>(end));
    auto recs = synthesize_chunk(chunk, cfg, denoiser, detector);
    std::move(recs.begin(), recs.end(), std::back_inserter(out));
  }
  return out;
}

SynthesisRecord synthesize_false_positive(const SynthesisJob& job, const SynthesisConfig& cfg,
                                          const Denoiser& denoiser, const DetectorModel& detector) {
  return synthesize_jobs({job}, cfg, denoiser, detector).front();
}

torch::Tensor sample_unconditional(const Denoiser& denoiser, const std::vector<std::uint64_t>& job_seeds,
                                   int channels, int height, int width) {
  require(!job_seeds.empty(), "sample_unconditional needs at least one job");
  torch::NoGradGuard guard;
  const auto& sched = denoiser.schedule();
  std::vector<torch::Generator> traj;
  for (auto s : job_seeds) traj.push_back(make_generator(mix_seed(s, kTrajectoryStream)));
  auto x = draw(traj, {channels, height, width});
  for (int t = sched.steps(); t >= 1; --t) {
    auto noise = t > 1 ? draw(traj, {channels, height, width}) : torch::zeros_like(x);
    x = reverse_step(x, denoiser.predict(x, t), t, sched, noise);
  }
  return x;
}

std::optional<PixelBox> sample_region(int height, int width, const std::vector<PixelBox>& gt_boxes,
                                      std::uint64_t seed, const RegionSamplerConfig& cfg) {
  require(cfg.min_side_frac > 0 && cfg.min_side_frac <= cfg.max_side_frac && cfg.max_side_frac <= 1,
          "region sampler needs 0 < min_side_frac <= max_side_frac <= 1");
  std::mt19937_64 eng(mix_seed(seed, kRegionStream));
  std::uniform_real_distribution<double> frac(cfg.min_side_frac, cfg.max_side_frac);
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const int bw = std::clamp(int(std::lround(frac(eng) * width)), 1, width);
    const int bh = std::clamp(int(std::lround(frac(eng) * height)), 1, height);
    const int x1 = std::uniform_int_distribution<int>(0, width - bw)(eng);
    const int y1 = std::uniform_int_distribution<int>(0, height - bh)(eng);
    const PixelBox b{x1, y1, x1 + bw, y1 + bh};
    if (std::none_of(gt_boxes.begin(), gt_boxes.end(), [&](const PixelBox& g) { return intersects(b, g); })) return b;
  }
  return std::nullopt;
}

BatchResult batch_synthesize(const std::vector<AnnotatedImage>& images, const SynthesisConfig& cfg,
                             const Denoiser& denoiser, const DetectorModel& detector,
                             const RegionSamplerConfig& sampler,
                             const std::map<std::string, PixelBox>& explicit_regions) {
  BatchResult result;
  std::vector<SynthesisJob> jobs;
  for (const auto& img : images) {
    SynthesisJob job{img.id, img.pixels, {}, img.boxes};
    auto it = explicit_regions.find(img.id);
    if (it != explicit_regions.end()) {
      job.region = it->second;
    } else {
      auto r = sample_region(img.height(), img.width(), img.boxes, job_seed(cfg.seed, img.id), sampler);
      if (!r) {
        result.failures.push_back({img.id, "no region disjoint from GT boxes after " +
                                               std::to_string(sampler.max_attempts) + " attempts"});
        continue;
      }
      job.region = *r;
    }
    try {
      validate_job(job);
    } catch (const Error& e) {
      result.failures.push_back({img.id, e.what()});
      continue;
    }
    jobs.push_back(std::move(job));
  }
  if (!jobs.empty()) result.records = synthesize_jobs(jobs, cfg, denoiser, detector);
  return result;
}

void save_records(const std::vector<SynthesisRecord>& records, const fs::path& out_dir) {
  fs::create_directories(out_dir / "images");
  std::ofstream ann(out_dir / "annotations.txt");
  if (!ann) fail(ErrorKind::kData, "cannot write " + (out_dir / "annotations.txt").string());
  for (const auto& r : records) {
    const std::string stem = r.source_id + "_syn";
    write_png(out_dir / "images" / (stem + ".png"), r.output);
    std::ofstream side(out_dir / "images" / (stem + ".json"));
    side << r.sidecar().dump(2) << '\n';
    write_attack_trace(r.trace, (out_dir / "images" / (stem + ".trace")).string());
    if (r.source_boxes.empty()) ann << stem << ".png\n";
    for (const auto& b : r.source_boxes) ann << stem << ".png " << b.x1 << ' ' << b.y1 << ' ' << b.x2 << ' ' << b.y2 << '\n';
  }
}

std::vector<AnnotatedImage> records_as_images(const std::vector<SynthesisRecord>& records) {
  std::vector<AnnotatedImage> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.source_id + "_syn", r.output, r.source_boxes});
  return out;
}

}  // namespace dada
