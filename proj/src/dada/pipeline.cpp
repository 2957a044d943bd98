#include "dada/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dada/checkpoint.hpp"
#include "dada/error.hpp"
#include "dada/random.hpp"

namespace dada {

namespace fs = std::filesystem;

NoiseSchedule make_schedule(const RunConfig& cfg) {
  double b0 = cfg.beta_start, b1 = cfg.beta_end;
  if (cfg.beta_reference_steps > 0) {
    // Keep the total noise budget of a reference-length chain when T is short.
    const double scale = double(cfg.beta_reference_steps) / double(cfg.steps);
    b0 *= scale;
    b1 *= scale;
  }
  require(b1 < 1.0, "scaled beta_end must stay below 1; raise schedule.steps or lower beta_end");
  return build_linear_schedule(cfg.steps, b0, b1);
}

UNetConfig make_unet_config(const RunConfig& cfg) {
  UNetConfig u;
  u.base_width = cfg.denoiser_width;
  u.time_embed_dim = 2 * cfg.denoiser_width;
  return u;
}

ToyDetectorConfig make_detector_config(const RunConfig& cfg) {
  ToyDetectorConfig d;
  d.width = cfg.detector_width;
  d.score_threshold = cfg.detector_score_threshold;
  d.nms_iou = cfg.detector_nms_iou;
  d.loc = parse_loc_loss(cfg.loc_loss);
  d.assignment = parse_assignment_rule(cfg.assignment);
  return d;
}

DetectorTrainConfig make_detector_train_config(const RunConfig& cfg, std::uint64_t seed) {
  DetectorTrainConfig t;
  t.epochs = cfg.detector_epochs;
  t.batch_size = cfg.detector_batch;
  t.learning_rate = cfg.detector_lr;
  t.pos_weight = cfg.detector_pos_weight;
  t.seed = seed;
  return t;
}

AttackConfig make_attack_config(const RunConfig& cfg, double alpha) {
  AttackConfig a;
  a.alpha = alpha;
  a.inner_iters = cfg.inner_iters;
  if (cfg.window_end > 0) a.window = std::make_pair(cfg.window_start, cfg.window_end);
  a.eta_mode = cfg.eta_mode == "persist" ? EtaMode::kPersist : EtaMode::kReset;
  a.reference_steps = cfg.alpha_reference_steps;
  a.validate();
  return a;
}

SynthesisConfig make_synthesis_config(const RunConfig& cfg, double alpha, std::uint64_t seed) {
  SynthesisConfig s;
  s.attack = make_attack_config(cfg, alpha);
  s.seed = seed;
  s.final_paste = cfg.final_paste;
  s.batch_size = cfg.synth_batch;
  return s;
}

RegionSamplerConfig make_sampler_config(const RunConfig& cfg) {
  return {cfg.region_min_side, cfg.region_max_side, cfg.region_max_attempts};
}

FpgrConfig make_fpgr_config(const RunConfig& cfg) {
  return {cfg.fpgr_score, cfg.fpgr_region_iou, cfg.fpgr_image_wide};
}

std::vector<AnnotatedImage> Dataset::fold(const std::string& name) const {
  if (name == "a") return select(images, splits.folds.fold_a);
  if (name == "b") return select(images, splits.folds.fold_b);
  if (name == "all") return train();
  fail(ErrorKind::kInvalidArgument, "fold must be a, b or all (got '" + name + "')");
}

std::string Dataset::fold_of(const std::string& id) const {
  const auto& a = splits.folds.fold_a;
  const auto& b = splits.folds.fold_b;
  if (std::find(a.begin(), a.end(), id) != a.end()) return "a";
  if (std::find(b.begin(), b.end(), id) != b.end()) return "b";
  return "";
}

Dataset make_toy_dataset(const RunConfig& cfg) {
  ToyDataSpec spec;
  spec.image_size = cfg.image_size;
  Dataset ds;
  ds.images = generate_toy_dataset(cfg.n_images, cfg.seed, spec);
  ds.splits = make_splits(ds.images, cfg.seed);
  return ds;
}

Dataset write_toy_dataset(const RunConfig& cfg, const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) fail(ErrorKind::kData, out.string() + " exists and is not empty (use --force)");
    fs::remove_all(out);
  }
  auto ds = make_toy_dataset(cfg);
  ToyDataSpec spec;
  spec.image_size = cfg.image_size;
  nlohmann::json meta = {{"generator", spec.to_json()}, {"n", cfg.n_images}, {"seed", cfg.seed},
                         {"splits", ds.splits.to_json()}};
  save_dataset(ds.images, out, meta);
  return ds;
}

Dataset open_dataset(const fs::path& root, const RunConfig& cfg) {
  if (!fs::is_directory(root)) fail(ErrorKind::kData, "dataset not found: " + root.string());
  Dataset ds;
  ds.images = load_dataset(root);
  if (ds.images.empty()) fail(ErrorKind::kData, "dataset is empty: " + root.string());
  const auto meta = load_dataset_meta(root);
  ds.splits = meta.contains("splits") ? DatasetSplits::from_json(meta["splits"]) : make_splits(ds.images, cfg.seed);
  return ds;
}

std::vector<TrainingSample> to_training_samples(const std::vector<AnnotatedImage>& images) {
  std::vector<TrainingSample> out;
  out.reserve(images.size());
  for (const auto& im : images)
    out.push_back({im.pixels * 2.0 - 1.0, mask_from_boxes(im.boxes, im.height(), im.width())});
  return out;
}

std::pair<Denoiser, DenoiserTrainLog> train_denoiser(const RunConfig& cfg, const Dataset& ds, const DenoiserJob& job) {
  const auto iters = job.iterations > 0 ? job.iterations : cfg.denoiser_iters;
  require(iters >= 1, "denoiser iterations must be >= 1");
  auto images = ds.fold(job.fold);
  if (images.empty()) fail(ErrorKind::kData, "fold '" + job.fold + "' has no training images");

  auto model = job.resume ? Denoiser::from_checkpoint(load_checkpoint(*job.resume))
                          : Denoiser(make_unet_config(cfg), make_schedule(cfg));
  if (job.resume && model.fold != job.fold)
    fail(ErrorKind::kInvalidArgument, "resumed checkpoint was trained on fold '" + model.fold + "', not '" +
                                          job.fold + "'");
  model.fold = job.fold;
  model.regional_mask = cfg.regional_mask;

  DenoiserTrainConfig tc;
  tc.iterations = iters;
  tc.batch_size = cfg.denoiser_batch;
  tc.learning_rate = cfg.denoiser_lr;
  tc.seed = cfg.seed;
  tc.normalization = cfg.denoiser_normalization == "background" ? LossNormalization::kBackgroundElements
                                                                : LossNormalization::kAllElements;
  tc.use_mask = cfg.regional_mask;
  tc.on_log = job.on_log;
  tc.log_every = 1;
  auto log = train_bg_denoiser(model, to_training_samples(images), tc);
  return {std::move(model), std::move(log)};
}

ToyDetector train_toy_detector(const RunConfig& cfg, const std::vector<AnnotatedImage>& images, std::uint64_t seed,
                               const std::function<void(int, double)>& on_epoch) {
  if (images.empty()) fail(ErrorKind::kData, "no images to train the detector on");
  auto tc = make_detector_train_config(cfg, seed);
  tc.on_epoch = on_epoch;
  return train_detector(stack_pixels(images), collect_boxes(images), tc, make_detector_config(cfg));
}

std::map<std::string, PixelBox> parse_region_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kData, "cannot read region file " + path.string());
  std::map<std::string, PixelBox> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ss(line);
    std::string id;
    if (!(ss >> id)) continue;
    PixelBox b;
    std::string extra;
    if (!(ss >> b.x1 >> b.y1 >> b.x2 >> b.y2) || (ss >> extra))
      fail(ErrorKind::kData, path.string() + ":" + std::to_string(lineno) + ": expected '<id> x1 y1 x2 y2'");
    out[id] = b;
  }
  return out;
}

BatchResult cross_fold_synthesize(const RunConfig& cfg, const Dataset& ds, const std::vector<AnnotatedImage>& images,
                                  const std::vector<const Denoiser*>& denoisers, const DetectorModel& detector,
                                  const SynthesisRequest& req) {
  require(!denoisers.empty(), "synthesis needs at least one denoiser");
  // Group images by the denoiser that serves them, keeping input order in the output.
  std::vector<std::vector<AnnotatedImage>> groups(denoisers.size());
  std::vector<std::pair<std::size_t, std::size_t>> slot(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto own = ds.fold_of(images[i].id);
    std::optional<std::size_t> pick;
    for (std::size_t d = 0; d < denoisers.size() && !pick; ++d) {
      const auto& f = denoisers[d]->fold;
      if ((f == "a" || f == "b") && !own.empty() && f != own) pick = d;
    }
    if (!pick && req.allow_same_fold) pick = 0;
    if (!pick)
      fail(ErrorKind::kInvalidArgument, "no denoiser trained on the other fold for " + images[i].id +
                                            (own.empty() ? "" : " (fold " + own + ")") +
                                            "; pass --allow-same-fold to override");
    slot[i] = {*pick, groups[*pick].size()};
    groups[*pick].push_back(images[i]);
  }

  const auto scfg = make_synthesis_config(cfg, req.alpha, req.seed);
  std::vector<BatchResult> parts(denoisers.size());
  for (std::size_t d = 0; d < denoisers.size(); ++d)
    if (!groups[d].empty())
      parts[d] = batch_synthesize(groups[d], scfg, *denoisers[d], detector, make_sampler_config(cfg), req.regions);

  BatchResult out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& part = parts[slot[i].first];
    const auto& id = images[i].id;
    auto r = std::find_if(part.records.begin(), part.records.end(), [&](const auto& x) { return x.source_id == id; });
    if (r != part.records.end()) {
      out.records.push_back(*r);
      continue;
    }
    auto f = std::find_if(part.failures.begin(), part.failures.end(), [&](const auto& x) { return x.source_id == id; });
    if (f != part.failures.end()) out.failures.push_back(*f);
  }
  return out;
}

std::vector<std::vector<double>> detector_features(const DetectorModel& det, const torch::Tensor& images) {
  torch::NoGradGuard guard;
  auto f = det.features(images).to(torch::kFloat64).contiguous();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(f.size(0)));
  for (int64_t i = 0; i < f.size(0); ++i) {
    auto row = f[i];
    out[static_cast<std::size_t>(i)].assign(row.data_ptr<double>(), row.data_ptr<double>() + row.numel());
  }
  return out;
}

SynthesisMetrics score_synthesis(const RunConfig& cfg, const DetectorModel& det,
                                 const std::vector<SynthesisRecord>& records,
                                 const std::vector<AnnotatedImage>& sources) {
  if (records.empty()) fail(ErrorKind::kData, "no synthesized records to score");
  std::vector<torch::Tensor> outs;
  std::vector<PixelBox> regions;
  for (const auto& r : records) {
    outs.push_back(r.output);
    regions.push_back(r.region);
  }
  const auto synth = torch::stack(outs);
  SynthesisMetrics m;
  m.fpgr = compute_fpgr(det.predict(synth, cfg.fpgr_score), regions, make_fpgr_config(cfg));
  m.fid = compute_fid(detector_features(det, stack_pixels(sources)), detector_features(det, synth));
  return m;
}

EvalReport evaluate_detector(const RunConfig& cfg, const DetectorModel& det, const std::vector<AnnotatedImage>& images) {
  if (images.empty()) fail(ErrorKind::kData, "evaluation set is empty");
  return evaluate_detections(det.predict(stack_pixels(images), cfg.eval_score), collect_boxes(images), cfg.eval_iou,
                             cfg.eval_score);
}

std::vector<double> default_alpha_grid() { return {0.001, 0.002, 0.003, 0.004, 0.005}; }

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "alpha,fid,fpgr,f1\n" << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.alpha << ',' << r.fid << ',' << r.fpgr << ',';
    if (r.f1) os << *r.f1;
    os << '\n';
  }
  return os.str();
}

std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "model" << std::right << std::setw(8) << "P" << std::setw(8) << "R"
     << std::setw(8) << "F1" << std::setw(6) << "TP" << std::setw(6) << "FP" << std::setw(6) << "FN" << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& [name, r] : rows)
    os << std::left << std::setw(12) << name << std::right << std::setw(8) << r.precision << std::setw(8) << r.recall
       << std::setw(8) << r.f1 << std::setw(6) << r.tp << std::setw(6) << r.fp << std::setw(6) << r.fn << '\n';
  return os.str();
}

nlohmann::json RetrainReport::to_json() const {
  return {{"baseline", baseline.to_json()},
          {"augmented", augmented.to_json()},
          {"original_size", original_size},
          {"augmented_size", augmented_size}};
}

std::string RetrainReport::table() const { return report_table({{"baseline", baseline}, {"augmented", augmented}}); }

RetrainReport retrain_compare(const RunConfig& cfg, const Dataset& ds, const std::vector<AnnotatedImage>& synthesized,
                              std::uint64_t seed, const ToyDetector* baseline, ToyDetector* augmented_out) {
  const auto train = ds.train();
  const auto test = ds.test();
  RetrainReport rep;
  rep.original_size = train.size();
  std::optional<ToyDetector> own_base;
  if (!baseline) {
    own_base = train_toy_detector(cfg, train, seed);
    baseline = &*own_base;
  }
  auto merged = train;
  merged.insert(merged.end(), synthesized.begin(), synthesized.end());
  rep.augmented_size = merged.size();
  auto aug = train_toy_detector(cfg, merged, seed);
  rep.baseline = evaluate_detector(cfg, *baseline, test);
  rep.augmented = evaluate_detector(cfg, aug, test);
  if (augmented_out) *augmented_out = std::move(aug);
  return rep;
}

std::vector<SynthesisRecord> load_records(const fs::path& dir) {
  const auto images_dir = dir / "images";
  if (!fs::is_directory(images_dir)) fail(ErrorKind::kData, "no synthesized images under " + dir.string());
  std::map<std::string, std::vector<PixelBox>> boxes;
  if (fs::exists(dir / "annotations.txt"))
    for (auto& [name, b] : parse_annotations(dir / "annotations.txt")) boxes[name] = b;

  std::vector<fs::path> sidecars;
  for (const auto& e : fs::directory_iterator(images_dir))
    if (e.path().extension() == ".json") sidecars.push_back(e.path());
  std::sort(sidecars.begin(), sidecars.end());

  std::vector<SynthesisRecord> out;
  for (const auto& p : sidecars) {
    std::ifstream in(p);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kData, p.string() + ": " + e.what());
    }
    SynthesisRecord r;
    r.source_id = j.at("source_id").get<std::string>();
    const auto b = j.at("b");
    r.region = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
    r.alpha = j.at("alpha").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.final_loss = j.value("final_l_det", 0.0);
    r.denoiser_fold = j.value("denoiser_fold", std::string());
    auto png = p;
    png.replace_extension(".png");
    r.output = read_png(png);
    if (auto it = boxes.find(png.filename().string()); it != boxes.end()) r.source_boxes = it->second;
    out.push_back(std::move(r));
  }
  if (out.empty()) fail(ErrorKind::kData, "no synthesized records under " + dir.string());
  return out;
}

}  // namespace dada
