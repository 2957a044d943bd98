#include "dada/dada.h"

#include <cstring>
#include <string>

#include "dada/checkpoint.hpp"
#include "dada/error.hpp"
#include "dada/pipeline.hpp"

struct dada_config {
  dada::RunConfig cfg;
};
struct dada_dataset {
  dada::Dataset ds;
};
struct dada_denoiser {
  dada::Denoiser den;
};
struct dada_detector {
  dada::ToyDetector det;
};
struct dada_records {
  dada::BatchResult batch;
};

namespace {

thread_local std::string g_last_error;

dada_status set_error(dada_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
dada_status guarded(F&& f) {
  try {
    f();
    return DADA_OK;
  } catch (const dada::Error& e) {
    return set_error(static_cast<dada_status>(e.kind()), e.what());
  } catch (const c10::Error& e) {
    return set_error(DADA_ERR_INTERNAL, e.what_without_backtrace());
  } catch (const std::exception& e) {
    return set_error(DADA_ERR_INTERNAL, e.what());
  }
}

void need(const void* p, const char* what) {
  if (!p) dada::fail(dada::ErrorKind::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<dada::AnnotatedImage> split_images(const dada::Dataset& ds, const std::string& split) {
  if (split == "all") return ds.images;
  if (split == "train") return ds.train();
  if (split == "val") return ds.val();
  if (split == "test") return ds.test();
  return ds.fold(split);
}

}  // namespace

extern "C" {

const char* dada_last_error(void) { return g_last_error.c_str(); }
const char* dada_version(void) { return "0.1.0"; }
void dada_string_free(char* s) { std::free(s); }

dada_status dada_config_create(const char* path, dada_config** out) {
  return guarded([&] {
    need(out, "out");
    std::optional<std::filesystem::path> file;
    if (path) file = path;
    *out = new dada_config{dada::resolve_config(file, {})};
  });
}

dada_status dada_config_set(dada_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

dada_status dada_config_get(const dada_config* cfg, const char* key, char** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(out, "out");
    *out = dup_string(cfg->cfg.get(key));
  });
}

dada_status dada_config_dump(const dada_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = dup_string(cfg->cfg.dump());
  });
}

dada_status dada_config_validate(const dada_config* cfg) {
  return guarded([&] {
    need(cfg, "cfg");
    cfg->cfg.validate();
  });
}

void dada_config_free(dada_config* cfg) { delete cfg; }

dada_status dada_dataset_generate(const dada_config* cfg, const char* out_dir, int force, dada_dataset** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(out_dir, "out_dir");
    need(out, "out");
    *out = new dada_dataset{dada::write_toy_dataset(cfg->cfg, out_dir, force != 0)};
  });
}

dada_status dada_dataset_open(const dada_config* cfg, const char* dir, dada_dataset** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(dir, "dir");
    need(out, "out");
    *out = new dada_dataset{dada::open_dataset(dir, cfg->cfg)};
  });
}

dada_status dada_dataset_count(const dada_dataset* ds, const char* split, size_t* out) {
  return guarded([&] {
    need(ds, "ds");
    need(split, "split");
    need(out, "out");
    *out = split_images(ds->ds, split).size();
  });
}

void dada_dataset_free(dada_dataset* ds) { delete ds; }

dada_status dada_denoiser_train(const dada_config* cfg, const dada_dataset* ds, const char* fold, int64_t iterations,
                                const char* resume, dada_progress_fn progress, void* user, dada_denoiser** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(ds, "ds");
    need(fold, "fold");
    need(out, "out");
    dada::require(iterations >= 0, "iterations must be >= 0");
    dada::DenoiserJob job;
    job.fold = fold;
    job.iterations = iterations;
    if (resume) job.resume = resume;
    if (progress) job.on_log = [=](std::int64_t it, double loss) { progress(user, it, loss); };
    auto [den, log] = dada::train_denoiser(cfg->cfg, ds->ds, job);
    *out = new dada_denoiser{std::move(den)};
  });
}

dada_status dada_denoiser_load(const char* path, dada_denoiser** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto den = dada::Denoiser::from_checkpoint(dada::load_checkpoint(path));
    den.freeze();
    *out = new dada_denoiser{std::move(den)};
  });
}

dada_status dada_denoiser_save(const dada_denoiser* den, const char* path) {
  return guarded([&] {
    need(den, "den");
    need(path, "path");
    dada::save_checkpoint(den->den.to_checkpoint(), path);
  });
}

const char* dada_denoiser_fold(const dada_denoiser* den) { return den ? den->den.fold.c_str() : ""; }
int64_t dada_denoiser_iteration(const dada_denoiser* den) { return den ? den->den.iteration : 0; }
void dada_denoiser_free(dada_denoiser* den) { delete den; }

dada_status dada_detector_train(const dada_config* cfg, const dada_dataset* ds, const char* split,
                                const dada_records* extra, uint64_t seed, dada_progress_fn progress, void* user,
                                dada_detector** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(ds, "ds");
    need(split, "split");
    need(out, "out");
    auto images = split_images(ds->ds, split);
    if (extra) {
      auto more = dada::records_as_images(extra->batch.records);
      images.insert(images.end(), more.begin(), more.end());
    }
    std::function<void(int, double)> cb;
    if (progress) cb = [=](int epoch, double loss) { progress(user, epoch, loss); };
    *out = new dada_detector{dada::train_toy_detector(cfg->cfg, images, seed, cb)};
  });
}

dada_status dada_detector_load(const dada_config* cfg, const char* path, dada_detector** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(path, "path");
    need(out, "out");
    auto det = dada::ToyDetector::from_checkpoint(dada::load_checkpoint(path));
    // Inference thresholds follow the run configuration.
    det.config().score_threshold = cfg->cfg.detector_score_threshold;
    det.config().nms_iou = cfg->cfg.detector_nms_iou;
    det.freeze();
    *out = new dada_detector{std::move(det)};
  });
}

dada_status dada_detector_save(const dada_detector* det, const char* path) {
  return guarded([&] {
    need(det, "det");
    need(path, "path");
    dada::save_checkpoint(det->det.to_checkpoint(), path);
  });
}

void dada_detector_free(dada_detector* det) { delete det; }

dada_status dada_synthesize(const dada_config* cfg, const dada_dataset* ds, const char* split,
                            const dada_denoiser* const* denoisers, size_t n_denoisers, const dada_detector* det,
                            double alpha, uint64_t seed, const char* region_file, int allow_same_fold,
                            dada_records** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(ds, "ds");
    need(split, "split");
    need(det, "det");
    need(out, "out");
    dada::require(denoisers && n_denoisers > 0, "at least one denoiser is required");
    dada::require(std::isfinite(alpha) && alpha >= 0, "alpha must be finite and >= 0");
    std::vector<const dada::Denoiser*> dens;
    for (size_t i = 0; i < n_denoisers; ++i) {
      need(denoisers[i], "denoiser");
      dens.push_back(&denoisers[i]->den);
    }
    dada::SynthesisRequest req;
    req.alpha = alpha;
    req.seed = seed;
    req.allow_same_fold = allow_same_fold != 0;
    if (region_file) req.regions = dada::parse_region_file(region_file);
    auto images = split_images(ds->ds, split);
    if (images.empty()) dada::fail(dada::ErrorKind::kData, std::string("split '") + split + "' is empty");
    *out = new dada_records{dada::cross_fold_synthesize(cfg->cfg, ds->ds, images, dens, det->det, req)};
  });
}

size_t dada_records_count(const dada_records* recs) { return recs ? recs->batch.records.size() : 0; }
size_t dada_records_failure_count(const dada_records* recs) { return recs ? recs->batch.failures.size() : 0; }

dada_status dada_records_failure(const dada_records* recs, size_t i, const char** source_id, const char** reason) {
  return guarded([&] {
    need(recs, "recs");
    dada::require(i < recs->batch.failures.size(), "failure index out of range");
    if (source_id) *source_id = recs->batch.failures[i].source_id.c_str();
    if (reason) *reason = recs->batch.failures[i].reason.c_str();
  });
}

dada_status dada_records_save(const dada_records* recs, const char* dir) {
  return guarded([&] {
    need(recs, "recs");
    need(dir, "dir");
    dada::save_records(recs->batch.records, dir);
  });
}

dada_status dada_records_load(const char* dir, dada_records** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new dada_records{{dada::load_records(dir), {}}};
  });
}

void dada_records_free(dada_records* recs) { delete recs; }

dada_status dada_evaluate(const dada_config* cfg, const dada_detector* det, const dada_dataset* ds, const char* split,
                          dada_eval* out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(det, "det");
    need(ds, "ds");
    need(split, "split");
    need(out, "out");
    auto r = dada::evaluate_detector(cfg->cfg, det->det, split_images(ds->ds, split));
    *out = {r.tp, r.fp, r.fn, r.precision, r.recall, r.f1};
  });
}

dada_status dada_score_records(const dada_config* cfg, const dada_detector* det, const dada_dataset* ds,
                               const dada_records* recs, double* fid, double* fpgr) {
  return guarded([&] {
    need(cfg, "cfg");
    need(det, "det");
    need(ds, "ds");
    need(recs, "recs");
    std::vector<std::string> ids;
    for (const auto& r : recs->batch.records) ids.push_back(r.source_id);
    auto sources = dada::select(ds->ds.images, ids);
    if (sources.size() != ids.size())
      dada::fail(dada::ErrorKind::kData, "some records have no source image in the dataset");
    auto m = dada::score_synthesis(cfg->cfg, det->det, recs->batch.records, sources);
    if (fid) *fid = m.fid;
    if (fpgr) *fpgr = m.fpgr;
  });
}

double dada_f1(double precision, double recall) { return dada::f1_score(precision, recall); }

}  // extern "C"
