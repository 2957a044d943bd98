// dada: command-line front end over the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dada/dada.h"

namespace fs = std::filesystem;

namespace {

struct Failure {
  dada_status status;
  std::string message;
};

void check(dada_status s) {
  if (s != DADA_OK) throw Failure{s, dada_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) { throw Failure{DADA_ERR_INVALID_ARGUMENT, msg}; }
[[noreturn]] void data_error(const std::string& msg) { throw Failure{DADA_ERR_DATA, msg}; }

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& o) noexcept : p(o.p) { o.p = nullptr; }
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};
using Config = Handle<dada_config, dada_config_free>;
using Dataset = Handle<dada_dataset, dada_dataset_free>;
using Denoiser = Handle<dada_denoiser, dada_denoiser_free>;
using Detector = Handle<dada_detector, dada_detector_free>;
using Records = Handle<dada_records, dada_records_free>;

std::string take_string(char* s) {
  std::string out = s ? s : "";
  dada_string_free(s);
  return out;
}

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  bool dump_config = false;
  bool quiet = false;
};

// Flag values that map onto config keys; only flags given on the command line apply.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> kv;
  void add(const std::string& key, const std::string& value) { kv.emplace_back(key, value); }
};

Config make_config(const Globals& g, const Overrides& o) {
  Config cfg;
  check(dada_config_create(g.config_file.empty() ? nullptr : g.config_file.c_str(), cfg.out()));
  for (const auto& s : g.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) usage_error("--set expects key=value, got '" + s + "'");
    check(dada_config_set(cfg.get(), s.substr(0, eq).c_str(), s.substr(eq + 1).c_str()));
  }
  for (const auto& [k, v] : o.kv) check(dada_config_set(cfg.get(), k.c_str(), v.c_str()));
  check(dada_config_validate(cfg.get()));
  return cfg;
}

std::string cfg_get(const Config& cfg, const char* key) {
  char* s = nullptr;
  check(dada_config_get(cfg.get(), key, &s));
  return take_string(s);
}

fs::path output_root(const Config& cfg) { return cfg_get(cfg, "run.output_root"); }

Dataset open_data(const Config& cfg) {
  Dataset ds;
  check(dada_dataset_open(cfg.get(), cfg_get(cfg, "data.dataset").c_str(), ds.out()));
  return ds;
}

Detector load_detector(const Config& cfg, const std::string& path) {
  if (path.empty()) usage_error("--detector is required");
  Detector det;
  check(dada_detector_load(cfg.get(), path.c_str(), det.out()));
  return det;
}

std::vector<Denoiser> load_denoisers(const std::vector<std::string>& paths) {
  if (paths.empty()) usage_error("at least one --denoiser is required");
  std::vector<Denoiser> out;
  for (const auto& p : paths) {
    Denoiser d;
    check(dada_denoiser_load(p.c_str(), d.out()));
    out.push_back(std::move(d));
  }
  return out;
}

void progress(void* user, int64_t step, double value) {
  const auto* label = static_cast<const char*>(user);
  std::fprintf(stderr, "%s %lld loss %.6f\n", label, static_cast<long long>(step), value);
}

nlohmann::json eval_json(const dada_eval& e) {
  return {{"tp", e.tp}, {"fp", e.fp}, {"fn", e.fn}, {"precision", e.precision}, {"recall", e.recall}, {"f1", e.f1}};
}

void print_table(const std::vector<std::pair<std::string, dada_eval>>& rows) {
  std::printf("%-12s %7s %7s %7s %6s %6s %6s\n", "model", "P", "R", "F1", "TP", "FP", "FN");
  for (const auto& [name, e] : rows)
    std::printf("%-12s %7.3f %7.3f %7.3f %6d %6d %6d\n", name.c_str(), e.precision, e.recall, e.f1, e.tp, e.fp, e.fn);
}

bool out_dir_occupied(const fs::path& out, bool force) {
  const bool occupied = fs::exists(out) && !fs::is_empty(out);
  if (occupied && !force) data_error(out.string() + " exists and is not empty (use --force)");
  return occupied;
}

void report_failures(const Records& recs) {
  for (size_t i = 0; i < dada_records_failure_count(recs.get()); ++i) {
    const char *id = nullptr, *reason = nullptr;
    check(dada_records_failure(recs.get(), i, &id, &reason));
    std::fprintf(stderr, "skipped %s: %s\n", id, reason);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DADA: detector-guided adversarial diffusion for false-positive synthesis"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  Globals g;
  Overrides o;
  app.add_option("-c,--config", g.config_file, "Config file (key = value with [sections])")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override a config key, e.g. --set attack.alpha=0.002");
  app.add_flag("--dump-config", g.dump_config, "Print the resolved configuration and exit");
  app.add_flag("-q,--quiet", g.quiet, "No progress output");

  auto map_opt = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    return sub->add_option_function<std::string>(flag, [&o, key](const std::string& v) { o.add(key, v); }, help);
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the toy polyp dataset with splits");
  std::string gen_out;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "Output directory")->required();
  map_opt(gen, "--n", "data.n_images", "Number of images");
  map_opt(gen, "--seed", "run.seed", "Generator and split seed");
  map_opt(gen, "--image-size", "data.image_size", "Square image side in pixels");
  gen->add_flag("--force", gen_force, "Replace an existing non-empty output directory");

  // train-denoiser
  auto* tden = app.add_subcommand("train-denoiser", "Train the background-only denoiser on one fold");
  std::string tden_fold = "a", tden_out, tden_resume, tden_log;
  int64_t tden_iters = 0;
  bool tden_iters_set = false;
  map_opt(tden, "--data", "data.dataset", "Dataset directory");
  tden->add_option("--fold", tden_fold, "Training fold")->check(CLI::IsMember({"a", "b", "all"}));
  tden->add_option_function<int64_t>("--iters", [&](int64_t v) { tden_iters = v; tden_iters_set = true; },
                                     "Iterations to run (default denoiser.iters)");
  tden->add_option("--resume", tden_resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  tden->add_option("--out", tden_out, "Checkpoint path (default <root>/checkpoints/bgde_<fold>.ckpt)");
  tden->add_option("--loss-log", tden_log, "Loss log path (default <checkpoint>.loss)");
  map_opt(tden, "--seed", "run.seed", "Training seed");
  tden->add_flag_function("--no-regional-mask", [&](int64_t) { o.add("denoiser.regional_mask", "false"); },
                          "Train a plain DDPM (ablation)");

  // train-detector
  auto* tdet = app.add_subcommand("train-detector", "Train the toy detector");
  std::string tdet_split = "train", tdet_out, tdet_extra;
  map_opt(tdet, "--data", "data.dataset", "Dataset directory");
  tdet->add_option("--split", tdet_split, "Training split")->check(CLI::IsMember({"train", "all", "a", "b"}));
  tdet->add_option("--extra", tdet_extra, "Synthesized records directory to add as training data");
  tdet->add_option("--out", tdet_out, "Checkpoint path (default <root>/checkpoints/detector.ckpt)");
  map_opt(tdet, "--seed", "run.seed", "Training seed");
  map_opt(tdet, "--epochs", "detector.epochs", "Training epochs");

  // synthesize
  auto* syn = app.add_subcommand("synthesize", "Synthesize one false positive per image");
  std::vector<std::string> syn_dens;
  std::string syn_det, syn_regions, syn_out, syn_split = "train";
  bool syn_same = false, syn_force = false;
  map_opt(syn, "--data", "data.dataset", "Dataset directory");
  syn->add_option("--denoiser", syn_dens, "Denoiser checkpoint (repeat for both folds)")->required();
  syn->add_option("--detector", syn_det, "Frozen detector checkpoint")->required();
  map_opt(syn, "--alpha", "attack.alpha", "Signed-gradient step size");
  map_opt(syn, "--seed", "run.seed", "Synthesis seed");
  syn->add_option("--region-file", syn_regions, "Explicit regions: '<id> x1 y1 x2 y2' per line")
      ->check(CLI::ExistingFile);
  syn->add_option("--split", syn_split, "Images to augment")->check(CLI::IsMember({"train", "a", "b", "val", "test", "all"}));
  syn->add_flag("--allow-same-fold", syn_same, "Allow a denoiser trained on the image's own fold");
  syn->add_option("--out", syn_out, "Output directory (default <root>/synth)");
  syn->add_flag("--force", syn_force, "Replace an existing non-empty output directory");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "P/R/F1 on a split; FID and FPGR on synthesized records");
  std::string ev_det, ev_split = "test", ev_records, ev_metric = "all", ev_json;
  map_opt(ev, "--data", "data.dataset", "Dataset directory");
  ev->add_option("--detector", ev_det, "Detector checkpoint")->required();
  ev->add_option("--split", ev_split, "Evaluation split")->check(CLI::IsMember({"test", "val", "train", "all"}));
  ev->add_option("--records", ev_records, "Synthesized records directory (for fid/fpgr)");
  ev->add_option("--metric", ev_metric, "Metric")->check(CLI::IsMember({"all", "prf", "fid", "fpgr"}));
  ev->add_option("--json", ev_json, "Also write the report as JSON");

  // sweep-alpha
  auto* sw = app.add_subcommand("sweep-alpha", "Synthesize and score over a grid of step sizes");
  std::vector<std::string> sw_dens;
  std::string sw_det, sw_out, sw_split = "train";
  std::vector<double> sw_alphas = {0.001, 0.002, 0.003, 0.004, 0.005};
  bool sw_retrain = false;
  map_opt(sw, "--data", "data.dataset", "Dataset directory");
  sw->add_option("--denoiser", sw_dens, "Denoiser checkpoint (repeat for both folds)")->required();
  sw->add_option("--detector", sw_det, "Frozen detector checkpoint")->required();
  sw->add_option("--alphas", sw_alphas, "Step sizes")->delimiter(',');
  map_opt(sw, "--seed", "run.seed", "Synthesis seed");
  sw->add_option("--split", sw_split, "Images to augment")->check(CLI::IsMember({"train", "a", "b", "val", "test", "all"}));
  sw->add_flag("--retrain", sw_retrain, "Also retrain the detector per alpha and report test F1");
  sw->add_option("--out", sw_out, "CSV path (default <root>/sweep_alpha.csv)");

  // retrain
  auto* rt = app.add_subcommand("retrain", "Baseline vs detector retrained with synthesized negatives");
  std::string rt_records, rt_out;
  map_opt(rt, "--data", "data.dataset", "Dataset directory");
  rt->add_option("--records", rt_records, "Synthesized records directory")->required();
  map_opt(rt, "--seed", "run.seed", "Training seed");
  rt->add_option("--out", rt_out, "Output directory (default <root>/retrain)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto cfg = make_config(g, o);
    if (g.dump_config) {
      char* s = nullptr;
      check(dada_config_dump(cfg.get(), &s));
      std::cout << take_string(s);
      return 0;
    }
    const auto root = output_root(cfg);
    const auto seed = std::stoull(cfg_get(cfg, "run.seed"));
    auto* prog = g.quiet ? nullptr : progress;

    if (gen->parsed()) {
      Dataset ds;
      check(dada_dataset_generate(cfg.get(), gen_out.c_str(), gen_force, ds.out()));
      size_t n_train = 0, n_val = 0, n_test = 0;
      check(dada_dataset_count(ds.get(), "train", &n_train));
      check(dada_dataset_count(ds.get(), "val", &n_val));
      check(dada_dataset_count(ds.get(), "test", &n_test));
      std::printf("wrote %s: train %zu, val %zu, test %zu\n", gen_out.c_str(), n_train, n_val, n_test);
    } else if (tden->parsed()) {
      if (tden_iters_set && tden_iters < 1) usage_error("--iters must be >= 1");
      auto ds = open_data(cfg);
      const fs::path out = tden_out.empty() ? root / "checkpoints" / ("bgde_" + tden_fold + ".ckpt") : fs::path(tden_out);
      struct LossSink {
        std::vector<std::pair<int64_t, double>> losses;
        bool verbose;
      } sink{{}, !g.quiet};
      auto record = [](void* user, int64_t step, double loss) {
        auto* s = static_cast<LossSink*>(user);
        s->losses.emplace_back(step, loss);
        if (s->verbose && step % 100 == 0) std::fprintf(stderr, "iter %lld loss %.6f\n", (long long)step, loss);
      };
      Denoiser den;
      check(dada_denoiser_train(cfg.get(), ds.get(), tden_fold.c_str(), tden_iters,
                                tden_resume.empty() ? nullptr : tden_resume.c_str(), record, &sink, den.out()));
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      check(dada_denoiser_save(den.get(), out.string().c_str()));
      const fs::path log = tden_log.empty() ? fs::path(out.string() + ".loss") : fs::path(tden_log);
      std::ofstream lf(log, tden_resume.empty() ? std::ios::trunc : std::ios::app);
      lf << std::setprecision(9);
      for (const auto& [it, loss] : sink.losses) lf << it << ' ' << loss << '\n';
      std::printf("saved %s (fold %s, iteration %lld)\n", out.string().c_str(), dada_denoiser_fold(den.get()),
                  static_cast<long long>(dada_denoiser_iteration(den.get())));
    } else if (tdet->parsed()) {
      auto ds = open_data(cfg);
      Records extra;
      if (!tdet_extra.empty()) check(dada_records_load(tdet_extra.c_str(), extra.out()));
      const fs::path out = tdet_out.empty() ? root / "checkpoints" / "detector.ckpt" : fs::path(tdet_out);
      Detector det;
      check(dada_detector_train(cfg.get(), ds.get(), tdet_split.c_str(), extra.get(), seed, prog,
                                const_cast<char*>("epoch"), det.out()));
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      check(dada_detector_save(det.get(), out.string().c_str()));
      dada_eval val{};
      check(dada_evaluate(cfg.get(), det.get(), ds.get(), "val", &val));
      std::printf("saved %s\n", out.string().c_str());
      print_table({{"val", val}});
    } else if (syn->parsed()) {
      auto ds = open_data(cfg);
      auto dens = load_denoisers(syn_dens);
      auto det = load_detector(cfg, syn_det);
      std::vector<const dada_denoiser*> ptrs;
      for (auto& d : dens) ptrs.push_back(d.get());
      const fs::path out = syn_out.empty() ? root / "synth" : fs::path(syn_out);
      const bool replace = out_dir_occupied(out, syn_force);
      const double alpha = std::stod(cfg_get(cfg, "attack.alpha"));
      Records recs;
      check(dada_synthesize(cfg.get(), ds.get(), syn_split.c_str(), ptrs.data(), ptrs.size(), det.get(), alpha, seed,
                            syn_regions.empty() ? nullptr : syn_regions.c_str(), syn_same, recs.out()));
      report_failures(recs);
      if (replace) fs::remove_all(out);
      check(dada_records_save(recs.get(), out.string().c_str()));
      double fid = 0, fpgr = 0;
      check(dada_score_records(cfg.get(), det.get(), ds.get(), recs.get(), &fid, &fpgr));
      std::printf("synthesized %zu images (%zu skipped) into %s\nalpha %.4f  FPGR %.4f  FID %.4f\n",
                  dada_records_count(recs.get()), dada_records_failure_count(recs.get()), out.string().c_str(), alpha,
                  fpgr, fid);
    } else if (ev->parsed()) {
      auto ds = open_data(cfg);
      auto det = load_detector(cfg, ev_det);
      nlohmann::json report = nlohmann::json::object();
      if (ev_metric == "all" || ev_metric == "prf") {
        dada_eval e{};
        check(dada_evaluate(cfg.get(), det.get(), ds.get(), ev_split.c_str(), &e));
        print_table({{ev_split, e}});
        report["detection"] = eval_json(e);
      }
      if (ev_metric == "fid" || ev_metric == "fpgr" || (ev_metric == "all" && !ev_records.empty())) {
        if (ev_records.empty()) usage_error("--metric " + ev_metric + " needs --records");
        Records recs;
        check(dada_records_load(ev_records.c_str(), recs.out()));
        double fid = 0, fpgr = 0;
        check(dada_score_records(cfg.get(), det.get(), ds.get(), recs.get(), &fid, &fpgr));
        if (ev_metric != "fpgr") {
          std::printf("FID  %.6f\n", fid);
          report["fid"] = fid;
        }
        if (ev_metric != "fid") {
          std::printf("FPGR %.6f (%zu records)\n", fpgr, dada_records_count(recs.get()));
          report["fpgr"] = fpgr;
        }
      }
      if (!ev_json.empty()) std::ofstream(ev_json) << report.dump(2) << '\n';
    } else if (sw->parsed()) {
      if (sw_alphas.empty()) usage_error("--alphas must not be empty");
      auto ds = open_data(cfg);
      auto dens = load_denoisers(sw_dens);
      auto det = load_detector(cfg, sw_det);
      std::vector<const dada_denoiser*> ptrs;
      for (auto& d : dens) ptrs.push_back(d.get());
      std::ostringstream csv;
      csv << "alpha,fid,fpgr,f1\n";
      std::printf("%8s %10s %8s %8s\n", "alpha", "FID", "FPGR", "F1");
      for (double a : sw_alphas) {
        Records recs;
        check(dada_synthesize(cfg.get(), ds.get(), sw_split.c_str(), ptrs.data(), ptrs.size(), det.get(), a, seed,
                              nullptr, 0, recs.out()));
        report_failures(recs);
        double fid = 0, fpgr = 0;
        check(dada_score_records(cfg.get(), det.get(), ds.get(), recs.get(), &fid, &fpgr));
        std::optional<double> f1;
        if (sw_retrain) {
          Detector aug;
          check(dada_detector_train(cfg.get(), ds.get(), "train", recs.get(), seed, nullptr, nullptr, aug.out()));
          dada_eval e{};
          check(dada_evaluate(cfg.get(), aug.get(), ds.get(), "test", &e));
          f1 = e.f1;
        }
        csv << a << ',' << fid << ',' << fpgr << ',';
        if (f1) csv << *f1;
        csv << '\n';
        std::printf("%8.4f %10.4f %8.4f %8s\n", a, fid, fpgr, f1 ? std::to_string(*f1).c_str() : "-");
      }
      const fs::path out = sw_out.empty() ? root / "sweep_alpha.csv" : fs::path(sw_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream(out) << csv.str();
      std::printf("wrote %s\n", out.string().c_str());
    } else if (rt->parsed()) {
      auto ds = open_data(cfg);
      Records recs;
      check(dada_records_load(rt_records.c_str(), recs.out()));
      size_t n_train = 0;
      check(dada_dataset_count(ds.get(), "train", &n_train));
      Detector base, aug;
      check(dada_detector_train(cfg.get(), ds.get(), "train", nullptr, seed, nullptr, nullptr, base.out()));
      check(dada_detector_train(cfg.get(), ds.get(), "train", recs.get(), seed, nullptr, nullptr, aug.out()));
      dada_eval eb{}, ea{};
      check(dada_evaluate(cfg.get(), base.get(), ds.get(), "test", &eb));
      check(dada_evaluate(cfg.get(), aug.get(), ds.get(), "test", &ea));
      print_table({{"baseline", eb}, {"augmented", ea}});
      const fs::path out = rt_out.empty() ? root / "retrain" : fs::path(rt_out);
      fs::create_directories(out);
      check(dada_detector_save(base.get(), (out / "baseline.ckpt").string().c_str()));
      check(dada_detector_save(aug.get(), (out / "augmented.ckpt").string().c_str()));
      const nlohmann::json report = {{"baseline", eval_json(eb)},
                                     {"augmented", eval_json(ea)},
                                     {"original_size", n_train},
                                     {"augmented_size", n_train + dada_records_count(recs.get())},
                                     {"seed", seed}};
      std::ofstream(out / "report.json") << report.dump(2) << '\n';
    } else {
      std::cout << app.help();
    }
    return 0;
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.status == DADA_ERR_INTERNAL ? 1 : static_cast<int>(f.status);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
