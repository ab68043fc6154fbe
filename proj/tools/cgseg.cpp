// cgseg: train, run and evaluate the segmentation models from the command line.
//
// Exit codes: 0 ok, 1 failed check or unexpected error, 2 configuration
// error, 3 data error, 4 training diverged.

#include <cgseg/augment.hpp>
#include <cgseg/baselines.hpp>
#include <cgseg/config.hpp>
#include <cgseg/gradcheck_suite.hpp>
#include <cgseg/protocols.hpp>
#include <cgseg/thermal.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace cgseg;

namespace {

enum ExitCode { kOk = 0, kFailed = 1, kConfig = 2, kData = 3, kDiverged = 4 };

struct OutDir {
  fs::path root;

  explicit OutDir(fs::path p) : root(std::move(p)) {
    std::error_code ec;
    fs::create_directories(root / "reports", ec);
    if (ec) throw DataError("cannot create output directory " + root.string() + ": " + ec.message());
  }

  fs::path checkpoints() const {
    fs::create_directories(root / "checkpoints");
    return root / "checkpoints";
  }
  fs::path reports() const { return root / "reports"; }
  fs::path config() const { return root / "config.txt"; }
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

KeyValues read_config_or_empty(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return read_key_values(path);
}

std::vector<PairedSample> load_manifest(const std::string& path) {
  if (!fs::exists(path)) throw DataError("manifest not found: " + path);
  auto samples = load_samples(path);
  if (samples.empty()) throw DataError("manifest lists no samples: " + path);
  return samples;
}

std::string stem_of(const PairedSample& s, std::size_t index) {
  return s.id.empty() ? "image" + std::to_string(index) : s.id;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, validation, out;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = RunConfig::from_key_values(read_config_or_empty(a.config));
  auto data = load_manifest(a.data);
  std::vector<PairedSample> validation;
  if (!a.validation.empty()) validation = load_manifest(a.validation);

  OutDir out(a.out);
  write_key_values(out.config(), cfg.to_key_values());
  GanModel<float> model(cfg.gan, cfg.train.seed);
  TrainResult r;
  if (a.validation.empty()) {
    r = train(model, data, cfg.train);
  } else {
    r = train(model, data, validation, cfg.train);
  }
  const fs::path ck = out.checkpoints();
  char name[64];
  for (const auto& c : r.checkpoints) {
    std::snprintf(name, sizeof name, "epoch_%05zu.ckpt", c.epoch);
    save_checkpoint(ck / name, c);
  }
  save_checkpoint(ck / "best.ckpt", r.best);
  {
    auto m = open_out(out.root / "metrics.csv");
    write_metrics_csv(m, r.metrics);
  }
  auto s = open_out(out.reports() / "summary.txt");
  s << "best_epoch=" << r.best.epoch << "\n"
    << "best_val_l1=" << format_number(r.best.val_l1) << "\n"
    << "initial_val_l1=" << format_number(r.initial_val_l1) << "\n";
  std::printf("trained %zu epochs; best epoch %zu, validation L1 %.6f\n", cfg.train.epochs, r.best.epoch, r.best.val_l1);
  return kOk;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint, input, data, out, occlusion_mask, overlay = "opaque";
  bool latent = false;
};

int cmd_infer(const InferArgs& a) {
  if (a.input.empty() == a.data.empty()) throw ConfigError("give exactly one of --input or --data");
  if (!fs::exists(a.checkpoint)) throw DataError("checkpoint not found: " + a.checkpoint);
  if (a.overlay != "opaque" && a.overlay != "transparency") throw ConfigError("--overlay must be opaque or transparency");
  const GanModel<float> model = restore<float>(load_checkpoint(a.checkpoint));

  std::vector<PairedSample> items;
  if (!a.input.empty()) {
    if (!fs::exists(a.input)) throw DataError("input image not found: " + a.input);
    items.push_back({read_pnm(a.input), {}, fs::path(a.input).stem().string()});
  } else {
    items = load_manifest(a.data);
  }
  OutDir out(a.out);
  KeyValues echo{{"checkpoint", a.checkpoint}, {"overlay", a.overlay}, {"latent", a.latent ? "true" : "false"}};
  write_key_values(out.config(), echo);
  const fs::path dir = out.reports();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string stem = stem_of(items[i], i);
    const Image generated = infer(model, items[i].input);
    write_pnm(dir / (stem + (generated.channels == 3 ? "_generated.ppm" : "_generated.pgm")), generated);
    write_mask(dir / (stem + "_mask.pgm"), binarize(to_gray(generated), 127.5));
    if (!a.occlusion_mask.empty()) {
      const Mask occ = read_mask(a.occlusion_mask);
      const Image& in = items[i].input;
      Image full = resize(generated, in.width, in.height);
      if (full.channels != in.channels) throw DataError("generated and input channel counts differ");
      const Image comp = overlay_reconstruction(in, full, occ, a.overlay == "opaque" ? OverlayMode::opaque : OverlayMode::transparency);
      write_pnm(dir / (stem + (comp.channels == 3 ? "_overlay.ppm" : "_overlay.pgm")), comp);
    }
    if (a.latent) dump_latent_activations(model, items[i].input, dir / (stem + "_latent"));
  }
  std::printf("wrote %zu result(s) to %s\n", items.size(), dir.string().c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string config, data, out, checkpoint, pred, train;
};

int cmd_eval(const EvalArgs& a) {
  const EvalConfig cfg = EvalConfig::from_key_values(read_config_or_empty(a.config));
  const auto data = load_manifest(a.data);
  std::optional<GanModel<float>> model;
  SimpleNet net;
  switch (cfg.method) {
    case EvalMethod::cgan:
      if (a.checkpoint.empty()) throw ConfigError("method cgan needs --checkpoint");
      if (!fs::exists(a.checkpoint)) throw DataError("checkpoint not found: " + a.checkpoint);
      model.emplace(restore<float>(load_checkpoint(a.checkpoint)));
      break;
    case EvalMethod::files:
      if (a.pred.empty()) throw ConfigError("method files needs --pred");
      break;
    case EvalMethod::simplenet: {
      if (a.train.empty()) throw ConfigError("method simplenet needs --train");
      std::vector<WindowSample> samples;
      for (const auto& s : load_manifest(a.train)) {
        const Image gray = to_gray(s.input);
        const Mask gt = binarize(to_gray(s.target), 127);
        const Rect box = bounding_box(gt, static_cast<long>(cfg.bbox_margin));
        if (box.empty()) continue;
        auto w = window_samples(gray, gt, box, cfg.simplenet_window);
        samples.insert(samples.end(), w.begin(), w.end());
      }
      if (samples.empty()) throw DataError("simplenet training set has no foreground");
      net = simple_net_train(samples, {cfg.simplenet_epochs, cfg.simplenet_lr, cfg.seed});
      break;
    }
    default: break;
  }

  std::vector<std::pair<std::string, std::pair<Mask, Mask>>> items;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    const std::string id = stem_of(s, i);
    const Mask gt = binarize(to_gray(s.target), 127);
    const Image gray = to_gray(s.input);
    Mask pred;
    switch (cfg.method) {
      case EvalMethod::cgan: {
        Mask small = predict_mask(*model, s.input);
        Image up = resize(mask_to_image(small), gt.width, gt.height);
        pred = binarize(up, 127);
        break;
      }
      case EvalMethod::isodata: pred = apply_threshold(gray, isodata_threshold(gray)); break;
      case EvalMethod::manual: pred = apply_threshold(gray, cfg.threshold); break;
      case EvalMethod::simplenet: {
        const Rect box = bounding_box(gt, static_cast<long>(cfg.bbox_margin));
        pred = box.empty() ? Mask(gt.width, gt.height) : simple_net_infer(net, gray, box);
        break;
      }
      case EvalMethod::files: {
        const fs::path p = fs::path(a.pred) / (id + ".pgm");
        if (!fs::exists(p)) throw DataError("missing prediction " + p.string());
        pred = read_mask(p);
        break;
      }
    }
    items.push_back({id, {std::move(pred), gt}});
  }
  const auto reports = evaluate_masks(items, cfg.xor_denominator);
  OutDir out(a.out);
  write_key_values(out.config(), cfg.to_key_values());
  auto csv = open_out(out.reports() / "eval.csv");
  write_eval_csv(csv, reports);
  for (const auto& r : reports) std::printf("%s mean %.4f\n", metric_label(r).c_str(), r.aggregate());
  return kOk;
}

// ---------------------------------------------------------------------------

struct AugmentArgs {
  std::string config, out, templ, data;
  std::vector<std::string> backgrounds, reference;
};

int cmd_augment(const AugmentArgs& a) {
  const AugmentConfig cfg = AugmentConfig::from_key_values(read_config_or_empty(a.config));
  std::vector<PairedSample> samples;
  std::vector<Mask> occlusion_masks;
  switch (cfg.mode) {
    case AugmentMode::segmentation: samples = make_segmentation_set(cfg.segmentation); break;
    case AugmentMode::superimpose: {
      if (a.templ.empty() || a.backgrounds.empty()) throw ConfigError("superimpose needs --template and --background");
      if (!fs::exists(a.templ)) throw DataError("template not found: " + a.templ);
      const SyntheticTarget target = make_synthetic_target(read_pnm(a.templ), fs::path(a.templ).stem().string());
      std::vector<Image> refs;
      for (const auto& r : a.reference) {
        if (!fs::exists(r)) throw DataError("reference frame not found: " + r);
        refs.push_back(read_pnm(r));
      }
      std::mt19937_64 rng(cfg.segmentation.seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (std::size_t i = 0; i < a.backgrounds.size(); ++i) {
        if (!fs::exists(a.backgrounds[i])) throw DataError("background not found: " + a.backgrounds[i]);
        const Image bg = read_pnm(a.backgrounds[i]);
        const double bw = static_cast<double>(bg.width), bh = static_cast<double>(bg.height);
        const double tcx = (static_cast<double>(target.templ.width) - 1) / 2, tcy = (static_cast<double>(target.templ.height) - 1) / 2;
        // Centre the template on the background, then apply the motion.
        const AffineTransform place = AffineTransform::translation((bw - 1) / 2 - tcx, (bh - 1) / 2 - tcy);
        AffineTransform motion;
        if (refs.size() >= 2) {
          const auto reg = estimate_affine(refs.front(), refs[i % refs.size()]);
          if (!reg.reliable) std::fprintf(stderr, "warning: registration of reference %zu is unreliable\n", i % refs.size());
          const double sx = bw / static_cast<double>(refs.front().width), sy = bh / static_cast<double>(refs.front().height);
          motion = AffineTransform::similarity(reg.rotation_deg, reg.scale, reg.shift_x * sx, reg.shift_y * sy, (bw - 1) / 2,
                                               (bh - 1) / 2);
        } else {
          const double ang = (2 * unit(rng) - 1) * cfg.max_rotation_deg;
          const double sc = cfg.min_scale + (cfg.max_scale - cfg.min_scale) * unit(rng);
          const double dx = (2 * unit(rng) - 1) * cfg.max_shift_fraction * bw;
          const double dy = (2 * unit(rng) - 1) * cfg.max_shift_fraction * bh;
          motion = AffineTransform::similarity(ang, sc, dx, dy, (bw - 1) / 2, (bh - 1) / 2);
        }
        char id[32];
        std::snprintf(id, sizeof id, "sample%04zu", i);
        samples.push_back(superimpose(target, motion.compose(place), bg, id));
      }
      break;
    }
    case AugmentMode::occlusion: {
      if (a.data.empty()) throw ConfigError("occlusion needs --data");
      const auto originals = load_manifest(a.data);
      for (std::size_t i = 0; i < originals.size(); ++i) {
        const auto occ = synthesize_occlusion(originals[i].input, cfg.occluder, cfg.segmentation.seed + i);
        samples.push_back({occ.image, originals[i].input, stem_of(originals[i], i)});
        occlusion_masks.push_back(occ.mask);
      }
      break;
    }
  }
  OutDir out(a.out);
  write_key_values(out.config(), cfg.to_key_values());
  const auto rows = save_samples(out.root / "data", samples);
  for (std::size_t i = 0; i < occlusion_masks.size(); ++i)
    write_mask(out.root / "data" / (samples[i].id + "_occlusion.pgm"), occlusion_masks[i]);
  std::printf("wrote %zu pair(s) to %s\n", rows.size(), (out.root / "data").string().c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct IncrementalArgs {
  std::string plan, out;
};

int cmd_incremental(const IncrementalArgs& a) {
  if (!fs::exists(a.plan)) throw ConfigError("plan file not found: " + a.plan);
  const StagePlan plan = StagePlan::from_key_values(read_key_values(a.plan));
  if (plan.manifest.empty() || plan.test_manifest.empty()) throw ConfigError("plan needs manifest and test_manifest");
  const fs::path base = fs::path(a.plan).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  const auto data = load_manifest(resolve(plan.manifest).string());
  const auto test = load_manifest(resolve(plan.test_manifest).string());

  OutDir out(a.out);
  write_key_values(out.config(), plan.to_key_values());
  const fs::path ck = out.checkpoints();
  std::vector<StageReport> reports;
  auto metrics = open_out(out.root / "metrics.csv");
  metrics << "stage,epoch,d_loss,g_loss,val_l1\n";
  auto log_stage = [&](const StageOutcome& o) {
    const std::string tag = o.report.stage == 0 ? "scratch" : "stage_" + std::to_string(o.report.stage);
    save_checkpoint(ck / (tag + "_best.ckpt"), o.training.best);
    char buf[200];
    for (const auto& m : o.training.metrics) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%.9g,%.9g,%.9g\n", tag.c_str(), m.epoch, m.d_loss, m.g_loss, m.val_l1);
      metrics << buf;
    }
    std::printf("%s: best validation L1 %.6f at epoch %zu, test XOR %.3f%%\n", tag.c_str(), o.report.best_val_l1,
                o.report.best_epoch, o.report.test_xor_error);
    reports.push_back(o.report);
  };
  run_incremental(plan, data, test, log_stage);
  if (plan.scratch_epochs > 0) {
    log_stage(run_scratch(plan, plan.scratch_epochs, data, test));
    const std::vector<StageReport> stages(reports.begin(), reports.end() - 1);
    auto cmp = open_out(out.reports() / "comparison.csv");
    write_comparison_csv(cmp, compare(stages, reports.back()));
  }
  {
    auto s = open_out(out.reports() / "stages.csv");
    write_stage_csv(s, reports);
  }
  auto t = open_out(out.reports() / "timing.csv");
  write_timing_csv(t, reports);
  return kOk;
}

// ---------------------------------------------------------------------------

struct ThermalArgs {
  std::string config, out;
  std::vector<std::string> frames;
};

int cmd_thermal(const ThermalArgs& a) {
  const ThermalConfig cfg = ThermalConfig::from_key_values(read_config_or_empty(a.config));
  std::vector<fs::path> paths;
  for (const auto& f : a.frames) {
    if (!fs::exists(f)) throw DataError("frame not found: " + f);
    paths.emplace_back(f);
  }
  ThermalSeries series;
  try {
    series = build_series(paths, cfg.interval, cfg.tau, cfg.band_rule);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  OutDir out(a.out);
  write_key_values(out.config(), cfg.to_key_values());
  {
    auto s = open_out(out.reports() / "series.csv");
    write_series_csv(s, series);
  }
  if (series.frames.size() < cfg.alarm.window) throw DataError("fewer frames than the alarm window");
  const auto alarm = predict_flashover(series, cfg.alarm);
  auto r = open_out(out.reports() / "alarm.txt");
  write_alarm_report(r, alarm, cfg.alarm);
  if (alarm) {
    std::printf("alarm at t=%.3f s (frame %zu, slope %.3f px/s)\n", alarm->t, alarm->frame, alarm->slope);
  } else {
    std::printf("no alarm\n");
  }
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck() {
  bool ok = true;
  for (const auto& c : run_gradcheck_suite()) {
    std::printf("%-40s %-4s max_rel_err=%.3e over %zu coords\n", c.name.c_str(), c.passed() ? "ok" : "FAIL",
                c.result.max_relative_error, c.result.checked);
    ok = ok && c.passed();
  }
  return ok ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional GAN segmentation toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a generator/discriminator pair");
  train_cmd->add_option("--config", train_args.config, "key=value config file");
  train_cmd->add_option("--data", train_args.data, "training manifest")->required();
  train_cmd->add_option("--validation", train_args.validation, "validation manifest (default: split from --data)");
  train_cmd->add_option("--out", train_args.out, "output directory")->required();

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "run a trained generator");
  infer_cmd->add_option("--checkpoint", infer_args.checkpoint)->required();
  infer_cmd->add_option("--input", infer_args.input, "single PGM/PPM image");
  infer_cmd->add_option("--data", infer_args.data, "manifest of inputs");
  infer_cmd->add_option("--out", infer_args.out)->required();
  infer_cmd->add_option("--occlusion-mask", infer_args.occlusion_mask, "composite the output into the input under this mask");
  infer_cmd->add_option("--overlay", infer_args.overlay, "opaque|transparency");
  infer_cmd->add_flag("--latent", infer_args.latent, "dump per-layer activation grids");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "score masks against ground truth");
  eval_cmd->add_option("--config", eval_args.config);
  eval_cmd->add_option("--data", eval_args.data, "ground-truth manifest")->required();
  eval_cmd->add_option("--out", eval_args.out)->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model for method=cgan");
  eval_cmd->add_option("--pred", eval_args.pred, "directory of <id>.pgm masks for method=files");
  eval_cmd->add_option("--train", eval_args.train, "training manifest for method=simplenet");

  AugmentArgs aug_args;
  auto* aug_cmd = app.add_subcommand("augment", "generate synthetic paired data");
  aug_cmd->add_option("--config", aug_args.config);
  aug_cmd->add_option("--out", aug_args.out)->required();
  aug_cmd->add_option("--template", aug_args.templ, "target template for mode=superimpose");
  aug_cmd->add_option("--background", aug_args.backgrounds, "background frames for mode=superimpose");
  aug_cmd->add_option("--reference", aug_args.reference, "reference frames whose motion is copied");
  aug_cmd->add_option("--data", aug_args.data, "manifest of clean images for mode=occlusion");

  IncrementalArgs inc_args;
  auto* inc_cmd = app.add_subcommand("incremental", "staged retraining and its single-run comparison");
  inc_cmd->add_option("--plan", inc_args.plan)->required();
  inc_cmd->add_option("--out", inc_args.out)->required();

  ThermalArgs th_args;
  auto* th_cmd = app.add_subcommand("thermal", "band counts and flashover alarm over a frame sequence");
  th_cmd->add_option("--config", th_args.config);
  th_cmd->add_option("--frames", th_args.frames, "RGB frames in time order")->required();
  th_cmd->add_option("--out", th_args.out)->required();

  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*infer_cmd) return cmd_infer(infer_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*aug_cmd) return cmd_augment(aug_args);
    if (*inc_cmd) return cmd_incremental(inc_args);
    if (*th_cmd) return cmd_thermal(th_args);
    if (*gc_cmd) return cmd_gradcheck();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kDiverged;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailed;
  }
  return kFailed;
}
