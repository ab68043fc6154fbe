// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <cgseg/augment.hpp>
#include <cgseg/baselines.hpp>
#include <cgseg/gradcheck_suite.hpp>
#include <cgseg/protocols.hpp>
#include <cgseg/thermal.hpp>

#include "../test_support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace cgseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor<double> random_tensor(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor<double> t(s);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = run_gradcheck_suite();
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string failed;
  bool generator_chain = false;
  for (const auto& c : cases) {
    worst = std::max(worst, c.result.max_relative_error);
    if (!c.passed()) failed += " " + c.name;
    generator_chain = generator_chain || c.name.rfind("generator/", 0) == 0;
  }
  const bool pass = failed.empty() && generator_chain && secs < 60.0;
  return {pass, fmt("%zu cases, worst relative error %.2e, %.2f s%s", cases.size(), worst, secs,
                    failed.empty() ? "" : (" failed:" + failed).c_str())};
}

Outcome adjoint_identity() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> ch(1, 4), ks(1, 4), st(1, 3), sz(1, 6);
  int checked = 0;
  double worst = 0;
  while (checked < 50) {
    const std::size_t k = ks(rng), s = st(rng), p = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    const std::size_t oh = sz(rng), ow = sz(rng);
    if ((oh - 1) * s + k <= 2 * p || (ow - 1) * s + k <= 2 * p) continue;
    const std::size_t h = (oh - 1) * s + k - 2 * p, w = (ow - 1) * s + k - 2 * p;
    const std::size_t n = 1 + checked % 2, c = ch(rng), o = ch(rng);
    auto x = random_tensor({n, c, h, w}, rng);
    auto kern = random_tensor({o, c, k, k}, rng);
    auto y = random_tensor({n, o, oh, ow}, rng);
    const double lhs = oracle::dot(conv2d(x, kern, s, p).data(), y.data());
    const double rhs = oracle::dot(x.data(), deconv2d(y, kern, s, p).data());
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    ++checked;
  }
  return {worst < 1e-4, fmt("50 shape triples, worst relative gap %.2e", worst)};
}

Outcome equilibrium_value() {
  GanModel<float> m(GanConfig{}, 4);
  auto& out = m.discriminator.layers().back();
  for (auto& w : out.weight.data()) w = 0;
  for (auto& b : out.bias.data()) b = 0;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor<float> x(Shape{1, 1, 32, 32}), y(Shape{1, 1, 32, 32});
  for (auto& v : x.data()) v = u(rng);
  for (auto& v : y.data()) v = u(rng);
  NoiseSource z(0, NoiseMode::none);
  const auto terms = objective_terms(m, x, y, z, 100.0, GeneratorLossForm::non_saturating, NormMode::train);
  const double want = 2.0 * std::log(0.5);
  return {std::abs(terms.value - want) < 1e-6, fmt("value %.9f vs %.9f", terms.value, want)};
}

Outcome isodata_oracle() {
  std::mt19937_64 rng(4);
  double worst_fixed = 0, worst_hand = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto values = oracle::bimodal_values(rng);
    Histogram h;
    for (int v : values) ++h.bins[static_cast<std::size_t>(v)];
    const double t = isodata_threshold(h);
    worst_fixed = std::max(worst_fixed, std::abs(oracle::inter_means(values, t) - t));
    worst_hand = std::max(worst_hand, std::abs(t - oracle::hand_isodata(values)));
  }
  Image tiny(6, 1);
  tiny.pixels = {0, 0, 0, 10, 10, 10};
  const double t5 = isodata_threshold(tiny);
  const bool pass = worst_fixed < 0.5 && worst_hand < 1e-6 && t5 == 5.0;
  return {pass, fmt("max |dT| %.3f, max gap to hand iteration %.1e, {0,0,0,10,10,10} -> %g", worst_fixed, worst_hand, t5)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> dim(1, 48);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  std::size_t mismatches = 0, identity_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t w = dim(rng), h = dim(rng);
    Mask a = oracle::random_mask(w, h, p(rng), rng), b = oracle::random_mask(w, h, p(rng), rng);
    a.bits[0] = 1;
    b.bits[0] = 1;
    const double n = static_cast<double>(w * h), diff = static_cast<double>(oracle::xor_count(a, b));
    double fg = 0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) fg += b.at(x, y) != 0;
    mismatches += xor_error(a, b, XorDenominator::total_pixels) != 100.0 * diff / n;
    mismatches += xor_error(a, b, XorDenominator::gt_foreground) != 100.0 * diff / fg;
    mismatches += accuracy(a, b) != 100.0 * (n - diff) / n;
    identity_failures += xor_error(a, b, XorDenominator::total_pixels) != xor_error(b, a, XorDenominator::total_pixels);
    identity_failures += accuracy(a, b) != accuracy(b, a);
    identity_failures += std::abs(accuracy(complement(a), b) - (100.0 - accuracy(a, b))) > 1e-9;
    identity_failures += std::abs(xor_error(complement(a), b, XorDenominator::total_pixels) -
                                  (100.0 - xor_error(a, b, XorDenominator::total_pixels))) > 1e-9;
  }
  return {mismatches == 0 && identity_failures == 0,
          fmt("100 pairs, %zu oracle mismatches, %zu identity failures", mismatches, identity_failures)};
}

// ---------------------------------------------------------------------------

struct SplitSet {
  std::vector<PairedSample> train, test;
};

SplitSet segmentation_split(std::size_t count, std::size_t n_train, std::uint64_t seed, BackgroundKind bg) {
  SegmentationSetOptions o;
  o.count = count;
  o.seed = seed;
  o.background = bg;
  const auto all = make_segmentation_set(o);
  return {{all.begin(), all.begin() + static_cast<long>(n_train)}, {all.begin() + static_cast<long>(n_train), all.end()}};
}

TrainConfig desk_training(std::size_t epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.checkpoint_every = 1000;
  return tc;
}

Outcome toy_segmentation() {
  const auto set = segmentation_split(48, 32, 11, BackgroundKind::noise);
  const std::size_t epochs = 62;  // 62 x 32 = 1984 single-image iterations
  const auto t0 = std::chrono::steady_clock::now();
  GanModel<float> m(GanConfig{}, 1);
  const auto r = train(m, set.train, {}, desk_training(epochs));
  const double xor_err = mean_test_xor(m, set.test, XorDenominator::gt_foreground);
  const double secs = seconds_since(t0);

  GanModel<float> again(GanConfig{}, 1);
  const auto r2 = train(again, set.train, {}, desk_training(epochs));
  std::ostringstream c1, c2;
  write_metrics_csv(c1, r.metrics);
  write_metrics_csv(c2, r2.metrics);
  const bool identical = c1.str() == c2.str() && encode_checkpoint(capture(m, 0)) == encode_checkpoint(capture(again, 0));
  const std::size_t iterations = epochs * set.train.size();
  const bool pass = iterations <= 2000 && xor_err < 20.0 && secs < 600.0 && identical;
  return {pass, fmt("%zu iterations, held-out XOR %.2f%% (gt_foreground), %.1f s, rerun %s", iterations, xor_err, secs,
                    identical ? "bit-identical" : "DIFFERS")};
}

Outcome baseline_ordering() {
  const auto set = segmentation_split(48, 32, 23, BackgroundKind::gradient);
  std::vector<WindowSample> windows;
  for (const auto& s : set.train) {
    const Mask gt = target_mask(s);
    const auto w = window_samples(s.input, gt, bounding_box(gt, 3));
    windows.insert(windows.end(), w.begin(), w.end());
  }
  const SimpleNet net = simple_net_train(windows);
  GanModel<float> m(GanConfig{}, 1);
  train(m, set.train, {}, desk_training(62));

  double iso = 0, sn = 0, bands = 0;
  for (const auto& s : set.test) {
    const Mask gt = target_mask(s);
    const Mask iso_mask = apply_threshold(s.input, isodata_threshold(s.input));
    iso += xor_error(iso_mask, gt);
    sn += xor_error(simple_net_infer(net, s.input, bounding_box(gt, 3)), gt);
    // Background pixels IsoData calls foreground: the bright end of the gradient.
    std::size_t fp = 0;
    for (std::size_t i = 0; i < gt.bits.size(); ++i) fp += iso_mask.bits[i] && !gt.bits[i];
    bands += static_cast<double>(fp) > 0.5 * static_cast<double>(gt.foreground());
  }
  const double n = static_cast<double>(set.test.size());
  iso /= n;
  sn /= n;
  const double cgan = mean_test_xor(m, set.test, XorDenominator::gt_foreground);
  const bool pass = cgan + 1.0 <= sn && sn + 1.0 <= iso;
  return {pass, fmt("XOR cGAN %.2f%% < SimpleNet %.2f%% < IsoData %.2f%%; IsoData floods the gradient band in %.0f/%.0f images",
                    cgan, sn, iso, bands, n)};
}

Outcome augmentation_trend() {
  SegmentationSetOptions o;
  o.count = 74;
  o.seed = 31;
  o.background = BackgroundKind::gradient;
  const auto all = make_segmentation_set(o);
  const std::vector<PairedSample> test(all.begin() + 50, all.end());
  std::vector<double> acc;
  for (std::size_t n : {10u, 30u, 50u}) {
    const std::vector<PairedSample> tr(all.begin(), all.begin() + static_cast<long>(n));
    GanModel<float> m(GanConfig{}, 1);
    train(m, tr, {}, desk_training(40));
    double a = 0;
    for (const auto& s : test) a += accuracy(predict_mask(m, s.input), target_mask(s));
    acc.push_back(a / static_cast<double>(test.size()));
  }
  const bool ordered = acc[1] >= acc[0] - 0.5 && acc[2] >= acc[1] - 0.5;
  const bool pass = ordered && acc[2] - acc[0] >= 1.0;
  return {pass, fmt("test accuracy %.2f%% / %.2f%% / %.2f%% at 10/30/50 images, gain %.2f points", acc[0], acc[1], acc[2],
                    acc[2] - acc[0])};
}

Outcome incremental_protocol() {
  const auto set = segmentation_split(32, 16, 41, BackgroundKind::noise);
  StagePlan plan;
  plan.sizes = {4, 8, 16};
  plan.epochs_per_stage = 50;
  plan.seed = 1;
  plan.run.train.checkpoint_every = 1000;
  const auto stages = run_incremental(plan, set.train, set.test);
  const auto scratch = run_scratch(plan, 375, set.train, set.test);
  bool handoff = true;
  for (std::size_t k = 1; k < stages.size(); ++k)
    handoff = handoff && stages[k].report.initial_val_l1 == stages[k - 1].report.best_val_l1;
  std::vector<StageReport> reports;
  for (const auto& s : stages) reports.push_back(s.report);
  const Comparison c = compare(reports, scratch.report);
  const bool pass = c.incremental_xor <= c.scratch_xor + 1.0 && c.epoch_ratio() == 0.4 && handoff;
  return {pass, fmt("stage XOR %.2f -> %.2f -> %.2f%%, scratch %.2f%%, epoch ratio %g, hand-off %s",
                    reports[0].test_xor_error, reports[1].test_xor_error, reports[2].test_xor_error, c.scratch_xor,
                    c.epoch_ratio(), handoff ? "exact" : "BROKEN")};
}

// ---------------------------------------------------------------------------

Outcome occlusion_round_trip() {
  SegmentationSetOptions o;
  o.count = 10;
  o.seed = 6;
  const auto set = make_segmentation_set(o);
  std::size_t trials = 0, bad = 0;
  for (const auto& s : set)
    for (auto shape : {OccluderShape::ellipse, OccluderShape::polygon})
      for (auto fill : {OccluderFill::uniform, OccluderFill::noise}) {
        OccluderSpec spec;
        spec.shape = shape;
        spec.fill = fill;
        spec.fill_value = 255;
        const auto occ = synthesize_occlusion(s.input, spec, 100 + trials);
        const Image back = overlay_reconstruction(occ.image, s.input, occ.mask);
        for (std::size_t i = 0; i < occ.mask.bits.size(); ++i) bad += !occ.mask.bits[i] && back.pixels[i] != s.input.pixels[i];
        bad += back != s.input;
        ++trials;
      }
  return {bad == 0, fmt("%zu occlusions, %zu pixels differ from the original", trials, bad)};
}

ThermalSeries hot_series(const std::vector<double>& hot) {
  ThermalSeries s{{}, 1.0};
  for (std::size_t k = 0; k < hot.size(); ++k) {
    BandCounts b;
    b.t = static_cast<double>(k);
    b.red = b.green = static_cast<std::size_t>(hot[k]);
    b.yellow = static_cast<double>(b.red);
    s.frames.push_back(b);
  }
  return s;
}

Outcome thermal_checks() {
  // 10 red, 6 green, 3 yellow and 2 white pixels; the gray ones sit below tau.
  Image f(8, 8, 3);
  std::size_t i = 0;
  auto paint = [&](std::size_t n, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      f.pixels[3 * i] = r;
      f.pixels[3 * i + 1] = g;
      f.pixels[3 * i + 2] = b;
    }
  };
  paint(10, 255, 0, 0);
  paint(6, 0, 200, 0);
  paint(3, 250, 250, 10);
  paint(2, 255, 255, 255);
  paint(4, 127, 127, 127);
  const BandCounts b = count_bands(f);
  bool hand = b.red == 15 && b.green == 11 && b.blue == 2 && b.yellow == 13.0 &&
              count_bands(Image(4, 4, 3)) == BandCounts{};
  const BandCounts w = count_bands(Image(6, 5, 3, 255));
  hand = hand && w.red == 30 && w.green == 30 && w.blue == 30 && w.yellow == 30.0;

  // Flat until frame 9, then 50 more hot pixels per frame up to the peak at frame 19.
  std::vector<Image> frames;
  for (int k = 0; k < 20; ++k) {
    Image fr(32, 32, 3);
    const std::size_t hot = 100 + 25 * static_cast<std::size_t>(std::max(0, k - 9));  // yellow pixels count twice
    for (std::size_t p = 0; p < hot; ++p) fr.pixels[3 * p] = fr.pixels[3 * p + 1] = 255;
    frames.push_back(fr);
  }
  const auto ramp = build_series(frames, 1.0);
  const auto alarm = predict_flashover(ramp, {3, 25.0, 1});
  const long lead = alarm ? 19 - static_cast<long>(alarm->frame) : -1;
  const bool ramp_ok = alarm && alarm->frame >= 10 && alarm->frame <= 12 && lead >= 2;

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> step(-20, 60);
  std::size_t property_failures = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> hot{100}, doubled;
    for (int k = 1; k < 25; ++k) hot.push_back(std::max(0.0, std::round(hot.back() + step(rng))));
    for (double v : hot) doubled.push_back(2 * v);
    const auto s = hot_series(hot), s2 = hot_series(doubled);
    std::optional<std::size_t> previous;
    bool fired = true;
    for (double thr = 5; thr <= 80; thr += 5) {
      const auto a = predict_flashover(s, {3, thr, 1});
      if (!fired && a) ++property_failures;
      if (fired && a && previous && a->frame < *previous) ++property_failures;
      if (!a) fired = false;
      if (a) previous = a->frame;
      const auto d = predict_flashover(s2, {3, 2 * thr, 1});
      if (a.has_value() != d.has_value() || (a && a->frame != d->frame)) ++property_failures;
    }
  }
  const bool pass = hand && ramp_ok && property_failures == 0;
  return {pass, fmt("hand counts %s, ramp alarm at frame %ld (lead %ld frames), %zu property failures over 50 series",
                    hand ? "exact" : "WRONG", alarm ? static_cast<long>(alarm->frame) : -1L, lead, property_failures)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CGSEG_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome io_round_trips() {
  std::mt19937_64 rng(8);
  bool pnm = true;
  for (std::size_t ch : {1u, 3u}) {
    Image im(37, 23, ch);
    for (auto& p : im.pixels) p = static_cast<std::uint8_t>(rng());
    const auto bytes = encode_pnm(im);
    pnm = pnm && decode_pnm(bytes) == im && encode_pnm(decode_pnm(bytes)) == bytes;
  }

  GanModel<float> m(GanConfig{}, 9);
  const auto set = segmentation_split(4, 4, 9, BackgroundKind::noise);
  train(m, set.train, {}, desk_training(1));
  const Checkpoint c = capture(m, 0.5);
  const auto bytes = encode_checkpoint(c);
  const GanModel<float> back = restore<float>(decode_checkpoint(bytes));
  bool ckpt = encode_checkpoint(decode_checkpoint(bytes)) == bytes;
  for (const auto& s : set.train) ckpt = ckpt && infer(back, s.input) == infer(m, s.input);

  const fs::path work = fs::temp_directory_path() / "cgseg_acceptance_cli";
  fs::remove_all(work);
  fs::create_directories(work);
  std::ofstream(work / "aug.cfg") << "count=8\nsize=16\nseed=4\n";
  std::ofstream(work / "run.cfg") << "depth=3\nbase_channels=4\ninput_size=16\ndisc_depth=2\ndisc_base_channels=4\n"
                                     "epochs=3\nseed=2\n";
  bool cli = true;
  for (int k = 0; k < 2; ++k) {
    const fs::path out = work / std::to_string(k);
    cli = cli && run_cli("augment --config " + (work / "aug.cfg").string() + " --out " + out.string()) == 0;
    cli = cli && run_cli("train --config " + (work / "run.cfg").string() + " --data " +
                         (out / "data" / "manifest.csv").string() + " --out " + (out / "run").string()) == 0;
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(work / "0")) {
    if (!e.is_regular_file()) continue;
    const auto rel = e.path().lexically_relative(work / "0");
    ++files;
    differing += slurp(e.path()) != slurp(work / "1" / rel);
  }
  cli = cli && files > 0;
  cli = cli && differing == 0;
  fs::remove_all(work);
  return {pnm && ckpt && cli, fmt("PNM %s, checkpoint %s, CLI reruns %s (%zu of %zu files differ)", pnm ? "bit-identical" : "DIFFER",
                                  ckpt ? "bit-identical" : "DIFFERS", cli ? "byte-identical" : "DIFFER", differing, files)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*check)();
  };
  const Criterion criteria[] = {
      {1, "gradient integrity", gradient_integrity},
      {2, "conv/deconv adjoint identity", adjoint_identity},
      {3, "equilibrium value", equilibrium_value},
      {4, "IsoData oracle", isodata_oracle},
      {5, "metric oracles", metric_oracles},
      {6, "toy cGAN segmentation", toy_segmentation},
      {7, "baseline ordering", baseline_ordering},
      {8, "augmentation trend", augmentation_trend},
      {9, "incremental protocol", incremental_protocol},
      {10, "occlusion round-trip", occlusion_round_trip},
      {11, "thermal", thermal_checks},
      {12, "I/O round-trips", io_round_trips},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %-4s %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
