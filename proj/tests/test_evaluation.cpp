#include <cgseg/augment.hpp>
#include <cgseg/baselines.hpp>
#include <cgseg/metrics.hpp>

#include <gtest/gtest.h>

#include <chrono>

#include "test_support.hpp"

using namespace cgseg;

namespace {

Image gray_of(const std::vector<int>& values, std::size_t w) {
  Image im(w, values.size() / w);
  for (std::size_t i = 0; i < values.size(); ++i) im.pixels[i] = static_cast<std::uint8_t>(values[i]);
  return im;
}

Histogram histogram_of(const std::vector<int>& values) {
  Histogram h;
  for (int v : values) ++h.bins[static_cast<std::size_t>(v)];
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics

TEST(XorError, HandCounts) {
  Mask gt(4, 4);
  gt.at(1, 1) = gt.at(2, 1) = gt.at(1, 2) = gt.at(2, 2) = 1;
  EXPECT_EQ(xor_error(gt, gt), 0.0);
  Mask pred = gt;
  pred.at(2, 2) = 0;
  EXPECT_DOUBLE_EQ(xor_error(pred, gt), 25.0);
  EXPECT_DOUBLE_EQ(xor_error(Mask(4, 4), gt), 100.0);
  EXPECT_DOUBLE_EQ(xor_error(pred, gt, XorDenominator::total_pixels), 100.0 / 16.0);
}

TEST(XorError, Rejections) {
  EXPECT_THROW(xor_error(Mask(4, 4), Mask(4, 4)), std::invalid_argument);
  EXPECT_THROW(xor_error(Mask(4, 4), Mask(4, 5, true)), std::invalid_argument);
  EXPECT_NO_THROW(xor_error(Mask(4, 4), Mask(4, 4), XorDenominator::total_pixels));
}

TEST(Accuracy, HandCounts) {
  std::mt19937_64 rng(1);
  const Mask gt = oracle::random_mask(4, 4, 0.5, rng);
  EXPECT_EQ(accuracy(gt, gt), 100.0);
  EXPECT_EQ(accuracy(complement(gt), gt), 0.0);
  Mask two = gt;
  two.bits[3] ^= 1;
  two.bits[9] ^= 1;
  EXPECT_DOUBLE_EQ(accuracy(two, gt), 87.5);
}

TEST(Metrics, MatchBruteForceOnRandomPairs) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> dim(1, 40);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t w = dim(rng), h = dim(rng);
    const Mask a = oracle::random_mask(w, h, p(rng), rng);
    Mask b = oracle::random_mask(w, h, p(rng), rng);
    b.bits[0] = 1;  // keep the gt foreground non-empty
    const double n = static_cast<double>(w * h);
    const double diff = static_cast<double>(oracle::xor_count(a, b));
    double fg = 0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) fg += b.at(x, y);
    EXPECT_EQ(xor_error(a, b, XorDenominator::total_pixels), 100.0 * diff / n);
    EXPECT_EQ(xor_error(a, b, XorDenominator::gt_foreground), 100.0 * diff / fg);
    EXPECT_EQ(accuracy(a, b), 100.0 * (n - diff) / n);
  }
}

TEST(Metrics, SymmetryAndComplementIdentities) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Mask a = oracle::random_mask(17, 13, 0.4, rng), b = oracle::random_mask(17, 13, 0.6, rng);
    a.bits[0] = b.bits[0] = 1;
    EXPECT_EQ(xor_error(a, b, XorDenominator::total_pixels), xor_error(b, a, XorDenominator::total_pixels));
    EXPECT_EQ(accuracy(a, b), accuracy(b, a));
    EXPECT_NEAR(accuracy(complement(a), b), 100.0 - accuracy(a, b), 1e-12);
    EXPECT_NEAR(xor_error(complement(a), b, XorDenominator::total_pixels),
                100.0 - xor_error(a, b, XorDenominator::total_pixels), 1e-12);
    EXPECT_NEAR(accuracy(a, b) + xor_error(a, b, XorDenominator::total_pixels), 100.0, 1e-12);
    // gt_foreground mode is symmetric only when both masks have equal foreground counts.
    const Mask c = complement(b);
    if (a.foreground() == b.foreground()) {
      EXPECT_EQ(xor_error(a, b), xor_error(b, a));
    }
    EXPECT_NEAR(xor_error(a, b) * static_cast<double>(b.foreground()),
                xor_error(c, complement(a), XorDenominator::total_pixels) * static_cast<double>(b.pixel_count()), 1e-9);
  }
}

TEST(Metrics, AggregateIsMeanOfEntries) {
  std::mt19937_64 rng(4);
  std::vector<std::pair<std::string, std::pair<Mask, Mask>>> items;
  for (int i = 0; i < 7; ++i) {
    Mask gt = oracle::random_mask(8, 8, 0.5, rng);
    gt.bits[0] = 1;
    items.push_back({"m" + std::to_string(i), {oracle::random_mask(8, 8, 0.5, rng), gt}});
  }
  const auto reports = evaluate_masks(items, XorDenominator::gt_foreground);
  ASSERT_EQ(reports.size(), 2u);
  double s = 0;
  for (const auto& [id, pg] : items) s += xor_error(pg.first, pg.second);
  EXPECT_NEAR(reports[0].aggregate(), s / 7.0, 1e-12);
  std::ostringstream csv;
  write_eval_csv(csv, reports);
  EXPECT_NE(csv.str().find("mean,xor_error[gt_foreground],"), std::string::npos);
}

TEST(L1Validation, PerfectAndBalancedConstant) {
  GanConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 2;
  cfg.input_size = 8;
  cfg.disc_depth = 1;
  GanModel<float> m(cfg, 1);
  // Decoder output weights and bias zero -> tanh(0) = 0 everywhere.
  auto& last = m.generator.layers().back();
  for (auto& w : last.weight.data()) w = 0;
  for (auto& b : last.bias.data()) b = 0;
  Image x(8, 8, 1, 100), y(8, 8, 1, 0);
  for (std::size_t i = 0; i < 32; ++i) y.pixels[i] = 255;
  EXPECT_NEAR(l1_validation(m, {{x, y, "a"}}), 1.0, 1e-6);
  const Image out = infer(m, x);
  // 8-bit rounding of 127.5 costs half a gray level, 1/255 in tensor units.
  EXPECT_NEAR(l1_validation(m, {{x, out, "b"}}), 0.0, 1.0 / 255.0 + 1e-6);
  EXPECT_THROW(l1_validation(m, {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// IsoData

TEST(IsoData, SmallHandCases) {
  EXPECT_EQ(isodata_threshold(gray_of({0, 0, 0, 10, 10, 10}, 6)), 5.0);
  EXPECT_NEAR(isodata_threshold(gray_of({10, 10, 12, 200, 200, 202}, 6)), 105.6666667, 1e-6);
  EXPECT_EQ(isodata_threshold(gray_of({40, 40, 90, 90, 90, 40}, 3)), 65.0);
  EXPECT_THROW(isodata_threshold(gray_of({7, 7, 7, 7}, 2)), std::invalid_argument);
}

TEST(IsoData, RandomBimodalMatchesHandIteration) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto values = oracle::bimodal_values(rng);
    const Histogram h = histogram_of(values);
    const double t = isodata_threshold(h);
    EXPECT_LT(std::abs(oracle::inter_means(values, t) - t), 0.5);
    EXPECT_NEAR(t, oracle::hand_isodata(values), 1e-6);
  }
}

TEST(IsoData, EveryStartConvergesToSameThreshold) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto values = oracle::bimodal_values(rng);
    const Histogram h = histogram_of(values);
    const double t = isodata_threshold(h);
    const int lo = *std::min_element(values.begin(), values.end());
    const int hi = *std::max_element(values.begin(), values.end());
    for (int start = lo; start < hi; ++start) {
      double s = start;
      for (int it = 0; it < 256; ++it) {
        const double next = oracle::inter_means(values, s);
        if (std::abs(next - s) < 0.5) break;
        s = next;
      }
      EXPECT_LT(std::abs(s - t), 1.0) << "start " << start;
    }
  }
}

TEST(Threshold, ClampAndMonotone) {
  const Image im = gray_of({0, 0, 0, 10, 10, 10}, 6);
  EXPECT_EQ(apply_threshold(im, 255).foreground(), 0u);
  EXPECT_EQ(apply_threshold(im, -1).foreground(), 3u);
  EXPECT_EQ(apply_threshold(im, 5).foreground(), 3u);
  EXPECT_EQ(apply_threshold(im, 10).foreground(), 0u);  // ties go to background
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> v(0, 255);
  Image r(16, 16);
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(v(rng));
  for (int t1 = 0; t1 < 255; t1 += 17) {
    const Mask a = apply_threshold(r, t1), b = apply_threshold(r, t1 + 9);
    for (std::size_t i = 0; i < a.bits.size(); ++i) EXPECT_LE(b.bits[i], a.bits[i]);
  }
}

// ---------------------------------------------------------------------------
// SimpleNet

TEST(SimpleNet, ParameterCountDependsOnWindowOnly) {
  for (std::size_t win : {3u, 5u, 7u}) {
    std::vector<WindowSample> s{{std::vector<double>(win * win, 0.1), true}, {std::vector<double>(win * win, 0.9), false}};
    const SimpleNet net = simple_net_train(s, {0, 0.5, 1});
    EXPECT_EQ(net.parameter_count(), 25 * (win * win + 1) + 26);
  }
  EXPECT_THROW(simple_net_train({}), std::invalid_argument);
}

TEST(SimpleNet, ZeroEpochsKeepsInitialization) {
  std::vector<WindowSample> s{{std::vector<double>(25, 0.1), true}};
  const SimpleNet a = simple_net_train(s, {0, 0.5, 3});
  const SimpleNet b = simple_net_train(s, {0, 0.5, 3});
  EXPECT_EQ(a.w1, b.w1);
  for (double bias : a.b1) EXPECT_EQ(bias, 0.0);
}

TEST(SimpleNet, SeparableIntensitiesLearnedQuickly) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dark(0.0, 0.4), bright(0.6, 1.0);
  std::vector<WindowSample> s;
  for (int i = 0; i < 400; ++i) {
    const bool label = i % 2 == 0;
    std::vector<double> w(25);
    for (auto& x : w) x = label ? bright(rng) : dark(rng);
    s.push_back({w, label});
  }
  const auto t0 = std::chrono::steady_clock::now();
  const SimpleNet net = simple_net_train(s, {100, 0.5, 1});
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
  std::size_t right = 0;
  for (const auto& x : s) right += (net.forward(x.window) > 0.5) == x.label;
  EXPECT_GT(static_cast<double>(right) / s.size(), 0.99);
}

TEST(SimpleNet, HiddenLayerFitsXorPattern) {
  // Label = (top-left bright) xor (bottom-right bright), no single linear unit separates it.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> noise(0.0, 0.1);
  std::vector<WindowSample> s;
  for (int i = 0; i < 400; ++i) {
    const bool a = (i & 1) != 0, b = (i & 2) != 0;
    std::vector<double> w(25);
    for (auto& x : w) x = noise(rng);
    w[0] += a ? 0.9 : 0.0;
    w[24] += b ? 0.9 : 0.0;
    s.push_back({w, a != b});
  }
  const SimpleNet net = simple_net_train(s, {300, 0.5, 2});
  std::size_t right = 0;
  for (const auto& x : s) right += (net.forward(x.window) > 0.5) == x.label;
  EXPECT_GT(static_cast<double>(right) / s.size(), 0.90);
}

TEST(SimpleNet, InferenceStaysInsideBox) {
  SegmentationSetOptions o;
  o.count = 2;
  o.background = BackgroundKind::gradient;
  const auto set = make_segmentation_set(o);
  const Mask gt = target_mask(set[0]);
  const Rect box = bounding_box(gt, 3);
  const SimpleNet net = simple_net_train(window_samples(set[0].input, gt, box), {50, 0.5, 1});
  const Mask a = simple_net_infer(net, set[0].input, box);
  EXPECT_EQ(a, simple_net_infer(net, set[0].input, box));
  for (std::size_t y = 0; y < a.height; ++y)
    for (std::size_t x = 0; x < a.width; ++x)
      if (!box.contains(static_cast<long>(x), static_cast<long>(y))) {
        EXPECT_EQ(a.at(x, y), 0);
      }
  EXPECT_THROW(simple_net_infer(net, set[0].input, Rect{0, 0, 0, 4}), std::invalid_argument);
  // A box holding no object pixels: the trained net sees only background there.
  const Rect corner{0, 0, 3, 3};
  if (!gt.at(0, 0) && !gt.at(2, 2)) {
    Mask c = simple_net_infer(net, set[0].input, corner);
    Mask gc(gt.width, gt.height);
    EXPECT_LE(oracle::xor_count(c, gc), 9u);
  }
}

TEST(SimpleNet, BeatsIsoDataOnItsOwnGradientImage) {
  SegmentationSetOptions o;
  o.count = 1;
  o.seed = 12;
  o.background = BackgroundKind::gradient;
  const auto s = make_segmentation_set(o)[0];
  const Mask gt = target_mask(s);
  const Rect box = bounding_box(gt, 3);
  const SimpleNet net = simple_net_train(window_samples(s.input, gt, box));
  const double sn = xor_error(simple_net_infer(net, s.input, box), gt);
  const double iso = xor_error(apply_threshold(s.input, isodata_threshold(s.input)), gt);
  EXPECT_LT(sn, iso);
}
