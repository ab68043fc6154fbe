#include <cgseg/augment.hpp>
#include <cgseg/config.hpp>
#include <cgseg/protocols.hpp>
#include <cgseg/thermal.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace cgseg;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Image files

TEST(Pnm, WhitePixelRoundTrip) {
  const std::vector<std::uint8_t> bytes{'P', '5', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 255};
  const Image im = decode_pnm(bytes);
  EXPECT_EQ(im.width, 1u);
  EXPECT_EQ(im.pixels[0], 255);
  EXPECT_EQ(encode_pnm(im), bytes);
}

TEST(Pnm, LargeRandomColourRoundTrip) {
  std::mt19937_64 rng(1);
  Image im(512, 512, 3);
  for (auto& p : im.pixels) p = static_cast<std::uint8_t>(rng());
  const auto path = fs::temp_directory_path() / "cgseg_rt.ppm";
  write_pnm(path, im);
  const auto bytes = read_file_bytes(path);
  const Image back = read_pnm(path);
  fs::remove(path);
  EXPECT_EQ(back, im);
  EXPECT_EQ(encode_pnm(back), bytes);
}

TEST(Pnm, CommentsInHeaderAccepted) {
  const std::string text = "P5\n# made by hand\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  bytes.push_back(3);
  bytes.push_back(4);
  const Image im = decode_pnm(bytes);
  EXPECT_EQ(im.pixels, (std::vector<std::uint8_t>{3, 4}));
}

TEST(Pnm, UnsupportedVariantsRejected) {
  auto bytes_of = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  EXPECT_THROW(decode_pnm(bytes_of("P6\n1 1\n65535\n\0\0\0\0\0\0")), DataError);
  EXPECT_THROW(decode_pnm(bytes_of("P2\n1 1\n255\n7\n")), DataError);
  EXPECT_THROW(decode_pnm(bytes_of("P3\n1 1\n255\n7 7 7\n")), DataError);
  try {
    decode_pnm(bytes_of("P5\n4 x\n255\n"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 5"), std::string::npos) << e.what();
  }
  try {
    decode_pnm(bytes_of("P5\n4 4\n255\nab"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 11"), std::string::npos) << e.what();
  }
}

TEST(Manifest, SaveLoadRoundTrip) {
  SegmentationSetOptions o;
  o.count = 3;
  const auto set = make_segmentation_set(o);
  const auto dir = fs::temp_directory_path() / "cgseg_manifest";
  fs::remove_all(dir);
  save_samples(dir, set);
  const auto back = load_samples(dir / "manifest.csv");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].input, set[i].input);
    EXPECT_EQ(back[i].target, set[i].target);
    EXPECT_EQ(back[i].id, set[i].id);
  }
  fs::remove(dir / "sample0001_target.pgm");
  EXPECT_THROW(load_samples(dir / "manifest.csv"), DataError);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(KeyValueText, ParseSerializeParseIsIdentity) {
  const std::string text = "# comment\nb = 2\n\na=hello world\nc=1,2,3\n";
  const KeyValues kv = parse_key_values(text);
  EXPECT_EQ(kv.at("a"), "hello world");
  EXPECT_EQ(kv.at("b"), "2");
  EXPECT_EQ(parse_key_values(serialize_key_values(kv)), kv);
  EXPECT_EQ(serialize_key_values(parse_key_values(serialize_key_values(kv))), serialize_key_values(kv));
}

TEST(KeyValueText, MalformedRejected) {
  EXPECT_THROW(parse_key_values("a=1\na=2\n"), ConfigError);
  EXPECT_THROW(parse_key_values("just words\n"), ConfigError);
  EXPECT_THROW(parse_key_values("=3\n"), ConfigError);
}

TEST(RunConfigText, RoundTripAndValidation) {
  RunConfig c;
  c.gan.depth = 4;
  c.gan.adam.learning_rate = 1.0 / 3.0;
  c.train.validation_fraction = 0.15;
  c.xor_denominator = XorDenominator::total_pixels;
  const RunConfig back = RunConfig::from_key_values(parse_key_values(serialize_key_values(c.to_key_values())));
  EXPECT_TRUE(back == c);
  EXPECT_THROW(RunConfig::from_key_values({{"depth", "5"}, {"input_size", "48"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_key_values({{"dpeth", "5"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_key_values({{"epochs", "-1"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_key_values({{"noise", "pink"}}), ConfigError);
}

TEST(OtherConfigs, RoundTrip) {
  AugmentConfig a;
  a.occluder.area_fraction = 0.3;
  a.segmentation.background = BackgroundKind::gradient;
  EXPECT_EQ(AugmentConfig::from_key_values(a.to_key_values()).to_key_values(), a.to_key_values());
  EvalConfig e;
  e.method = EvalMethod::simplenet;
  EXPECT_EQ(EvalConfig::from_key_values(e.to_key_values()).to_key_values(), e.to_key_values());
  EXPECT_THROW(ThermalConfig::from_key_values({{"window", "1"}}), ConfigError);
  EXPECT_THROW(ThermalConfig::from_key_values({{"tau", "0"}}), ConfigError);
  EXPECT_EQ(ThermalConfig::from_key_values({{"band_rule", "dominant"}}).band_rule, BandRule::dominant);
  EXPECT_THROW(ThermalConfig::from_key_values({{"band_rule", "sum"}}), ConfigError);
}

// ---------------------------------------------------------------------------
// Staged training

TEST(StagePlanRules, SizesMustIncrease) {
  StagePlan p;
  p.sizes = {4, 8, 8};
  EXPECT_THROW(p.validate(), ConfigError);
  p.sizes = {8, 4};
  EXPECT_THROW(p.validate(), ConfigError);
  p.sizes = {};
  EXPECT_THROW(p.validate(), ConfigError);
  p.sizes = {4, 8, 16};
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.total_epochs(), 150u);
}

TEST(StagePlanRules, KeyValueRoundTrip) {
  StagePlan p;
  p.sizes = {4, 8, 16};
  p.scratch_epochs = 375;
  p.manifest = "data/manifest.csv";
  p.test_manifest = "test/manifest.csv";
  const StagePlan back = StagePlan::from_key_values(p.to_key_values());
  EXPECT_EQ(back.sizes, p.sizes);
  EXPECT_EQ(back.to_key_values(), p.to_key_values());
}

TEST(StagePlanRules, ValidationPositionsSpreadToEnd) {
  EXPECT_EQ(validation_positions(16, 0.2), (std::vector<std::size_t>{4, 9, 15}));
  EXPECT_TRUE(validation_positions(4, 0.2).empty());
}

TEST(Comparison, EpochRatioIsFortyPercent) {
  std::vector<StageReport> inc(3);
  for (auto& r : inc) {
    r.epochs_run = 50;
    r.test_set_id = "t";
  }
  StageReport sc;
  sc.epochs_run = 375;
  sc.test_set_id = "t";
  EXPECT_DOUBLE_EQ(compare(inc, sc).epoch_ratio(), 0.4);
  sc.test_set_id = "u";
  EXPECT_THROW(compare(inc, sc), std::invalid_argument);
}

TEST(Comparison, IdenticalArmsGiveUnitRatios) {
  StageReport r;
  r.epochs_run = 10;
  r.wall_seconds = 2.5;
  r.test_xor_error = 12.0;
  r.test_set_id = "x";
  const Comparison c = compare({r}, r);
  EXPECT_EQ(c.epoch_ratio(), 1.0);
  EXPECT_EQ(c.time_ratio(), 1.0);
  EXPECT_EQ(c.xor_ratio(), 1.0);
  StageReport zero = r;
  zero.test_xor_error = 0;
  EXPECT_EQ(compare({zero}, zero).xor_ratio(), 1.0);
}

namespace {

StagePlan tiny_plan() {
  StagePlan p;
  p.sizes = {4, 8, 12};
  p.epochs_per_stage = 2;
  p.run.gan.depth = 3;
  p.run.gan.base_channels = 4;
  p.run.gan.disc_base_channels = 4;
  p.run.train.checkpoint_every = 100;
  return p;
}

}  // namespace

TEST(Incremental, HandOffIsExact) {
  SegmentationSetOptions o;
  o.count = 16;
  o.seed = 3;
  const auto all = make_segmentation_set(o);
  const std::vector<PairedSample> data(all.begin(), all.begin() + 12), test(all.begin() + 12, all.end());
  std::size_t seen = 0;
  const auto stages = run_incremental(tiny_plan(), data, test, [&](const StageOutcome&) { ++seen; });
  ASSERT_EQ(stages.size(), 3u);
  EXPECT_EQ(seen, 3u);
  for (std::size_t k = 1; k < stages.size(); ++k)
    EXPECT_EQ(stages[k].report.initial_val_l1, stages[k - 1].report.best_val_l1);
  for (const auto& s : stages) {
    double lowest = s.training.initial_val_l1;
    for (const auto& e : s.training.metrics) lowest = std::min(lowest, e.val_l1);
    EXPECT_EQ(s.report.best_val_l1, lowest);
    EXPECT_EQ(s.report.test_set_id, test_set_id(test));
  }
  EXPECT_EQ(stages[0].report.train_count, 4u);
  EXPECT_EQ(stages[2].report.train_count, 10u);
}

TEST(Incremental, ScratchAtZeroEpochsReportsInitialization) {
  SegmentationSetOptions o;
  o.count = 16;
  const auto all = make_segmentation_set(o);
  const std::vector<PairedSample> data(all.begin(), all.begin() + 12), test(all.begin() + 12, all.end());
  const auto sc = run_scratch(tiny_plan(), 0, data, test);
  EXPECT_EQ(sc.report.epochs_run, 0u);
  EXPECT_EQ(sc.report.best_epoch, 0u);
  EXPECT_EQ(sc.report.best_val_l1, sc.report.initial_val_l1);
}

TEST(Incremental, LeakAndShortDataRejected) {
  SegmentationSetOptions o;
  o.count = 14;
  const auto all = make_segmentation_set(o);
  const std::vector<PairedSample> data(all.begin(), all.begin() + 12);
  EXPECT_THROW(run_incremental(tiny_plan(), data, {all[3]}), DataError);
  const std::vector<PairedSample> short_data(all.begin(), all.begin() + 10);
  EXPECT_THROW(run_incremental(tiny_plan(), short_data, {all[12]}), DataError);
}

// ---------------------------------------------------------------------------
// Thermal

namespace {

Image frame_with(std::size_t red, std::size_t green, std::size_t yellow, std::size_t white = 0) {
  Image f(16, 16, 3);
  std::size_t i = 0;
  auto paint = [&](std::size_t n, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      f.pixels[3 * i] = r;
      f.pixels[3 * i + 1] = g;
      f.pixels[3 * i + 2] = b;
    }
  };
  paint(red, 255, 0, 0);
  paint(green, 0, 255, 0);
  paint(yellow, 255, 255, 0);
  paint(white, 255, 255, 255);
  return f;
}

ThermalSeries series_of(const std::vector<double>& hot, double interval = 1.0) {
  ThermalSeries s{{}, interval};
  for (std::size_t k = 0; k < hot.size(); ++k) {
    BandCounts b;
    b.t = k * interval;
    b.red = static_cast<std::size_t>(hot[k]);
    b.green = b.red;
    b.yellow = static_cast<double>(b.red);
    s.frames.push_back(b);
  }
  return s;
}

std::vector<double> random_hot(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> step(-20, 60);
  std::vector<double> v{100};
  for (int k = 1; k < 25; ++k) v.push_back(std::max(0.0, std::round(v.back() + step(rng))));
  return v;
}

}  // namespace

TEST(Bands, HandCounts) {
  EXPECT_EQ(count_bands(Image(4, 4, 3)), BandCounts{});
  const BandCounts b = count_bands(frame_with(10, 6, 0));
  EXPECT_EQ(b.red, 10u);
  EXPECT_EQ(b.green, 6u);
  EXPECT_EQ(b.blue, 0u);
  EXPECT_EQ(b.yellow, 8.0);
  const BandCounts w = count_bands(Image(5, 5, 3, 255));
  EXPECT_EQ(w.red, 25u);
  EXPECT_EQ(w.blue, 25u);
  EXPECT_EQ(w.yellow, 25.0);
  EXPECT_THROW(count_bands(Image(4, 4, 1)), std::invalid_argument);
}

TEST(Bands, PermutationInvariantAndYellowRule) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Image f(12, 9, 3);
    for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng());
    const BandCounts b = count_bands(f);
    EXPECT_EQ(b.yellow, (static_cast<double>(b.red) + b.green) / 2.0);
    EXPECT_LE(b.red, f.pixel_count());
    std::vector<std::size_t> idx(f.pixel_count());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Image g = f;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int c = 0; c < 3; ++c) g.pixels[3 * i + c] = f.pixels[3 * idx[i] + c];
    EXPECT_EQ(count_bands(g), b);
  }
}

TEST(Series, TimestampsAndSizes) {
  std::vector<Image> frames;
  for (int k = 0; k < 10; ++k) frames.push_back(frame_with(10 * k, 0, 0));
  const auto s = build_series(frames, 20.0);
  EXPECT_EQ(s.frames.back().t, 180.0);
  for (std::size_t k = 1; k < s.frames.size(); ++k) EXPECT_GT(s.frames[k].red, s.frames[k - 1].red);
  const auto twin = build_series({frames[3], frames[3]}, 1.0);
  EXPECT_EQ(twin.frames[0].red, twin.frames[1].red);
  frames.push_back(Image(8, 8, 3));
  EXPECT_THROW(build_series(frames, 20.0), std::invalid_argument);
  EXPECT_THROW(build_series({frames[0]}, 20.0), std::invalid_argument);
}

TEST(Alarm, FlatSeriesNeverFires) {
  EXPECT_FALSE(predict_flashover(series_of(std::vector<double>(12, 80)), {}).has_value());
}

TEST(Alarm, RampFiresNearOnset) {
  std::vector<double> hot;
  for (int k = 0; k < 20; ++k) hot.push_back(100 + 50 * std::max(0, k - 9));
  const auto alarm = predict_flashover(series_of(hot), {3, 25.0, 1});
  ASSERT_TRUE(alarm.has_value());
  EXPECT_GE(alarm->frame, 10u);
  EXPECT_LE(alarm->frame, 12u);
  EXPECT_GE(19 - static_cast<long>(alarm->frame), 2);
}

TEST(Alarm, ConsecutiveTriggerDelays) {
  std::vector<double> hot;
  for (int k = 0; k < 20; ++k) hot.push_back(100 + 50 * std::max(0, k - 9));
  const auto one = predict_flashover(series_of(hot), {3, 25.0, 1});
  const auto two = predict_flashover(series_of(hot), {3, 25.0, 2});
  ASSERT_TRUE(one && two);
  EXPECT_EQ(two->frame, one->frame + 1);
}

TEST(Alarm, MonotoneInThreshold) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = series_of(random_hot(rng));
    std::size_t last = 0;
    bool fired = true;
    for (double thr = 5; thr <= 80; thr += 5) {
      const auto a = predict_flashover(s, {3, thr, 1});
      if (!fired) {
        EXPECT_FALSE(a.has_value());
        continue;
      }
      if (!a) {
        fired = false;
        continue;
      }
      EXPECT_GE(a->frame, last);
      last = a->frame;
    }
  }
}

TEST(Alarm, ScaleEquivariance) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto hot = random_hot(rng);
    std::vector<double> doubled;
    for (double v : hot) doubled.push_back(2 * v);
    const AlarmConfig cfg{3, 30.0, 1};
    const AlarmConfig cfg2{3, 60.0, 1};
    const auto a = predict_flashover(series_of(hot), cfg);
    const auto b = predict_flashover(series_of(doubled), cfg2);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_EQ(a->frame, b->frame);
    }
  }
}

TEST(Alarm, RejectsBadInput) {
  EXPECT_THROW(predict_flashover(series_of({1, 2}), {3, 25, 1}), std::invalid_argument);
  auto s = series_of({1, 2, 3, 4});
  s.frames[2].t = s.frames[1].t;
  EXPECT_THROW(predict_flashover(s, {}), std::invalid_argument);
  EXPECT_THROW(predict_flashover(series_of({1, 2, 3}), {1, 25, 1}), std::invalid_argument);
}

TEST(ThermalBands, DominantRuleDropsTheWeakerChannel) {
  Image f(3, 1, 3);
  const std::uint8_t px[] = {250, 200, 0, 200, 200, 130, 0, 0, 200};
  std::copy(std::begin(px), std::end(px), f.pixels.begin());
  const BandCounts t = count_bands(f);
  EXPECT_EQ(t.red, 2u);
  EXPECT_EQ(t.green, 2u);
  EXPECT_EQ(t.blue, 2u);
  // Pixel 0 is red-dominant, pixel 1 ties red and green, pixel 2 is blue.
  const BandCounts d = count_bands(f, kDefaultBandThreshold, BandRule::dominant);
  EXPECT_EQ(d.red, 2u);
  EXPECT_EQ(d.green, 1u);
  EXPECT_EQ(d.blue, 1u);
  EXPECT_DOUBLE_EQ(d.yellow, 1.5);
}

TEST(ThermalCsv, Columns) {
  std::ostringstream out;
  write_series_csv(out, build_series({frame_with(10, 6, 0), frame_with(12, 6, 0)}, 20.0));
  EXPECT_EQ(out.str(), "t,red,yellow,green,blue\n0,10,8,6,0\n20,12,9,6,0\n");
}
