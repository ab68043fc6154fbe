#pragma once

// Colour-band pixel counts of thermal-palette frames and a slope-based
// flashover alarm over the resulting time series.

#include <cgseg/image.hpp>
#include <cgseg/pnm.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace cgseg {

inline constexpr int kDefaultBandThreshold = 128;

/// threshold: every channel >= tau counts. dominant: additionally the channel must be the pixel's largest.
enum class BandRule { threshold, dominant };

inline std::string to_string(BandRule r) { return r == BandRule::threshold ? "threshold" : "dominant"; }

inline BandRule parse_band_rule(const std::string& s) {
  if (s == "threshold") return BandRule::threshold;
  if (s == "dominant") return BandRule::dominant;
  throw std::invalid_argument("unknown band rule '" + s + "' (expected threshold|dominant)");
}

struct BandCounts {
  double t = 0.0;  // seconds
  std::size_t red = 0;
  std::size_t green = 0;
  std::size_t blue = 0;
  double yellow = 0.0;  // always (red + green) / 2

  double hot() const { return static_cast<double>(red) + yellow; }
  bool operator==(const BandCounts&) const = default;
};

/// A pixel counts towards a channel's band when that channel is >= tau.
inline BandCounts count_bands(const Image& frame, int tau = kDefaultBandThreshold, BandRule rule = BandRule::threshold) {
  if (frame.channels != 3) throw std::invalid_argument("count_bands: expected an RGB frame");
  if (tau <= 0 || tau > 255) throw std::invalid_argument("count_bands: threshold must lie in (0,255]");
  BandCounts b;
  for (std::size_t i = 0; i < frame.pixel_count(); ++i) {
    const std::uint8_t* p = &frame.pixels[3 * i];
    const int top = rule == BandRule::dominant ? std::max({p[0], p[1], p[2]}) : 0;
    b.red += p[0] >= tau && p[0] >= top;
    b.green += p[1] >= tau && p[1] >= top;
    b.blue += p[2] >= tau && p[2] >= top;
  }
  b.yellow = (static_cast<double>(b.red) + static_cast<double>(b.green)) / 2.0;
  return b;
}

struct ThermalSeries {
  std::vector<BandCounts> frames;
  double interval = 1.0;
};

/// Frame k is stamped k * interval.
inline ThermalSeries build_series(const std::vector<Image>& frames, double interval, int tau = kDefaultBandThreshold,
                                  BandRule rule = BandRule::threshold) {
  if (frames.size() < 2) throw std::invalid_argument("build_series: need at least 2 frames");
  if (!(interval > 0.0)) throw std::invalid_argument("build_series: interval must be positive");
  ThermalSeries s{{}, interval};
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (!frames[k].same_size(frames.front())) {
      throw std::invalid_argument("build_series: frame " + std::to_string(k) + " differs in size from frame 0");
    }
    BandCounts b = count_bands(frames[k], tau, rule);
    b.t = static_cast<double>(k) * interval;
    s.frames.push_back(b);
  }
  return s;
}

inline ThermalSeries build_series(const std::vector<std::filesystem::path>& paths, double interval,
                                  int tau = kDefaultBandThreshold, BandRule rule = BandRule::threshold) {
  std::vector<Image> frames;
  for (const auto& p : paths) frames.push_back(read_pnm(p));
  return build_series(frames, interval, tau, rule);
}

inline void write_series_csv(std::ostream& out, const ThermalSeries& s) {
  out << "t,red,yellow,green,blue\n";
  char buf[160];
  for (const auto& b : s.frames) {
    std::snprintf(buf, sizeof buf, "%.9g,%zu,%.9g,%zu,%zu\n", b.t, b.red, b.yellow, b.green, b.blue);
    out << buf;
  }
}

struct AlarmConfig {
  std::size_t window = 3;         // frames per slope fit
  double rate_threshold = 25.0;   // pixels/second on red + yellow
  std::size_t consecutive = 1;    // successive windows over threshold before alarming

  void validate() const {
    if (window < 2) throw std::invalid_argument("alarm window must be at least 2 frames");
    if (consecutive < 1) throw std::invalid_argument("alarm needs at least 1 consecutive trigger");
  }
};

struct Alarm {
  std::size_t frame = 0;
  double t = 0.0;
  double slope = 0.0;
};

/// Least-squares slope of red+yellow against time over frames [end-window+1, end].
inline double window_slope(const ThermalSeries& s, std::size_t end, std::size_t window) {
  const std::size_t begin = end + 1 - window;
  double mt = 0, mv = 0;
  for (std::size_t i = begin; i <= end; ++i) {
    mt += s.frames[i].t;
    mv += s.frames[i].hot();
  }
  mt /= static_cast<double>(window);
  mv /= static_cast<double>(window);
  double num = 0, den = 0;
  for (std::size_t i = begin; i <= end; ++i) {
    const double dt = s.frames[i].t - mt;
    num += dt * (s.frames[i].hot() - mv);
    den += dt * dt;
  }
  return num / den;
}

/// First frame closing `consecutive` successive windows whose slope reaches the threshold.
inline std::optional<Alarm> predict_flashover(const ThermalSeries& s, const AlarmConfig& cfg) {
  cfg.validate();
  if (s.frames.size() < cfg.window) throw std::invalid_argument("predict_flashover: series shorter than the window");
  for (std::size_t i = 1; i < s.frames.size(); ++i)
    if (!(s.frames[i].t > s.frames[i - 1].t)) throw std::invalid_argument("predict_flashover: timestamps must increase");
  std::size_t run = 0;
  for (std::size_t end = cfg.window - 1; end < s.frames.size(); ++end) {
    const double slope = window_slope(s, end, cfg.window);
    run = slope >= cfg.rate_threshold ? run + 1 : 0;
    if (run >= cfg.consecutive) return Alarm{end, s.frames[end].t, slope};
  }
  return std::nullopt;
}

inline void write_alarm_report(std::ostream& out, const std::optional<Alarm>& alarm, const AlarmConfig& cfg) {
  char buf[200];
  if (alarm) {
    std::snprintf(buf, sizeof buf, "alarm: yes\nframe: %zu\nt: %.9g\nslope: %.9g\n", alarm->frame, alarm->t, alarm->slope);
  } else {
    std::snprintf(buf, sizeof buf, "alarm: no\n");
  }
  out << buf;
  std::snprintf(buf, sizeof buf, "window: %zu\nrate_threshold: %.9g\nconsecutive: %zu\n", cfg.window, cfg.rate_threshold,
                cfg.consecutive);
  out << buf;
}

}  // namespace cgseg
