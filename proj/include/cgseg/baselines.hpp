#pragma once

// Classical comparison methods: iterative inter-means (IsoData) thresholding,
// fixed thresholding, and a one-hidden-layer per-pixel classifier that looks
// at a small intensity window inside a user-supplied bounding box.

#include <cgseg/image.hpp>

#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace cgseg {

struct Histogram {
  std::array<std::size_t, 256> bins{};

  static Histogram of(const Image& gray) {
    if (gray.channels != 1) throw std::invalid_argument("histogram: expected a grayscale image");
    Histogram h;
    for (auto p : gray.pixels) ++h.bins[p];
    return h;
  }

  std::size_t total() const { return std::accumulate(bins.begin(), bins.end(), std::size_t{0}); }
};

struct IsoDataOptions {
  double tolerance = 0.5;
  std::size_t max_iterations = 256;
};

/// (mean of values <= t + mean of values > t) / 2, or NaN if either class is empty.
inline double inter_means_update(const Histogram& h, double t) {
  double lo_sum = 0, hi_sum = 0;
  std::size_t lo_n = 0, hi_n = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    if (static_cast<double>(v) <= t) {
      lo_sum += static_cast<double>(v) * static_cast<double>(h.bins[v]);
      lo_n += h.bins[v];
    } else {
      hi_sum += static_cast<double>(v) * static_cast<double>(h.bins[v]);
      hi_n += h.bins[v];
    }
  }
  if (lo_n == 0 || hi_n == 0) return std::nan("");
  return (lo_sum / static_cast<double>(lo_n) + hi_sum / static_cast<double>(hi_n)) / 2.0;
}

/// Iterative inter-means threshold. Starts at the global mean and repeats
/// T <- update(T) until |update(T) - T| < tolerance; the returned T therefore
/// satisfies the fixed-point condition.
inline double isodata_threshold(const Histogram& h, IsoDataOptions opts = {}) {
  const std::size_t n = h.total();
  std::size_t distinct = 0;
  double sum = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    distinct += h.bins[v] > 0;
    sum += static_cast<double>(v) * static_cast<double>(h.bins[v]);
  }
  if (distinct < 2) throw std::invalid_argument("isodata_threshold: image has fewer than 2 distinct values");
  double t = sum / static_cast<double>(n);
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    const double next = inter_means_update(h, t);
    if (std::abs(next - t) < opts.tolerance) return t;
    t = next;
  }
  return t;
}

inline double isodata_threshold(const Image& gray, IsoDataOptions opts = {}) {
  return isodata_threshold(Histogram::of(gray), opts);
}

/// Foreground iff value > t, with t clamped to [0, 255].
inline Mask apply_threshold(const Image& gray, double t) {
  return binarize(gray, std::clamp(t, 0.0, 255.0));
}

// ---------------------------------------------------------------------------

inline constexpr std::size_t kSimpleNetHidden = 25;

/// window_area inputs -> 25 sigmoid units -> 1 sigmoid output.
struct SimpleNet {
  std::size_t window = 5;
  std::vector<double> w1;  // [hidden][area]
  std::vector<double> b1;  // [hidden]
  std::vector<double> w2;  // [hidden]
  double b2 = 0.0;

  std::size_t area() const { return window * window; }
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + 1; }

  double forward(std::span<const double> in, std::array<double, kSimpleNetHidden>* hidden = nullptr) const {
    double z = b2;
    for (std::size_t j = 0; j < kSimpleNetHidden; ++j) {
      double a = b1[j];
      const double* w = w1.data() + j * area();
      for (std::size_t i = 0; i < in.size(); ++i) a += w[i] * in[i];
      const double hj = 1.0 / (1.0 + std::exp(-a));
      if (hidden) (*hidden)[j] = hj;
      z += w2[j] * hj;
    }
    return 1.0 / (1.0 + std::exp(-z));
  }
};

struct WindowSample {
  std::vector<double> window;  // intensities scaled to [0,1], row-major
  bool label = false;
};

/// The window x window neighbourhood of (x, y), replicating edge pixels.
inline std::vector<double> extract_window(const Image& gray, long x, long y, std::size_t window) {
  std::vector<double> out;
  out.reserve(window * window);
  const long r = static_cast<long>(window / 2);
  for (long dy = -r; dy < static_cast<long>(window) - r; ++dy)
    for (long dx = -r; dx < static_cast<long>(window) - r; ++dx) {
      const long sx = std::clamp(x + dx, 0L, static_cast<long>(gray.width) - 1);
      const long sy = std::clamp(y + dy, 0L, static_cast<long>(gray.height) - 1);
      out.push_back(gray.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy)) / 255.0);
    }
  return out;
}

inline void require_bbox(const Image& img, const Rect& box) {
  if (box.empty()) throw std::invalid_argument("bounding box is degenerate");
  if (box.x < 0 || box.y < 0 || box.x + box.width > static_cast<long>(img.width) ||
      box.y + box.height > static_cast<long>(img.height)) {
    throw std::invalid_argument("bounding box lies outside the image");
  }
}

/// One sample per pixel inside `box`, labelled from `mask`.
inline std::vector<WindowSample> window_samples(const Image& gray, const Mask& mask, const Rect& box,
                                                std::size_t window = 5) {
  if (gray.channels != 1) throw std::invalid_argument("window_samples: expected a grayscale image");
  require_bbox(gray, box);
  std::vector<WindowSample> out;
  for (long y = box.y; y < box.y + box.height; ++y)
    for (long x = box.x; x < box.x + box.width; ++x)
      out.push_back({extract_window(gray, x, y, window),
                     mask.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) != 0});
  return out;
}

struct SimpleNetOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.5;
  std::uint64_t seed = 1;
};

/// Per-sample gradient descent on binary cross-entropy.
inline SimpleNet simple_net_train(const std::vector<WindowSample>& samples, SimpleNetOptions opts = {}) {
  if (samples.empty()) throw std::invalid_argument("simple_net_train: no samples");
  const std::size_t area = samples.front().window.size();
  const auto window = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(area))));
  if (window * window != area || window % 2 == 0) throw std::invalid_argument("simple_net_train: window must be an odd square");
  for (const auto& s : samples)
    if (s.window.size() != area) throw std::invalid_argument("simple_net_train: inconsistent window sizes");

  SimpleNet net;
  net.window = window;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(static_cast<double>(area)));
  std::normal_distribution<double> init2(0.0, 1.0 / std::sqrt(static_cast<double>(kSimpleNetHidden)));
  net.w1.resize(kSimpleNetHidden * area);
  for (auto& w : net.w1) w = init(rng);
  net.b1.assign(kSimpleNetHidden, 0.0);
  net.w2.resize(kSimpleNetHidden);
  for (auto& w : net.w2) w = init2(rng);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::array<double, kSimpleNetHidden> hidden{};
  for (std::size_t e = 0; e < opts.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto idx : order) {
      const auto& s = samples[idx];
      const double out = net.forward(s.window, &hidden);
      const double delta = out - (s.label ? 1.0 : 0.0);  // dBCE/dz for a sigmoid output
      for (std::size_t j = 0; j < kSimpleNetHidden; ++j) {
        const double dh = delta * net.w2[j] * hidden[j] * (1.0 - hidden[j]);
        net.w2[j] -= opts.learning_rate * delta * hidden[j];
        double* w = net.w1.data() + j * area;
        for (std::size_t i = 0; i < area; ++i) w[i] -= opts.learning_rate * dh * s.window[i];
        net.b1[j] -= opts.learning_rate * dh;
      }
      net.b2 -= opts.learning_rate * delta;
    }
  }
  return net;
}

/// Foreground where the network output exceeds 0.5 inside `box`; background elsewhere.
inline Mask simple_net_infer(const SimpleNet& net, const Image& gray, const Rect& box) {
  if (gray.channels != 1) throw std::invalid_argument("simple_net_infer: expected a grayscale image");
  require_bbox(gray, box);
  Mask m(gray.width, gray.height);
  for (long y = box.y; y < box.y + box.height; ++y)
    for (long x = box.x; x < box.x + box.width; ++x)
      m.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) =
          net.forward(extract_window(gray, x, y, net.window)) > 0.5 ? 1 : 0;
  return m;
}

}  // namespace cgseg
