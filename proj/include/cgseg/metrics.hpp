#pragma once

// Segmentation scoring: XOR error, pixel accuracy and generator L1.

#include <cgseg/gan.hpp>

#include <ostream>

namespace cgseg {

enum class XorDenominator {
  gt_foreground,  // divide by the ground-truth foreground pixel count
  total_pixels,   // divide by the image area
};

inline std::string to_string(XorDenominator d) {
  return d == XorDenominator::gt_foreground ? "gt_foreground" : "total_pixels";
}

inline XorDenominator parse_xor_denominator(const std::string& s) {
  if (s == "gt_foreground") return XorDenominator::gt_foreground;
  if (s == "total_pixels") return XorDenominator::total_pixels;
  throw std::invalid_argument("unknown XOR denominator '" + s + "' (gt_foreground|total_pixels)");
}

inline void require_same_dims(const Mask& a, const Mask& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument(std::string(what) + ": mask sizes differ (" + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height) + ")");
  }
}

/// 100 * |pred xor gt| / denominator.
inline double xor_error(const Mask& pred, const Mask& gt, XorDenominator denom = XorDenominator::gt_foreground) {
  require_same_dims(pred, gt, "xor_error");
  std::size_t diff = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) diff += (pred.bits[i] != 0) != (gt.bits[i] != 0);
  std::size_t d = gt.pixel_count();
  if (denom == XorDenominator::gt_foreground) {
    d = gt.foreground();
    if (d == 0) throw std::invalid_argument("xor_error: ground truth has no foreground pixels");
  }
  return 100.0 * static_cast<double>(diff) / static_cast<double>(d);
}

/// 100 * matching pixels / total pixels.
inline double accuracy(const Mask& pred, const Mask& gt) {
  require_same_dims(pred, gt, "accuracy");
  std::size_t same = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) same += (pred.bits[i] != 0) == (gt.bits[i] != 0);
  return 100.0 * static_cast<double>(same) / static_cast<double>(pred.pixel_count());
}

/// Mean |G(x) - y| over validation pixels, in [-1, 1] units.
template <class T>
double l1_validation(const GanModel<T>& generator, const std::vector<PairedSample>& validation) {
  if (validation.empty()) throw std::invalid_argument("l1_validation: empty validation set");
  return generator_l1(generator, validation);
}

struct EvalEntry {
  std::string image_id;
  double value = 0.0;
};

struct EvalReport {
  std::string metric;  // e.g. "xor_error" or "accuracy"
  std::string denominator;  // XOR denominator mode, empty for other metrics
  std::vector<EvalEntry> entries;

  double aggregate() const {
    if (entries.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : entries) s += e.value;
    return s / static_cast<double>(entries.size());
  }
};

inline std::string metric_label(const EvalReport& r) {
  return r.denominator.empty() ? r.metric : r.metric + "[" + r.denominator + "]";
}

/// CSV rows image_id,metric,value followed by a "mean" aggregate row.
inline void write_eval_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "image_id,metric,value\n";
  char buf[64];
  for (const auto& r : reports) {
    const std::string label = metric_label(r);
    for (const auto& e : r.entries) {
      std::snprintf(buf, sizeof buf, "%.6f", e.value);
      out << e.image_id << ',' << label << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.6f", r.aggregate());
    out << "mean," << label << ',' << buf << '\n';
  }
}

/// Scores predicted masks against ground truth pairwise.
inline std::vector<EvalReport> evaluate_masks(const std::vector<std::pair<std::string, std::pair<Mask, Mask>>>& items,
                                              XorDenominator denom) {
  EvalReport xr{"xor_error", to_string(denom), {}};
  EvalReport ar{"accuracy", "", {}};
  for (const auto& [id, pg] : items) {
    xr.entries.push_back({id, xor_error(pg.first, pg.second, denom)});
    ar.entries.push_back({id, accuracy(pg.first, pg.second)});
  }
  return {xr, ar};
}

}  // namespace cgseg
