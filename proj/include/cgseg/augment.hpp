#pragma once

// Synthetic training data: affine warps and their estimation from reference
// frames, target-on-background superposition, feature-crop enhancement,
// artificial occlusion and see-through compositing.

#include <cgseg/dataset.hpp>
#include <cgseg/image.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>

namespace cgseg {

/// [a b tx; c d ty] mapping source (x, y, 1) to destination coordinates.
struct AffineTransform {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;

  static AffineTransform identity() { return {}; }

  static AffineTransform translation(double dx, double dy) { return {1, 0, dx, 0, 1, dy}; }

  /// Rotation by `degrees` and uniform `scale` about (cx, cy), followed by a shift (dx, dy).
  static AffineTransform similarity(double degrees, double scale, double dx, double dy, double cx, double cy) {
    const double r = degrees * std::numbers::pi / 180.0;
    const double cs = scale * std::cos(r), sn = scale * std::sin(r);
    AffineTransform t{cs, -sn, 0, sn, cs, 0};
    t.tx = cx + dx - (cs * cx - sn * cy);
    t.ty = cy + dy - (sn * cx + cs * cy);
    return t;
  }

  double determinant() const { return a * d - b * c; }
  bool invertible() const { return std::abs(determinant()) > 1e-9; }

  std::array<double, 2> apply(double x, double y) const { return {a * x + b * y + tx, c * x + d * y + ty}; }

  AffineTransform inverse() const {
    if (!invertible()) throw std::invalid_argument("affine transform is not invertible");
    const double det = determinant();
    AffineTransform inv{d / det, -b / det, 0, -c / det, a / det, 0};
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
  }

  /// this after other: x -> this(other(x)).
  AffineTransform compose(const AffineTransform& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, a * o.tx + b * o.ty + tx,
            c * o.a + d * o.c, c * o.b + d * o.d, c * o.tx + d * o.ty + ty};
  }
};

enum class Interpolation { nearest, bilinear };

/// Inverse-maps every destination pixel; samples falling outside the source are 0.
/// Destination size defaults to the source size.
inline Image apply_affine(const Image& src, const AffineTransform& t, Interpolation interp, std::size_t out_w = 0,
                          std::size_t out_h = 0) {
  const AffineTransform inv = t.inverse();
  Image out(out_w ? out_w : src.width, out_h ? out_h : src.height, src.channels, 0);
  const double max_x = static_cast<double>(src.width) - 1.0, max_y = static_cast<double>(src.height) - 1.0;
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) {
      const auto [sx, sy] = inv.apply(static_cast<double>(x), static_cast<double>(y));
      if (interp == Interpolation::nearest) {
        const double rx = std::round(sx), ry = std::round(sy);
        if (rx < 0 || ry < 0 || rx > max_x || ry > max_y) continue;
        for (std::size_t ch = 0; ch < src.channels; ++ch)
          out.at(x, y, ch) = src.at(static_cast<std::size_t>(rx), static_cast<std::size_t>(ry), ch);
      } else {
        constexpr double slack = 1e-9;
        if (sx < -slack || sy < -slack || sx > max_x + slack || sy > max_y + slack) continue;
        const double cx = std::clamp(sx, 0.0, max_x), cy = std::clamp(sy, 0.0, max_y);
        const auto x0 = static_cast<std::size_t>(cx), y0 = static_cast<std::size_t>(cy);
        const std::size_t x1 = std::min(x0 + 1, src.width - 1), y1 = std::min(y0 + 1, src.height - 1);
        const double fx = cx - static_cast<double>(x0), fy = cy - static_cast<double>(y0);
        for (std::size_t ch = 0; ch < src.channels; ++ch) {
          const double v = (1 - fy) * ((1 - fx) * src.at(x0, y0, ch) + fx * src.at(x1, y0, ch)) +
                           fy * ((1 - fx) * src.at(x0, y1, ch) + fx * src.at(x1, y1, ch));
          out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    }
  return out;
}

/// Masks always go through nearest-neighbour sampling so they stay binary.
inline Mask apply_affine(const Mask& src, const AffineTransform& t, std::size_t out_w = 0, std::size_t out_h = 0) {
  Image img(src.width, src.height, 1);
  img.pixels = src.bits;
  Image warped = apply_affine(img, t, Interpolation::nearest, out_w, out_h);
  Mask out(warped.width, warped.height);
  out.bits = std::move(warped.pixels);
  return out;
}

// ---------------------------------------------------------------------------
// Registration

struct RegistrationOptions {
  double max_shift_fraction = 0.25;
  double max_rotation_deg = 30.0;
  double min_scale = 0.8;
  double max_scale = 1.25;
  double min_correlation = 0.2;
  std::size_t refine_candidates = 3;
};

struct RegistrationResult {
  AffineTransform transform;
  double rotation_deg = 0.0;
  double scale = 1.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
  double correlation = 0.0;
  bool reliable = false;
};

namespace detail {

/// Normalized cross-correlation between warp(a, t) and b over the pixels
/// where the warp lands inside a. Needs at least a quarter of the frame to overlap.
inline double warped_ncc(const Image& a, const Image& b, const AffineTransform& t) {
  const AffineTransform inv = t.inverse();
  const double max_x = static_cast<double>(a.width) - 1.0, max_y = static_cast<double>(a.height) - 1.0;
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < b.height; ++y) {
    for (std::size_t x = 0; x < b.width; ++x) {
      const auto [sx, sy] = inv.apply(static_cast<double>(x), static_cast<double>(y));
      if (sx < 0 || sy < 0 || sx > max_x || sy > max_y) continue;
      const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, a.width - 1), y1 = std::min(y0 + 1, a.height - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      const double va = (1 - fy) * ((1 - fx) * a.at(x0, y0) + fx * a.at(x1, y0)) +
                        fy * ((1 - fx) * a.at(x0, y1) + fx * a.at(x1, y1));
      const double vb = b.at(x, y);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
      ++n;
    }
  }
  if (n * 4 < b.pixel_count()) return -1.0;
  const double dn = static_cast<double>(n);
  const double cov = sab - sa * sb / dn;
  const double va = saa - sa * sa / dn, vb = sbb - sb * sb / dn;
  if (va <= 1e-12 || vb <= 1e-12) return 0.0;
  return cov / std::sqrt(va * vb);
}

struct Candidate {
  double angle, scale, dx, dy, score;
};

}  // namespace detail

/// Finds the rotation/scale/shift (about the frame centre) that best maps
/// frame_a onto frame_b by exhaustive coarse-to-fine correlation search.
inline RegistrationResult estimate_affine(const Image& frame_a, const Image& frame_b, RegistrationOptions opts = {}) {
  const Image a = to_gray(frame_a), b = to_gray(frame_b);
  if (!a.same_size(b)) throw std::invalid_argument("estimate_affine: frames differ in size");
  auto constant = [](const Image& img) {
    return std::all_of(img.pixels.begin(), img.pixels.end(), [&](auto p) { return p == img.pixels[0]; });
  };
  if (constant(a) || constant(b)) throw std::invalid_argument("estimate_affine: constant frame");

  const double cx = (static_cast<double>(a.width) - 1.0) / 2.0, cy = (static_cast<double>(a.height) - 1.0) / 2.0;
  const double max_shift = std::floor(opts.max_shift_fraction * static_cast<double>(a.width));
  const double shift_step = std::max(2.0, std::floor(static_cast<double>(a.width) / 16.0));
  auto score = [&](double ang, double sc, double dx, double dy) {
    return detail::warped_ncc(a, b, AffineTransform::similarity(ang, sc, dx, dy, cx, cy));
  };

  std::vector<detail::Candidate> coarse;
  for (double ang = -opts.max_rotation_deg; ang <= opts.max_rotation_deg + 1e-9; ang += 5.0)
    for (double sc = opts.min_scale; sc <= opts.max_scale + 1e-9; sc += 0.05)
      for (double dy = -max_shift; dy <= max_shift; dy += shift_step)
        for (double dx = -max_shift; dx <= max_shift; dx += shift_step)
          coarse.push_back({ang, sc, dx, dy, score(ang, sc, dx, dy)});
  const std::size_t keep = std::min(opts.refine_candidates, coarse.size());
  std::partial_sort(coarse.begin(), coarse.begin() + static_cast<long>(keep), coarse.end(),
                    [](const auto& l, const auto& r) { return l.score > r.score; });

  detail::Candidate best{0, 1, 0, 0, -2.0};
  for (std::size_t k = 0; k < keep; ++k) {
    const auto& c0 = coarse[k];
    // Angle/scale first at the coarse shift, then shift at the refined angle/scale.
    detail::Candidate cur = c0;
    for (double ang = c0.angle - 4; ang <= c0.angle + 4 + 1e-9; ang += 1.0) {
      if (std::abs(ang) > opts.max_rotation_deg + 1e-9) continue;
      for (double sc = c0.scale - 0.04; sc <= c0.scale + 0.04 + 1e-9; sc += 0.01) {
        if (sc < opts.min_scale - 1e-9 || sc > opts.max_scale + 1e-9) continue;
        for (double dy = c0.dy - shift_step; dy <= c0.dy + shift_step; dy += 1.0)
          for (double dx = c0.dx - shift_step; dx <= c0.dx + shift_step; dx += 1.0) {
            const double s = score(ang, sc, dx, dy);
            if (s > cur.score) cur = {ang, sc, dx, dy, s};
          }
      }
    }
    // Pattern search from there, halving the steps whenever no neighbour improves.
    double step[4] = {1.0, 0.01, 1.0, 1.0};
    for (int halvings = 0; halvings < 4;) {
      bool moved = false;
      for (int axis = 0; axis < 4; ++axis)
        for (double sign : {-1.0, 1.0}) {
          detail::Candidate c = cur;
          double* v[4] = {&c.angle, &c.scale, &c.dx, &c.dy};
          *v[axis] += sign * step[axis];
          if (std::abs(c.angle) > opts.max_rotation_deg + 1e-9 || c.scale < opts.min_scale - 1e-9 ||
              c.scale > opts.max_scale + 1e-9 || std::abs(c.dx) > max_shift || std::abs(c.dy) > max_shift)
            continue;
          c.score = score(c.angle, c.scale, c.dx, c.dy);
          if (c.score > cur.score) {
            cur = c;
            moved = true;
          }
        }
      if (!moved) {
        for (double& st : step) st /= 2;
        ++halvings;
      }
    }
    if (cur.score > best.score) best = cur;
  }

  RegistrationResult r;
  r.rotation_deg = best.angle;
  r.scale = best.scale;
  r.shift_x = best.dx;
  r.shift_y = best.dy;
  r.correlation = best.score;
  r.transform = AffineTransform::similarity(best.angle, best.scale, best.dx, best.dy, cx, cy);
  r.reliable = best.score >= opts.min_correlation;
  return r;
}

// ---------------------------------------------------------------------------
// Superposition

struct SyntheticTarget {
  Image templ;
  Mask support;
  std::string label;
};

/// Support = template pixels at or above `threshold` (default: any non-zero pixel).
inline SyntheticTarget make_synthetic_target(const Image& templ, std::string label, int threshold = 1) {
  const Image gray = to_gray(templ);
  SyntheticTarget t{templ, Mask(templ.width, templ.height), std::move(label)};
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) t.support.bits[i] = gray.pixels[i] >= threshold ? 1 : 0;
  if (t.support.foreground() == 0) throw std::invalid_argument("synthetic target has an empty support");
  return t;
}

/// Places the transformed template over `background`. The label is the
/// transformed support; background pixels outside it are untouched.
inline PairedSample superimpose(const SyntheticTarget& target, const AffineTransform& t, const Image& background,
                                std::string id = {}, Interpolation interp = Interpolation::bilinear) {
  if (target.templ.channels != background.channels && target.templ.channels != 1) {
    throw std::invalid_argument("superimpose: template and background channel counts differ");
  }
  if (target.templ.width != target.support.width || target.templ.height != target.support.height) {
    throw std::invalid_argument("superimpose: template and support sizes differ");
  }
  const Mask support = apply_affine(target.support, t, background.width, background.height);
  if (support.foreground() == 0) throw std::invalid_argument("superimpose: transformed target misses the background");
  const Image warped = apply_affine(target.templ, t, interp, background.width, background.height);
  PairedSample out{background, mask_to_image(support), std::move(id)};
  for (std::size_t y = 0; y < background.height; ++y)
    for (std::size_t x = 0; x < background.width; ++x) {
      if (!support.at(x, y)) continue;
      for (std::size_t ch = 0; ch < background.channels; ++ch)
        out.input.at(x, y, ch) = warped.at(x, y, warped.channels == 1 ? 0 : ch);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Feature-crop enhancement

inline constexpr long kTextureRing = 8;

/// Removes the object, refills its bounding box with tiled texture from an
/// 8-pixel strip just outside it, then pastes back only the pixels of the
/// object that fall inside `feature`. The returned mask is the feature's part
/// of the object.
inline std::pair<Image, Mask> feature_crop_enhance(const Image& image, const Mask& gt, const Rect& feature) {
  if (image.width != gt.width || image.height != gt.height) throw std::invalid_argument("feature_crop_enhance: size mismatch");
  Mask keep(gt.width, gt.height);
  long x0 = static_cast<long>(gt.width), y0 = static_cast<long>(gt.height), x1 = -1, y1 = -1;
  for (std::size_t y = 0; y < gt.height; ++y)
    for (std::size_t x = 0; x < gt.width; ++x) {
      if (!gt.at(x, y)) continue;
      const long lx = static_cast<long>(x), ly = static_cast<long>(y);
      x0 = std::min(x0, lx);
      y0 = std::min(y0, ly);
      x1 = std::max(x1, lx);
      y1 = std::max(y1, ly);
      if (feature.contains(lx, ly)) keep.at(x, y) = 1;
    }
  if (keep.foreground() == 0) throw std::invalid_argument("feature_crop_enhance: feature region contains no object pixels");

  const long w = static_cast<long>(image.width), h = static_cast<long>(image.height);
  auto strip_clear = [&](long sx0, long sy0, long sx1, long sy1) {
    if (sx0 < 0 || sy0 < 0 || sx1 >= w || sy1 >= h || sx0 > sx1 || sy0 > sy1) return false;
    for (long y = sy0; y <= sy1; ++y)
      for (long x = sx0; x <= sx1; ++x)
        if (gt.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) return false;
    return true;
  };
  // Source pixel for a hole pixel (x, y), by which side the clean strip is on.
  std::function<std::pair<long, long>(long, long)> source;
  for (long ring = kTextureRing; ring >= 1 && !source; --ring) {
    if (strip_clear(x0 - ring, y0, x0 - 1, y1)) {
      source = [=](long x, long y) { return std::pair{x0 - ring + (x - x0) % ring, y}; };
    } else if (strip_clear(x1 + 1, y0, x1 + ring, y1)) {
      source = [=](long x, long y) { return std::pair{x1 + 1 + (x - x0) % ring, y}; };
    } else if (strip_clear(x0, y0 - ring, x1, y0 - 1)) {
      source = [=](long x, long y) { return std::pair{x, y0 - ring + (y - y0) % ring}; };
    } else if (strip_clear(x0, y1 + 1, x1, y1 + ring)) {
      source = [=](long x, long y) { return std::pair{x, y1 + 1 + (y - y0) % ring}; };
    }
  }

  Image out = image;
  std::vector<double> bg_mean(image.channels, 0.0);
  if (!source) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt.bits.size(); ++i) {
      if (gt.bits[i]) continue;
      for (std::size_t ch = 0; ch < image.channels; ++ch) bg_mean[ch] += image.pixels[i * image.channels + ch];
      ++n;
    }
    for (auto& m : bg_mean) m = n ? m / static_cast<double>(n) : 0.0;
  }
  for (std::size_t y = 0; y < gt.height; ++y)
    for (std::size_t x = 0; x < gt.width; ++x) {
      if (!gt.at(x, y) || keep.at(x, y)) continue;
      for (std::size_t ch = 0; ch < image.channels; ++ch) {
        if (source) {
          const auto [sx, sy] = source(static_cast<long>(x), static_cast<long>(y));
          out.at(x, y, ch) = image.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), ch);
        } else {
          out.at(x, y, ch) = static_cast<std::uint8_t>(std::lround(bg_mean[ch]));
        }
      }
    }
  return {out, keep};
}

// ---------------------------------------------------------------------------
// Occlusion

enum class OccluderShape { ellipse, polygon };
enum class OccluderFill { uniform, noise };

struct OccluderSpec {
  OccluderShape shape = OccluderShape::ellipse;
  double area_fraction = 0.25;
  OccluderFill fill = OccluderFill::uniform;
  std::uint8_t fill_value = 0;
  std::size_t vertices = 6;  // polygon only
};

namespace detail {

inline bool inside_polygon(const std::vector<std::array<double, 2>>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& pi = poly[i];
    const auto& pj = poly[j];
    if ((pi[1] > y) != (pj[1] > y) && x < (pj[0] - pi[0]) * (y - pi[1]) / (pj[1] - pi[1]) + pi[0]) in = !in;
  }
  return in;
}

}  // namespace detail

struct Occlusion {
  Image image;
  Mask mask;
};

/// Paints a seeded random occluder covering (as rasterized) close to the
/// requested fraction of the image.
inline Occlusion synthesize_occlusion(const Image& image, const OccluderSpec& spec, std::uint64_t seed) {
  if (!(spec.area_fraction >= 0.05 && spec.area_fraction <= 0.60)) {
    throw std::invalid_argument("occluder area fraction must lie in [0.05, 0.60]");
  }
  if (spec.shape == OccluderShape::polygon && spec.vertices < 3) throw std::invalid_argument("polygon needs 3+ vertices");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double w = static_cast<double>(image.width), h = static_cast<double>(image.height);
  const double target = spec.area_fraction * w * h;

  // Unit-radius outline; scaled below until its raster area matches.
  const double aspect = 0.75 + 0.5 * unit(rng);
  const double cx = w * (0.4 + 0.2 * unit(rng)), cy = h * (0.4 + 0.2 * unit(rng));
  std::vector<std::array<double, 2>> outline;
  if (spec.shape == OccluderShape::polygon) {
    const double phase = 2 * std::numbers::pi * unit(rng);
    for (std::size_t k = 0; k < spec.vertices; ++k) {
      const double ang = phase + 2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.vertices);
      const double rad = 0.8 + 0.4 * unit(rng);
      outline.push_back({rad * std::cos(ang) * aspect, rad * std::sin(ang) / aspect});
    }
  }
  auto rasterize = [&](double radius) {
    Mask m(image.width, image.height);
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) {
        const double px = (static_cast<double>(x) - cx) / radius, py = (static_cast<double>(y) - cy) / radius;
        bool in = false;
        if (spec.shape == OccluderShape::ellipse) {
          in = (px / aspect) * (px / aspect) + (py * aspect) * (py * aspect) <= 1.0;
        } else {
          in = detail::inside_polygon(outline, px, py);
        }
        m.at(x, y) = in ? 1 : 0;
      }
    return m;
  };
  double lo = 0.0, hi = 2.0 * std::max(w, h);
  Mask best = rasterize(hi);
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    Mask m = rasterize(mid);
    if (static_cast<double>(m.foreground()) < target) {
      lo = mid;
    } else {
      hi = mid;
      best = std::move(m);
    }
  }
  Mask lower = rasterize(lo);
  if (std::abs(static_cast<double>(lower.foreground()) - target) < std::abs(static_cast<double>(best.foreground()) - target))
    best = std::move(lower);

  Occlusion out{image, best};
  std::uniform_int_distribution<int> noise(0, 255);
  for (std::size_t i = 0; i < best.bits.size(); ++i) {
    if (!best.bits[i]) continue;
    for (std::size_t ch = 0; ch < image.channels; ++ch)
      out.image.pixels[i * image.channels + ch] =
          spec.fill == OccluderFill::noise ? static_cast<std::uint8_t>(noise(rng)) : spec.fill_value;
  }
  return out;
}

enum class OverlayMode { opaque, transparency };

/// Input outside the mask; inside it the generated image (opaque) or a 50/50 blend.
inline Image overlay_reconstruction(const Image& input, const Image& generated, const Mask& mask,
                                    OverlayMode mode = OverlayMode::opaque) {
  if (!input.same_size(generated) || input.channels != generated.channels || input.width != mask.width ||
      input.height != mask.height) {
    throw std::invalid_argument("overlay_reconstruction: size mismatch");
  }
  Image out = input;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    for (std::size_t ch = 0; ch < input.channels; ++ch) {
      const std::size_t k = i * input.channels + ch;
      out.pixels[k] = mode == OverlayMode::opaque
                          ? generated.pixels[k]
                          : static_cast<std::uint8_t>((static_cast<unsigned>(input.pixels[k]) + generated.pixels[k] + 1) / 2);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic segmentation sets

enum class BackgroundKind { noise, gradient };

struct SegmentationSetOptions {
  std::size_t count = 48;
  std::size_t size = 32;
  std::uint64_t seed = 1;
  BackgroundKind background = BackgroundKind::noise;
  double noise_sigma = 12.0;
};

/// A bright shape (ellipse, box, cross or ring-notched disc) on a zero canvas,
/// sized for a `size` x `size` scene.
inline SyntheticTarget random_target_template(std::size_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t ts = size / 2 + 2;
  Image templ(ts, ts, 1, 0);
  const double c = (static_cast<double>(ts) - 1.0) / 2.0;
  const int kind = static_cast<int>(unit(rng) * 4.0);
  const double r = static_cast<double>(ts) * (0.32 + 0.12 * unit(rng));
  const double aspect = 0.7 + 0.6 * unit(rng);
  const double base = 150 + 70 * unit(rng);
  for (std::size_t y = 0; y < ts; ++y)
    for (std::size_t x = 0; x < ts; ++x) {
      const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
      bool in = false;
      switch (kind) {
        case 0: in = (dx / (r * aspect)) * (dx / (r * aspect)) + (dy * aspect / r) * (dy * aspect / r) <= 1.0; break;
        case 1: in = std::abs(dx) <= r * aspect && std::abs(dy) <= r / aspect * 0.8; break;
        case 2: in = (std::abs(dx) <= r && std::abs(dy) <= r * 0.35) || (std::abs(dy) <= r && std::abs(dx) <= r * 0.35); break;
        default: in = dx * dx + dy * dy <= r * r && !(dx > 0 && std::abs(dy) < r * 0.3); break;
      }
      if (in) {
        const double shade = base + 20.0 * (dy / r);
        templ.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(shade), 1L, 255L));
      }
    }
  return make_synthetic_target(templ, "shape" + std::to_string(kind));
}

inline Image random_background(std::size_t size, BackgroundKind kind, double sigma, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, sigma);
  Image bg(size, size, 1);
  const double level = 50 + 50 * unit(rng);
  const double ang = 2 * std::numbers::pi * unit(rng);
  const double lo = 30 + 30 * unit(rng), hi = 160 + 40 * unit(rng);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      double v = level;
      if (kind == BackgroundKind::gradient) {
        const double u = ((static_cast<double>(x) / static_cast<double>(size - 1) - 0.5) * std::cos(ang) +
                          (static_cast<double>(y) / static_cast<double>(size - 1) - 0.5) * std::sin(ang)) /
                             1.42 + 0.5;
        v = lo + (hi - lo) * u;
      }
      bg.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v + noise(rng)), 0L, 255L));
    }
  return bg;
}

/// Shapes moved by random similarity transforms onto random backgrounds; the
/// target image of each pair is the transformed support as a {0,255} mask.
inline std::vector<PairedSample> make_segmentation_set(const SegmentationSetOptions& opts) {
  if (opts.size < 8) throw std::invalid_argument("segmentation set: size must be at least 8");
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PairedSample> out;
  const double s = static_cast<double>(opts.size);
  for (std::size_t i = 0; i < opts.count; ++i) {
    const SyntheticTarget target = random_target_template(opts.size, rng);
    const Image bg = random_background(opts.size, opts.background, opts.noise_sigma, rng);
    const double tc = (static_cast<double>(target.templ.width) - 1.0) / 2.0;
    const double ang = -30.0 + 60.0 * unit(rng);
    const double sc = 0.8 + 0.45 * unit(rng);
    const double dx = (s - 1.0) / 2.0 - tc + (unit(rng) - 0.5) * s * 0.3;
    const double dy = (s - 1.0) / 2.0 - tc + (unit(rng) - 0.5) * s * 0.3;
    const AffineTransform t = AffineTransform::translation(dx, dy).compose(AffineTransform::similarity(ang, sc, 0, 0, tc, tc));
    char id[32];
    std::snprintf(id, sizeof id, "sample%04zu", i);
    out.push_back(superimpose(target, t, bg, id));
  }
  return out;
}

/// Mask from a {0,255} target image.
inline Mask target_mask(const PairedSample& s) { return binarize(to_gray(s.target), 127); }

/// Tight bounding box of a mask's foreground grown by `margin` and clipped to the image.
inline Rect bounding_box(const Mask& m, long margin = 0) {
  long x0 = static_cast<long>(m.width), y0 = static_cast<long>(m.height), x1 = -1, y1 = -1;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.at(x, y)) {
        x0 = std::min(x0, static_cast<long>(x));
        y0 = std::min(y0, static_cast<long>(y));
        x1 = std::max(x1, static_cast<long>(x));
        y1 = std::max(y1, static_cast<long>(y));
      }
  if (x1 < 0) return {};
  x0 = std::max(0L, x0 - margin);
  y0 = std::max(0L, y0 - margin);
  x1 = std::min(static_cast<long>(m.width) - 1, x1 + margin);
  y1 = std::min(static_cast<long>(m.height) - 1, y1 + margin);
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace cgseg
