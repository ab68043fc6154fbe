#pragma once

// 8-bit rasters, binary masks and their conversion to network tensors.

#include <cgseg/tensor.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgseg {

/// Interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c = 1, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {
    if (c != 1 && c != 3) throw std::invalid_argument("image must have 1 or 3 channels");
  }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  std::size_t pixel_count() const { return width * height; }
  bool same_size(const Image& o) const { return width == o.width && height == o.height; }
  bool operator==(const Image&) const = default;
};

/// Binary foreground map, one byte per pixel holding 0 or 1.
struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t w, std::size_t h, bool fill = false) : width(w), height(h), bits(w * h, fill ? 1 : 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return bits[y * width + x]; }
  std::size_t pixel_count() const { return width * height; }
  std::size_t foreground() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  bool operator==(const Mask&) const = default;
};

struct Rect {
  long x = 0, y = 0;
  long width = 0, height = 0;

  bool contains(long px, long py) const { return px >= x && py >= y && px < x + width && py < y + height; }
  bool empty() const { return width <= 0 || height <= 0; }
};

inline Mask complement(const Mask& m) {
  Mask out = m;
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

/// Pixel > threshold becomes foreground (single-channel images only).
inline Mask binarize(const Image& img, double threshold) {
  if (img.channels != 1) throw std::invalid_argument("binarize: expected a grayscale image");
  Mask m(img.width, img.height);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = img.pixels[i] > threshold ? 1 : 0;
  return m;
}

/// Mask as a P5-ready image with values {0, 255}.
inline Image mask_to_image(const Mask& m) {
  Image img(m.width, m.height, 1);
  for (std::size_t i = 0; i < m.bits.size(); ++i) img.pixels[i] = m.bits[i] ? 255 : 0;
  return img;
}

inline Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double v = 0.299 * img.pixels[3 * i] + 0.587 * img.pixels[3 * i + 1] + 0.114 * img.pixels[3 * i + 2];
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

/// Bilinear resize (pixel centres aligned).
inline Image resize(const Image& img, std::size_t w, std::size_t h) {
  if (img.width == w && img.height == h) return img;
  if (w == 0 || h == 0 || img.width == 0 || img.height == 0) throw std::invalid_argument("resize: empty image");
  Image out(w, h, img.channels);
  const double sx = static_cast<double>(img.width) / static_cast<double>(w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(h);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c)) +
                         wy * ((1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c));
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

/// Maps 8-bit values to [-1, 1] and lays them out as a 1xCxHxW tensor.
template <class T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> t(Shape{1, img.channels, img.height, img.width});
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        t[(c * img.height + y) * img.width + x] = static_cast<T>(img.at(x, y, c)) / T(127.5) - T{1};
  return t;
}

/// Inverse of image_to_tensor for sample `index` of an NCHW tensor; values are clamped to [-1, 1].
template <class T>
Image tensor_to_image(const Tensor<T>& t, std::size_t index = 0) {
  if (t.rank() != 4 || (t.dim(1) != 1 && t.dim(1) != 3) || index >= t.dim(0)) {
    throw ShapeError("tensor_to_image: expected Nx1xHxW or Nx3xHxW, got " + to_string(t.shape()));
  }
  const std::size_t c = t.dim(1), h = t.dim(2), w = t.dim(3);
  Image img(w, h, c);
  const std::size_t base = index * c * h * w;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double v = std::clamp(static_cast<double>(t[base + (ch * h + y) * w + x]), -1.0, 1.0);
        img.at(x, y, ch) = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
      }
  return img;
}

/// Stacks same-shaped images into one NxCxHxW tensor.
template <class T>
Tensor<T> batch_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("batch_to_tensor: empty batch");
  const Image& first = *images.front();
  Tensor<T> t(Shape{images.size(), first.channels, first.height, first.width});
  const std::size_t per = first.channels * first.height * first.width;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    if (!img.same_size(first) || img.channels != first.channels)
      throw ShapeError("batch_to_tensor: images of different sizes in one batch");
    for (std::size_t c = 0; c < img.channels; ++c)
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
          t[i * per + (c * img.height + y) * img.width + x] = static_cast<T>(img.at(x, y, c)) / T(127.5) - T{1};
  }
  return t;
}

}  // namespace cgseg
