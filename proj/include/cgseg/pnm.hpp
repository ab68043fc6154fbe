#pragma once

// Binary PGM (P5) and PPM (P6) with maxval 255.

#include <cgseg/errors.hpp>
#include <cgseg/image.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace cgseg {

inline Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) {
    throw DataError("malformed PNM header at byte offset " + std::to_string(pos) + ": " + msg);
  };
  if (bytes.size() < 2 || bytes[0] != 'P') fail("missing 'P' magic");
  std::size_t channels = 0;
  switch (bytes[1]) {
    case '5': channels = 1; break;
    case '6': channels = 3; break;
    case '2':
    case '3': throw DataError("ASCII PNM variants (P2/P3) are not supported");
    default: pos = 1; fail("unsupported magic");
  }
  pos = 2;
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* field) {
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
      if (pos < bytes.size() && bytes[pos] != '#') fail(std::string("expected whitespace before ") + field);
    }
    skip();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail(std::string("expected ") + field);
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 24)) fail(std::string(field) + " too large");
      ++pos;
    }
    return v;
  };
  const std::size_t w = number("width");
  const std::size_t h = number("height");
  const std::size_t maxval = number("maxval");
  if (w == 0 || h == 0) fail("zero image dimension");
  if (maxval != 255) throw DataError("unsupported PNM maxval " + std::to_string(maxval) + " (only 255)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("expected single whitespace before raster");
  ++pos;
  const std::size_t need = w * h * channels;
  if (bytes.size() - pos < need) {
    throw DataError("truncated PNM raster: need " + std::to_string(need) + " bytes at offset " + std::to_string(pos) +
                    ", have " + std::to_string(bytes.size() - pos));
  }
  Image img(w, h, channels);
  std::copy_n(bytes.begin() + static_cast<long>(pos), need, img.pixels.begin());
  return img;
}

inline std::vector<std::uint8_t> encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("encode_pnm: 1 or 3 channels required");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

inline Image read_pnm(const std::filesystem::path& path) {
  try {
    return decode_pnm(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_pnm(const std::filesystem::path& path, const Image& img) { write_file_bytes(path, encode_pnm(img)); }

inline Mask read_mask(const std::filesystem::path& path) {
  const Image img = read_pnm(path);
  if (img.channels != 1) throw DataError(path.string() + ": mask must be a P5 image");
  return binarize(img, 127);
}

inline void write_mask(const std::filesystem::path& path, const Mask& m) { write_pnm(path, mask_to_image(m)); }

}  // namespace cgseg
