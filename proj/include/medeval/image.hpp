#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace medeval {

/// Interleaved 8-bit RGB, row-major, origin top-left.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* px(int x, int y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* px(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool empty() const { return width == 0 || height == 0; }
};

/// Single quantization point for the whole codebase: half-up rounding of a
/// value already scaled to [0, 255], clamped to the byte range.
std::uint8_t round_half_up_byte(double value);

/// Non-aspect-preserving stretch with align-centers sample coordinates.
RgbImage resize_bilinear(const RgbImage& src, int out_width, int out_height);

/// Box-filter (area average) downscale; falls back to bilinear when upscaling.
RgbImage resize_area(const RgbImage& src, int out_width, int out_height);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
RgbImage decode_png(const std::vector<std::uint8_t>& bytes);

struct PngHeader {
  int width = 0;
  int height = 0;
};

/// Reads IHDR without decoding pixel data.
PngHeader read_png_header(const std::vector<std::uint8_t>& bytes);

void save_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage load_png(const std::filesystem::path& path);

}  // namespace medeval
