#include "medeval/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include "medeval/common.hpp"

namespace medeval {

std::uint8_t round_half_up_byte(double value) {
  double r = std::floor(value + 0.5);
  if (r < 0.0) return 0;
  if (r > 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

RgbImage resize_bilinear(const RgbImage& src, int out_width, int out_height) {
  if (src.empty() || out_width <= 0 || out_height <= 0) {
    throw ValidationError("resize_bilinear: empty image or non-positive target size");
  }
  if (src.width == out_width && src.height == out_height) return src;

  RgbImage out(out_width, out_height);
  const double sx = static_cast<double>(src.width) / out_width;
  const double sy = static_cast<double>(src.height) / out_height;
  for (int oy = 0; oy < out_height; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_width; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      const std::uint8_t* p00 = src.px(x0, y0);
      const std::uint8_t* p10 = src.px(x1, y0);
      const std::uint8_t* p01 = src.px(x0, y1);
      const std::uint8_t* p11 = src.px(x1, y1);
      std::uint8_t* o = out.px(ox, oy);
      for (int c = 0; c < 3; ++c) {
        const double top = p00[c] * (1.0 - wx) + p10[c] * wx;
        const double bot = p01[c] * (1.0 - wx) + p11[c] * wx;
        o[c] = round_half_up_byte(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

RgbImage resize_area(const RgbImage& src, int out_width, int out_height) {
  if (src.empty() || out_width <= 0 || out_height <= 0) {
    throw ValidationError("resize_area: empty image or non-positive target size");
  }
  if (out_width > src.width || out_height > src.height) {
    return resize_bilinear(src, out_width, out_height);
  }
  if (src.width == out_width && src.height == out_height) return src;

  RgbImage out(out_width, out_height);
  const double sx = static_cast<double>(src.width) / out_width;
  const double sy = static_cast<double>(src.height) / out_height;
  for (int oy = 0; oy < out_height; ++oy) {
    const double y_lo = oy * sy;
    const double y_hi = (oy + 1) * sy;
    const int iy0 = static_cast<int>(y_lo);
    const int iy1 = std::min(static_cast<int>(std::ceil(y_hi)), src.height);
    for (int ox = 0; ox < out_width; ++ox) {
      const double x_lo = ox * sx;
      const double x_hi = (ox + 1) * sx;
      const int ix0 = static_cast<int>(x_lo);
      const int ix1 = std::min(static_cast<int>(std::ceil(x_hi)), src.width);
      double acc[3] = {0, 0, 0};
      double total = 0;
      for (int y = iy0; y < iy1; ++y) {
        const double hy = std::min<double>(y + 1, y_hi) - std::max<double>(y, y_lo);
        for (int x = ix0; x < ix1; ++x) {
          const double hx = std::min<double>(x + 1, x_hi) - std::max<double>(x, x_lo);
          const double w = hx * hy;
          const std::uint8_t* p = src.px(x, y);
          acc[0] += w * p[0];
          acc[1] += w * p[1];
          acc[2] += w * p[2];
          total += w;
        }
      }
      std::uint8_t* o = out.px(ox, oy);
      for (int c = 0; c < 3; ++c) o[c] = round_half_up_byte(acc[c] / total);
    }
  }
  return out;
}

namespace {

void png_error_handler(png_structp png, png_const_charp msg) {
  // libpng longjmps back to the caller's setjmp point after this returns.
  (void)png;
  (void)msg;
  longjmp(png_jmpbuf(png), 1);
}

struct PngWriteSink {
  std::vector<std::uint8_t>* out;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t size) {
  auto* sink = static_cast<PngWriteSink*>(png_get_io_ptr(png));
  sink->out->insert(sink->out->end(), data, data + size);
}

void png_flush_noop(png_structp) {}

struct PngReadSource {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void png_read_from_vector(png_structp png, png_bytep out, png_size_t size) {
  auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
  if (src->pos + size > src->size) {
    png_error(png, "truncated PNG stream");
  }
  std::memcpy(out, src->data + src->pos, size);
  src->pos += size;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  if (image.empty()) throw ValidationError("encode_png: empty image");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_handler, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }

  std::vector<std::uint8_t> bytes;
  PngWriteSink sink{&bytes};
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.px(0, y));
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encode failed");
  }

  png_set_write_fn(png, &sink, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return bytes;
}

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw ValidationError("decode_png: not a PNG stream");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_handler, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }

  PngReadSource src{bytes.data(), bytes.size(), 0};
  RgbImage image;
  std::vector<png_bytep> rows;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("decode_png: corrupt PNG stream");
  }

  png_set_read_fn(png, &src, png_read_from_vector);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);

  // Normalize everything to 8-bit RGB.
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  image = RgbImage(static_cast<int>(w), static_cast<int>(h));
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = image.px(0, static_cast<int>(y));
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

PngHeader read_png_header(const std::vector<std::uint8_t>& bytes) {
  // Signature (8) + IHDR length/type (8) + width/height (8 big-endian bytes).
  if (bytes.size() < 24 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw ValidationError("read_png_header: not a PNG stream");
  }
  if (std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    throw ValidationError("read_png_header: missing IHDR chunk");
  }
  auto be32 = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(bytes[off]) << 24) |
           (static_cast<std::uint32_t>(bytes[off + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[off + 3]);
  };
  return PngHeader{static_cast<int>(be32(16)), static_cast<int>(be32(20))};
}

void save_png(const std::filesystem::path& path, const RgbImage& image) {
  write_binary_file(path, encode_png(image));
}

RgbImage load_png(const std::filesystem::path& path) {
  return decode_png(read_binary_file(path));
}

}  // namespace medeval
