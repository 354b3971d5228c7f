#ifndef MOSAICGEN_PNG_IO_HPP
#define MOSAICGEN_PNG_IO_HPP

// 8-bit PNG load/save on top of libpng. Consumers must link PNG::PNG.

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "mosaicgen/error.hpp"
#include "mosaicgen/image.hpp"

namespace mosaicgen {

inline std::uint8_t quantize_u8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

/// Loads an 8-bit gray or RGB PNG; bytes map to b/255. Palette images are
/// expanded to RGB, an alpha channel is dropped with a warning on stderr.
inline Image load_image(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open image " + path.string());

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_byte> rows;
  volatile int channels = 0;
  png_uint_32 w = 0, h = 0;
  std::vector<png_bytep> ptrs;
  volatile bool dropped_alpha = false;
  volatile bool bad_depth = false;
  volatile int depth = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unreadable PNG " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  } else if (depth != 8) {
    bad_depth = true;
  }
  if (!bad_depth) {
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
      png_set_tRNS_to_alpha(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
      png_set_strip_alpha(png);
      dropped_alpha = true;
    }
    png_read_update_info(png, info);
    channels = png_get_channels(png, info);
    const int ch = channels;
    rows.resize(static_cast<std::size_t>(w) * h * ch);
    ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) ptrs[y] = rows.data() + static_cast<std::size_t>(y) * w * ch;
    png_read_image(png, ptrs.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);

  if (bad_depth) {
    throw IoError("unsupported bit depth " + std::to_string(static_cast<int>(depth)) + " in " + path.string() + " (8-bit only)");
  }
  if (channels != 1 && channels != 3) {
    throw IoError("unsupported channel layout in " + path.string());
  }
  if (dropped_alpha) std::cerr << "warning: alpha channel dropped from " << path.string() << "\n";

  const int nch = channels;
  Image img(nch, static_cast<int>(h), static_cast<int>(w));
  for (int c = 0; c < nch; ++c)
    for (png_uint_32 y = 0; y < h; ++y)
      for (png_uint_32 x = 0; x < w; ++x)
        img.at(c, static_cast<int>(y), static_cast<int>(x)) =
            rows[(static_cast<std::size_t>(y) * w + x) * nch + c] / 255.0;
  return img;
}

/// Clamps to [0,1], rounds to nearest byte, and writes gray or RGB.
inline void save_image(const Image& img, const std::filesystem::path& path) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw ValidationError("save_image supports 1 or 3 channels, got " + std::to_string(img.channels()));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write image " + path.string());

  const int c = img.channels();
  const int w = img.width();
  const int h = img.height();
  std::vector<png_byte> rows(static_cast<std::size_t>(w) * h * c);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) rows[(static_cast<std::size_t>(y) * w + x) * c + ch] = quantize_u8(img.at(ch, y, x));

  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> ptrs(h);
  for (int y = 0; y < h; ++y) ptrs[y] = rows.data() + static_cast<std::size_t>(y) * w * c;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mosaicgen

#endif  // MOSAICGEN_PNG_IO_HPP
