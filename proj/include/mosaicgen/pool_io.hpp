#ifndef MOSAICGEN_POOL_IO_HPP
#define MOSAICGEN_POOL_IO_HPP

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mosaicgen/classic.hpp"
#include "mosaicgen/diffusion.hpp"
#include "mosaicgen/error.hpp"
#include "mosaicgen/image.hpp"
#include "mosaicgen/png_io.hpp"

namespace mosaicgen {

namespace fs = std::filesystem;

inline bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

inline std::vector<fs::path> sorted_pngs(const fs::path& dir, bool recursive) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  if (recursive) {
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file() && is_png(e.path())) out.push_back(e.path());
  } else {
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && is_png(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Gray is replicated to RGB; RGB is reduced to luma for gray targets.
inline Image to_channels(const Image& img, int channels) {
  if (img.channels() == channels) return img;
  if (channels == 1) return rgb_to_luma(img);
  Image out(3, img.height(), img.width());
  for (int c = 0; c < 3; ++c) std::copy(img.plane(0).begin(), img.plane(0).end(), out.plane(c).begin());
  return out;
}

/// Center crop to the target aspect ratio, then bilinear resize.
inline Image fit_to(const Image& img, int h, int w) {
  if (img.height() == h && img.width() == w) return img;
  const double target = static_cast<double>(w) / h;
  int ch = img.height();
  int cw = static_cast<int>(std::lround(ch * target));
  if (cw > img.width()) {
    cw = img.width();
    ch = std::max(1, static_cast<int>(std::lround(cw / target)));
  }
  cw = std::max(1, cw);
  const Image cropped = crop(img, (img.height() - ch) / 2, (img.width() - cw) / 2, ch, cw);
  return resize_bilinear(cropped, h, w);
}

struct PoolShape {
  int channels;
  int height;
  int width;
};

/// Exemplars are read from immediate subdirectories of `dir`; each
/// subdirectory name is the label of the PNGs inside it. Without `shape` all
/// files must already share one size.
inline ExemplarPool load_exemplar_pool(const fs::path& dir, std::optional<PoolShape> shape = std::nullopt) {
  if (!fs::is_directory(dir)) throw IoError("exemplar pool is not a directory: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<Image> images;
  std::vector<std::string> labels;
  for (const auto& sub : subdirs) {
    for (const auto& file : sorted_pngs(sub, false)) {
      Image img = load_image(file);
      if (shape) {
        img = fit_to(to_channels(img, shape->channels), shape->height, shape->width);
      } else if (!images.empty() && !img.same_shape(images.front())) {
        throw ValidationError("exemplar " + file.string() + " is " + img.shape() + ", expected " +
                              images.front().shape());
      }
      images.push_back(std::move(img));
      labels.push_back(sub.filename().string());
    }
  }
  if (images.empty()) throw ValidationError("no PNG exemplars found under labeled subdirectories of " + dir.string());
  return {std::move(images), std::move(labels)};
}

/// Every PNG below `dir`, cropped and resized to the tile size.
inline TilePool load_tile_pool(const fs::path& dir, PoolShape shape, std::optional<int> max_reuse = std::nullopt) {
  std::vector<Image> tiles;
  for (const auto& file : sorted_pngs(dir, true)) {
    tiles.push_back(fit_to(to_channels(load_image(file), shape.channels), shape.height, shape.width));
  }
  if (tiles.empty()) throw ValidationError("no PNG tiles found under " + dir.string());
  return TilePool(std::move(tiles), max_reuse);
}

}  // namespace mosaicgen

#endif  // MOSAICGEN_POOL_IO_HPP
