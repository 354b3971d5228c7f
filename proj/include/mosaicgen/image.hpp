#ifndef MOSAICGEN_IMAGE_HPP
#define MOSAICGEN_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mosaicgen/error.hpp"

namespace mosaicgen {

/// Dense planar image: channel-major, row-major within a channel.
///
/// Values are nominally in [0,1] but may leave that range while a tile is
/// being sampled; only file I/O clamps.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width) {
    if (channels < 1 || height < 1 || width < 1) {
      throw ValidationError("image dimensions must be positive, got " + shape_string(channels, height, width));
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> plane(int c) { return {data_.data() + c * pixels(), pixels()}; }
  std::span<const double> plane(int c) const { return {data_.data() + c * pixels(), pixels()}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  std::string shape() const { return shape_string(channels_, height_, width_); }

  friend bool operator==(const Image&, const Image&) = default;

  static std::string shape_string(int c, int h, int w) {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(what) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

inline bool all_finite(const Image& img) {
  return std::all_of(img.data().begin(), img.data().end(), [](double v) { return std::isfinite(v); });
}

/// Mean squared difference over every stored value.
inline double mean_squared_error(const Image& a, const Image& b) {
  require_same_shape(a, b, "mean_squared_error");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

inline Image clamp01(Image img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// ---------------------------------------------------------------------------
// Block partitioning

struct BlockGrid {
  int rows = 0;
  int cols = 0;
  int block_h = 0;
  int block_w = 0;
  std::vector<Image> blocks;  // row-major; block k sits at (k / cols, k % cols)
};

inline Image crop(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > img.height() || x0 + w > img.width()) {
    throw ValidationError("crop window out of bounds for image " + img.shape());
  }
  Image out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

/// Largest centered square crop.
inline Image center_crop_square(const Image& img) {
  const int side = std::min(img.height(), img.width());
  return crop(img, (img.height() - side) / 2, (img.width() - side) / 2, side, side);
}

/// Splits `img` into a 2^level x 2^level grid of equal blocks.
inline BlockGrid partition_blocks(const Image& img, int level) {
  if (level < 0 || level > 15) throw ValidationError("mosaic level must be in [0, 15], got " + std::to_string(level));
  const int n = 1 << level;
  if (img.height() % n != 0) {
    throw DimensionError("height " + std::to_string(img.height()) + " not divisible by 2^L = " + std::to_string(n));
  }
  if (img.width() % n != 0) {
    throw DimensionError("width " + std::to_string(img.width()) + " not divisible by 2^L = " + std::to_string(n));
  }
  BlockGrid grid{n, n, img.height() / n, img.width() / n, {}};
  grid.blocks.reserve(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r)
    for (int col = 0; col < n; ++col)
      grid.blocks.push_back(crop(img, r * grid.block_h, col * grid.block_w, grid.block_h, grid.block_w));
  return grid;
}

/// Inverse of partition_blocks. Block size is taken from the blocks themselves,
/// so a grid of generated (larger) tiles composes into a larger mosaic.
inline Image compose_grid(const BlockGrid& grid) {
  const std::size_t expected = static_cast<std::size_t>(grid.rows) * grid.cols;
  if (grid.rows < 1 || grid.cols < 1 || grid.blocks.size() != expected) {
    throw ValidationError("compose_grid: expected " + std::to_string(expected) + " blocks, got " +
                          std::to_string(grid.blocks.size()));
  }
  const Image& first = grid.blocks.front();
  for (std::size_t k = 0; k < grid.blocks.size(); ++k) {
    if (!grid.blocks[k].same_shape(first)) {
      throw ValidationError("compose_grid: block " + std::to_string(k) + " has shape " + grid.blocks[k].shape() +
                            ", expected " + first.shape());
    }
  }
  const int bh = first.height();
  const int bw = first.width();
  Image out(first.channels(), grid.rows * bh, grid.cols * bw);
  for (std::size_t k = 0; k < grid.blocks.size(); ++k) {
    const int r = static_cast<int>(k) / grid.cols;
    const int col = static_cast<int>(k) % grid.cols;
    const Image& b = grid.blocks[k];
    for (int c = 0; c < out.channels(); ++c)
      for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x) out.at(c, r * bh + y, col * bw + x) = b.at(c, y, x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian filtering

/// Normalized 1-D Gaussian taps with radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0)) throw ValidationError("blur sigma must be non-negative");
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace detail {

// Correlate a strided 1-D line with `kernel` under edge replication.
inline void blur_line(const double* in, double* out, int n, std::ptrdiff_t stride, std::span<const double> kernel,
                      std::vector<double>& pad) {
  const int r = static_cast<int>(kernel.size() / 2);
  pad.resize(static_cast<std::size_t>(n) + 2 * r);
  for (int i = 0; i < n + 2 * r; ++i) pad[i] = in[std::clamp(i - r, 0, n - 1) * stride];
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    const double* p = pad.data() + i;
    for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * p[k];
    out[i * stride] = acc;
  }
}

// Exact transpose of blur_line: scatter into the padded line, then fold the
// replicated margins back onto the edge samples.
inline void blur_line_adjoint(const double* in, double* out, int n, std::ptrdiff_t stride,
                              std::span<const double> kernel, std::vector<double>& pad) {
  const int r = static_cast<int>(kernel.size() / 2);
  pad.assign(static_cast<std::size_t>(n) + 2 * r, 0.0);
  for (int i = 0; i < n; ++i) {
    const double v = in[i * stride];
    double* p = pad.data() + i;
    for (std::size_t k = 0; k < kernel.size(); ++k) p[k] += kernel[k] * v;
  }
  std::vector<double> folded(n, 0.0);
  for (int j = 0; j < n + 2 * r; ++j) folded[std::clamp(j - r, 0, n - 1)] += pad[j];
  for (int i = 0; i < n; ++i) out[i * stride] = folded[i];
}

template <typename LineOp>
Image separable_apply(const Image& img, double sigma, LineOp op) {
  const std::vector<double> kernel = gaussian_kernel(sigma);
  if (kernel.size() == 1) return img;
  Image tmp = img;
  Image out = img;
  std::vector<double> pad;
  const int h = img.height();
  const int w = img.width();
  for (int c = 0; c < img.channels(); ++c) {
    const double* src = img.plane(c).data();
    double* mid = tmp.plane(c).data();
    double* dst = out.plane(c).data();
    for (int y = 0; y < h; ++y) op(src + static_cast<std::ptrdiff_t>(y) * w, mid + static_cast<std::ptrdiff_t>(y) * w, w, 1, kernel, pad);
    for (int x = 0; x < w; ++x) op(mid + x, dst + x, h, w, kernel, pad);
  }
  return out;
}

}  // namespace detail

/// Separable Gaussian blur, radius ceil(3 sigma), edge replication.
inline Image gaussian_blur(const Image& img, double sigma) {
  return detail::separable_apply(img, sigma, detail::blur_line);
}

/// Transpose of gaussian_blur as a linear operator. Differs from the blur
/// itself only near the borders, where replication is not symmetric.
inline Image gaussian_blur_adjoint(const Image& img, double sigma) {
  return detail::separable_apply(img, sigma, detail::blur_line_adjoint);
}

inline constexpr double kPyramidSigma = 1.0;

/// Level k (1-based) is blur-then-decimate of level k-1, keeping even indices.
inline std::vector<Image> gaussian_pyramid(const Image& img, int levels, double sigma = kPyramidSigma) {
  if (levels < 1) throw ValidationError("pyramid needs at least one level");
  const int f = 1 << levels;
  if (img.height() % f != 0 || img.width() % f != 0) {
    throw DimensionError("pyramid depth " + std::to_string(levels) + " underflows image " + img.shape() +
                         ": dimensions must be divisible by " + std::to_string(f));
  }
  std::vector<Image> out;
  out.reserve(levels);
  const Image* prev = &img;
  for (int k = 0; k < levels; ++k) {
    const Image blurred = gaussian_blur(*prev, sigma);
    Image next(blurred.channels(), blurred.height() / 2, blurred.width() / 2);
    for (int c = 0; c < next.channels(); ++c)
      for (int y = 0; y < next.height(); ++y)
        for (int x = 0; x < next.width(); ++x) next.at(c, y, x) = blurred.at(c, 2 * y, 2 * x);
    out.push_back(std::move(next));
    prev = &out.back();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

/// Bilinear resize, half-pixel centers, clamped sampling at the borders.
inline Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ValidationError("resize target must be at least 1x1");
  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      const double src = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      t[i] = {i0, std::min(i0 + 1, in - 1), src - i0};
    }
    return t;
  };
  const auto ty = taps(img.height(), out_h);
  const auto tx = taps(img.width(), out_w);
  Image out(img.channels(), out_h, out_w);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const Tap& b = tx[x];
        const double top = img.at(c, a.i0, b.i0) + b.f * (img.at(c, a.i0, b.i1) - img.at(c, a.i0, b.i0));
        const double bot = img.at(c, a.i1, b.i0) + b.f * (img.at(c, a.i1, b.i1) - img.at(c, a.i1, b.i0));
        out.at(c, y, x) = top + a.f * (bot - top);
      }
    }
  return out;
}

/// Box-average downscale by an integer factor.
inline Image downsample_area(const Image& img, int factor) {
  if (factor < 1) throw ValidationError("downsample factor must be >= 1");
  if (factor == 1) return img;
  if (img.height() % factor != 0 || img.width() % factor != 0) {
    throw DimensionError("image " + img.shape() + " not divisible by downsample factor " + std::to_string(factor));
  }
  Image out(img.channels(), img.height() / factor, img.width() / factor);
  const double norm = 1.0 / (factor * factor);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += img.at(c, y * factor + dy, x * factor + dx);
        out.at(c, y, x) = acc * norm;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Color

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

inline Image rgb_to_luma(const Image& img) {
  if (img.channels() != 3) {
    throw ValidationError("rgb_to_luma needs 3 channels, got " + std::to_string(img.channels()));
  }
  Image out(1, img.height(), img.width());
  const auto r = img.plane(0);
  const auto g = img.plane(1);
  const auto b = img.plane(2);
  auto y = out.plane(0);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
  return out;
}

/// Luma for RGB input, pass-through for single channel.
inline Image to_luma(const Image& img) { return img.channels() == 1 ? img : rgb_to_luma(img); }

}  // namespace mosaicgen

#endif  // MOSAICGEN_IMAGE_HPP
