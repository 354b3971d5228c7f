#ifndef MOSAICGEN_METRICS_HPP
#define MOSAICGEN_METRICS_HPP

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mosaicgen/error.hpp"
#include "mosaicgen/image.hpp"

namespace mosaicgen {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for unit dynamic range; identical images report the cap.
inline double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

// Separable 'valid' correlation of one plane with a normalized Gaussian window.
inline std::vector<double> filter_valid(std::span<const double> src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1;
  const int ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Mean local SSIM over the valid region, computed on luma for RGB inputs.
inline double ssim(const Image& a, const Image& b, const SsimParams& p = {}) {
  require_same_shape(a, b, "ssim");
  if (a.height() < p.window || a.width() < p.window) {
    throw ValidationError("ssim: image " + a.shape() + " smaller than the " + std::to_string(p.window) + "px window");
  }
  const Image x = to_luma(a);
  const Image y = to_luma(b);
  std::vector<double> k(p.window);
  double sum = 0.0;
  const int r = p.window / 2;
  for (int i = 0; i < p.window; ++i) sum += (k[i] = std::exp(-0.5 * (i - r) * (i - r) / (p.sigma * p.sigma)));
  for (double& v : k) v /= sum;

  const int h = x.height();
  const int w = x.width();
  const auto xs = x.plane(0);
  const auto ys = y.plane(0);
  std::vector<double> xx(xs.size()), yy(xs.size()), xy(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xx[i] = xs[i] * xs[i];
    yy[i] = ys[i] * ys[i];
    xy[i] = xs[i] * ys[i];
  }
  const auto mx = detail::filter_valid(xs, h, w, k);
  const auto my = detail::filter_valid(ys, h, w, k);
  const auto sxx = detail::filter_valid(xx, h, w, k);
  const auto syy = detail::filter_valid(yy, h, w, k);
  const auto sxy = detail::filter_valid(xy, h, w, k);

  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

/// E_k = MSE between level-k Gaussian pyramid images, k = 1..levels.
inline std::vector<double> pyramid_error(const Image& ref, const Image& mosaic, int levels = 4) {
  require_same_shape(ref, mosaic, "pyramid_error");
  const auto pa = gaussian_pyramid(ref, levels);
  const auto pb = gaussian_pyramid(mosaic, levels);
  std::vector<double> e(levels);
  for (int k = 0; k < levels; ++k) e[k] = mean_squared_error(pa[k], pb[k]);
  return e;
}

/// Integer-factor box downscale when possible, bilinear otherwise.
inline Image resize_to(const Image& img, int h, int w) {
  if (img.height() == h && img.width() == w) return img;
  if (img.height() % h == 0 && img.width() % w == 0 && img.height() / h == img.width() / w) {
    return downsample_area(img, img.height() / h);
  }
  return resize_bilinear(img, h, w);
}

/// Brings a mosaic rendered at k times the reference size back to the
/// reference grid. Non-proportional sizes are rejected.
inline Image match_reference_size(const Image& ref, const Image& mosaic) {
  if (ref.channels() != mosaic.channels()) {
    throw ValidationError("channel mismatch: reference " + ref.shape() + " vs mosaic " + mosaic.shape());
  }
  if (ref.same_shape(mosaic)) return mosaic;
  const bool proportional = mosaic.height() % ref.height() == 0 && mosaic.width() % ref.width() == 0 &&
                            mosaic.height() / ref.height() == mosaic.width() / ref.width();
  if (!proportional) {
    throw DimensionError("size mismatch: reference " + ref.shape() + " vs mosaic " + mosaic.shape() +
                         " (mosaic must equal the reference size or an integer multiple of it)");
  }
  return downsample_area(mosaic, mosaic.height() / ref.height());
}

inline const std::vector<int>& default_resolutions() {
  static const std::vector<int> r{32, 64, 128, 256};
  return r;
}

struct MetricsReport {
  std::vector<int> resolutions;
  std::map<int, double> psnr;
  std::map<int, double> ssim;
  std::vector<double> pyramid;  // E_1..E_levels
  double pyramid_sigma = kPyramidSigma;
  int reference_height = 0;
  int reference_width = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (int r : resolutions) {
      j["psnr_" + std::to_string(r)] = psnr.at(r);
      j["ssim_" + std::to_string(r)] = ssim.at(r);
    }
    for (std::size_t k = 0; k < pyramid.size(); ++k) j["pyramid_e" + std::to_string(k + 1)] = pyramid[k];
    j["pyramid_sigma"] = pyramid_sigma;
    j["resolutions"] = resolutions;
    j["reference_height"] = reference_height;
    j["reference_width"] = reference_width;
    return j;
  }
};

/// PSNR/SSIM at each square resolution plus pyramid errors at the reference's
/// native size.
inline MetricsReport eval_report(const Image& ref, const Image& mosaic,
                                 const std::vector<int>& resolutions = default_resolutions(), int levels = 4) {
  const Image native = match_reference_size(ref, mosaic);
  MetricsReport rep;
  rep.resolutions = resolutions;
  rep.reference_height = ref.height();
  rep.reference_width = ref.width();
  for (int r : resolutions) {
    if (r < 1) throw ValidationError("metric resolution must be positive");
    const Image a = resize_to(ref, r, r);
    const Image b = resize_to(mosaic, r, r);
    rep.psnr[r] = psnr(a, b);
    rep.ssim[r] = ssim(a, b);
  }
  rep.pyramid = pyramid_error(ref, native, levels);
  return rep;
}

}  // namespace mosaicgen

#endif  // MOSAICGEN_METRICS_HPP
