#ifndef MOSAICGEN_TESTS_SUPPORT_HPP
#define MOSAICGEN_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "mosaicgen/image.hpp"

namespace testing_support {

inline mosaicgen::Image random_image(int c, int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  mosaicgen::Image img(c, h, w);
  for (double& v : img.data()) v = u(rng);
  return img;
}

inline mosaicgen::Image gaussian_image(int c, int h, int w, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  mosaicgen::Image img(c, h, w);
  for (double& v : img.data()) v = n(rng);
  return img;
}

inline double max_abs_diff(const mosaicgen::Image& a, const mosaicgen::Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double rms_diff(const mosaicgen::Image& a, const mosaicgen::Image& b) {
  return std::sqrt(mosaicgen::mean_squared_error(a, b));
}

// Direct 2-D convolution with the outer-product kernel under edge replication.
inline mosaicgen::Image dense_blur(const mosaicgen::Image& img, double sigma) {
  const auto k = mosaicgen::gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size()) / 2;
  mosaicgen::Image out(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = std::clamp(y + dy, 0, img.height() - 1);
            const int xx = std::clamp(x + dx, 0, img.width() - 1);
            acc += k[dy + r] * k[dx + r] * img.at(c, yy, xx);
          }
        out.at(c, y, x) = acc;
      }
  return out;
}

}  // namespace testing_support

#endif
