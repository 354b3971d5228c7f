#ifndef MOSAICGEN_SAMPLES_HPP
#define MOSAICGEN_SAMPLES_HPP

// Procedural sample assets: a smooth reference scene and labeled texture
// exemplars. Used by the bundled assets, the tests and `mosaicgen samples`.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mosaicgen/diffusion.hpp"
#include "mosaicgen/image.hpp"

namespace mosaicgen {

/// Sky gradient, a sun, two hills and a lake.
inline Image make_reference(int height, int width) {
  Image img(3, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      const double v = (y + 0.5) / height;
      std::array<double, 3> rgb{0.35 + 0.3 * v, 0.55 + 0.25 * v, 0.95 - 0.2 * v};
      const double sun = std::hypot(u - 0.72, v - 0.25);
      if (sun < 0.12) rgb = {1.0, 0.85, 0.3};
      const double hill1 = 0.62 + 0.10 * std::sin(2.0 * std::numbers::pi * (u * 0.9 + 0.1));
      const double hill2 = 0.72 + 0.06 * std::cos(2.0 * std::numbers::pi * (u * 1.4));
      if (v > hill1) rgb = {0.20 + 0.2 * u, 0.55 - 0.15 * v, 0.20};
      if (v > hill2) rgb = {0.45, 0.30 + 0.1 * u, 0.15};
      if (v > 0.86 && u > 0.15 && u < 0.65) rgb = {0.15, 0.35, 0.6 + 0.2 * u};
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(rgb[c], 0.0, 1.0);
    }
  return img;
}

inline const std::vector<std::string>& sample_labels() {
  static const std::vector<std::string> l{"checker", "dots", "stripes", "waves"};
  return l;
}

/// One texture of the given family with random palette, orientation and a
/// random low-frequency shading ramp.
inline Image make_texture(const std::string& family, int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<double, 3> a{}, b{};
  for (int c = 0; c < 3; ++c) {
    a[c] = unit(rng);
    b[c] = unit(rng);
  }
  const double angle = unit(rng) * std::numbers::pi;
  const double freq = 3.0 + 6.0 * unit(rng);
  const double ramp_angle = unit(rng) * 2.0 * std::numbers::pi;
  const double ramp = 0.5 * unit(rng);
  const double ca = std::cos(angle), sa = std::sin(angle);
  Image img(3, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width - 0.5;
      const double v = (y + 0.5) / height - 0.5;
      const double p = ca * u + sa * v;
      const double q = -sa * u + ca * v;
      double mix = 0.0;
      if (family == "stripes") {
        mix = std::sin(2.0 * std::numbers::pi * freq * p) > 0 ? 1.0 : 0.0;
      } else if (family == "checker") {
        mix = (static_cast<int>(std::floor(freq * (p + 1.0))) + static_cast<int>(std::floor(freq * (q + 1.0)))) % 2;
      } else if (family == "dots") {
        const double fx = freq * (p + 1.0) - std::floor(freq * (p + 1.0)) - 0.5;
        const double fy = freq * (q + 1.0) - std::floor(freq * (q + 1.0)) - 0.5;
        mix = std::hypot(fx, fy) < 0.3 ? 1.0 : 0.0;
      } else {
        mix = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (freq * p + 0.15 * std::sin(2.0 * std::numbers::pi * 2.0 * q)));
      }
      const double shade = 1.0 + ramp * (std::cos(ramp_angle) * u + std::sin(ramp_angle) * v) * 2.0;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp((a[c] + mix * (b[c] - a[c])) * shade, 0.0, 1.0);
    }
  return img;
}

/// `per_label` textures for each label, in label order.
inline ExemplarPool make_exemplar_pool(int per_label, int height, int width, std::uint64_t seed,
                                       const std::vector<std::string>& labels = sample_labels()) {
  std::mt19937_64 rng(seed);
  std::vector<Image> images;
  std::vector<std::string> tags;
  for (const auto& label : labels)
    for (int i = 0; i < per_label; ++i) {
      images.push_back(make_texture(label, height, width, rng));
      tags.push_back(label);
    }
  return {std::move(images), std::move(tags)};
}

}  // namespace mosaicgen

#endif  // MOSAICGEN_SAMPLES_HPP
