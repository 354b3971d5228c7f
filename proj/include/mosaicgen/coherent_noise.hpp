#ifndef MOSAICGEN_COHERENT_NOISE_HPP
#define MOSAICGEN_COHERENT_NOISE_HPP

// Integral-preserving noise upsampling. Each coarse value X is expanded to an
// s x s block W whose sum is exactly X:
//
//   W = (X/N) u + r(Z),      Z ~ N(0, I_N),  N = s^2,
//   r(Z) = (Z - mean(Z) u) / sqrt(N)   ("literal")
//   r(Z) =  Z - mean(Z) u              ("consistent", default)
//
// followed by rescaling of the zero-sum residual by 1/sqrt(1 - 1/N).
// Only "consistent" ends with unit conditional variance per fine pixel; the
// literal residual has variance (N-1)/N^2 and is kept for comparison.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mosaicgen/error.hpp"
#include "mosaicgen/image.hpp"
#include "mosaicgen/rng.hpp"

namespace mosaicgen {

enum class NoiseMode { Literal, Consistent };

inline std::string to_string(NoiseMode m) { return m == NoiseMode::Literal ? "literal" : "consistent"; }

inline NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "literal") return NoiseMode::Literal;
  if (s == "consistent") return NoiseMode::Consistent;
  throw ValidationError("unknown noise mode '" + s + "' (expected literal|consistent)");
}

struct CoarseLatent {
  Image noise;
  std::uint64_t seed = 0;
};

struct NoiseField {
  Image noise;
  int block_size = 1;
  NoiseMode mode = NoiseMode::Consistent;
  bool variance_normalized = false;
};

/// i.i.d. standard normal coarse field.
inline CoarseLatent sample_coarse(int channels, int height, int width, std::uint64_t seed) {
  CoarseLatent out{Image(channels, height, width), seed};
  NormalStream rng(seed);
  for (double& v : out.noise.data()) v = rng();
  return out;
}

/// Expands one coarse value X with the given standard-normal draws `z`.
inline void expand_block(double coarse, std::span<const double> z, NoiseMode mode, std::span<double> out) {
  const std::size_t n = z.size();
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(n);
  const double base = coarse / static_cast<double>(n);
  const double scale = mode == NoiseMode::Literal ? 1.0 / std::sqrt(static_cast<double>(n)) : 1.0;
  for (std::size_t i = 0; i < n; ++i) out[i] = base + scale * (z[i] - mean);
}

/// Rescales the zero-sum residual of one block in place. No-op for N = 1.
inline void normalize_block(double coarse, std::span<double> w) {
  const std::size_t n = w.size();
  if (n < 2) return;
  const double base = coarse / static_cast<double>(n);
  const double gain = 1.0 / std::sqrt(1.0 - 1.0 / static_cast<double>(n));
  for (double& v : w) v = base + gain * (v - base);
}

namespace detail {

template <typename BlockFn>
void for_each_coarse_pixel(const Image& coarse, BlockFn fn) {
  for (int c = 0; c < coarse.channels(); ++c)
    for (int y = 0; y < coarse.height(); ++y)
      for (int x = 0; x < coarse.width(); ++x) fn(c, y, x);
}

inline void gather_block(const Image& fine, int c, int y, int x, int s, std::span<double> out) {
  for (int dy = 0; dy < s; ++dy)
    for (int dx = 0; dx < s; ++dx) out[dy * s + dx] = fine.at(c, y * s + dy, x * s + dx);
}

inline void scatter_block(Image& fine, int c, int y, int x, int s, std::span<const double> in) {
  for (int dy = 0; dy < s; ++dy)
    for (int dx = 0; dx < s; ++dx) fine.at(c, y * s + dy, x * s + dx) = in[dy * s + dx];
}

}  // namespace detail

/// Expands every coarse pixel into an s x s block. Draws are consumed per
/// coarse pixel in channel-major, row-major order.
inline NoiseField subsample_noise(const CoarseLatent& coarse, int s, NormalStream& rng,
                                  NoiseMode mode = NoiseMode::Consistent) {
  if (s < 1) throw ValidationError("scale factor must be >= 1, got " + std::to_string(s));
  if (s == 1) return {coarse.noise, 1, mode, false};
  const Image& x = coarse.noise;
  NoiseField out{Image(x.channels(), x.height() * s, x.width() * s), s, mode, false};
  const std::size_t n = static_cast<std::size_t>(s) * s;
  std::vector<double> z(n), w(n);
  detail::for_each_coarse_pixel(x, [&](int c, int yy, int xx) {
    for (double& v : z) v = rng();
    expand_block(x.at(c, yy, xx), z, mode, w);
    detail::scatter_block(out.noise, c, yy, xx, s, w);
  });
  return out;
}

/// Zero-sum-subspace variance normalization. With N = 1 the correction is
/// singular and the field is returned unchanged (variance_normalized stays false).
inline NoiseField normalize_variance(const NoiseField& field, const CoarseLatent& coarse) {
  const int s = field.block_size;
  const Image& x = coarse.noise;
  if (field.noise.channels() != x.channels() || field.noise.height() != x.height() * s ||
      field.noise.width() != x.width() * s) {
    throw ValidationError("normalize_variance: field " + field.noise.shape() + " does not match coarse " +
                          x.shape() + " at scale " + std::to_string(s));
  }
  if (s == 1) return field;
  NoiseField out = field;
  const std::size_t n = static_cast<std::size_t>(s) * s;
  std::vector<double> w(n);
  detail::for_each_coarse_pixel(x, [&](int c, int yy, int xx) {
    detail::gather_block(out.noise, c, yy, xx, s, w);
    normalize_block(x.at(c, yy, xx), w);
    detail::scatter_block(out.noise, c, yy, xx, s, w);
  });
  out.variance_normalized = true;
  return out;
}

/// Maps (master_seed, tile_index) to the seed of that tile's stream.
using StreamSeeder = std::function<std::uint64_t(std::uint64_t master_seed, std::uint64_t tile_index)>;

inline std::uint64_t default_tile_seed(std::uint64_t master_seed, std::uint64_t tile_index) {
  return derive_stream_seed(master_seed, tile_index);
}

struct TileLatents {
  CoarseLatent coarse;
  std::vector<NoiseField> tiles;  // row-major over the 2^L x 2^L grid
};

/// Samples one coarse field at reference resolution and expands each of the
/// 4^L blocks with its own derived stream, so tiles are independent of
/// evaluation order.
inline TileLatents init_tile_latents(int channels, int height, int width, int level, int s, std::uint64_t master_seed,
                                     NoiseMode mode = NoiseMode::Consistent,
                                     const StreamSeeder& seeder = default_tile_seed) {
  TileLatents out;
  out.coarse = sample_coarse(channels, height, width, derive_stream_seed(master_seed, kCoarseStream));
  const BlockGrid grid = partition_blocks(out.coarse.noise, level);
  out.tiles.reserve(grid.blocks.size());
  for (std::size_t k = 0; k < grid.blocks.size(); ++k) {
    const CoarseLatent block{grid.blocks[k], seeder(master_seed, k)};
    NormalStream rng(block.seed);
    out.tiles.push_back(normalize_variance(subsample_noise(block, s, rng, mode), block));
  }
  return out;
}

}  // namespace mosaicgen

#endif  // MOSAICGEN_COHERENT_NOISE_HPP
