#ifndef MOSAICGEN_CLASSIC_HPP
#define MOSAICGEN_CLASSIC_HPP

// Retrieval photomosaic baseline: nearest tile by sum of squared differences,
// optionally followed by a tone or histogram adjustment toward the block.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mosaicgen/error.hpp"
#include "mosaicgen/guidance.hpp"
#include "mosaicgen/image.hpp"

namespace mosaicgen {

class TilePool {
 public:
  explicit TilePool(std::vector<Image> tiles, std::optional<int> max_reuse = std::nullopt)
      : tiles_(std::move(tiles)), usage_(tiles_.size(), 0), max_reuse_(max_reuse) {
    if (tiles_.empty()) throw ValidationError("tile pool is empty");
    for (const Image& t : tiles_) require_same_shape(t, tiles_.front(), "tile pool");
    if (max_reuse_ && *max_reuse_ < 1) throw ValidationError("max_reuse must be >= 1");
  }

  std::size_t size() const { return tiles_.size(); }
  const Image& tile(std::size_t i) const { return tiles_.at(i); }
  const Image& front() const { return tiles_.front(); }
  int usage(std::size_t i) const { return usage_.at(i); }
  const std::vector<int>& usage_counts() const { return usage_; }
  std::optional<int> max_reuse() const { return max_reuse_; }

  bool eligible(std::size_t i) const { return !max_reuse_ || usage_[i] < *max_reuse_; }
  void record_use(std::size_t i) { ++usage_.at(i); }
  void reset_usage() { std::fill(usage_.begin(), usage_.end(), 0); }

 private:
  std::vector<Image> tiles_;
  std::vector<int> usage_;
  std::optional<int> max_reuse_;
};

struct TileMatch {
  std::size_t index = 0;
  double distance = 0.0;  // sum of squared differences
};

inline double squared_distance(const Image& a, const Image& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return acc;
}

/// Nearest eligible tile; ties go to the lowest index. Bumps the winner's usage.
inline TileMatch match_tile(const Image& block, TilePool& pool) {
  require_same_shape(block, pool.front(), "match_tile");
  std::optional<TileMatch> best;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!pool.eligible(i)) continue;
    const double d = squared_distance(block, pool.tile(i));
    if (!best || d < best->distance) best = TileMatch{i, d};
  }
  if (!best) throw ValidationError("no eligible tile remains in the pool (max_reuse exhausted)");
  pool.record_use(best->index);
  return *best;
}

/// Mean/std transfer toward the block's statistics, clamped to [0,1].
inline Image tone_map(const Image& tile, const Image& block) {
  require_same_shape(tile, block, "tone_map");
  return clamp01(adain_align(tile, compute_stats(block)));
}

inline constexpr int kHistogramBins = 256;

inline int histogram_bin(double v) {
  return static_cast<int>(std::clamp<long>(std::lround(v * (kHistogramBins - 1)), 0, kHistogramBins - 1));
}

inline std::array<std::int64_t, kHistogramBins> histogram(std::span<const double> values) {
  std::array<std::int64_t, kHistogramBins> h{};
  for (double v : values) ++h[histogram_bin(v)];
  return h;
}

/// Per-channel CDF matching on 256 bins. Source bin b is mapped through the
/// midpoint of its CDF step, C_s(b-1) + m_b/2, to the lowest target bin whose
/// CDF reaches it; output values are bin centers j/255. Comparisons are done
/// in integer counts.
inline Image histogram_match(const Image& tile, const Image& block) {
  if (tile.channels() != block.channels()) {
    throw ValidationError("histogram_match: channel count mismatch");
  }
  Image out = tile;
  const std::int64_t ns = static_cast<std::int64_t>(tile.pixels());
  const std::int64_t nt = static_cast<std::int64_t>(block.pixels());
  for (int c = 0; c < tile.channels(); ++c) {
    const auto hs = histogram(tile.plane(c));
    const auto ht = histogram(block.plane(c));
    std::array<std::int64_t, kHistogramBins> ct{};
    std::int64_t run = 0;
    for (int j = 0; j < kHistogramBins; ++j) ct[j] = (run += ht[j]);

    std::array<int, kHistogramBins> lut{};
    std::int64_t below = 0;
    int j = 0;
    for (int b = 0; b < kHistogramBins; ++b) {
      // smallest j with ct[j] / nt >= (below + hs[b] / 2) / ns
      const std::int64_t num = 2 * below + hs[b];
      while (j < kHistogramBins - 1 && 2 * ct[j] * ns < num * nt) ++j;
      lut[b] = j;
      below += hs[b];
    }
    for (double& v : out.plane(c)) v = lut[histogram_bin(v)] / static_cast<double>(kHistogramBins - 1);
  }
  return out;
}

enum class Adjust { None, Tone, Histogram };

inline std::string to_string(Adjust a) {
  switch (a) {
    case Adjust::None: return "none";
    case Adjust::Tone: return "tone";
    case Adjust::Histogram: return "histogram";
  }
  return "none";
}

inline Adjust parse_adjust(const std::string& s) {
  if (s == "none") return Adjust::None;
  if (s == "tone") return Adjust::Tone;
  if (s == "histogram") return Adjust::Histogram;
  throw ValidationError("unknown adjustment '" + s + "' (expected none|tone|histogram)");
}

struct ClassicResult {
  Image mosaic;
  std::vector<TileMatch> matches;  // one per block, row-major
};

/// Blocks are visited row-major; each is resized to the pool tile shape,
/// matched, adjusted and placed.
inline ClassicResult classic_mosaic(const Image& ref, TilePool& pool, int level, Adjust adjust) {
  BlockGrid grid = partition_blocks(ref, level);
  const Image& proto = pool.front();
  if (proto.channels() != ref.channels()) {
    throw ValidationError("pool tiles have " + std::to_string(proto.channels()) + " channels, reference has " +
                          std::to_string(ref.channels()));
  }
  ClassicResult result;
  result.matches.reserve(grid.blocks.size());
  for (Image& block : grid.blocks) {
    const Image target = (block.height() == proto.height() && block.width() == proto.width())
                             ? block
                             : resize_bilinear(block, proto.height(), proto.width());
    const TileMatch m = match_tile(target, pool);
    result.matches.push_back(m);
    switch (adjust) {
      case Adjust::None: block = pool.tile(m.index); break;
      case Adjust::Tone: block = tone_map(pool.tile(m.index), target); break;
      case Adjust::Histogram: block = histogram_match(pool.tile(m.index), target); break;
    }
  }
  result.mosaic = compose_grid(grid);
  return result;
}

}  // namespace mosaicgen

#endif  // MOSAICGEN_CLASSIC_HPP
