#ifndef MOSAICGEN_RNG_HPP
#define MOSAICGEN_RNG_HPP

#include <cstdint>
#include <random>

namespace mosaicgen {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of the independent stream for (master_seed, stream_index).
constexpr std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t stream_index) {
  return mix64(mix64(master_seed) ^ mix64(stream_index + 0xA5A5A5A5ULL));
}

/// Stream index reserved for the global coarse latent.
inline constexpr std::uint64_t kCoarseStream = ~std::uint64_t{0};

class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return dist_(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace mosaicgen

#endif  // MOSAICGEN_RNG_HPP
