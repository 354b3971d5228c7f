#ifndef MOSAICGEN_PIPELINE_HPP
#define MOSAICGEN_PIPELINE_HPP

// Generative photomosaic: one coherent noise field split into per-tile
// latents, then an independent guided DDIM trajectory per tile.
//
// Per step, for tile k at timestep t:
//   1. network prediction with classifier-free guidance
//   2. x0 estimate from the prediction
//   3. AdaIN of x0 to the reference block's channel statistics
//   4. z <- z - w grad_z loss, w <- gamma w; x0 follows z with the prediction frozen
//   5. DDIM step from (x0, eps) with eps re-derived from (z, x0)
// Steps 3 and 4 can be swapped via StepOrder.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mosaicgen/coherent_noise.hpp"
#include "mosaicgen/diffusion.hpp"
#include "mosaicgen/error.hpp"
#include "mosaicgen/guidance.hpp"
#include "mosaicgen/image.hpp"
#include "mosaicgen/parallel.hpp"

namespace mosaicgen {

enum class StepOrder { AdainFirst, GuidanceFirst };

inline std::string to_string(StepOrder o) { return o == StepOrder::AdainFirst ? "adain-first" : "guidance-first"; }

inline StepOrder parse_step_order(const std::string& s) {
  if (s == "adain-first") return StepOrder::AdainFirst;
  if (s == "guidance-first") return StepOrder::GuidanceFirst;
  throw ValidationError("unknown step order '" + s + "' (expected adain-first|guidance-first)");
}

/// Label value meaning "no condition".
inline constexpr const char* kUnconditionalLabel = "unconditional";

struct MosaicConfig {
  int level = 3;
  int scale = 4;
  int steps = 50;
  int train_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double cfg_scale = 7.5;
  double w0 = 5000.0;
  double gamma = 0.95;
  std::optional<double> blur_sigma;  // unset: tile size / 8
  Objective objective = Objective::RgbMse;
  bool adain = true;
  NoiseMode noise_mode = NoiseMode::Consistent;
  Parameterization parameterization = Parameterization::V;
  JacobianMode jacobian = JacobianMode::StopGrad;
  StepOrder order = StepOrder::AdainFirst;
  bool redenoise = false;
  std::uint64_t seed = 0;
  /// One label broadcast to every tile, or one per tile in row-major order.
  std::vector<std::string> labels{kUnconditionalLabel};

  void validate() const {
    if (level < 0 || level > 10) throw ConfigError("level must be in [0, 10]");
    if (scale < 1) throw ConfigError("scale must be >= 1");
    if (train_steps < 1) throw ConfigError("train_steps must be >= 1");
    if (steps < 1 || steps > train_steps) throw ConfigError("steps must be in [1, train_steps]");
    if (!(cfg_scale >= 0.0)) throw ConfigError("cfg_scale must be >= 0");
    if (!(w0 >= 0.0)) throw ConfigError("w0 must be >= 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
    if (blur_sigma && !(*blur_sigma >= 0.0)) throw ConfigError("blur_sigma must be >= 0");
    const std::size_t tiles = std::size_t{1} << (2 * level);
    if (labels.empty() || (labels.size() != 1 && labels.size() != tiles)) {
      throw ConfigError("labels: expected 1 or " + std::to_string(tiles) + " entries, got " +
                        std::to_string(labels.size()));
    }
  }

  double resolved_blur_sigma(int tile_size) const { return blur_sigma.value_or(tile_size / 8.0); }

  Condition condition_for(std::size_t tile) const {
    const std::string& tag = labels.size() == 1 ? labels.front() : labels.at(tile);
    if (tag == kUnconditionalLabel) return Condition::unconditional();
    return Condition::with_label(tag, cfg_scale);
  }
};

struct TileLog {
  std::vector<double> losses;   // low-frequency loss at each step, before the update
  std::vector<double> weights;  // w applied at each step
  double final_weight = 0.0;    // w after the last update
  double final_loss = 0.0;      // loss of the returned tile
};

struct TileResult {
  Image tile;
  TileLog log;
};

/// Inputs shared by all tiles of a run.
struct TileContext {
  const Denoiser& model;
  const NoiseSchedule& schedule;
  const std::vector<int>& timesteps;
  const MosaicConfig& config;
};

/// Runs one guided trajectory. `block` is the reference block at native
/// resolution; it is upsampled to the latent's size for the guidance target.
inline TileResult generate_tile(const Image& block, const NoiseField& init_latent, const Condition& cond,
                                const TileContext& ctx) {
  const MosaicConfig& cfg = ctx.config;
  const NoiseSchedule& sched = ctx.schedule;
  Image z = init_latent.noise;
  if (block.channels() != z.channels()) throw ValidationError("block and latent channel counts differ");

  const Image target = (block.height() == z.height() && block.width() == z.width())
                           ? block
                           : resize_bilinear(block, z.height(), z.width());
  const ChannelStats block_stats = compute_stats(block);
  const double sigma = cfg.resolved_blur_sigma(std::min(z.height(), z.width()));
  const LowFreqObjective objective(target, sigma, cfg.objective);
  GuidanceState state(cfg.w0, cfg.gamma, sigma, cfg.objective);
  const Parameterization param = ctx.model.parameterization();

  TileResult result;
  result.log.losses.reserve(ctx.timesteps.size());
  result.log.weights.reserve(ctx.timesteps.size());
  Image x0;

  for (std::size_t i = 0; i < ctx.timesteps.size(); ++i) {
    const int t = ctx.timesteps[i];
    const int t_prev = i + 1 < ctx.timesteps.size() ? ctx.timesteps[i + 1] : 0;

    x0 = predict_x0(z, guided_predict(ctx.model, z, t, cond), t, sched, param);

    auto align = [&] {
      if (cfg.adain) x0 = adain_align(x0, block_stats);
    };
    auto steer = [&] {
      const double w = state.w();
      result.log.weights.push_back(w);
      if (w == 0.0) {
        result.log.losses.push_back(objective.loss(x0));
        ++state.updates;
        return;
      }
      double loss = 0.0;
      const Image grad = guidance_gradient(z, x0, objective, t, sched, cfg.jacobian, ctx.model, cond, &loss);
      result.log.losses.push_back(loss);
      auto [z_next, next_state] = guidance_update(z, grad, state);
      const double k = x0_sensitivity(t, sched, param);
      for (std::size_t j = 0; j < x0.size(); ++j) x0.data()[j] += k * (z_next.data()[j] - z.data()[j]);
      z = std::move(z_next);
      state = next_state;
      if (cfg.redenoise) {
        x0 = predict_x0(z, guided_predict(ctx.model, z, t, cond), t, sched, param);
        align();
      }
    };

    if (cfg.order == StepOrder::AdainFirst) {
      align();
      steer();
    } else {
      steer();
      align();
    }

    if (!all_finite(z) || !all_finite(x0)) {
      throw NumericalError("non-finite latent at step " + std::to_string(i) + " (t=" + std::to_string(t) + ")");
    }
    const Image eps = derive_eps(z, x0, t, sched);
    z = ddim_step(z, x0, eps, t, t_prev, sched);
  }

  result.tile = clamp01(std::move(z));
  result.log.final_weight = state.w();
  result.log.final_loss = objective.loss(result.tile);
  return result;
}

struct MosaicResult {
  Image mosaic;
  std::vector<Image> tiles;
  std::vector<TileLog> logs;
  MosaicConfig config;
  double wall_seconds = 0.0;
};

inline NoiseSchedule schedule_for(const MosaicConfig& cfg) {
  return {cfg.train_steps, cfg.beta_start, cfg.beta_end};
}

/// Tiles run on up to `threads` workers; output does not depend on the count.
inline MosaicResult generate_mosaic(const Image& ref, const Denoiser& model, const MosaicConfig& cfg, int threads = 1) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  const BlockGrid grid = partition_blocks(ref, cfg.level);
  const NoiseSchedule sched = schedule_for(cfg);
  const std::vector<int> timesteps = inference_timesteps(sched, cfg.steps);
  const TileLatents latents =
      init_tile_latents(ref.channels(), ref.height(), ref.width(), cfg.level, cfg.scale, cfg.seed, cfg.noise_mode);

  MosaicResult out;
  out.config = cfg;
  out.tiles.resize(grid.blocks.size());
  out.logs.resize(grid.blocks.size());
  const TileContext ctx{model, sched, timesteps, cfg};
  parallel_for(grid.blocks.size(), threads, [&](std::size_t k) {
    try {
      TileResult r = generate_tile(grid.blocks[k], latents.tiles[k], cfg.condition_for(k), ctx);
      out.tiles[k] = std::move(r.tile);
      out.logs[k] = std::move(r.log);
    } catch (const NumericalError& e) {
      throw NumericalError("tile " + std::to_string(k) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("tile " + std::to_string(k) + ": " + e.what());
    }
  });

  out.mosaic = compose_grid(BlockGrid{grid.rows, grid.cols, 0, 0, out.tiles});
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

/// Checks that the pool can serve a run: tile shape and labels.
inline void check_pool_for(const ExemplarPool& pool, const Image& ref, const MosaicConfig& cfg) {
  cfg.validate();
  const BlockGrid probe{1 << cfg.level, 1 << cfg.level, 0, 0, {}};
  if (ref.height() % probe.rows != 0 || ref.width() % probe.cols != 0) {
    throw DimensionError("reference " + ref.shape() + " not divisible by 2^L = " + std::to_string(probe.rows));
  }
  const int th = ref.height() / probe.rows * cfg.scale;
  const int tw = ref.width() / probe.cols * cfg.scale;
  if (pool.channels() != ref.channels() || pool.height() != th || pool.width() != tw) {
    throw ValidationError("exemplars are " + pool.exemplar(0).shape() + " but tiles need " +
                          Image::shape_string(ref.channels(), th, tw));
  }
  for (const std::string& tag : cfg.labels) {
    if (tag != kUnconditionalLabel && !pool.has_label(tag)) {
      throw ConfigError("label '" + tag + "' not present in the exemplar pool");
    }
  }
}

inline MosaicResult generate_mosaic(const Image& ref, const ExemplarPool& pool, const MosaicConfig& cfg,
                                    int threads = 1) {
  check_pool_for(pool, ref, cfg);
  const NoiseSchedule sched = schedule_for(cfg);
  const ExemplarDenoiser model(pool, sched, cfg.parameterization);
  return generate_mosaic(ref, model, cfg, threads);
}

}  // namespace mosaicgen

#endif  // MOSAICGEN_PIPELINE_HPP
