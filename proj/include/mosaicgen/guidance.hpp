#ifndef MOSAICGEN_GUIDANCE_HPP
#define MOSAICGEN_GUIDANCE_HPP

// Per-step tile steering: AdaIN color alignment of the x0 estimate and
// gradient descent of the latent on a blurred-image MSE.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mosaicgen/diffusion.hpp"
#include "mosaicgen/error.hpp"
#include "mosaicgen/image.hpp"

namespace mosaicgen {

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation
};

/// Two-pass per-channel mean and population std.
inline ChannelStats compute_stats(const Image& img) {
  ChannelStats s;
  const double n = static_cast<double>(img.pixels());
  for (int c = 0; c < img.channels(); ++c) {
    const auto p = img.plane(c);
    double mean = 0.0;
    for (double v : p) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : p) var += (v - mean) * (v - mean);
    s.mean.push_back(mean);
    s.stddev.push_back(std::sqrt(var / n));
  }
  return s;
}

inline constexpr double kAdainEps = 1e-6;

/// out = mu_r + sigma_r (tile - mu_t) / sigma_t per channel. A channel with
/// sigma_t <= eps becomes the constant mu_r, so the division is always safe.
inline Image adain_align(const Image& tile, const ChannelStats& target, double eps = kAdainEps) {
  if (target.mean.size() != static_cast<std::size_t>(tile.channels()) || target.stddev.size() != target.mean.size()) {
    throw ValidationError("adain_align: target has " + std::to_string(target.mean.size()) + " channels, tile has " +
                          std::to_string(tile.channels()));
  }
  const ChannelStats src = compute_stats(tile);
  Image out = tile;
  for (int c = 0; c < tile.channels(); ++c) {
    auto p = out.plane(c);
    if (src.stddev[c] <= eps) {
      for (double& v : p) v = target.mean[c];
      continue;
    }
    const double gain = target.stddev[c] / src.stddev[c];
    for (double& v : p) v = target.mean[c] + gain * (v - src.mean[c]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Low-frequency objective

enum class Objective { RgbMse, LumaMse };

inline std::string to_string(Objective o) { return o == Objective::RgbMse ? "rgb-mse" : "luma-mse"; }

inline Objective parse_objective(const std::string& s) {
  if (s == "rgb-mse") return Objective::RgbMse;
  if (s == "luma-mse") return Objective::LumaMse;
  throw ValidationError("unknown objective '" + s + "' (expected rgb-mse|luma-mse)");
}

/// Mean squared error between G(x) and G(block), optionally on luma only.
/// The blurred target is computed once.
class LowFreqObjective {
 public:
  LowFreqObjective(const Image& block, double blur_sigma, Objective objective)
      : sigma_(blur_sigma), objective_(objective), channels_(block.channels()) {
    target_ = gaussian_blur(project(block), sigma_);
  }

  double loss(const Image& x0) const {
    check(x0);
    return mean_squared_error(gaussian_blur(project(x0), sigma_), target_);
  }

  /// d loss / d x0 = (2/P) G^T (G x0 - G block), lifted back through the luma
  /// projection when needed.
  Image gradient(const Image& x0, double* loss_out = nullptr) const {
    check(x0);
    Image resid = gaussian_blur(project(x0), sigma_);
    double acc = 0.0;
    for (std::size_t i = 0; i < resid.size(); ++i) {
      resid.data()[i] -= target_.data()[i];
      acc += resid.data()[i] * resid.data()[i];
    }
    const double p = static_cast<double>(resid.size());
    if (loss_out) *loss_out = acc / p;
    Image g = gaussian_blur_adjoint(resid, sigma_);
    for (double& v : g.data()) v *= 2.0 / p;
    if (!luma_active()) return g;
    Image lifted(3, x0.height(), x0.width());
    const double coef[3] = {kLumaR, kLumaG, kLumaB};
    const auto gy = g.plane(0);
    for (int c = 0; c < 3; ++c) {
      auto dst = lifted.plane(c);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = coef[c] * gy[i];
    }
    return lifted;
  }

  double blur_sigma() const { return sigma_; }
  Objective objective() const { return objective_; }

 private:
  bool luma_active() const { return objective_ == Objective::LumaMse && channels_ == 3; }
  Image project(const Image& img) const { return luma_active() ? rgb_to_luma(img) : img; }
  void check(const Image& x0) const {
    if (x0.channels() != channels_ || x0.height() != target_.height() || x0.width() != target_.width()) {
      throw ValidationError("lowfreq objective: tile " + x0.shape() + " does not match block of " +
                            std::to_string(channels_) + " channels at " + std::to_string(target_.height()) + "x" +
                            std::to_string(target_.width()));
    }
  }

  double sigma_;
  Objective objective_;
  int channels_;
  Image target_;
};

/// `block` must already be at tile resolution.
inline double lowfreq_loss(const Image& tile_x0, const Image& block, double blur_sigma, Objective objective) {
  require_same_shape(tile_x0, block, "lowfreq_loss");
  return LowFreqObjective(block, blur_sigma, objective).loss(tile_x0);
}

// ---------------------------------------------------------------------------
// Latent update

/// Step size w = w0 gamma^n after n updates.
struct GuidanceState {
  double w0 = 0.0;
  double gamma = 1.0;
  int updates = 0;
  double blur_sigma = 1.0;
  Objective objective = Objective::RgbMse;

  GuidanceState() = default;
  GuidanceState(double initial_w, double decay, double sigma, Objective obj)
      : w0(initial_w), gamma(decay), blur_sigma(sigma), objective(obj) {
    if (!(initial_w >= 0.0)) throw ValidationError("guidance weight must be >= 0");
    if (!(decay > 0.0 && decay <= 1.0)) throw ValidationError("guidance decay must be in (0, 1]");
    if (!(sigma >= 0.0)) throw ValidationError("blur sigma must be >= 0");
  }

  double w() const { return w0 * std::pow(gamma, updates); }
};

enum class JacobianMode { StopGrad, Exact };

inline std::string to_string(JacobianMode m) { return m == JacobianMode::StopGrad ? "stop-grad" : "exact"; }

inline JacobianMode parse_jacobian_mode(const std::string& s) {
  if (s == "stop-grad") return JacobianMode::StopGrad;
  if (s == "exact") return JacobianMode::Exact;
  throw ValidationError("unknown jacobian mode '" + s + "' (expected stop-grad|exact)");
}

/// grad_z loss. Stop-grad treats the network output as constant, so
/// d x0 / d z is the scalar x0_sensitivity. Exact mode asks the denoiser for
/// J^T g, mixing the two CFG branches with weights (1-g, g).
inline Image guidance_gradient(const Image& z, const Image& x0_hat, const LowFreqObjective& objective, int t,
                               const NoiseSchedule& schedule, JacobianMode mode, const Denoiser& model,
                               const Condition& cond, double* loss_out = nullptr) {
  require_same_shape(z, x0_hat, "guidance_gradient");
  Image g = objective.gradient(x0_hat, loss_out);
  if (mode == JacobianMode::StopGrad) {
    const double k = x0_sensitivity(t, schedule, model.parameterization());
    for (double& v : g.data()) v *= k;
    return g;
  }
  auto vjp = [&](const std::optional<std::string>& label) {
    auto r = model.x0_vjp(z, t, label, g);
    if (!r) throw ValidationError("exact jacobian mode needs a denoiser with an analytic Jacobian");
    return std::move(*r);
  };
  if (!cond.label) return vjp(std::nullopt);
  if (cond.cfg_scale == 1.0) return vjp(cond.label);
  Image cond_part = vjp(cond.label);
  Image uncond_part = vjp(std::nullopt);
  return cfg_combine(cond_part, uncond_part, cond.cfg_scale);
}

/// z' = z - w grad, then w <- gamma w.
inline std::pair<Image, GuidanceState> guidance_update(const Image& z, const Image& grad, const GuidanceState& state) {
  require_same_shape(z, grad, "guidance_update");
  Image out = z;
  const double w = state.w();
  if (w != 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= w * grad.data()[i];
  }
  GuidanceState next = state;
  ++next.updates;
  return {std::move(out), next};
}

}  // namespace mosaicgen

#endif  // MOSAICGEN_GUIDANCE_HPP
