#ifndef MOSAICGEN_DIFFUSION_HPP
#define MOSAICGEN_DIFFUSION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mosaicgen/error.hpp"
#include "mosaicgen/image.hpp"

namespace mosaicgen {

// ---------------------------------------------------------------------------
// Noise schedule

/// Linear-beta DDPM schedule. Index 0 is the clean state (alpha_bar = 1).
class NoiseSchedule {
 public:
  NoiseSchedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ValidationError("schedule needs at least one step");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
      throw ValidationError("invalid beta range: need 0 < beta_start <= beta_end < 1");
    }
    beta_.assign(steps + 1, 0.0);
    alpha_bar_.assign(steps + 1, 1.0);
    for (int t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
      beta_[t] = beta_start + frac * (beta_end - beta_start);
      alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - beta_[t]);
    }
  }

  int steps() const { return static_cast<int>(beta_.size()) - 1; }
  double beta(int t) const { return beta_.at(check(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(check(t)); }
  /// Signal coefficient sqrt(alpha_bar_t).
  double alpha(int t) const { return std::sqrt(alpha_bar(t)); }
  /// Noise coefficient sqrt(1 - alpha_bar_t).
  double sigma(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

 private:
  int check(int t) const {
    if (t < 0 || t > steps()) {
      throw ValidationError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
    }
    return t;
  }

  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

inline NoiseSchedule make_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02) {
  return {steps, beta_start, beta_end};
}

/// Evenly spaced, strictly descending subsequence ending at the first grid
/// step: round(k T / n) for k = n..1.
inline std::vector<int> inference_timesteps(const NoiseSchedule& schedule, int count) {
  const int total = schedule.steps();
  if (count < 1 || count > total) {
    throw ValidationError("inference step count must be in [1, " + std::to_string(total) + "]");
  }
  std::vector<int> ts;
  ts.reserve(count);
  for (int k = count; k >= 1; --k) {
    ts.push_back(static_cast<int>(std::lround(static_cast<double>(k) * total / count)));
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Prediction algebra

enum class Parameterization { Epsilon, V };

inline std::string to_string(Parameterization p) { return p == Parameterization::V ? "v" : "epsilon"; }

inline Parameterization parse_parameterization(const std::string& s) {
  if (s == "v") return Parameterization::V;
  if (s == "epsilon" || s == "eps") return Parameterization::Epsilon;
  throw ValidationError("unknown parameterization '" + s + "' (expected v|epsilon)");
}

inline void require_training_step(const NoiseSchedule& schedule, int t) {
  if (t < 1 || t > schedule.steps()) {
    throw ValidationError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(schedule.steps()) + "]");
  }
}

/// Clean-image estimate from a network prediction.
///   v:       x0 = alpha_t z - sigma_t pred
///   epsilon: x0 = (z - sigma_t pred) / alpha_t
inline Image predict_x0(const Image& z, const Image& pred, int t, const NoiseSchedule& schedule,
                        Parameterization param) {
  require_same_shape(z, pred, "predict_x0");
  require_training_step(schedule, t);
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  Image out(z.channels(), z.height(), z.width());
  auto& o = out.data();
  const auto& zd = z.data();
  const auto& pd = pred.data();
  if (param == Parameterization::V) {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * zd[i] - s * pd[i];
  } else {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (zd[i] - s * pd[i]) / a;
  }
  return out;
}

/// eps = (z - alpha_t x0) / sigma_t.
inline Image derive_eps(const Image& z, const Image& x0, int t, const NoiseSchedule& schedule) {
  require_same_shape(z, x0, "derive_eps");
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  if (s == 0.0) throw ValidationError("cannot derive epsilon at sigma_t = 0");
  Image out(z.channels(), z.height(), z.width());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = (z.data()[i] - a * x0.data()[i]) / s;
  return out;
}

/// Network output in the requested parameterization for a consistent (x0, eps) pair.
inline Image to_prediction(const Image& x0, const Image& eps, int t, const NoiseSchedule& schedule,
                           Parameterization param) {
  require_same_shape(x0, eps, "to_prediction");
  if (param == Parameterization::Epsilon) return eps;
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  Image out(x0.channels(), x0.height(), x0.width());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a * eps.data()[i] - s * x0.data()[i];
  return out;
}

/// d x0 / d z for a frozen prediction.
inline double x0_sensitivity(int t, const NoiseSchedule& schedule, Parameterization param) {
  return param == Parameterization::V ? schedule.alpha(t) : 1.0 / schedule.alpha(t);
}

/// Classifier-free guidance u + g (c - u). Scales 0 and 1 return an input
/// unchanged; equal branches give that branch for every g.
inline Image cfg_combine(const Image& pred_cond, const Image& pred_uncond, double scale) {
  require_same_shape(pred_cond, pred_uncond, "cfg_combine");
  if (!(scale >= 0.0)) throw ValidationError("guidance scale must be >= 0");
  if (scale == 0.0) return pred_uncond;
  if (scale == 1.0) return pred_cond;
  Image out(pred_cond.channels(), pred_cond.height(), pred_cond.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = pred_uncond.data()[i];
    out.data()[i] = u + scale * (pred_cond.data()[i] - u);
  }
  return out;
}

/// Deterministic DDIM (eta = 0): z_prev = alpha_prev x0 + sigma_prev eps.
/// With t_prev = 0 the result is x0; t_prev = t re-noises at the same level.
inline Image ddim_step(const Image& z, const Image& x0, const Image& eps, int t, int t_prev,
                       const NoiseSchedule& schedule) {
  require_same_shape(z, x0, "ddim_step");
  require_same_shape(z, eps, "ddim_step");
  if (t_prev > t || t_prev < 0) {
    throw ValidationError("ddim_step needs t >= t_prev >= 0, got " + std::to_string(t) + " -> " + std::to_string(t_prev));
  }
  require_training_step(schedule, t);
  if (t_prev == 0) return x0;
  const double a = schedule.alpha(t_prev);
  const double s = schedule.sigma(t_prev);
  Image out(z.channels(), z.height(), z.width());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a * x0.data()[i] + s * eps.data()[i];
  return out;
}

// ---------------------------------------------------------------------------
// Conditioning and denoisers

/// Unconditional when `label` is empty.
struct Condition {
  std::optional<std::string> label;
  double cfg_scale = 1.0;

  static Condition unconditional() { return {}; }
  static Condition with_label(std::string tag, double scale) { return {std::move(tag), scale}; }
};

/// Pluggable noise-prediction model.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Parameterization parameterization() const = 0;
  /// Output has z's shape; deterministic in (z, t, label).
  virtual Image predict(const Image& z, int t, const std::optional<std::string>& label) const = 0;
  /// J^T g where J = d x0 / d z of the clean-image estimate, when available.
  virtual std::optional<Image> x0_vjp(const Image& /*z*/, int /*t*/, const std::optional<std::string>& /*label*/,
                                      const Image& /*g*/) const {
    return std::nullopt;
  }
};

/// Prediction with classifier-free guidance applied. A label with scale 1
/// skips the unconditional pass.
inline Image guided_predict(const Denoiser& model, const Image& z, int t, const Condition& cond) {
  if (!cond.label) return model.predict(z, t, std::nullopt);
  if (cond.cfg_scale == 1.0) return model.predict(z, t, cond.label);
  return cfg_combine(model.predict(z, t, cond.label), model.predict(z, t, std::nullopt), cond.cfg_scale);
}

/// Labeled finite image set; the uniform distribution over it is the data prior.
class ExemplarPool {
 public:
  ExemplarPool(std::vector<Image> exemplars, std::vector<std::string> labels)
      : exemplars_(std::move(exemplars)), labels_(std::move(labels)) {
    if (exemplars_.empty()) throw ValidationError("exemplar pool is empty");
    if (labels_.size() != exemplars_.size()) throw ValidationError("exemplar pool: one label per exemplar required");
    for (const Image& e : exemplars_) require_same_shape(e, exemplars_.front(), "exemplar pool");
  }

  std::size_t size() const { return exemplars_.size(); }
  const Image& exemplar(std::size_t i) const { return exemplars_.at(i); }
  const std::vector<Image>& exemplars() const { return exemplars_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const { return labels_; }
  int channels() const { return exemplars_.front().channels(); }
  int height() const { return exemplars_.front().height(); }
  int width() const { return exemplars_.front().width(); }

  bool has_label(const std::string& tag) const { return std::find(labels_.begin(), labels_.end(), tag) != labels_.end(); }

  /// Indices selected by a label, or all of them when unconditional.
  std::vector<std::size_t> select(const std::optional<std::string>& label) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < exemplars_.size(); ++i) {
      if (!label || labels_[i] == *label) idx.push_back(i);
    }
    if (idx.empty()) throw ValidationError("no exemplars carry label '" + *label + "'");
    return idx;
  }

 private:
  std::vector<Image> exemplars_;
  std::vector<std::string> labels_;
};

struct Posterior {
  std::vector<std::size_t> indices;
  std::vector<double> weights;  // softmax over `indices`, sums to 1
  Image x0;
  Image eps;
};

/// Exact posterior over the pool given z_t = alpha_t x0 + sigma_t eps.
inline Posterior exemplar_posterior(const Image& z, int t, const std::optional<std::string>& label,
                                    const ExemplarPool& pool, const NoiseSchedule& schedule) {
  require_training_step(schedule, t);
  require_same_shape(z, pool.exemplar(0), "exemplar_posterior");
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  if (s == 0.0) throw ValidationError("exemplar denoiser undefined at sigma_t = 0");

  Posterior post;
  post.indices = pool.select(label);
  const std::size_t m = post.indices.size();
  std::vector<double> logw(m);
  const auto& zd = z.data();
  for (std::size_t j = 0; j < m; ++j) {
    const auto& e = pool.exemplar(post.indices[j]).data();
    double d2 = 0.0;
    for (std::size_t i = 0; i < zd.size(); ++i) {
      const double d = zd[i] - a * e[i];
      d2 += d * d;
    }
    logw[j] = -d2 / (2.0 * s * s);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  post.weights.resize(m);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) total += (post.weights[j] = std::exp(logw[j] - top));
  for (double& w : post.weights) w /= total;

  post.x0 = Image(z.channels(), z.height(), z.width());
  auto& x0 = post.x0.data();
  for (std::size_t j = 0; j < m; ++j) {
    const double w = post.weights[j];
    if (w == 0.0) continue;
    const auto& e = pool.exemplar(post.indices[j]).data();
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] += w * e[i];
  }
  post.eps = derive_eps(z, post.x0, t, schedule);
  return post;
}

struct DenoiseResult {
  Image x0;
  Image eps;
};

/// Posterior mean E[x0 | z_t] for the uniform prior over the selected exemplars.
inline DenoiseResult exemplar_denoise(const Image& z, int t, const Condition& cond, const ExemplarPool& pool,
                                      const NoiseSchedule& schedule) {
  Posterior p = exemplar_posterior(z, t, cond.label, pool, schedule);
  return {std::move(p.x0), std::move(p.eps)};
}

/// J^T g for the posterior mean: (alpha/sigma^2) Cov[x0 | z] g.
inline Image posterior_mean_vjp(const Posterior& post, const ExemplarPool& pool, int t, const NoiseSchedule& schedule,
                                const Image& g) {
  require_same_shape(post.x0, g, "posterior_mean_vjp");
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  const auto& mean = post.x0.data();
  const auto& gd = g.data();
  Image out(g.channels(), g.height(), g.width());
  auto& o = out.data();
  for (std::size_t j = 0; j < post.indices.size(); ++j) {
    const double w = post.weights[j];
    if (w == 0.0) continue;
    const auto& e = pool.exemplar(post.indices[j]).data();
    double proj = 0.0;
    for (std::size_t i = 0; i < gd.size(); ++i) proj += (e[i] - mean[i]) * gd[i];
    const double coef = w * proj;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += coef * (e[i] - mean[i]);
  }
  const double scale = a / (s * s);
  for (double& v : o) v *= scale;
  return out;
}

/// Closed-form Bayes denoiser over an exemplar pool. The pool is borrowed and
/// must outlive the denoiser; the schedule is copied.
class ExemplarDenoiser final : public Denoiser {
 public:
  ExemplarDenoiser(const ExemplarPool& pool, NoiseSchedule schedule, Parameterization param = Parameterization::V)
      : pool_(&pool), schedule_(std::move(schedule)), param_(param) {}
  ExemplarDenoiser(ExemplarPool&&, NoiseSchedule, Parameterization = Parameterization::V) = delete;

  Parameterization parameterization() const override { return param_; }

  Image predict(const Image& z, int t, const std::optional<std::string>& label) const override {
    const Posterior p = exemplar_posterior(z, t, label, *pool_, schedule_);
    return to_prediction(p.x0, p.eps, t, schedule_, param_);
  }

  std::optional<Image> x0_vjp(const Image& z, int t, const std::optional<std::string>& label,
                              const Image& g) const override {
    const Posterior p = exemplar_posterior(z, t, label, *pool_, schedule_);
    return posterior_mean_vjp(p, *pool_, t, schedule_, g);
  }

  Posterior posterior(const Image& z, int t, const std::optional<std::string>& label) const {
    return exemplar_posterior(z, t, label, *pool_, schedule_);
  }

  const ExemplarPool& pool() const { return *pool_; }
  const NoiseSchedule& schedule() const { return schedule_; }

 private:
  const ExemplarPool* pool_;
  NoiseSchedule schedule_;
  Parameterization param_;
};

}  // namespace mosaicgen

#endif  // MOSAICGEN_DIFFUSION_HPP
