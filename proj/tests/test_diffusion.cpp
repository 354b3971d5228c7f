#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mosaicgen/diffusion.hpp"
#include "support.hpp"

using namespace mosaicgen;
using testing_support::gaussian_image;
using testing_support::max_abs_diff;
using testing_support::random_image;
using testing_support::rms_diff;

namespace {

ExemplarPool small_pool(int count, int c, int h, int w, std::uint64_t seed, std::vector<std::string> labels = {}) {
  std::mt19937_64 rng(seed);
  std::vector<Image> ex;
  for (int i = 0; i < count; ++i) ex.push_back(random_image(c, h, w, rng));
  if (labels.empty()) labels.assign(count, "any");
  return {std::move(ex), std::move(labels)};
}

// Posterior weights in long double, straight from the definition.
std::vector<long double> brute_weights(const Image& z, const ExemplarPool& pool, const NoiseSchedule& s, int t) {
  const long double ab = 1.0L;
  long double prod = ab;
  for (int i = 1; i <= t; ++i) prod *= 1.0L - static_cast<long double>(s.beta(i));
  const long double a = std::sqrt(prod);
  const long double var = 1.0L - prod;
  std::vector<long double> logw;
  for (std::size_t j = 0; j < pool.size(); ++j) {
    long double d2 = 0.0L;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const long double d = z.data()[i] - a * pool.exemplar(j).data()[i];
      d2 += d * d;
    }
    logw.push_back(-d2 / (2.0L * var));
  }
  const long double top = *std::max_element(logw.begin(), logw.end());
  long double total = 0.0L;
  for (auto& v : logw) total += (v = std::exp(v - top));
  for (auto& v : logw) v /= total;
  return logw;
}

}  // namespace

TEST(Schedule, SingleStep) {
  const NoiseSchedule s = make_schedule(1, 0.5, 0.5);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.5);
  EXPECT_DOUBLE_EQ(s.alpha(1), std::sqrt(0.5));
  EXPECT_DOUBLE_EQ(s.sigma(1), std::sqrt(0.5));
  EXPECT_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, DefaultGridMatchesRecomputation) {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  long double prod = 1.0L;
  for (int t = 1; t <= 1000; ++t) {
    const long double beta = 1e-4L + (t - 1) / 999.0L * (0.02L - 1e-4L);
    prod *= 1.0L - beta;
    EXPECT_NEAR(s.beta(t), static_cast<double>(beta), 1e-15);
    EXPECT_NEAR(s.alpha_bar(t), static_cast<double>(prod), 1e-12);
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GT(s.beta(t), 0.0);
    EXPECT_LT(s.beta(t), 1.0);
    EXPECT_NEAR(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t), 1.0, 1e-7);
  }
}

TEST(Schedule, ConstantBetaClosedForm) {
  const NoiseSchedule s = make_schedule(50, 0.01, 0.01);
  for (int t = 1; t <= 50; ++t) EXPECT_NEAR(s.alpha_bar(t), std::pow(0.99, t), 1e-13);
}

TEST(Schedule, InvalidRangeThrows) {
  EXPECT_THROW(make_schedule(0, 1e-4, 0.02), ValidationError);
  EXPECT_THROW(make_schedule(10, 0.0, 0.02), ValidationError);
  EXPECT_THROW(make_schedule(10, 0.03, 0.02), ValidationError);
  EXPECT_THROW(make_schedule(10, 1e-4, 1.0), ValidationError);
}

TEST(Schedule, InferenceTimesteps) {
  const NoiseSchedule s = make_schedule();
  const auto ts = inference_timesteps(s, 50);
  ASSERT_EQ(ts.size(), 50u);
  EXPECT_EQ(ts.front(), 1000);
  EXPECT_EQ(ts[1], 980);
  EXPECT_EQ(ts.back(), 20);
  for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_LT(ts[i], ts[i - 1]);
  EXPECT_THROW(inference_timesteps(s, 0), ValidationError);
  EXPECT_THROW(inference_timesteps(s, 1001), ValidationError);
}

TEST(PredictX0, EpsilonInversion) {
  const NoiseSchedule s = make_schedule();
  std::mt19937_64 rng(1);
  const Image x0 = random_image(3, 4, 4, rng);
  const Image eps = gaussian_image(3, 4, 4, rng);
  for (int t : {1, 250, 999}) {
    Image z(3, 4, 4);
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = s.alpha(t) * x0.data()[i] + s.sigma(t) * eps.data()[i];
    EXPECT_LT(max_abs_diff(predict_x0(z, eps, t, s, Parameterization::Epsilon), x0), 1e-9);
  }
}

TEST(PredictX0, VModeZeroPrediction) {
  const NoiseSchedule s = make_schedule();
  std::mt19937_64 rng(2);
  const Image z = gaussian_image(1, 3, 3, rng);
  const Image x0 = predict_x0(z, Image(1, 3, 3), 400, s, Parameterization::V);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(x0.data()[i], s.alpha(400) * z.data()[i]);
}

TEST(PredictX0, VModeForwardNoisingOracle) {
  const NoiseSchedule s = make_schedule();
  std::mt19937_64 rng(3);
  for (int t : {1, 10, 500, 1000}) {
    const Image x0 = random_image(3, 5, 5, rng);
    const Image eps = gaussian_image(3, 5, 5, rng);
    Image z(3, 5, 5), v(3, 5, 5);
    for (std::size_t i = 0; i < z.size(); ++i) {
      z.data()[i] = s.alpha(t) * x0.data()[i] + s.sigma(t) * eps.data()[i];
      v.data()[i] = s.alpha(t) * eps.data()[i] - s.sigma(t) * x0.data()[i];
    }
    EXPECT_LT(max_abs_diff(predict_x0(z, v, t, s, Parameterization::V), x0), 1e-6);
  }
}

TEST(PredictX0, RoundTripBothParameterizations) {
  const NoiseSchedule s = make_schedule();
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> tdist(1, 1000);
  for (Parameterization p : {Parameterization::V, Parameterization::Epsilon}) {
    for (int trial = 0; trial < 100; ++trial) {
      const int t = tdist(rng);
      const Image z = gaussian_image(3, 6, 6, rng);
      const Image pred = gaussian_image(3, 6, 6, rng);
      const Image x0 = predict_x0(z, pred, t, s, p);
      const Image eps = derive_eps(z, x0, t, s);
      Image back(3, 6, 6);
      for (std::size_t i = 0; i < z.size(); ++i) back.data()[i] = s.alpha(t) * x0.data()[i] + s.sigma(t) * eps.data()[i];
      EXPECT_LT(rms_diff(back, z), 1e-6);
      // prediction recovered from the pair
      EXPECT_LT(rms_diff(to_prediction(x0, eps, t, s, p), pred), 1e-6);
    }
  }
}

TEST(PredictX0, RangeErrors) {
  const NoiseSchedule s = make_schedule(100);
  const Image z(1, 2, 2);
  EXPECT_THROW(predict_x0(z, z, 0, s, Parameterization::V), ValidationError);
  EXPECT_THROW(predict_x0(z, z, 101, s, Parameterization::V), ValidationError);
  EXPECT_THROW(derive_eps(z, z, 0, s), ValidationError);
  EXPECT_THROW(predict_x0(z, Image(1, 3, 2), 5, s, Parameterization::V), ValidationError);
}

TEST(Cfg, EndpointScalesAreExact) {
  std::mt19937_64 rng(5);
  const Image c = gaussian_image(3, 4, 4, rng);
  const Image u = gaussian_image(3, 4, 4, rng);
  EXPECT_EQ(cfg_combine(c, u, 1.0), c);
  EXPECT_EQ(cfg_combine(c, u, 0.0), u);
  for (double g : {0.0, 0.5, 1.0, 7.5}) EXPECT_EQ(cfg_combine(c, c, g), c);
  const Image mid = cfg_combine(c, u, 7.5);
  EXPECT_NEAR(mid.data()[3], u.data()[3] + 7.5 * (c.data()[3] - u.data()[3]), 1e-12);
  EXPECT_THROW(cfg_combine(c, u, -1.0), ValidationError);
  EXPECT_THROW(cfg_combine(c, Image(3, 4, 5), 1.0), ValidationError);
}

TEST(Ddim, FinalStepReturnsX0) {
  const NoiseSchedule s = make_schedule();
  std::mt19937_64 rng(6);
  const Image z = gaussian_image(3, 4, 4, rng);
  const Image x0 = random_image(3, 4, 4, rng);
  const Image eps = gaussian_image(3, 4, 4, rng);
  EXPECT_EQ(ddim_step(z, x0, eps, 20, 0, s), x0);
}

TEST(Ddim, SameLevelRenoises) {
  const NoiseSchedule s = make_schedule();
  std::mt19937_64 rng(7);
  const Image z = gaussian_image(3, 4, 4, rng);
  const Image pred = gaussian_image(3, 4, 4, rng);
  const Image x0 = predict_x0(z, pred, 300, s, Parameterization::V);
  const Image eps = derive_eps(z, x0, 300, s);
  EXPECT_LT(max_abs_diff(ddim_step(z, x0, eps, 300, 300, s), z), 1e-6);
}

TEST(Ddim, IncreasingPairThrows) {
  const NoiseSchedule s = make_schedule();
  const Image z(1, 2, 2);
  EXPECT_THROW(ddim_step(z, z, z, 10, 20, s), ValidationError);
  EXPECT_THROW(ddim_step(z, z, z, 10, -1, s), ValidationError);
}

TEST(ExemplarDenoise, SingleAtom) {
  const NoiseSchedule s = make_schedule();
  const ExemplarPool pool = small_pool(1, 3, 4, 4, 8);
  std::mt19937_64 rng(9);
  for (int t : {1, 100, 1000}) {
    const DenoiseResult r = exemplar_denoise(gaussian_image(3, 4, 4, rng), t, Condition::unconditional(), pool, s);
    EXPECT_EQ(r.x0, pool.exemplar(0));
  }
}

TEST(ExemplarDenoise, EquidistantGivesMidpoint) {
  const NoiseSchedule s = make_schedule();
  const ExemplarPool pool = small_pool(2, 1, 4, 4, 10);
  const int t = 200;
  Image z(1, 4, 4);
  for (std::size_t i = 0; i < z.size(); ++i)
    z.data()[i] = s.alpha(t) * 0.5 * (pool.exemplar(0).data()[i] + pool.exemplar(1).data()[i]);
  const DenoiseResult r = exemplar_denoise(z, t, Condition::unconditional(), pool, s);
  for (std::size_t i = 0; i < z.size(); ++i)
    EXPECT_NEAR(r.x0.data()[i], 0.5 * (pool.exemplar(0).data()[i] + pool.exemplar(1).data()[i]), 1e-9);
}

TEST(ExemplarDenoise, SmallNoiseConcentratesAgainstExtendedPrecision) {
  const NoiseSchedule s = make_schedule();
  const ExemplarPool pool = small_pool(8, 3, 6, 6, 11);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t j = trial % pool.size();
    const int t = 5 + trial;
    Image z = pool.exemplar(j);
    for (double& v : z.data()) v = s.alpha(t) * v + s.sigma(t) * nd(rng);
    const Posterior post = exemplar_posterior(z, t, std::nullopt, pool, s);
    const auto oracle = brute_weights(z, pool, s, t);
    EXPECT_GT(post.weights[j], 0.99);
    EXPECT_GT(oracle[j], 0.99L);
    for (std::size_t i = 0; i < pool.size(); ++i)
      EXPECT_NEAR(post.weights[i], static_cast<double>(oracle[i]), 1e-9);
  }
}

TEST(ExemplarDenoise, WeightsFormDistributionAndMeanInHull) {
  const NoiseSchedule s = make_schedule();
  const ExemplarPool pool = small_pool(6, 3, 5, 5, 13);
  std::mt19937_64 rng(14);
  for (int t : {1, 50, 400, 1000}) {
    const Image z = gaussian_image(3, 5, 5, rng);
    const Posterior post = exemplar_posterior(z, t, std::nullopt, pool, s);
    double total = 0.0;
    for (double w : post.weights) {
      EXPECT_GE(w, 0.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
    for (std::size_t i = 0; i < z.size(); ++i) {
      double lo = 1e9, hi = -1e9;
      for (const Image& e : pool.exemplars()) {
        lo = std::min(lo, e.data()[i]);
        hi = std::max(hi, e.data()[i]);
      }
      EXPECT_GE(post.x0.data()[i], lo - 1e-12);
      EXPECT_LE(post.x0.data()[i], hi + 1e-12);
    }
  }
}

TEST(ExemplarDenoise, PureNoiseApproachesPoolMean) {
  const NoiseSchedule s = make_schedule();
  ASSERT_LT(s.alpha_bar(1000), 1e-4);
  const ExemplarPool pool = small_pool(5, 1, 4, 4, 15);
  Image mean(1, 4, 4);
  for (const Image& e : pool.exemplars())
    for (std::size_t i = 0; i < mean.size(); ++i) mean.data()[i] += e.data()[i] / pool.size();
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const DenoiseResult r =
        exemplar_denoise(gaussian_image(1, 4, 4, rng), 1000, Condition::unconditional(), pool, s);
    EXPECT_LT(max_abs_diff(r.x0, mean), 0.01);
  }
}

TEST(ExemplarDenoise, LabelSelection) {
  const NoiseSchedule s = make_schedule();
  const ExemplarPool pool = small_pool(4, 1, 3, 3, 17, {"a", "b", "a", "b"});
  std::mt19937_64 rng(18);
  const Image z = gaussian_image(1, 3, 3, rng);
  const Posterior post = exemplar_posterior(z, 10, std::string("b"), pool, s);
  EXPECT_EQ(post.indices, (std::vector<std::size_t>{1, 3}));
  EXPECT_THROW(exemplar_posterior(z, 10, std::string("c"), pool, s), ValidationError);
  EXPECT_THROW(exemplar_posterior(z, 0, std::nullopt, pool, s), ValidationError);
}

TEST(ExemplarDenoise, PoolValidation) {
  EXPECT_THROW(ExemplarPool({}, {}), ValidationError);
  EXPECT_THROW(ExemplarPool({Image(1, 2, 2)}, {"a", "b"}), ValidationError);
  EXPECT_THROW(ExemplarPool({Image(1, 2, 2), Image(1, 2, 3)}, {"a", "b"}), ValidationError);
}

TEST(ExemplarDenoise, VjpMatchesFiniteDifferences) {
  const NoiseSchedule s = make_schedule();
  const ExemplarPool pool = small_pool(4, 1, 4, 4, 19);
  const ExemplarDenoiser model(pool, s);
  std::mt19937_64 rng(20);
  for (int t : {300, 600, 900}) {
    const Image z = gaussian_image(1, 4, 4, rng);
    const Image g = gaussian_image(1, 4, 4, rng);
    const Image vjp = *model.x0_vjp(z, t, std::nullopt, g);
    const double h = 1e-5;
    for (std::size_t i = 0; i < z.size(); ++i) {
      Image zp = z, zm = z;
      zp.data()[i] += h;
      zm.data()[i] -= h;
      const Image xp = exemplar_posterior(zp, t, std::nullopt, pool, s).x0;
      const Image xm = exemplar_posterior(zm, t, std::nullopt, pool, s).x0;
      double fd = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) fd += g.data()[k] * (xp.data()[k] - xm.data()[k]) / (2 * h);
      EXPECT_NEAR(vjp.data()[i], fd, 1e-6) << "t=" << t << " i=" << i;
    }
  }
}

TEST(ExemplarDenoise, PredictionsAreConsistentWithPosterior) {
  const NoiseSchedule s = make_schedule();
  const ExemplarPool pool = small_pool(3, 3, 4, 4, 21);
  std::mt19937_64 rng(22);
  const Image z = gaussian_image(3, 4, 4, rng);
  for (Parameterization p : {Parameterization::V, Parameterization::Epsilon}) {
    const ExemplarDenoiser model(pool, s, p);
    const Image pred = model.predict(z, 350, std::nullopt);
    const Posterior post = model.posterior(z, 350, std::nullopt);
    EXPECT_LT(max_abs_diff(predict_x0(z, pred, 350, s, p), post.x0), 1e-10);
  }
}

TEST(Ddim, TrajectoryLandsOnExemplar) {
  const NoiseSchedule s = make_schedule();
  const ExemplarPool pool = small_pool(4, 1, 16, 16, 23);
  const ExemplarDenoiser model(pool, s);
  const auto ts = inference_timesteps(s, 50);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    Image z = gaussian_image(1, 16, 16, rng);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const int t = ts[i];
      const int tp = i + 1 < ts.size() ? ts[i + 1] : 0;
      const Image x0 = predict_x0(z, model.predict(z, t, std::nullopt), t, s, Parameterization::V);
      z = ddim_step(z, x0, derive_eps(z, x0, t, s), t, tp, s);
    }
    double best = 1e9;
    for (const Image& e : pool.exemplars()) best = std::min(best, rms_diff(z, e));
    EXPECT_LT(best, 1e-2) << "seed " << seed;
  }
}

TEST(GuidedPredict, MixesBranches) {
  const NoiseSchedule s = make_schedule();
  const ExemplarPool pool = small_pool(4, 1, 3, 3, 24, {"a", "b", "a", "b"});
  const ExemplarDenoiser model(pool, s);
  std::mt19937_64 rng(25);
  const Image z = gaussian_image(1, 3, 3, rng);
  const Image c = model.predict(z, 500, std::string("a"));
  const Image u = model.predict(z, 500, std::nullopt);
  EXPECT_EQ(guided_predict(model, z, 500, Condition::with_label("a", 7.5)), cfg_combine(c, u, 7.5));
  EXPECT_EQ(guided_predict(model, z, 500, Condition::with_label("a", 1.0)), c);
  EXPECT_EQ(guided_predict(model, z, 500, Condition::unconditional()), u);
}
