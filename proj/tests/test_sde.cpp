#include "otcs/sde.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace otcs;
using otcs::testing::pt;

namespace {

// Moment ODEs integrated with small RK4 steps: m' = -beta m / 2, v' = -beta v + g^2.
struct Moments {
  double scale, variance;
};

Moments integrate_moments(const SdeSpec& spec, double t) {
  auto rhs = [&](double s, double m, double v, double& dm, double& dv) {
    const double g = diffusion(spec, s);
    const double b = spec.kind == SdeKind::VP ? beta(spec, s) : 0.0;
    dm = -0.5 * b * m;
    dv = -b * v + g * g;
  };
  const int n = 20000;
  const double h = t / n;
  double m = 1.0, v = 0.0;
  for (int k = 0; k < n; ++k) {
    const double s = k * h;
    double m1, v1, m2, v2, m3, v3, m4, v4;
    rhs(s, m, v, m1, v1);
    rhs(s + h / 2, m + h / 2 * m1, v + h / 2 * v1, m2, v2);
    rhs(s + h / 2, m + h / 2 * m2, v + h / 2 * v2, m3, v3);
    rhs(s + h, m + h * m3, v + h * v3, m4, v4);
    m += h / 6 * (m1 + 2 * m2 + 2 * m3 + m4);
    v += h / 6 * (v1 + 2 * v2 + 2 * v3 + v4);
  }
  return {m, v};
}

}  // namespace

TEST(Sde, DriftAndDiffusionExamples) {
  const SdeSpec ve = SdeSpec::ve(25.0), vp = SdeSpec::vp();
  EXPECT_EQ(drift(ve, pt({3.0, -2.0}), 0.4).norm(), 0.0);
  EXPECT_NEAR(drift(vp, pt({2.0}), 0.0)(0), -0.1, 1e-15);
  EXPECT_NEAR(drift(vp, pt({1.0}), 1.0)(0), -10.0, 1e-12);
  EXPECT_EQ(diffusion(ve, 0.0), 1.0);
  EXPECT_NEAR(diffusion(ve, 1.0), 25.0, 1e-12);
  EXPECT_NEAR(diffusion(vp, 1.0), 4.4721, 1e-4);
}

TEST(Sde, KernelExamples) {
  const SdeSpec ve = SdeSpec::ve(25.0), vp = SdeSpec::vp();
  const KernelMoments k0 = perturbation_kernel(ve, pt({1.5}), 0.0);
  EXPECT_EQ(k0.mean(0), 1.5);
  EXPECT_EQ(k0.std, 0.0);
  EXPECT_NEAR(kernel_variance(ve, 1.0), 96.93, 0.01);
  EXPECT_NEAR(kernel_variance(ve, 1.0), 624.0 / (2.0 * std::log(25.0)), 1e-9);
  EXPECT_NEAR(sigma_t(ve, 1.0), 9.845, 1e-3);
  EXPECT_NEAR(vp_h(vp, 1.0), -10.05, 1e-12);
  EXPECT_NEAR(mean_scale(vp, 1.0), 6.56e-3, 2e-5);
  EXPECT_NEAR(mean_scale(vp, 1.0), std::exp(-5.025), 1e-15);
  EXPECT_NEAR(kernel_variance(vp, 1.0), 0.99996, 1e-5);
  EXPECT_NEAR(sigma_t(vp, 1.0), 0.99998, 1e-5);
  EXPECT_EQ(mean_scale(ve, 0.7), 1.0);
  EXPECT_EQ(mean_scale(vp, 0.0), 1.0);
  EXPECT_EQ(sigma_t(vp, 0.0), 0.0);
  const KernelMoments k = perturbation_kernel(vp, pt({2.0, -1.0}), 0.5);
  EXPECT_NEAR(k.mean(0), 2.0 * mean_scale(vp, 0.5), 1e-15);
  EXPECT_NEAR(k.mean(1), -mean_scale(vp, 0.5), 1e-15);
}

TEST(Sde, ClosedFormsMatchMomentOdes) {
  for (const SdeSpec& spec : {SdeSpec::ve(25.0), SdeSpec::ve(3.0), SdeSpec::vp(), SdeSpec::vp(0.5, 5.0)}) {
    for (double t : {1e-4, 0.01, 0.25, 0.5, 1.0}) {
      const Moments m = integrate_moments(spec, t);
      EXPECT_NEAR(mean_scale(spec, t), m.scale, 1e-9 * std::max(1.0, m.scale));
      EXPECT_NEAR(kernel_variance(spec, t), m.variance, 1e-8 * std::max(1.0, m.variance)) << t;
    }
  }
}

TEST(Sde, StableNearZero) {
  const SdeSpec ve = SdeSpec::ve(25.0), vp = SdeSpec::vp();
  // variance ~ g(0)^2 t for small t
  EXPECT_NEAR(kernel_variance(ve, 1e-12) / 1e-12, 1.0, 1e-6);
  EXPECT_NEAR(kernel_variance(vp, 1e-12) / 1e-12, 0.1, 1e-6);
  EXPECT_GT(sigma_t(ve, 1e-5), 0.0);
}

TEST(Sde, SigmaStrictlyIncreasingAndVpForgets) {
  for (const SdeSpec& spec : {SdeSpec::ve(25.0), SdeSpec::vp()}) {
    double prev = 0.0;
    for (int k = 1; k <= 1000; ++k) {
      const double s = sigma_t(spec, k / 1000.0);
      EXPECT_GT(s, prev);
      prev = s;
    }
  }
  EXPECT_LE(mean_scale(SdeSpec::vp(), 1.0), 0.01);
}

TEST(Sde, SimulatedForwardMomentsMatchKernel) {
  // antithetic halves: path k + paths/2 uses -z
  const Eigen::Index paths = 100000, half = paths / 2;
  const int steps = 1000;
  for (const SdeSpec& spec : {SdeSpec::ve(25.0), SdeSpec::vp()}) {
    Rng rng(77);
    const double y0 = 1.5;
    Eigen::ArrayXd y = Eigen::ArrayXd::Constant(paths, y0);
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
      const double t = k * dt;
      const double b = spec.kind == SdeKind::VP ? beta(spec, t) : 0.0;
      Eigen::ArrayXd z(paths);
      z.head(half) = standard_normal(rng, half, 1).array();
      z.tail(half) = -z.head(half);
      y += -0.5 * b * y * dt + diffusion(spec, t) * std::sqrt(dt) * z;
      const int done = k + 1;
      if (done == 250 || done == 500 || done == 1000) {
        const double tt = done * dt;
        const double mean = y.mean();
        const double var = (y - mean).square().sum() / (paths - 1);
        const double m_exact = mean_scale(spec, tt) * y0;
        const double v_exact = kernel_variance(spec, tt);
        EXPECT_LE(std::abs(mean - m_exact), 0.02 * std::abs(m_exact))
            << to_string(spec.kind) << " t=" << tt;
        EXPECT_LE(std::abs(var - v_exact), 0.02 * v_exact) << to_string(spec.kind) << " t=" << tt;
      }
    }
  }
}

TEST(Sde, PriorSamples) {
  Rng rng(3);
  const SdeSpec vp = SdeSpec::vp(), ve = SdeSpec::ve(25.0);
  Eigen::ArrayXd a(100000), b(100000);
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    a(k) = prior_sample(vp, 1, rng)(0);
    b(k) = prior_sample(ve, 1, rng)(0);
  }
  EXPECT_NEAR((a - a.mean()).square().mean(), 1.0, 0.02);
  EXPECT_NEAR((b - b.mean()).square().mean(), 96.93, 2.0);
  Rng r1(5), r2(5);
  EXPECT_TRUE(prior_sample(ve, 3, r1) == prior_sample(ve, 3, r2));
  EXPECT_NEAR(prior_std(ve), sigma_t(ve, 1.0), 1e-12);
  EXPECT_EQ(prior_std(vp), 1.0);
}

TEST(Sde, Validation) {
  EXPECT_THROW(SdeSpec::ve(1.0), Error);
  EXPECT_THROW(SdeSpec::vp(2.0, 1.0), Error);
  SdeSpec s = SdeSpec::ve(25.0);
  s.t_min = 0.0;
  EXPECT_THROW(s.validate(), Error);
  EXPECT_EQ(parse_sde_kind("vp"), SdeKind::VP);
  EXPECT_THROW(parse_sde_kind("subvp"), Error);
}
