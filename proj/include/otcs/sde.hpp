#pragma once

#include "otcs/common.hpp"
#include "otcs/random.hpp"

#include <string>

namespace otcs {

enum class SdeKind { VE, VP };

const char* to_string(SdeKind kind);
SdeKind parse_sde_kind(const std::string& s);

/// Forward SDE family on [0, T] with T = 1.
///   VE: f = 0,              g(t) = alpha^t
///   VP: f = -beta(t) y / 2, g(t) = sqrt(beta(t)), beta(t) = beta_min + (beta_max - beta_min) t
struct SdeSpec {
  SdeKind kind = SdeKind::VE;
  double alpha = 25.0;
  double beta_min = 0.1;
  double beta_max = 20.0;
  double T = 1.0;
  double t_min = 1e-5;

  void validate() const;
  static SdeSpec ve(double alpha = 25.0);
  static SdeSpec vp(double beta_min = 0.1, double beta_max = 20.0);
};

double beta(const SdeSpec& spec, double t);
/// VP log mean-scale exponent h(t) = -t^2 (beta_max - beta_min)/2 - t beta_min.
double vp_h(const SdeSpec& spec, double t);

Point drift(const SdeSpec& spec, const Point& y, double t);
double diffusion(const SdeSpec& spec, double t);

/// Multiplier u_t applied to y0 in the kernel mean (1 for VE, e^{h/2} for VP).
double mean_scale(const SdeSpec& spec, double t);
/// Kernel variance: (alpha^{2t} - 1)/(2 ln alpha) for VE, 1 - e^{h(t)} for VP.
double kernel_variance(const SdeSpec& spec, double t);
double sigma_t(const SdeSpec& spec, double t);

struct KernelMoments {
  Point mean;
  double std = 0.0;
};
/// p_{t|0}(. | y0); t = 0 returns (y0, 0).
KernelMoments perturbation_kernel(const SdeSpec& spec, const Point& y0, double t);

/// Standard deviation of the prior at T (sigma_T for VE, 1 for VP).
double prior_std(const SdeSpec& spec);
Point prior_sample(const SdeSpec& spec, Eigen::Index dimension, Rng& rng);

}  // namespace otcs
