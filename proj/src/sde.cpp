#include "otcs/sde.hpp"

namespace otcs {

const char* to_string(SdeKind kind) { return kind == SdeKind::VE ? "ve" : "vp"; }

SdeKind parse_sde_kind(const std::string& s) {
  if (s == "ve") return SdeKind::VE;
  if (s == "vp") return SdeKind::VP;
  fail(ErrorKind::Config, "unknown SDE kind '" + s + "'");
}

void SdeSpec::validate() const {
  if (kind == SdeKind::VE)
    require(alpha > 1.0, ErrorKind::InvalidArgument, "VE SDE needs alpha > 1");
  else
    require(beta_min > 0.0 && beta_min < beta_max, ErrorKind::InvalidArgument,
            "VP SDE needs 0 < beta_min < beta_max");
  require(T == 1.0, ErrorKind::InvalidArgument, "SDE horizon T is fixed at 1");
  require(t_min > 0.0 && t_min < T, ErrorKind::InvalidArgument, "SDE needs 0 < t_min < T");
}

SdeSpec SdeSpec::ve(double alpha) {
  SdeSpec s;
  s.kind = SdeKind::VE;
  s.alpha = alpha;
  s.validate();
  return s;
}

SdeSpec SdeSpec::vp(double beta_min, double beta_max) {
  SdeSpec s;
  s.kind = SdeKind::VP;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.validate();
  return s;
}

double beta(const SdeSpec& spec, double t) { return spec.beta_min + (spec.beta_max - spec.beta_min) * t; }

double vp_h(const SdeSpec& spec, double t) {
  return -0.5 * t * t * (spec.beta_max - spec.beta_min) - t * spec.beta_min;
}

Point drift(const SdeSpec& spec, const Point& y, double t) {
  if (spec.kind == SdeKind::VE) return Point::Zero(y.size());
  return -0.5 * beta(spec, t) * y;
}

double diffusion(const SdeSpec& spec, double t) {
  if (spec.kind == SdeKind::VE) return std::pow(spec.alpha, t);
  return std::sqrt(beta(spec, t));
}

double mean_scale(const SdeSpec& spec, double t) {
  if (spec.kind == SdeKind::VE) return 1.0;
  return std::exp(0.5 * vp_h(spec, t));
}

double kernel_variance(const SdeSpec& spec, double t) {
  if (t <= 0.0) return 0.0;
  if (spec.kind == SdeKind::VE) {
    const double log_alpha = std::log(spec.alpha);
    return std::expm1(2.0 * t * log_alpha) / (2.0 * log_alpha);
  }
  return -std::expm1(vp_h(spec, t));
}

double sigma_t(const SdeSpec& spec, double t) { return std::sqrt(kernel_variance(spec, t)); }

KernelMoments perturbation_kernel(const SdeSpec& spec, const Point& y0, double t) {
  require(t >= 0.0 && t <= spec.T, ErrorKind::InvalidArgument, "perturbation_kernel: t outside [0, T]");
  if (t == 0.0) return {y0, 0.0};
  return {mean_scale(spec, t) * y0, sigma_t(spec, t)};
}

double prior_std(const SdeSpec& spec) { return spec.kind == SdeKind::VE ? sigma_t(spec, spec.T) : 1.0; }

Point prior_sample(const SdeSpec& spec, Eigen::Index dimension, Rng& rng) {
  return prior_std(spec) * standard_normal(rng, dimension, 1).col(0);
}

}  // namespace otcs
