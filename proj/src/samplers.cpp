#include "otcs/samplers.hpp"

#include "otcs/io.hpp"

#include <fstream>
#include <iomanip>

namespace otcs {

const char* to_string(SamplerMethod m) { return m == SamplerMethod::EulerMaruyama ? "em" : "pc"; }
const char* to_string(InitMode m) { return m == InitMode::Prior ? "prior" : "noisy_at_m"; }

SamplerMethod parse_sampler_method(const std::string& s) {
  if (s == "em") return SamplerMethod::EulerMaruyama;
  if (s == "pc") return SamplerMethod::PredictorCorrector;
  fail(ErrorKind::Config, "unknown sampler method '" + s + "'");
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "prior") return InitMode::Prior;
  if (s == "noisy_at_m") return InitMode::NoisyAtM;
  fail(ErrorKind::Config, "unknown sampler init '" + s + "'");
}

void SamplerConfig::validate(const SdeSpec& spec) const {
  require(n_steps >= 1, ErrorKind::Config, "sampler.n_steps must be >= 1");
  require(corrector_snr >= 0.0, ErrorKind::Config, "sampler.corrector_snr must be >= 0");
  if (init == InitMode::NoisyAtM)
    require(M > 0.0 && M <= spec.T, ErrorKind::Config, "sampler.M must be in (0, T]");
  require(start_time(spec) > spec.t_min, ErrorKind::Config, "sampler start time must exceed t_min");
}

Point em_step(const Point& y, const Point& f, double g, const Point& s, double dt, const Point& z) {
  return y - (f - g * g * s) * dt + g * std::sqrt(dt) * z;
}

Point noisy_init(const SdeSpec& spec, const Point& x, double M, Rng& rng) {
  require(M >= 0.0 && M <= spec.T, ErrorKind::InvalidArgument, "noisy_init: M outside [0, T]");
  const Eigen::MatrixXd z = standard_normal(rng, x.size(), 1);
  if (M == 0.0) return x;
  return mean_scale(spec, M) * x + sigma_t(spec, M) * z.col(0);
}

namespace {

/// Integrates the columns of Y in place. rngs[k] drives predictor noise of
/// trajectory k; corrector[k] its Langevin noise (PC only).
void integrate(const ScoreField& score, const SdeSpec& spec, const Point* x, const SamplerConfig& cfg,
               Eigen::MatrixXd& Y, std::vector<Rng*>& rngs, std::vector<Rng*>* corrector) {
  const Eigen::Index D = Y.rows(), n = Y.cols();
  const double t0 = cfg.start_time(spec);
  const double dt = (t0 - spec.t_min) / static_cast<double>(cfg.n_steps);
  Eigen::MatrixXd Z(D, n);
  for (std::int64_t i = 0; i < cfg.n_steps; ++i) {
    const double t = t0 - static_cast<double>(i) * dt;
    const double g = diffusion(spec, t);
    const Eigen::MatrixXd S = score.evaluate(Y, x, t);
    for (Eigen::Index k = 0; k < n; ++k) Z.col(k) = standard_normal(*rngs[static_cast<std::size_t>(k)], D, 1);
    for (Eigen::Index k = 0; k < n; ++k)
      Y.col(k) = em_step(Y.col(k), drift(spec, Y.col(k), t), g, S.col(k), dt, Z.col(k));
    if (corrector) {
      const double tn = t - dt;
      const Eigen::MatrixXd Sc = score.evaluate(Y, x, tn);
      for (Eigen::Index k = 0; k < n; ++k) Z.col(k) = standard_normal(*(*corrector)[static_cast<std::size_t>(k)], D, 1);
      // norms averaged over the batch
      const double sn = Sc.colwise().norm().mean();
      const double ratio = sn > 0.0 ? cfg.corrector_snr * Z.colwise().norm().mean() / sn : 0.0;
      const double eta = 2.0 * ratio * ratio;
      Y += eta * Sc + std::sqrt(2.0 * eta) * Z;
    }
    require(Y.allFinite(), ErrorKind::NonFinite,
            "reverse sampler: non-finite state at step " + std::to_string(i) + " (t=" + std::to_string(t) + ")");
  }
}

Eigen::MatrixXd initial_state(const ScoreField& score, const SdeSpec& spec, const Point* x, const SamplerConfig& cfg,
                              Rng& rng) {
  if (cfg.init == InitMode::Prior) return prior_sample(spec, score.dimension(), rng);
  require(x != nullptr, ErrorKind::InvalidArgument, "noisy initialization needs a condition point");
  require(x->size() == score.dimension(), ErrorKind::DimensionMismatch,
          "noisy initialization needs a condition of the target dimension");
  return noisy_init(spec, *x, cfg.M, rng);
}

void check_condition(const ScoreField& score, const Point* x) {
  require(score.conditional() == (x != nullptr), ErrorKind::InvalidArgument,
          score.conditional() ? "conditional score needs a condition" : "unconditional score takes no condition");
}

}  // namespace

Point reverse_em(const ScoreField& score, const SdeSpec& spec, const Point* x, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate(spec);
  check_condition(score, x);
  Eigen::MatrixXd Y = initial_state(score, spec, x, cfg, rng);
  std::vector<Rng*> rngs{&rng};
  integrate(score, spec, x, cfg, Y, rngs, nullptr);
  return Y.col(0);
}

Point reverse_pc(const ScoreField& score, const SdeSpec& spec, const Point* x, const SamplerConfig& cfg, Rng& rng,
                 Rng& corrector_rng) {
  cfg.validate(spec);
  check_condition(score, x);
  Eigen::MatrixXd Y = initial_state(score, spec, x, cfg, rng);
  std::vector<Rng*> rngs{&rng};
  std::vector<Rng*> corr{&corrector_rng};
  integrate(score, spec, x, cfg, Y, rngs, &corr);
  return Y.col(0);
}

PointSet sample_condition(const ScoreField& score, const SdeSpec& spec, const Point* x, Eigen::Index n,
                          const SamplerConfig& cfg, std::uint64_t stream_offset) {
  cfg.validate(spec);
  check_condition(score, x);
  require(n >= 1, ErrorKind::InvalidArgument, "sample_condition: n must be >= 1");
  const std::uint64_t pred_seed = derive_seed(cfg.seed, stream_tag("sampler.predictor"));
  const std::uint64_t corr_seed = derive_seed(cfg.seed, stream_tag("sampler.corrector"));
  std::vector<Rng> pred, corr;
  pred.reserve(static_cast<std::size_t>(n));
  corr.reserve(static_cast<std::size_t>(n));
  Eigen::MatrixXd Y(score.dimension(), n);
  for (Eigen::Index k = 0; k < n; ++k) {
    pred.emplace_back(make_rng(pred_seed, stream_offset + static_cast<std::uint64_t>(k)));
    corr.emplace_back(make_rng(corr_seed, stream_offset + static_cast<std::uint64_t>(k)));
    Y.col(k) = initial_state(score, spec, x, cfg, pred.back());
  }
  std::vector<Rng*> pp, cp;
  for (auto& r : pred) pp.push_back(&r);
  for (auto& r : corr) cp.push_back(&r);
  integrate(score, spec, x, cfg, Y, pp, cfg.method == SamplerMethod::PredictorCorrector ? &cp : nullptr);
  return Y;
}

SconesScore::SconesScore(const ScoreField& unconditional, const PotentialPair& pp) : base_(unconditional), pp_(pp) {
  require(!unconditional.conditional(), ErrorKind::InvalidArgument, "SCONES needs an unconditional score model");
  require(pp.target_dim() == unconditional.dimension(), ErrorKind::DimensionMismatch,
          "SCONES potentials and score model dimensions differ");
}

Eigen::MatrixXd SconesScore::evaluate(const Eigen::MatrixXd& Y, const Point* x, double t) const {
  require(x != nullptr, ErrorKind::InvalidArgument, "SCONES guidance needs a condition");
  Eigen::MatrixXd S = base_.evaluate(Y, nullptr, t);
  for (Eigen::Index k = 0; k < Y.cols(); ++k) S.col(k) += log_compatibility_gradient(pp_, *x, Y.col(k));
  return S;
}

Point scones_sample(const ScoreField& unconditional, const PotentialPair& pp, const Point& x, const SdeSpec& spec,
                    const SamplerConfig& cfg, Rng& rng) {
  const SconesScore guided(unconditional, pp);
  if (cfg.method == SamplerMethod::PredictorCorrector) {
    Rng corr = make_rng(cfg.seed, stream_tag("sampler.corrector"));
    return reverse_pc(guided, spec, &x, cfg, rng, corr);
  }
  return reverse_em(guided, spec, &x, cfg, rng);
}

GaussianTargetScore::GaussianTargetScore(SdeSpec spec, Point mean, Point stddev)
    : spec_(spec), mean_(std::move(mean)), std_(std::move(stddev)) {
  require(mean_.size() == std_.size(), ErrorKind::DimensionMismatch, "gaussian score mean/std mismatch");
}

Eigen::MatrixXd GaussianTargetScore::evaluate(const Eigen::MatrixXd& Y, const Point*, double t) const {
  const double m = mean_scale(spec_, t);
  const Eigen::ArrayXd var = m * m * std_.array().square() + kernel_variance(spec_, t);
  Eigen::MatrixXd S = (-(Y.colwise() - m * mean_)).array().colwise() / var;
  return S;
}

void save_samples_csv(const std::string& path, const PointSet& conditions, const PointSet& samples) {
  require(conditions.cols() == samples.cols() || conditions.cols() == 0, ErrorKind::DimensionMismatch,
          "save_samples_csv: condition and sample counts differ");
  ensure_parent_dir(path);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << "index";
  for (Eigen::Index d = 0; d < conditions.rows(); ++d) out << ",x" << d;
  for (Eigen::Index d = 0; d < samples.rows(); ++d) out << ",y" << d;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index k = 0; k < samples.cols(); ++k) {
    out << k;
    if (conditions.cols() > 0)
      for (Eigen::Index d = 0; d < conditions.rows(); ++d) out << ',' << conditions(d, k);
    for (Eigen::Index d = 0; d < samples.rows(); ++d) out << ',' << samples(d, k);
    out << '\n';
  }
}

}  // namespace otcs
