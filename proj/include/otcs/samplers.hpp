#pragma once

#include "otcs/potentials.hpp"
#include "otcs/score_model.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace otcs {

enum class SamplerMethod { EulerMaruyama, PredictorCorrector };
enum class InitMode { Prior, NoisyAtM };

const char* to_string(SamplerMethod m);
const char* to_string(InitMode m);
SamplerMethod parse_sampler_method(const std::string& s);
InitMode parse_init_mode(const std::string& s);

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::EulerMaruyama;
  std::int64_t n_steps = 1000;
  double corrector_snr = 0.16;
  InitMode init = InitMode::Prior;
  double M = 0.2;
  std::uint64_t seed = 0;

  void validate(const SdeSpec& spec) const;
  /// Time the reverse integration starts from.
  double start_time(const SdeSpec& spec) const { return init == InitMode::Prior ? spec.T : M; }
};

/// y <- y - (f - g^2 s) dt + g sqrt(dt) z.
Point em_step(const Point& y, const Point& f, double g, const Point& s, double dt, const Point& z);

/// mean_scale(M) x + sigma_M z.
Point noisy_init(const SdeSpec& spec, const Point& x, double M, Rng& rng);

/// One reverse Euler-Maruyama trajectory from the configured start state down
/// to t_min. `x` is the condition (null for unconditional fields).
Point reverse_em(const ScoreField& score, const SdeSpec& spec, const Point* x, const SamplerConfig& cfg, Rng& rng);
/// Predictor (EM) plus one Langevin corrector step per time step; the corrector
/// draws from `corrector_rng` so snr = 0 reproduces reverse_em exactly.
Point reverse_pc(const ScoreField& score, const SdeSpec& spec, const Point* x, const SamplerConfig& cfg, Rng& rng,
                 Rng& corrector_rng);

/// n trajectories for one condition, evaluated as a batch. Trajectory k uses
/// streams derived from (cfg.seed, stream_offset + k), so EM results do not
/// depend on how samples are grouped. The PC corrector step size uses score
/// and noise norms averaged over the n trajectories. Returns D x n.
PointSet sample_condition(const ScoreField& score, const SdeSpec& spec, const Point* x, Eigen::Index n,
                          const SamplerConfig& cfg, std::uint64_t stream_offset = 0);

/// Unconditional score plus grad_y log H(x, y) (0 where H = 0).
class SconesScore final : public ScoreField {
 public:
  SconesScore(const ScoreField& unconditional, const PotentialPair& pp);
  Eigen::Index dimension() const override { return base_.dimension(); }
  bool conditional() const override { return true; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& Y, const Point* x, double t) const override;

 private:
  const ScoreField& base_;
  const PotentialPair& pp_;
};

Point scones_sample(const ScoreField& unconditional, const PotentialPair& pp, const Point& x, const SdeSpec& spec,
                    const SamplerConfig& cfg, Rng& rng);

/// Exact score of N(mean, diag(std^2)) pushed through the forward SDE.
class GaussianTargetScore final : public ScoreField {
 public:
  GaussianTargetScore(SdeSpec spec, Point mean, Point stddev);
  Eigen::Index dimension() const override { return mean_.size(); }
  bool conditional() const override { return false; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& Y, const Point* x, double t) const override;

 private:
  SdeSpec spec_;
  Point mean_, std_;
};

/// Wraps a callable (Y, x, t) -> D x n score.
class FunctionScore final : public ScoreField {
 public:
  using Fn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, const Point*, double)>;
  FunctionScore(Eigen::Index dim, bool conditional, Fn fn) : dim_(dim), conditional_(conditional), fn_(std::move(fn)) {}
  Eigen::Index dimension() const override { return dim_; }
  bool conditional() const override { return conditional_; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& Y, const Point* x, double t) const override { return fn_(Y, x, t); }

 private:
  Eigen::Index dim_;
  bool conditional_;
  Fn fn_;
};

/// CSV rows: sample index, condition coordinates, output coordinates.
void save_samples_csv(const std::string& path, const PointSet& conditions, const PointSet& samples);

}  // namespace otcs
