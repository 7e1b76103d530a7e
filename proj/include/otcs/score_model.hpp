#pragma once

#include "otcs/mlp.hpp"
#include "otcs/optimizer.hpp"
#include "otcs/sde.hpp"

#include <optional>
#include <span>
#include <string>

namespace otcs {

/// Anything a reverse-SDE sampler can query for grad_y log p_t(y | x).
class ScoreField {
 public:
  virtual ~ScoreField() = default;
  virtual Eigen::Index dimension() const = 0;
  virtual bool conditional() const = 0;
  /// Y is D x n; every column shares the condition `x` (null when
  /// unconditional) and the time t. Returns D x n.
  virtual Eigen::MatrixXd evaluate(const Eigen::MatrixXd& Y, const Point* x, double t) const = 0;
};

/// Toy defaults: trunk FC(D,512) -> SiLU -> FC(512,512) -> SiLU -> FC(512,D);
/// time embedding GaussianFourier(256) -> FC(256,512) -> SiLU -> FC(512,512);
/// condition embedding FC(Dx,512) -> SiLU -> FC(512,512) -> SiLU -> FC(512,512).
/// The summed embeddings are added to every trunk activation.
struct ScoreArchitecture {
  Eigen::Index dim = 1;
  Eigen::Index cond_dim = 1;
  Eigen::Index hidden = 512;
  int trunk_hidden_layers = 2;
  int cond_hidden_layers = 2;
  Eigen::Index fourier_features = 256;  // sin and cos of fourier_features/2 frequencies
  double fourier_scale = 16.0;
  bool conditional = true;
  /// Divide the trunk output by sigma_t (noise-conditional output scale).
  bool scale_by_sigma = true;
  bool zero_init_output = false;

  void validate() const;
};

class ScoreModel final : public ScoreField {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> trunk_inputs;  // h_l, input to trunk layer l
    std::vector<Eigen::MatrixXd> trunk_pre;     // z_l for hidden layers
    Eigen::RowVectorXd inv_sigma;               // per column output scale
    Mlp::Cache time_cache, cond_cache;
    bool shared_embedding = false;
  };

  ScoreModel() = default;
  ScoreModel(ScoreArchitecture arch, SdeSpec spec);

  /// Draws the frozen Fourier frequencies and initializes theta.
  void initialize(Rng& rng);

  const ScoreArchitecture& architecture() const { return arch_; }
  const SdeSpec& sde() const { return spec_; }
  Eigen::Index parameter_count() const { return param_count_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  void set_theta(Eigen::VectorXd theta);
  const Eigen::VectorXd& fourier_frequencies() const { return freqs_; }
  void set_fourier_frequencies(Eigen::VectorXd freqs);

  /// Copy with a different parameter vector (e.g. the EMA shadow).
  ScoreModel with_parameters(const Eigen::VectorXd& theta) const;

  Eigen::Index dimension() const override { return arch_.dim; }
  bool conditional() const override { return arch_.conditional; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& Y, const Point* x, double t) const override;

  /// Single-point score estimate. `x` must be present iff the model is conditional.
  Point forward(const Point& y, const Point* x, double t) const;

  /// Batched evaluation with per-column condition and time. X is cond_dim x n
  /// (ignored for unconditional models).
  Eigen::MatrixXd forward_batch(std::span<const double> params, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& t, Cache* cache = nullptr) const;

  /// Accumulates dLoss/dtheta into `grad` (+=) given dLoss/dOutput (D x n).
  void backward(std::span<const double> params, const Cache& cache, const Eigen::MatrixXd& d_out,
                std::span<double> grad) const;

 private:
  Eigen::MatrixXd fourier(const Eigen::VectorXd& t) const;
  Eigen::MatrixXd embedding(std::span<const double> params, const Eigen::MatrixXd& X, const Eigen::VectorXd& t,
                            Cache* cache) const;
  Eigen::MatrixXd trunk(std::span<const double> params, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& E,
                        Cache* cache) const;
  std::span<const double> time_params(std::span<const double> params) const;
  std::span<const double> cond_params(std::span<const double> params) const;

  ScoreArchitecture arch_;
  SdeSpec spec_;
  Mlp time_mlp_, cond_mlp_;
  std::vector<Eigen::Index> trunk_offsets_;
  Eigen::Index trunk_count_ = 0;
  Eigen::Index param_count_ = 0;
  Eigen::VectorXd theta_;
  Eigen::VectorXd freqs_;
};

/// Checkpoint: architecture, SDE, theta, EMA theta, optimizer moments and step.
void save_score_checkpoint(const std::string& path, const ScoreModel& model, const AdamOptimizer& optimizer);
struct ScoreCheckpoint {
  ScoreModel model;
  AdamOptimizer optimizer;
  /// The EMA copy used for sampling.
  ScoreModel ema_model() const { return model.with_parameters(optimizer.ema()); }
};
ScoreCheckpoint load_score_checkpoint(const std::string& path);

}  // namespace otcs
