#pragma once

#include "otcs/potentials.hpp"
#include "otcs/score_model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace otcs {

enum class WeightMode { SigmaSquared, DiffusionSquared };

const char* to_string(WeightMode mode);
WeightMode parse_weight_mode(const std::string& s);

/// Per source: target indices with H above the threshold and their weights
/// normalized to sum 1.
struct HTable {
  double threshold = 1e-3;
  std::vector<std::vector<Eigen::Index>> candidates;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> raw;  // H values as stored

  Eigen::Index source_count() const { return static_cast<Eigen::Index>(candidates.size()); }
  bool empty(Eigen::Index i) const { return candidates[static_cast<std::size_t>(i)].empty(); }
  Eigen::Index skipped_count() const;
  std::vector<Eigen::Index> active_sources() const;
};

/// Builds the table from an n x m matrix of H values. Throws Infeasible when
/// every source ends up empty.
HTable h_table_from_matrix(const Eigen::MatrixXd& H, double threshold = 1e-3);
HTable build_h_table(const PotentialPair& pp, const EmpiricalMeasure& p, const EmpiricalMeasure& q,
                     double threshold = 1e-3);
/// One candidate per source at weight 1: source i -> target pairing[i].
HTable paired_h_table(const std::vector<Eigen::Index>& pairing);

/// Draws a candidate of source i with probability equal to its weight.
Eigen::Index resample_by_compatibility(const HTable& table, Eigen::Index i, Rng& rng);

void save_h_table(const std::string& path, const HTable& table);
HTable load_h_table(const std::string& path);

/// Draws L candidates from q, returns one with probability proportional to
/// H(x, y^l). Redraws when every H is 0, up to `max_retries` redraws, then
/// returns nullopt.
std::optional<Point> resample_continuous(const PotentialPair& pp, const Point& x, const DataSource& q, Eigen::Index L,
                                         Rng& rng, int max_retries = 10);

/// Pre-drawn target candidates with cached v values, so continuous
/// resampling does not re-evaluate v for every fresh candidate.
class CandidatePool {
 public:
  CandidatePool(const PotentialPair& pp, PointSet points);
  Eigen::Index size() const { return points_.cols(); }
  const PointSet& points() const { return points_; }
  /// Same contract as resample_continuous with candidates drawn uniformly from the pool.
  std::optional<Point> resample(const PotentialPair& pp, const Point& x, Eigen::Index L, Rng& rng,
                                int max_retries = 10) const;

 private:
  PointSet points_;
  Eigen::RowVectorXd v_;
};

struct CdsmTrainConfig {
  Eigen::Index batch_size = 32;
  Eigen::Index candidates = 0;  // L; 0 means 10 * batch_size
  std::int64_t iterations = 0;
  AdamConfig adam;
  WeightMode weight_mode = WeightMode::SigmaSquared;
  std::uint64_t seed = 0;
  std::int64_t log_every = 100;
  int max_retries = 10;
  double h_threshold = 1e-3;
  /// Continuous mode: size of the cached candidate pool drawn from q (0 draws fresh candidates).
  Eigen::Index candidate_pool = 0;

  Eigen::Index candidate_count() const { return candidates > 0 ? candidates : 10 * batch_size; }
  void validate() const;
};

/// One minibatch of (condition, clean target, t, noise). X has 0 rows for
/// unconditional training.
struct DsmBatch {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y0;
  Eigen::VectorXd t;
  Eigen::MatrixXd noise;
  Eigen::Index size() const { return Y0.cols(); }
};

/// w_t / sigma_t^2 for the chosen weighting.
double loss_weight(const SdeSpec& spec, double t, WeightMode mode);
/// mean_scale(t) y0 + sigma_t noise, column-wise.
Eigen::MatrixXd noised_targets(const SdeSpec& spec, const DsmBatch& batch);

/// (w_t/sigma_t^2) || s(mean_scale y + sigma noise; x, t) sigma + noise ||^2 with the model's theta.
double cdsm_loss(const ScoreModel& model, const Point* x, const Point& y, double t, const Point& noise,
                 WeightMode mode);
/// Classic paired loss of one (condition, target) pair; same fitting-noise form.
double paired_dsm_loss(const ScoreModel& model, const Point& x, const Point& y, double t, const Point& noise,
                       WeightMode mode);

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// Batch mean of the fitting-noise loss and its gradient at `params`.
LossGradient dsm_loss_gradient(const ScoreModel& model, std::span<const double> params, const DsmBatch& batch,
                               WeightMode mode);
/// Batch mean of weight_k || s(Y_k; X_k, t_k) - target_k ||^2 and its gradient.
LossGradient score_regression_gradient(const ScoreModel& model, std::span<const double> params,
                                       const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X, const Eigen::VectorXd& t,
                                       const Eigen::MatrixXd& target, const Eigen::VectorXd& weight);

/// Batch of iteration `iteration`: sources from p (restricted to non-empty
/// rows), one target each by compatibility (slot streams from (seed, iteration,
/// slot)), then t and noise from `main`.
DsmBatch cdsm_batch(const HTable& table, const EmpiricalMeasure& p, const EmpiricalMeasure& q, const SdeSpec& spec,
                    Eigen::Index batch_size, std::uint64_t seed, std::int64_t iteration, Rng& main);
/// Paired dataset (X_k, Y_k): pair indices drawn by `pair_weights`, then t and noise.
DsmBatch paired_batch(const PointSet& X, const PointSet& Y, const Eigen::VectorXd& pair_weights, const SdeSpec& spec,
                      Eigen::Index batch_size, Rng& main);

struct LossLogEntry {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

struct CdsmTrainingLog {
  std::vector<double> losses;  // every iteration
  std::vector<LossLogEntry> entries;  // every log_every iterations
  Eigen::Index skipped_sources = 0;   // empty H-table rows
  std::int64_t skipped_conditions = 0;  // continuous retries exhausted
};

void save_loss_log_csv(const std::string& path, const CdsmTrainingLog& log);

ScoreCheckpoint train_conditional(const ScoreModel& model, const HTable& table, const EmpiricalMeasure& p,
                                  const EmpiricalMeasure& q, const CdsmTrainConfig& cfg,
                                  CdsmTrainingLog* log = nullptr);
ScoreCheckpoint train_conditional_continuous(const ScoreModel& model, const PotentialPair& pp, const DataSource& p,
                                             const DataSource& q, const CdsmTrainConfig& cfg,
                                             CdsmTrainingLog* log = nullptr);
ScoreCheckpoint train_unconditional(const ScoreModel& model, const DataSource& q, const CdsmTrainConfig& cfg,
                                    CdsmTrainingLog* log = nullptr);
/// Plain paired DSM over (X_k, Y_k), pairs drawn uniformly.
ScoreCheckpoint train_paired(const ScoreModel& model, const PointSet& X, const PointSet& Y,
                             const CdsmTrainConfig& cfg, CdsmTrainingLog* log = nullptr);

}  // namespace otcs
