#pragma once

#include "otcs/measure.hpp"
#include "otcs/mlp.hpp"
#include "otcs/ot_problem.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace otcs {

/// Hidden layer widths and activation shared by u and v. The default is the
/// 1-D toy network FC(D,1024) -> Tanh -> FC(1024,1).
struct PotentialArchitecture {
  std::vector<Eigen::Index> hidden{1024};
  Activation activation = Activation::Tanh;
};

struct PotentialTrainConfig {
  double learning_rate = 1e-5;
  /// Exponential decay target reached at the last iteration; 0 keeps the rate constant.
  double final_learning_rate = 0.0;
  Eigen::Index batch_size = 256;
  std::int64_t iterations = 0;
  std::uint64_t seed = 0;
  PotentialArchitecture architecture;
  /// H-change monitor cadence and probe-set size (per side).
  std::int64_t monitor_every = 100;
  Eigen::Index monitor_probes = 64;

  void validate() const;
  double learning_rate_at(std::int64_t iteration) const;
};

/// Dual potentials u, v over one flat parameter vector (u's block first).
class PotentialPair {
 public:
  PotentialPair() = default;
  PotentialPair(OtProblem problem, Eigen::Index source_dim, Eigen::Index target_dim,
                PotentialArchitecture arch = {});

  void initialize(Rng& rng);

  const OtProblem& problem() const { return problem_; }
  const PotentialArchitecture& architecture() const { return arch_; }
  Eigen::Index source_dim() const { return u_net_.arch().input_dim(); }
  Eigen::Index target_dim() const { return v_net_.arch().input_dim(); }
  Eigen::Index parameter_count() const { return u_net_.parameter_count() + v_net_.parameter_count(); }

  const Eigen::VectorXd& omega() const { return omega_; }
  void set_omega(Eigen::VectorXd omega);

  std::span<const double> u_params() const;
  std::span<const double> v_params() const;

  /// Row vectors of potential values at the columns of X / Y.
  Eigen::RowVectorXd u(const PointSet& X) const;
  Eigen::RowVectorXd v(const PointSet& Y) const;
  double u(const Point& x) const;
  double v(const Point& y) const;
  /// dv/dy at y.
  Point v_gradient(const Point& y) const;

  const Mlp& u_net() const { return u_net_; }
  const Mlp& v_net() const { return v_net_; }

 private:
  OtProblem problem_;
  PotentialArchitecture arch_;
  Mlp u_net_, v_net_;
  Eigen::VectorXd omega_;
};

/// (u(x)+v(y)-xi)_+ is clamped here before squaring.
inline constexpr double kDualClamp = 1e6;

struct DualEvaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;  // dF/domega (ascent direction)
  Eigen::Index clamp_events = 0;
};

/// F = mean_x u + mean_y v - (1/4eps) mean_{x,y} I [(u+v-xi)_+]^2 over the
/// full batch cross-product.
double dual_objective(const PotentialPair& pp, const PointSet& batch_x, const PointSet& batch_y);
DualEvaluation dual_objective_with_gradient(const PotentialPair& pp, const PointSet& batch_x,
                                            const PointSet& batch_y);

struct PotentialTrainingLog {
  std::vector<double> dual_values;  // one per iteration
  std::vector<std::pair<std::int64_t, double>> h_relative_change;  // (iteration, ||dH||/||H||)
  Eigen::Index clamp_events = 0;
};

/// Adam ascent on the dual over i.i.d. minibatches from p and q.
/// Aborts with NonFinite naming the iteration when the objective diverges.
/// `warm_start`, when given, supplies the initial omega (same architecture).
PotentialPair train_potentials(const OtProblem& problem, const DataSource& p, const DataSource& q,
                               const PotentialTrainConfig& cfg, PotentialTrainingLog* log = nullptr,
                               const PotentialPair* warm_start = nullptr);

/// H(x,y) = (1/2eps) I(x,y) (u(x)+v(y)-xi(x,y))_+.
double compatibility(const PotentialPair& pp, const Point& x, const Point& y);
/// n x m matrix of H over the columns of X and Y.
Eigen::MatrixXd compatibility_matrix(const PotentialPair& pp, const PointSet& X, const PointSet& Y);

/// grad_y log H(x, y) = (grad v(y) - grad_y xi(x,y)) / (u+v-xi); exactly 0
/// wherever H(x, y) = 0.
Point log_compatibility_gradient(const PotentialPair& pp, const Point& x, const Point& y);

struct PlanEstimate {
  Eigen::MatrixXd plan;  // n x m, H_ij p_i q_j
  double row_violation = 0.0;  // ||row sums - p||_1
  double col_violation = 0.0;  // ||col sums - q||_1
};
PlanEstimate plan_estimate(const PotentialPair& pp, const EmpiricalMeasure& p, const EmpiricalMeasure& q);

/// Binary checkpoint with architecture, problem (mode, cost, eps, tau,
/// keypoints) and omega.
void save_potentials(const std::string& path, const PotentialPair& pp);
/// Throws Config when the stored mode differs from `expected_mode`.
PotentialPair load_potentials(const std::string& path, OtMode expected_mode);

}  // namespace otcs
