#pragma once

#include "otcs/common.hpp"

#include <cstdint>

namespace otcs {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double ema_decay = 0.999;
};

/// Adam with bias correction plus an exponential moving average of the
/// parameters. Minimizes: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  /// The EMA shadow starts at `initial_theta`.
  AdamOptimizer(AdamConfig cfg, const Eigen::VectorXd& initial_theta);

  /// Throws NonFinite on a non-finite gradient, leaving all state untouched.
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

  const AdamConfig& config() const { return cfg_; }
  void set_learning_rate(double lr);
  std::int64_t step_count() const { return steps_; }
  const Eigen::VectorXd& ema() const { return ema_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }

  /// Restores state from a checkpoint.
  void restore(std::int64_t steps, Eigen::VectorXd m, Eigen::VectorXd v, Eigen::VectorXd ema);

 private:
  AdamConfig cfg_;
  Eigen::VectorXd m_, v_, ema_;
  std::int64_t steps_ = 0;
};

}  // namespace otcs
