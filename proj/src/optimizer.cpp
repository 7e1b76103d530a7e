#include "otcs/optimizer.hpp"

namespace otcs {

AdamOptimizer::AdamOptimizer(AdamConfig cfg, const Eigen::VectorXd& initial_theta)
    : cfg_(cfg),
      m_(Eigen::VectorXd::Zero(initial_theta.size())),
      v_(Eigen::VectorXd::Zero(initial_theta.size())),
      ema_(initial_theta) {
  require(cfg_.learning_rate > 0.0, ErrorKind::InvalidArgument, "learning rate must be > 0");
  require(cfg_.ema_decay >= 0.0 && cfg_.ema_decay < 1.0, ErrorKind::InvalidArgument, "EMA decay must be in [0,1)");
}

void AdamOptimizer::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  require(grad.size() == theta.size() && theta.size() == m_.size(), ErrorKind::DimensionMismatch,
          "Adam: gradient/parameter shape mismatch");
  require(grad.allFinite(), ErrorKind::NonFinite,
          "Adam: non-finite gradient at step " + std::to_string(steps_ + 1));
  ++steps_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  theta.array() -= cfg_.learning_rate * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.eps);
  ema_ = cfg_.ema_decay * ema_ + (1.0 - cfg_.ema_decay) * theta;
}

void AdamOptimizer::restore(std::int64_t steps, Eigen::VectorXd m, Eigen::VectorXd v, Eigen::VectorXd ema) {
  require(m.size() == v.size() && v.size() == ema.size(), ErrorKind::DimensionMismatch,
          "Adam restore: shape mismatch");
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
  ema_ = std::move(ema);
}

void AdamOptimizer::set_learning_rate(double lr) {
  require(lr > 0.0, ErrorKind::InvalidArgument, "learning rate must be > 0");
  cfg_.learning_rate = lr;
}

}  // namespace otcs
