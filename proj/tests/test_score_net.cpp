#include "otcs/optimizer.hpp"
#include "otcs/score_model.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace otcs;
using otcs::testing::pt;
using otcs::testing::view;

namespace {

ScoreArchitecture small(bool conditional = true, Eigen::Index dim = 2, Eigen::Index cond_dim = 3) {
  ScoreArchitecture a;
  a.dim = dim;
  a.cond_dim = cond_dim;
  a.hidden = 12;
  a.fourier_features = 8;
  a.conditional = conditional;
  return a;
}

ScoreModel make(const ScoreArchitecture& a, std::uint64_t seed = 1) {
  ScoreModel m(a, SdeSpec::ve(25.0));
  Rng rng(seed);
  m.initialize(rng);
  return m;
}

// Parameter count written out from the layer list.
Eigen::Index expected_parameters(const ScoreArchitecture& a) {
  auto fc = [](Eigen::Index in, Eigen::Index out) { return in * out + out; };
  Eigen::Index n = fc(a.dim, a.hidden);
  for (int l = 1; l < a.trunk_hidden_layers; ++l) n += fc(a.hidden, a.hidden);
  n += fc(a.hidden, a.dim);
  n += fc(a.fourier_features, a.hidden) + fc(a.hidden, a.hidden);
  if (a.conditional) {
    n += fc(a.cond_dim, a.hidden);
    for (int l = 0; l < a.cond_hidden_layers; ++l) n += fc(a.hidden, a.hidden);
  }
  return n;
}

}  // namespace

TEST(ScoreModel, ParameterLayoutAndDefaults) {
  EXPECT_EQ(make(small()).parameter_count(), expected_parameters(small()));
  EXPECT_EQ(make(small(false)).parameter_count(), expected_parameters(small(false)));
  ScoreArchitecture toy;
  EXPECT_EQ(toy.hidden, 512);
  EXPECT_EQ(toy.fourier_features, 256);
  EXPECT_EQ(ScoreModel(toy, SdeSpec::ve(25.0)).parameter_count(), expected_parameters(toy));
  const ScoreModel m = make(small());
  EXPECT_EQ(m.fourier_frequencies().size(), small().fourier_features / 2);
}

TEST(ScoreModel, ZeroOutputLayerGivesZeroScore) {
  ScoreArchitecture a = small();
  a.zero_init_output = true;
  const ScoreModel m = make(a);
  Rng rng(2);
  for (int k = 0; k < 10; ++k) {
    const Point y = standard_normal(rng, 2, 1), x = standard_normal(rng, 3, 1);
    EXPECT_EQ(m.forward(y, &x, 0.1 + 0.08 * k).norm(), 0.0);
  }
}

TEST(ScoreModel, DeterministicAndConditionRequired) {
  const ScoreModel a = make(small(), 4), b = make(small(), 4);
  EXPECT_TRUE(a.theta() == b.theta());
  const Point y = pt({0.3, -0.2}), x = pt({1.0, 2.0, 3.0});
  EXPECT_TRUE(a.forward(y, &x, 0.5) == a.forward(y, &x, 0.5));
  EXPECT_TRUE(a.forward(y, &x, 0.5) == b.forward(y, &x, 0.5));
  EXPECT_THROW(a.forward(y, nullptr, 0.5), Error);
  const ScoreModel u = make(small(false));
  EXPECT_NO_THROW(u.forward(y, nullptr, 0.5));
}

TEST(ScoreModel, BatchAndSharedEvaluationAgreeWithSinglePoint) {
  const ScoreModel m = make(small());
  Rng rng(5);
  const Eigen::MatrixXd Y = standard_normal(rng, 2, 6);
  const Point x = pt({0.5, -1.0, 2.0});
  const Eigen::MatrixXd X = x.replicate(1, 6);
  Eigen::VectorXd t(6);
  t << 0.01, 0.1, 0.3, 0.5, 0.9, 1.0;
  const Eigen::MatrixXd batch = m.forward_batch(view(m.theta()), Y, X, t);
  for (Eigen::Index k = 0; k < 6; ++k) {
    EXPECT_LT((batch.col(k) - m.forward(Y.col(k), &x, t(k))).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::MatrixXd shared = m.evaluate(Y, &x, t(k));
    EXPECT_LT((shared.col(k) - batch.col(k)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ScoreModel, ReverseModeMatchesCentralDifferences) {
  for (bool conditional : {true, false}) {
    const ScoreModel m = make(small(conditional), 6);
    Rng rng(7);
    const Eigen::MatrixXd Y = standard_normal(rng, 2, 4);
    const Eigen::MatrixXd X = standard_normal(rng, 3, 4);
    Eigen::VectorXd t(4);
    t << 0.02, 0.2, 0.6, 1.0;
    const Eigen::MatrixXd R = standard_normal(rng, 2, 4);  // probe direction on the output
    ScoreModel::Cache cache;
    m.forward_batch(view(m.theta()), Y, X, t, &cache);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(m.parameter_count());
    m.backward(view(m.theta()), cache, R, std::span<double>(grad.data(), static_cast<std::size_t>(grad.size())));
    const std::function<double(const Eigen::VectorXd&)> f = [&](const Eigen::VectorXd& th) { return (m.forward_batch(view(th), Y, X, t).array() * R.array()).sum(); };
    const double floor = 1e-3 * grad.cwiseAbs().maxCoeff();
    for (Eigen::Index k : otcs::testing::random_coordinates(m.parameter_count(), 48, 8)) {
      const double fd = otcs::testing::central_difference(f, m.theta(), k, 1e-6);
      EXPECT_LT(otcs::testing::rel_err(grad(k), fd, floor), 1e-4) << "coordinate " << k;
    }
    // every trainable block receives gradient
    EXPECT_GT(grad.head(12).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GT(grad.tail(12).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(ScoreModel, OutputScalesWithInverseSigma) {
  ScoreArchitecture a = small(false);
  const ScoreModel scaled = make(a, 9);
  a.scale_by_sigma = false;
  ScoreModel raw(a, SdeSpec::ve(25.0));
  raw.set_fourier_frequencies(scaled.fourier_frequencies());
  raw.set_theta(scaled.theta());
  const Point y = pt({0.4, 0.1});
  for (double t : {0.05, 0.5, 1.0})
    EXPECT_LT((scaled.forward(y, nullptr, t) * sigma_t(SdeSpec::ve(25.0), t) - raw.forward(y, nullptr, t))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
}

TEST(Adam, ZeroGradientFirstStepAndEma) {
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  const Eigen::VectorXd theta0 = Eigen::Vector3d(0.5, -1.0, 2.0);
  AdamOptimizer opt(cfg, theta0);
  Eigen::VectorXd theta = theta0;
  opt.step(theta, Eigen::VectorXd::Zero(3));
  EXPECT_TRUE(theta == theta0);
  EXPECT_EQ(opt.step_count(), 1);

  AdamOptimizer fresh(cfg, theta0);
  Eigen::VectorXd th = theta0;
  const Eigen::VectorXd g = Eigen::Vector3d(3.0, -0.02, 1e-3);
  fresh.step(th, g);
  // step 1: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps)
  for (int k = 0; k < 3; ++k) {
    const double expected = theta0(k) - cfg.learning_rate * g(k) / (std::abs(g(k)) + cfg.eps);
    EXPECT_NEAR(th(k), expected, 1e-15);
    EXPECT_NEAR(theta0(k) - th(k), cfg.learning_rate * (g(k) > 0 ? 1 : -1), 1e-7);
  }
  EXPECT_LT((fresh.ema() - (0.999 * theta0 + 0.001 * th)).cwiseAbs().maxCoeff(), 1e-15);

  Eigen::VectorXd bad = theta0;
  EXPECT_THROW(fresh.step(bad, Eigen::Vector3d(1.0, NAN, 0.0)), Error);
  EXPECT_TRUE(bad == theta0);
  EXPECT_EQ(fresh.step_count(), 1);
}

TEST(Adam, EmaConvergesToFrozenParameters) {
  Rng rng(10);
  const Eigen::VectorXd theta0 = standard_normal(rng, 50, 1);
  const Eigen::VectorXd theta = standard_normal(rng, 50, 1);
  AdamOptimizer opt(AdamConfig{}, theta0);
  Eigen::VectorXd live = theta;
  for (int k = 0; k < 10000; ++k) opt.step(live, Eigen::VectorXd::Zero(50));
  EXPECT_TRUE(live == theta);
  EXPECT_LE((opt.ema() - theta).cwiseAbs().maxCoeff(), 1e-4 * theta.cwiseAbs().maxCoeff());
}

TEST(ScoreCheckpoint, RoundTrip) {
  const ScoreModel m = make(small(), 11);
  AdamOptimizer opt(AdamConfig{}, m.theta());
  Eigen::VectorXd th = m.theta();
  Rng rng(12);
  for (int k = 0; k < 3; ++k) opt.step(th, standard_normal(rng, th.size(), 1));
  ScoreModel trained = m;
  trained.set_theta(th);
  const auto path = (std::filesystem::temp_directory_path() / "otcs_score_test.bin").string();
  save_score_checkpoint(path, trained, opt);
  const ScoreCheckpoint ck = load_score_checkpoint(path);
  EXPECT_TRUE(ck.model.theta() == th);
  EXPECT_TRUE(ck.model.fourier_frequencies() == m.fourier_frequencies());
  EXPECT_TRUE(ck.optimizer.ema() == opt.ema());
  EXPECT_TRUE(ck.optimizer.first_moment() == opt.first_moment());
  EXPECT_EQ(ck.optimizer.step_count(), 3);
  EXPECT_EQ(ck.model.sde().alpha, 25.0);
  const Point y = pt({0.1, 0.2}), x = pt({1.0, 0.0, -1.0});
  EXPECT_TRUE(ck.ema_model().forward(y, &x, 0.3) == trained.with_parameters(opt.ema()).forward(y, &x, 0.3));
  std::filesystem::remove(path);
}
