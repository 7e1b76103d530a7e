#include "otcs/cdsm.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>

using namespace otcs;
using otcs::testing::pt;
using otcs::testing::row;
using otcs::testing::view;

namespace {

ScoreArchitecture arch(bool conditional, Eigen::Index dim = 1, Eigen::Index cond_dim = 1, Eigen::Index hidden = 16) {
  ScoreArchitecture a;
  a.dim = dim;
  a.cond_dim = cond_dim;
  a.hidden = hidden;
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

PotentialArchitecture tiny_potentials() {
  PotentialArchitecture a;
  a.hidden = {4};
  return a;
}

// Zero networks plus a constant added to u, so H(x,y) = (b - xi(x,y))_+ / (2 eps).
PotentialPair constant_potentials(const OtProblem& prob, Eigen::Index dim, double b) {
  PotentialPair pp(prob, dim, dim, tiny_potentials());
  Eigen::VectorXd w = pp.omega();
  w(pp.u_net().parameter_count() - 1) = b;
  pp.set_omega(w);
  return pp;
}

// Always hands out the same fixed columns; counts draws.
class FixedSource final : public DataSource {
 public:
  explicit FixedSource(PointSet pts) : pts_(std::move(pts)) {}
  Eigen::Index dimension() const override { return pts_.rows(); }
  PointSet draw(Rng& rng, Eigen::Index n) const override {
    ++draws;
    rng();
    PointSet out(pts_.rows(), n);
    for (Eigen::Index k = 0; k < n; ++k) out.col(k) = pts_.col(k % pts_.cols());
    return out;
  }
  mutable int draws = 0;

 private:
  PointSet pts_;
};

CdsmTrainConfig train_cfg(std::int64_t iterations, std::uint64_t seed = 3) {
  CdsmTrainConfig c;
  c.batch_size = 16;
  c.iterations = iterations;
  c.adam.learning_rate = 1e-3;
  c.seed = seed;
  c.log_every = 10;
  return c;
}

}  // namespace

TEST(HTable, BuildFromMatrix) {
  Eigen::MatrixXd H(3, 3);
  H << 0.5, 0.0005, 1.0,  //
      0.0, 0.001, 0.0,    //
      1.0, 1.0, 2.0;
  const HTable t = h_table_from_matrix(H);
  EXPECT_EQ(t.candidates[0], (std::vector<Eigen::Index>{0, 2}));
  EXPECT_NEAR(t.weights[0][0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(t.weights[0][1], 2.0 / 3.0, 1e-15);
  EXPECT_TRUE(t.empty(1));  // 0.001 is not above the threshold
  EXPECT_EQ(t.weights[2], (std::vector<double>{0.25, 0.25, 0.5}));
  EXPECT_EQ(t.skipped_count(), 1);
  EXPECT_EQ(t.active_sources(), (std::vector<Eigen::Index>{0, 2}));
  for (Eigen::Index i : t.active_sources()) {
    double s = 0.0;
    for (double w : t.weights[static_cast<std::size_t>(i)]) s += w;
    EXPECT_NEAR(s, 1.0, 1e-9);
    for (double h : t.raw[static_cast<std::size_t>(i)]) EXPECT_GT(h, t.threshold);
  }
  EXPECT_EQ(h_table_from_matrix(H, 0.0).candidates[1], (std::vector<Eigen::Index>{1}));
  try {
    h_table_from_matrix(Eigen::MatrixXd::Zero(2, 3));
    FAIL() << "all-empty table accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
  }
}

TEST(HTable, FromPotentials) {
  const OtProblem prob = OtProblem::unsupervised(CostKind::SquaredL2, 0.25);
  const EmpiricalMeasure p = EmpiricalMeasure::uniform(row({0.0})), q = EmpiricalMeasure::uniform(row({1.0}));
  // zero potentials with xi = 1 > 0: every H is 0
  EXPECT_THROW(build_h_table(PotentialPair(prob, 1, 1, tiny_potentials()), p, q), Error);
  // u + v - xi = 2 eps gives H = 1
  const HTable t = build_h_table(constant_potentials(prob, 1, 1.5), p, q);
  ASSERT_EQ(t.candidates[0].size(), 1u);
  EXPECT_NEAR(t.raw[0][0], 1.0, 1e-12);
  EXPECT_EQ(t.weights[0][0], 1.0);
}

TEST(HTable, CsvRoundTrip) {
  Eigen::MatrixXd H(2, 3);
  H << 0.2, 0.0, 0.7, 0.0, 0.0, 0.0;
  const HTable t = h_table_from_matrix(H, 0.01);
  const auto path = (std::filesystem::temp_directory_path() / "otcs_htable_test.bin").string();
  save_h_table(path, t);
  const HTable back = load_h_table(path);
  EXPECT_EQ(back.threshold, 0.01);
  EXPECT_EQ(back.candidates, t.candidates);
  EXPECT_EQ(back.weights, t.weights);
  EXPECT_EQ(back.raw, t.raw);
  std::filesystem::remove(path);
}

TEST(Resample, FrequenciesMatchWeights) {
  Eigen::MatrixXd H(2, 4);
  H << 1.0, 1.0, 2.0, 0.0,  //
      0.0, 0.0, 0.0, 3.0;
  const HTable t = h_table_from_matrix(H);
  Rng rng(21);
  const int draws = 100000;
  std::map<Eigen::Index, int> counts;
  for (int k = 0; k < draws; ++k) ++counts[resample_by_compatibility(t, 0, rng)];
  EXPECT_NEAR(counts[0] / double(draws), 0.25, 0.01);
  EXPECT_NEAR(counts[1] / double(draws), 0.25, 0.01);
  EXPECT_NEAR(counts[2] / double(draws), 0.5, 0.01);
  EXPECT_EQ(counts.count(3), 0u);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(resample_by_compatibility(t, 1, rng), 3);
  Rng a(4), b(4);
  for (int k = 0; k < 50; ++k) EXPECT_EQ(resample_by_compatibility(t, 0, a), resample_by_compatibility(t, 0, b));
  Eigen::MatrixXd H2(2, 1);
  H2 << 1.0, 0.0;
  EXPECT_THROW(resample_by_compatibility(h_table_from_matrix(H2), 1, rng), Error);
}

TEST(ResampleContinuous, SinglePositiveCandidate) {
  const OtProblem prob = OtProblem::unsupervised(CostKind::SquaredL2, 0.1);
  // H > 0 only where (x - y)^2 < 1
  const PotentialPair pp = constant_potentials(prob, 1, 1.0);
  const FixedSource q(row({0.0, 5.0, 10.0, 15.0}));
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const auto y = resample_continuous(pp, pt({10.2}), q, 4, rng);
    ASSERT_TRUE(y.has_value());
    EXPECT_EQ((*y)(0), 10.0);
  }
}

TEST(ResampleContinuous, ConstantCompatibilityIsUniform) {
  const OtProblem prob = OtProblem::unsupervised(CostKind::SquaredL2, 0.1);
  const PotentialPair pp = constant_potentials(prob, 2, 3.0);
  PointSet circle(2, 4);
  circle << 1, 0, -1, 0,  //
      0, 1, 0, -1;
  const FixedSource q(circle);
  Rng rng(6);
  const int draws = 100000;
  Eigen::Vector4d counts = Eigen::Vector4d::Zero();
  for (int k = 0; k < draws; ++k) {
    const Point y = *resample_continuous(pp, pt({0.0, 0.0}), q, 4, rng);
    for (int c = 0; c < 4; ++c)
      if ((y - circle.col(c)).norm() == 0.0) counts(c) += 1;
  }
  EXPECT_EQ(counts.sum(), draws);
  const double expected = draws / 4.0;
  const double chi2 = ((counts.array() - expected).square() / expected).sum();
  EXPECT_LT(chi2, 11.345);  // 3 dof, p = 0.01

  Rng r1(8), r2(8);
  for (int k = 0; k < 20; ++k)
    EXPECT_TRUE(*resample_continuous(pp, pt({0.0, 0.0}), q, 4, r1) ==
                *resample_continuous(pp, pt({0.0, 0.0}), q, 4, r2));
}

TEST(ResampleContinuous, RetryCapThenSkip) {
  const OtProblem prob = OtProblem::unsupervised(CostKind::SquaredL2, 0.1);
  const PotentialPair pp = constant_potentials(prob, 1, 1.0);
  const FixedSource q(row({50.0, 60.0}));
  Rng rng(7);
  EXPECT_FALSE(resample_continuous(pp, pt({0.0}), q, 2, rng, 10).has_value());
  EXPECT_EQ(q.draws, 11);
  EXPECT_THROW(resample_continuous(pp, pt({0.0}), q, 0, rng), Error);

  // a training batch where every condition fails aborts
  ScoreModel m = make(arch(true));
  CdsmTrainConfig cfg = train_cfg(2);
  cfg.candidates = 2;
  EXPECT_THROW(train_conditional_continuous(m, pp, FixedSource(row({0.0})), q, cfg), Error);
}

TEST(CdsmLoss, WeightsAndExamples) {
  const SdeSpec ve = SdeSpec::ve(25.0);
  EXPECT_EQ(loss_weight(ve, 0.3, WeightMode::SigmaSquared), 1.0);
  EXPECT_NEAR(loss_weight(ve, 0.3, WeightMode::DiffusionSquared),
              std::pow(diffusion(ve, 0.3), 2) / kernel_variance(ve, 0.3), 1e-12);

  ScoreArchitecture a = arch(true, 3, 2);
  a.zero_init_output = true;
  const ScoreModel zero = make(a);
  const Point x = pt({1.0, -1.0}), y = pt({0.5, 0.0, 2.0});
  // zero output and zero noise: the denoiser is exact
  EXPECT_EQ(cdsm_loss(zero, &x, y, 0.4, Point::Zero(3), WeightMode::SigmaSquared), 0.0);
  // zero output: loss = ||noise||^2, mean D
  Rng rng(9);
  double total = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const Point noise = standard_normal(rng, 3, 1);
    const double l = cdsm_loss(zero, &x, y, uniform(rng, 1e-5, 1.0), noise, WeightMode::SigmaSquared);
    EXPECT_NEAR(l, noise.squaredNorm(), 1e-12);
    total += l;
  }
  EXPECT_NEAR(total / n, 3.0, 0.1);
}

TEST(CdsmLoss, MatchesDirectFormulaAndPairedLoss) {
  const ScoreModel m = make(arch(true, 2, 2), 10);
  const SdeSpec& spec = m.sde();
  Rng rng(11);
  for (int k = 0; k < 20; ++k) {
    const Point x = standard_normal(rng, 2, 1), y = standard_normal(rng, 2, 1), noise = standard_normal(rng, 2, 1);
    const double t = uniform(rng, 1e-5, 1.0);
    const double sigma = sigma_t(spec, t);
    const Point yt = mean_scale(spec, t) * y + sigma * noise;
    for (WeightMode mode : {WeightMode::SigmaSquared, WeightMode::DiffusionSquared}) {
      const double wt = mode == WeightMode::SigmaSquared ? sigma * sigma : std::pow(diffusion(spec, t), 2);
      const double direct = wt / (sigma * sigma) * (m.forward(yt, &x, t) * sigma + noise).squaredNorm();
      const double l = cdsm_loss(m, &x, y, t, noise, mode);
      EXPECT_NEAR(l, direct, 1e-10 * std::max(1.0, direct));
      EXPECT_EQ(l, paired_dsm_loss(m, x, y, t, noise, mode));
    }
  }
}

TEST(CdsmLoss, GradientMatchesCentralDifferences) {
  for (bool conditional : {true, false}) {
    const ScoreModel m = make(arch(conditional, 2, 2), 12);
    Rng rng(13);
    DsmBatch b;
    b.Y0 = standard_normal(rng, 2, 8);
    b.X = conditional ? Eigen::MatrixXd(standard_normal(rng, 2, 8)) : Eigen::MatrixXd(0, 8);
    b.t = (Eigen::ArrayXd::Random(8) * 0.45 + 0.55).matrix();
    b.noise = standard_normal(rng, 2, 8);
    for (WeightMode mode : {WeightMode::SigmaSquared, WeightMode::DiffusionSquared}) {
      const LossGradient lg = dsm_loss_gradient(m, view(m.theta()), b, mode);
      const std::function<double(const Eigen::VectorXd&)> f = [&](const Eigen::VectorXd& th) {
        return dsm_loss_gradient(m, view(th), b, mode).loss;
      };
      EXPECT_NEAR(lg.loss, f(m.theta()), 0.0);
      const double floor = 1e-3 * lg.gradient.cwiseAbs().maxCoeff();
      for (Eigen::Index k : otcs::testing::random_coordinates(m.parameter_count(), 32, 14)) {
        const double fd = otcs::testing::central_difference(f, m.theta(), k, 1e-6);
        EXPECT_LT(otcs::testing::rel_err(lg.gradient(k), fd, floor), 1e-3) << "coordinate " << k;
      }
      // batch loss is the mean of single-pair losses
      double mean = 0.0;
      for (Eigen::Index c = 0; c < 8; ++c) {
        const Point x = b.X.col(c);
        mean += cdsm_loss(m, conditional ? &x : nullptr, b.Y0.col(c), b.t(c), b.noise.col(c), mode) / 8.0;
      }
      EXPECT_NEAR(lg.loss, mean, 1e-10 * mean);
    }
  }
}

TEST(CdsmLoss, RegressionGradientMatchesCentralDifferences) {
  const ScoreModel m = make(arch(true, 2, 2), 15);
  Rng rng(16);
  const Eigen::MatrixXd Y = standard_normal(rng, 2, 6), X = standard_normal(rng, 2, 6);
  const Eigen::MatrixXd target = standard_normal(rng, 2, 6);
  const Eigen::VectorXd t = (Eigen::ArrayXd::Random(6) * 0.45 + 0.55).matrix();
  const Eigen::VectorXd w = (Eigen::ArrayXd::Random(6) + 1.5).matrix();
  const LossGradient lg = score_regression_gradient(m, view(m.theta()), Y, X, t, target, w);
  double direct = 0.0;
  for (Eigen::Index c = 0; c < 6; ++c) {
    const Point x = X.col(c);
    direct += w(c) * (m.forward(Y.col(c), &x, t(c)) - target.col(c)).squaredNorm() / 6.0;
  }
  EXPECT_NEAR(lg.loss, direct, 1e-10 * direct);
  const std::function<double(const Eigen::VectorXd&)> f = [&](const Eigen::VectorXd& th) {
    return score_regression_gradient(m, view(th), Y, X, t, target, w).loss;
  };
  const double floor = 1e-3 * lg.gradient.cwiseAbs().maxCoeff();
  for (Eigen::Index k : otcs::testing::random_coordinates(m.parameter_count(), 32, 17))
    EXPECT_LT(otcs::testing::rel_err(lg.gradient(k), otcs::testing::central_difference(f, m.theta(), k, 1e-6), floor),
              1e-3);
}

TEST(CdsmLoss, MonteCarloGradientAlignsWithExactConditionalScore) {
  // pi(.|x) is a two-point mixture, so p_t(y|x) is a Gaussian mixture with a closed-form score
  const ScoreModel m = make(arch(true, 1, 1, 32), 18);
  const SdeSpec& spec = m.sde();
  const double y1 = -1.0, y2 = 2.0, w1 = 0.3;
  const Eigen::Index n = 100000;
  Rng rng(19);
  DsmBatch b;
  b.X = Eigen::MatrixXd::Constant(1, n, 0.5);
  b.Y0.resize(1, n);
  b.t.resize(n);
  b.noise = standard_normal(rng, 1, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    b.Y0(0, k) = uniform(rng, 0.0, 1.0) < w1 ? y1 : y2;
    b.t(k) = uniform(rng, 1e-3, 1.0);
  }
  const Eigen::MatrixXd Yt = noised_targets(spec, b);
  Eigen::MatrixXd exact(1, n);
  Eigen::VectorXd weight(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double s2 = kernel_variance(spec, b.t(k)), y = Yt(0, k);
    const double l1 = std::log(w1) - (y - y1) * (y - y1) / (2 * s2);
    const double l2 = std::log(1 - w1) - (y - y2) * (y - y2) / (2 * s2);
    const double r1 = 1.0 / (1.0 + std::exp(l2 - l1));
    exact(0, k) = (r1 * (y1 - y) + (1 - r1) * (y2 - y)) / s2;
    weight(k) = s2;
  }
  const Eigen::VectorXd g_dsm = dsm_loss_gradient(m, view(m.theta()), b, WeightMode::SigmaSquared).gradient;
  const Eigen::VectorXd g_csm = score_regression_gradient(m, view(m.theta()), Yt, b.X, b.t, exact, weight).gradient;
  const double cosine = g_dsm.dot(g_csm) / (g_dsm.norm() * g_csm.norm());
  EXPECT_GE(cosine, 0.95);
}

TEST(CdsmTraining, HardCouplingEqualsPairedTraining) {
  Rng rng(20);
  const PointSet X = standard_normal(rng, 2, 6), Ytargets = standard_normal(rng, 2, 6);
  const std::vector<Eigen::Index> pairing{3, 0, 5, 1, 4, 2};
  PointSet paired(2, 6);
  for (Eigen::Index i = 0; i < 6; ++i) paired.col(i) = Ytargets.col(pairing[static_cast<std::size_t>(i)]);
  const EmpiricalMeasure p = EmpiricalMeasure::uniform(X), q = EmpiricalMeasure::uniform(Ytargets);
  const HTable table = paired_h_table(pairing);
  const ScoreModel m = make(arch(true, 2, 2), 21);
  const CdsmTrainConfig cfg = train_cfg(25);

  Rng a = named_stream(cfg.seed, "cdsm.main"), b = named_stream(cfg.seed, "cdsm.main");
  const DsmBatch bc = cdsm_batch(table, p, q, m.sde(), 16, cfg.seed, 0, a);
  const DsmBatch bp = paired_batch(X, paired, p.weights(), m.sde(), 16, b);
  EXPECT_TRUE(bc.X == bp.X && bc.Y0 == bp.Y0 && bc.t == bp.t && bc.noise == bp.noise);
  EXPECT_TRUE(dsm_loss_gradient(m, view(m.theta()), bc, cfg.weight_mode).gradient ==
              dsm_loss_gradient(m, view(m.theta()), bp, cfg.weight_mode).gradient);

  const ScoreCheckpoint c = train_conditional(m, table, p, q, cfg);
  const ScoreCheckpoint d = train_paired(m, X, paired, cfg);
  EXPECT_TRUE(c.model.theta() == d.model.theta());
  EXPECT_TRUE(c.optimizer.ema() == d.optimizer.ema());
}

TEST(CdsmTraining, SkippedSourcesNeverEnterBatches) {
  const EmpiricalMeasure p = EmpiricalMeasure::uniform(row({0.0, 1.0, 2.0, 3.0}));
  const EmpiricalMeasure q = EmpiricalMeasure::uniform(row({10.0, 11.0}));
  Eigen::MatrixXd H(4, 2);
  H << 1, 0, 0, 0, 0, 2, 0, 0;
  const HTable table = h_table_from_matrix(H);
  Rng main(22);
  for (int it = 0; it < 50; ++it) {
    const DsmBatch b = cdsm_batch(table, p, q, SdeSpec::ve(25.0), 16, 1, it, main);
    for (Eigen::Index k = 0; k < b.size(); ++k) {
      EXPECT_TRUE(b.X(0, k) == 0.0 || b.X(0, k) == 2.0);
      EXPECT_EQ(b.Y0(0, k), b.X(0, k) == 0.0 ? 10.0 : 11.0);
    }
  }
  CdsmTrainingLog log;
  train_conditional(make(arch(true)), table, p, q, train_cfg(3), &log);
  EXPECT_EQ(log.skipped_sources, 2);
  EXPECT_EQ(log.skipped_sources, table.skipped_count());
}

TEST(CdsmTraining, ZeroIterationsAndDeterminism) {
  const EmpiricalMeasure p = EmpiricalMeasure::uniform(row({-1.0, 1.0}));
  const EmpiricalMeasure q = EmpiricalMeasure::uniform(row({3.0, 5.0}));
  Eigen::MatrixXd H(2, 2);
  H << 0.7, 0.3, 0.2, 0.8;
  const HTable table = h_table_from_matrix(H);
  const ScoreModel m = make(arch(true));
  const ScoreCheckpoint none = train_conditional(m, table, p, q, train_cfg(0));
  EXPECT_TRUE(none.model.theta() == m.theta());
  EXPECT_TRUE(none.optimizer.ema() == m.theta());
  const ScoreCheckpoint a = train_conditional(m, table, p, q, train_cfg(30));
  const ScoreCheckpoint b = train_conditional(m, table, p, q, train_cfg(30));
  EXPECT_TRUE(a.model.theta() == b.model.theta());
  EXPECT_FALSE(a.model.theta() == m.theta());
  const ScoreCheckpoint c = train_conditional(m, table, p, q, train_cfg(30, 99));
  EXPECT_FALSE(a.model.theta() == c.model.theta());

  const GaussianSource g(pt({0.0}), pt({1.0}));
  const ScoreModel u = make(arch(false));
  EXPECT_TRUE(train_unconditional(u, g, train_cfg(0)).model.theta() == u.theta());
  EXPECT_TRUE(train_unconditional(u, g, train_cfg(20)).model.theta() ==
              train_unconditional(u, g, train_cfg(20)).model.theta());
  EXPECT_THROW(train_unconditional(m, g, train_cfg(1)), Error);
  EXPECT_THROW(train_conditional(u, table, p, q, train_cfg(1)), Error);
}

TEST(CdsmTraining, NonFiniteLossAborts) {
  const EmpiricalMeasure p = EmpiricalMeasure::uniform(row({0.0}));
  const EmpiricalMeasure q = EmpiricalMeasure::uniform(row({1.0}));
  const HTable table = paired_h_table({0});
  CdsmTrainConfig cfg = train_cfg(200);
  cfg.adam.learning_rate = 1e305;
  try {
    train_conditional(make(arch(true)), table, p, q, cfg);
    FAIL() << "divergent training accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(CdsmTraining, LossDecreasesOnOneDimensionalToy) {
  Rng rng(23);
  const EmpiricalMeasure p = EmpiricalMeasure::uniform((standard_normal(rng, 1, 16).array() - 4.0).matrix());
  const EmpiricalMeasure q = EmpiricalMeasure::uniform((standard_normal(rng, 1, 16).array() + 4.0).matrix());
  std::vector<Eigen::Index> pairing(16);
  for (Eigen::Index i = 0; i < 16; ++i) pairing[static_cast<std::size_t>(i)] = i;
  CdsmTrainConfig cfg = train_cfg(1000);
  cfg.batch_size = 32;
  CdsmTrainingLog log;
  train_conditional(make(arch(true, 1, 1, 32)), paired_h_table(pairing), p, q, cfg, &log);
  ASSERT_EQ(log.losses.size(), 1000u);
  EXPECT_EQ(log.entries.size(), 100u);
  double head = 0.0, tail = 0.0;
  for (int k = 0; k < 100; ++k) {
    head += log.losses[static_cast<std::size_t>(k)];
    tail += log.losses[static_cast<std::size_t>(900 + k)];
  }
  EXPECT_LT(tail, head);
}

TEST(CdsmTraining, UnconditionalLearnsGaussianScore) {
  const GaussianSource q(pt({0.0}), pt({1.0}));
  ScoreArchitecture a = arch(false, 1, 1, 32);
  a.fourier_features = 16;
  CdsmTrainConfig cfg = train_cfg(4000, 24);
  cfg.batch_size = 256;
  cfg.adam.learning_rate = 2e-3;
  const ScoreCheckpoint ck = train_unconditional(make(a, 25), q, cfg);
  const ScoreModel ema = ck.ema_model();
  const double t = 5e-2, var = 1.0 + kernel_variance(ema.sde(), t);
  double mae = 0.0;
  const int n = 81;
  for (int k = 0; k < n; ++k) {
    const double y = -2.0 + 4.0 * k / (n - 1);
    mae += std::abs(ema.forward(pt({y}), nullptr, t)(0) + y / var) / n;
  }
  EXPECT_LE(mae, 0.1);
}
