#include "otcs/discrete_oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

using namespace otcs;
using otcs::testing::pt;
using otcs::testing::row;

namespace {

// Exact block-coordinate ascent on the dual: each u_i solves
// sum_j q_j (u_i + v_j - xi_ij)_+ = 2 eps over unmasked j by bisection.
Eigen::MatrixXd coordinate_ascent_plan(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& mask,
                                       const Eigen::VectorXd& p, const Eigen::VectorXd& q, double eps, int sweeps) {
  const Eigen::Index n = xi.rows(), m = xi.cols();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n), v = Eigen::VectorXd::Zero(m);
  auto solve = [&](auto excess, double lo, double hi) {
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      (excess(mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  };
  const double span = xi.maxCoeff() + 10.0 * eps + 10.0;
  for (int s = 0; s < sweeps; ++s) {
    for (Eigen::Index i = 0; i < n; ++i)
      u(i) = solve(
          [&](double ui) {
            double t = 0.0;
            for (Eigen::Index j = 0; j < m; ++j)
              if (mask(i, j) > 0) t += q(j) * std::max(0.0, ui + v(j) - xi(i, j));
            return t - 2.0 * eps;
          },
          -4 * span, 4 * span);
    for (Eigen::Index j = 0; j < m; ++j)
      v(j) = solve(
          [&](double vj) {
            double t = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
              if (mask(i, j) > 0) t += p(i) * std::max(0.0, u(i) + vj - xi(i, j));
            return t - 2.0 * eps;
          },
          -4 * span, 4 * span);
  }
  Eigen::MatrixXd plan(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      plan(i, j) = mask(i, j) * std::max(0.0, u(i) + v(j) - xi(i, j)) / (2.0 * eps) * p(i) * q(j);
  return plan;
}

EmpiricalMeasure two_points(double a, double b) { return EmpiricalMeasure::uniform(row({a, b})); }

PlanMatrix two_by_two(double eps) {
  // points 0 and 1 on both sides: squared cost is [[0,1],[1,0]]
  return solve_exact(OtProblem::unsupervised(CostKind::SquaredL2, eps), two_points(0, 1), two_points(0, 1));
}

double closed_form_diagonal(double eps) { return std::clamp(1.0 / (16.0 * eps) + 0.25, 0.0, 0.5); }

}  // namespace

TEST(SolveExact, TwoByTwoClosedForm) {
  for (double eps : {1e4, 100.0, 1.0, 0.25, 0.125, 0.01}) {
    const PlanMatrix plan = two_by_two(eps);
    const double a = closed_form_diagonal(eps);
    EXPECT_NEAR(plan.entries(0, 0), a, 1e-9) << eps;
    EXPECT_NEAR(plan.entries(1, 1), a, 1e-9) << eps;
    EXPECT_NEAR(plan.entries(0, 1), 0.5 - a, 1e-9) << eps;
  }
  EXPECT_NEAR(two_by_two(100.0).entries(0, 0), 0.2506, 1e-3);
  EXPECT_NEAR(two_by_two(100.0).entries(0, 1), 0.2494, 1e-3);
  EXPECT_NEAR(two_by_two(0.125).entries(0, 0), 0.5, 1e-3);
  EXPECT_NEAR(two_by_two(0.125).entries(0, 1), 0.0, 1e-3);
  EXPECT_NEAR(two_by_two(1e4).entries(0, 1), 0.25, 1e-3);
}

TEST(SolveExact, MatchesCoordinateAscentOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 4; ++trial) {
    const Eigen::Index n = 5 + trial, m = 6;
    Eigen::VectorXd wp = (Eigen::ArrayXd::Random(n) + 1.5).matrix(), wq = (Eigen::ArrayXd::Random(m) + 1.5).matrix();
    const EmpiricalMeasure p(standard_normal(rng, 1, n), wp / wp.sum());
    const EmpiricalMeasure q((2.0 + standard_normal(rng, 1, m).array()).matrix(), wq / wq.sum());
    const double eps = trial % 2 ? 0.05 : 0.5;
    const OtProblem prob = OtProblem::unsupervised(CostKind::SquaredL2, eps);
    const PlanMatrix plan = solve_exact(prob, p, q);
    const Eigen::MatrixXd C = cost_matrix(CostKind::SquaredL2, p.points(), q.points());
    const Eigen::MatrixXd oracle =
        coordinate_ascent_plan(C, Eigen::MatrixXd::Ones(n, m), p.weights(), q.weights(), eps, 3000);
    EXPECT_LT((plan.entries - oracle).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    EXPECT_LE(plan.row_violation, 1e-9);
    EXPECT_LE(plan.col_violation, 1e-9);
    EXPECT_LE(plan.kkt_residual, 1e-9);
    EXPECT_TRUE((plan.entries.array() >= 0.0).all());
  }
}

TEST(SolveExact, ObjectiveBeatsHandBuiltPlans) {
  Rng rng(12);
  Eigen::VectorXd xs = standard_normal(rng, 8, 1), ys = (3.0 + standard_normal(rng, 8, 1).array()).matrix();
  std::sort(xs.data(), xs.data() + 8);
  std::sort(ys.data(), ys.data() + 8);
  const EmpiricalMeasure p = EmpiricalMeasure::uniform(xs.transpose()), q = EmpiricalMeasure::uniform(ys.transpose());
  for (double eps : {1e-3, 0.1, 1.0}) {
    const OtProblem prob = OtProblem::unsupervised(CostKind::SquaredL2, eps);
    const PlanMatrix plan = solve_exact(prob, p, q);
    const Eigen::MatrixXd independent = p.weights() * q.weights().transpose();
    const Eigen::MatrixXd monotone = Eigen::MatrixXd::Identity(8, 8) / 8.0;
    EXPECT_LE(plan.objective, plan_objective(prob, p, q, independent) + 1e-12);
    EXPECT_LE(plan.objective, plan_objective(prob, p, q, monotone) + 1e-12);
  }
}

TEST(SolveExact, OneDimensionalBarycentersAreMonotone) {
  Rng rng(13);
  Eigen::VectorXd xs = standard_normal(rng, 30, 1), ys = standard_normal(rng, 30, 1);
  std::sort(xs.data(), xs.data() + 30);
  std::sort(ys.data(), ys.data() + 30);
  const EmpiricalMeasure p = EmpiricalMeasure::uniform((xs.array() - 4.0).matrix().transpose());
  const EmpiricalMeasure q = EmpiricalMeasure::uniform((ys.array() + 4.0).matrix().transpose());
  const PlanMatrix plan = solve_exact(OtProblem::unsupervised(CostKind::SquaredL2, 1e-3), p, q);
  double prev = -1e300;
  for (Eigen::Index i = 0; i < 30; ++i) {
    const double b = barycentric_map(plan, q, i)(0);
    EXPECT_GE(b, prev - 1e-9);
    prev = b;
  }
  // the source point nearest -4 maps near +4 (translation by 8)
  Eigen::Index near = 0;
  (p.points().row(0).array() + 4.0).abs().minCoeff(&near);
  EXPECT_NEAR(barycentric_map(plan, q, near)(0), p.point(near)(0) + 8.0, 0.5);
}

TEST(SolveExact, SemiSupervisedMasksAndKeypointMass) {
  const EmpiricalMeasure p = EmpiricalMeasure::uniform(row({-1.0, 0.0, 1.0, 2.0}));
  const EmpiricalMeasure q = EmpiricalMeasure::uniform(row({10.0, 12.0, 20.0, 22.0}));
  const KeypointSet kp = keypoints_from_indices(p, q, {{0, 2}, {3, 0}});
  const OtProblem prob = OtProblem::semi_supervised(CostKind::SquaredL2, 0.05, kp, 0.1);
  const PlanMatrix plan = solve_exact(prob, p, q);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      if (mask(prob, p, q, i, j) == 0) EXPECT_EQ(plan.entries(i, j), 0.0) << i << "," << j;
  EXPECT_NEAR(plan.entries(0, 2), p.weight(0), 1e-9);
  EXPECT_NEAR(plan.entries(3, 0), p.weight(3), 1e-9);

  const PairTerms t = pair_terms(prob, p.points(), q.points());
  const Eigen::MatrixXd oracle = coordinate_ascent_plan(t.xi, t.mask, p.weights(), q.weights(), 0.05, 3000);
  EXPECT_LT((plan.entries - oracle).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveExact, Errors) {
  // unequal keypoint masses
  const EmpiricalMeasure p(row({0.0, 1.0}), Eigen::Vector2d(0.4, 0.6));
  const EmpiricalMeasure q = EmpiricalMeasure::uniform(row({5.0, 6.0}));
  KeypointSet kp;
  kp.source = row({0.0});
  kp.target = row({5.0});
  try {
    solve_exact(OtProblem::semi_supervised(CostKind::SquaredL2, 0.1, kp), p, q);
    FAIL() << "infeasible keypoints accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
  }
  // cap
  Rng rng(1);
  const EmpiricalMeasure big = EmpiricalMeasure::uniform(standard_normal(rng, 1, 101));
  EXPECT_THROW(solve_exact(OtProblem::unsupervised(CostKind::SquaredL2, 1.0), big, big), Error);
}

TEST(ConditionalRow, Examples) {
  const PlanMatrix plan = two_by_two(100.0);
  const Eigen::VectorXd r = conditional_row(plan, 0);
  EXPECT_NEAR(r(0), 0.5012, 2e-3);
  EXPECT_NEAR(r(1), 0.4988, 2e-3);
  EXPECT_NEAR(r.sum(), 1.0, 1e-12);

  const Eigen::VectorXd q(Eigen::Vector3d(0.2, 0.3, 0.5));
  const Eigen::MatrixXd indep = Eigen::Vector2d(0.4, 0.6) * q.transpose();
  for (Eigen::Index i = 0; i < 2; ++i) EXPECT_LT((conditional_row(indep, i) - q).cwiseAbs().maxCoeff(), 1e-12);

  Eigen::MatrixXd diag = Eigen::MatrixXd::Identity(3, 3) / 3.0;
  EXPECT_EQ(conditional_row(diag, 1)(1), 1.0);
  Eigen::MatrixXd zero_row = diag;
  zero_row.row(2).setZero();
  EXPECT_THROW(conditional_row(zero_row, 2), Error);
}

TEST(BarycentricMap, Examples) {
  const EmpiricalMeasure q = EmpiricalMeasure::uniform(row({0.0, 2.0}));
  PlanMatrix onehot;
  onehot.entries = Eigen::Matrix2d{{0.5, 0.0}, {0.0, 0.5}};
  EXPECT_EQ(barycentric_map(onehot, q, 1)(0), 2.0);
  PlanMatrix uniform;
  uniform.entries = Eigen::MatrixXd::Constant(1, 2, 0.5);
  EXPECT_NEAR(barycentric_map(uniform, q, 0)(0), 1.0, 1e-15);
}

TEST(PlanCsv, RoundTrip) {
  const PlanMatrix plan = two_by_two(1.0);
  const auto path = (std::filesystem::temp_directory_path() / "otcs_plan_test.csv").string();
  save_plan_csv(path, plan.entries);
  EXPECT_TRUE(load_plan_csv(path) == plan.entries);
  std::filesystem::remove(path);
}
