#pragma once

#include "otcs/measure.hpp"
#include "otcs/ot_problem.hpp"

#include <string>

namespace otcs {

/// Desk-scale guard on n*m for the exact solver.
inline constexpr Eigen::Index kOracleMaxEntries = 10'000;

/// Discrete coupling between two empirical measures plus solver diagnostics.
struct PlanMatrix {
  Eigen::MatrixXd entries;  // n x m, nonnegative
  Eigen::VectorXd row_marginal;
  Eigen::VectorXd col_marginal;

  // Filled by solve_exact.
  Eigen::VectorXd u, v;           // dual potentials at the solution
  double objective = 0.0;         // sum xi*pi + eps * sum pi^2/(p q)
  double row_violation = 0.0;     // ||row sums - p||_1
  double col_violation = 0.0;     // ||col sums - q||_1
  double kkt_residual = 0.0;
  int iterations = 0;

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }
};

/// Exact L2-regularized (semi-supervised or unsupervised) OT on two empirical
/// measures. Minimizes sum xi_ij pi_ij + eps sum pi_ij^2 / (p_i q_j) over the
/// transport polytope with masked entries fixed at 0.
///
/// The finite dual is maximized by Newton-direction ascent with Armijo
/// backtracking (a regularized semismooth Newton step on the piecewise
/// quadratic dual), the primal is recovered as pi = H p q, and a proportional
/// row/column rescaling repairs the residual marginal error on the support.
///
/// KKT residual: max over unmasked entries of |xi + 2 eps pi/(pq) - u - v| where
/// pi > 0, and of (u + v - xi)_+ where pi = 0.
///
/// Throws Infeasible for unequal keypoint masses, NonConvergence when either
/// the marginal violation or the KKT residual exceeds `tol`.
PlanMatrix solve_exact(const OtProblem& problem, const EmpiricalMeasure& p, const EmpiricalMeasure& q,
                       double tol = 1e-9);

/// Objective of an arbitrary plan under the problem (masked entries must be 0).
double plan_objective(const OtProblem& problem, const EmpiricalMeasure& p, const EmpiricalMeasure& q,
                      const Eigen::MatrixXd& plan);

/// Row i normalized to a probability vector over targets.
Eigen::VectorXd conditional_row(const PlanMatrix& plan, Eigen::Index i);
Eigen::VectorXd conditional_row(const Eigen::MatrixXd& plan, Eigen::Index i);

/// Mean of the conditional row over the target support.
Point barycentric_map(const PlanMatrix& plan, const EmpiricalMeasure& q, Eigen::Index i);

/// Dense "i,j,value" CSV with a header row.
void save_plan_csv(const std::string& path, const Eigen::MatrixXd& plan);
Eigen::MatrixXd load_plan_csv(const std::string& path);

}  // namespace otcs
