#pragma once

#include "otcs/common.hpp"
#include "otcs/measure.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace otcs {

enum class OtMode { Unsupervised, SemiSupervised };
enum class CostKind { SquaredL2, MeanSquaredL2 };

const char* to_string(OtMode mode);
const char* to_string(CostKind kind);
OtMode parse_ot_mode(const std::string& s);
CostKind parse_cost_kind(const std::string& s);

/// Matched (source, target) point pairs. Columns of `source` and `target`
/// with the same index form one pair.
struct KeypointSet {
  PointSet source;
  PointSet target;

  Eigen::Index count() const { return source.cols(); }
  /// Distinctness within each domain and equal dimensions; throws otherwise.
  void validate() const;
};

/// Builds keypoints from (source_index, target_index) rows into two measures.
/// Every pair must carry equal mass in p and q (1e-12) so the semi-supervised
/// problem is feasible.
KeypointSet keypoints_from_indices(const EmpiricalMeasure& p, const EmpiricalMeasure& q,
                                   const std::vector<std::pair<Eigen::Index, Eigen::Index>>& pairs);

/// Reads "source_index,target_index" rows.
std::vector<std::pair<Eigen::Index, Eigen::Index>> load_keypoint_indices(const std::string& path);

struct OtProblem {
  OtMode mode = OtMode::Unsupervised;
  CostKind cost_kind = CostKind::SquaredL2;
  double epsilon = 1e-4;
  double tau = 0.1;
  std::optional<KeypointSet> keypoints;

  void validate() const;

  static OtProblem unsupervised(CostKind cost, double epsilon);
  static OtProblem semi_supervised(CostKind cost, double epsilon, KeypointSet keypoints, double tau = 0.1);
};

double cost(CostKind kind, const Point& x, const Point& y);
inline double cost(const OtProblem& problem, const Point& x, const Point& y) {
  return cost(problem.cost_kind, x, y);
}
/// n x m matrix of cost(X.col(i), Y.col(j)).
Eigen::MatrixXd cost_matrix(CostKind kind, const PointSet& X, const PointSet& Y);

/// Softmax of -c(z, z_k)/tau over the keypoints (columns), max-shifted.
Eigen::VectorXd relation_vector(const Point& z, const PointSet& keypoints, double tau, CostKind kind);

/// Jensen-Shannon divergence with natural logarithm; 0 log 0 = 0.
double js_divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// JS divergence between the relation vector of x to the source keypoints and
/// that of y to the target keypoints. Semi-supervised problems only.
double guiding_cost(const OtProblem& problem, const Point& x, const Point& y);

/// Index of the source (target) keypoint that coincides with the point, if any.
std::optional<Eigen::Index> source_keypoint_index(const OtProblem& problem, const Point& x);
std::optional<Eigen::Index> target_keypoint_index(const OtProblem& problem, const Point& y);

/// I(x, y): 1 for keypoint partners or for pairs touching no keypoint,
/// 0 when a keypoint is paired with anything other than its partner.
/// Always 1 in unsupervised mode.
int mask(const OtProblem& problem, const Point& x, const Point& y);
/// Index form over two measures' supports.
int mask(const OtProblem& problem, const EmpiricalMeasure& p, const EmpiricalMeasure& q, Eigen::Index i,
         Eigen::Index j);

/// xi = cost (unsupervised) or guiding cost (semi-supervised).
double xi(const OtProblem& problem, const Point& x, const Point& y);

/// Batched xi and mask over all (column of X, column of Y) pairs.
struct PairTerms {
  Eigen::MatrixXd xi;    // n x m
  Eigen::MatrixXd mask;  // n x m, entries 0 or 1
};
PairTerms pair_terms(const OtProblem& problem, const PointSet& X, const PointSet& Y);

/// Gradient of xi(x, .) at y.
Point xi_gradient_y(const OtProblem& problem, const Point& x, const Point& y);

}  // namespace otcs
