#include "otcs/ot_problem.hpp"

#include <fstream>
#include <sstream>

namespace otcs {

const char* to_string(OtMode mode) {
  return mode == OtMode::Unsupervised ? "unsupervised" : "semi_supervised";
}

const char* to_string(CostKind kind) {
  return kind == CostKind::SquaredL2 ? "squared_l2" : "mean_squared_l2";
}

OtMode parse_ot_mode(const std::string& s) {
  if (s == "unsupervised") return OtMode::Unsupervised;
  if (s == "semi_supervised") return OtMode::SemiSupervised;
  fail(ErrorKind::Config, "unknown OT mode '" + s + "'");
}

CostKind parse_cost_kind(const std::string& s) {
  if (s == "squared_l2") return CostKind::SquaredL2;
  if (s == "mean_squared_l2") return CostKind::MeanSquaredL2;
  fail(ErrorKind::Config, "unknown cost kind '" + s + "'");
}

void KeypointSet::validate() const {
  require(source.cols() >= 1 && source.cols() == target.cols(), ErrorKind::InvalidArgument,
          "keypoint set needs K >= 1 matched pairs");
  require(source.allFinite() && target.allFinite(), ErrorKind::NonFinite, "keypoints must be finite");
  for (Eigen::Index a = 0; a < count(); ++a)
    for (Eigen::Index b = a + 1; b < count(); ++b) {
      require(source.col(a) != source.col(b), ErrorKind::InvalidArgument, "source keypoints must be distinct");
      require(target.col(a) != target.col(b), ErrorKind::InvalidArgument, "target keypoints must be distinct");
    }
}

KeypointSet keypoints_from_indices(const EmpiricalMeasure& p, const EmpiricalMeasure& q,
                                   const std::vector<std::pair<Eigen::Index, Eigen::Index>>& pairs) {
  require(!pairs.empty(), ErrorKind::InvalidArgument, "keypoint index list is empty");
  KeypointSet kp;
  kp.source.resize(p.dimension(), static_cast<Eigen::Index>(pairs.size()));
  kp.target.resize(q.dimension(), static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    require(i >= 0 && i < p.size() && j >= 0 && j < q.size(), ErrorKind::InvalidArgument,
            "keypoint index out of range");
    require(std::abs(p.weight(i) - q.weight(j)) <= 1e-12, ErrorKind::Infeasible,
            "keypoint pair " + std::to_string(k) + " has unequal source/target mass");
    kp.source.col(static_cast<Eigen::Index>(k)) = p.point(i);
    kp.target.col(static_cast<Eigen::Index>(k)) = q.point(j);
  }
  kp.validate();
  return kp;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> load_keypoint_indices(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open " + path);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    long long a = 0, b = 0;
    char comma = 0;
    if (!(ss >> a >> comma >> b) || comma != ',') {
      require(out.empty(), ErrorKind::Io, path + ": malformed keypoint row '" + line + "'");
      continue;  // header
    }
    out.emplace_back(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  return out;
}

void OtProblem::validate() const {
  require(epsilon > 0.0 && std::isfinite(epsilon), ErrorKind::InvalidArgument, "epsilon must be > 0");
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::InvalidArgument, "tau must be > 0");
  if (mode == OtMode::SemiSupervised) {
    require(keypoints.has_value() && keypoints->count() >= 1, ErrorKind::InvalidArgument,
            "semi-supervised OT needs a nonempty keypoint set");
    keypoints->validate();
  }
}

OtProblem OtProblem::unsupervised(CostKind cost, double epsilon) {
  OtProblem p;
  p.mode = OtMode::Unsupervised;
  p.cost_kind = cost;
  p.epsilon = epsilon;
  p.validate();
  return p;
}

OtProblem OtProblem::semi_supervised(CostKind cost, double epsilon, KeypointSet keypoints, double tau) {
  OtProblem p;
  p.mode = OtMode::SemiSupervised;
  p.cost_kind = cost;
  p.epsilon = epsilon;
  p.tau = tau;
  p.keypoints = std::move(keypoints);
  p.validate();
  return p;
}

double cost(CostKind kind, const Point& x, const Point& y) {
  require(x.size() == y.size(), ErrorKind::DimensionMismatch, "cost: dimension mismatch");
  const double sq = (x - y).squaredNorm();
  return kind == CostKind::SquaredL2 ? sq : sq / static_cast<double>(x.size());
}

Eigen::MatrixXd cost_matrix(CostKind kind, const PointSet& X, const PointSet& Y) {
  require(X.rows() == Y.rows(), ErrorKind::DimensionMismatch, "cost_matrix: dimension mismatch");
  Eigen::MatrixXd C(X.cols(), Y.cols());
  for (Eigen::Index j = 0; j < Y.cols(); ++j)
    C.col(j) = (X.colwise() - Y.col(j)).colwise().squaredNorm().transpose();
  if (kind == CostKind::MeanSquaredL2) C /= static_cast<double>(X.rows());
  return C;
}

Eigen::VectorXd relation_vector(const Point& z, const PointSet& keypoints, double tau, CostKind kind) {
  require(keypoints.cols() >= 1, ErrorKind::InvalidArgument, "relation_vector needs K >= 1");
  require(tau > 0.0, ErrorKind::InvalidArgument, "relation_vector needs tau > 0");
  require(z.size() == keypoints.rows(), ErrorKind::DimensionMismatch, "relation_vector: dimension mismatch");
  Eigen::VectorXd logits(keypoints.cols());
  for (Eigen::Index k = 0; k < keypoints.cols(); ++k) logits(k) = -cost(kind, z, keypoints.col(k)) / tau;
  logits.array() -= logits.maxCoeff();
  Eigen::VectorXd r = logits.array().exp();
  return r / r.sum();
}

double js_divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require(a.size() == b.size(), ErrorKind::DimensionMismatch, "js_divergence: length mismatch");
  double js = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double m = 0.5 * (a(k) + b(k));
    if (a(k) > 0.0) js += 0.5 * a(k) * std::log(a(k) / m);
    if (b(k) > 0.0) js += 0.5 * b(k) * std::log(b(k) / m);
  }
  return js < 0.0 ? 0.0 : js;
}

double guiding_cost(const OtProblem& problem, const Point& x, const Point& y) {
  require(problem.mode == OtMode::SemiSupervised && problem.keypoints, ErrorKind::InvalidArgument,
          "guiding_cost requires a semi-supervised problem");
  const auto& kp = *problem.keypoints;
  return js_divergence(relation_vector(x, kp.source, problem.tau, problem.cost_kind),
                       relation_vector(y, kp.target, problem.tau, problem.cost_kind));
}

namespace {

std::optional<Eigen::Index> coincident_column(const PointSet& set, const Point& z) {
  if (set.rows() != z.size()) return std::nullopt;
  for (Eigen::Index k = 0; k < set.cols(); ++k)
    if (set.col(k) == z) return k;
  return std::nullopt;
}

int mask_from_indices(std::optional<Eigen::Index> ks, std::optional<Eigen::Index> kt) {
  if (!ks && !kt) return 1;
  if (ks && kt && *ks == *kt) return 1;
  return 0;
}

}  // namespace

std::optional<Eigen::Index> source_keypoint_index(const OtProblem& problem, const Point& x) {
  if (problem.mode != OtMode::SemiSupervised || !problem.keypoints) return std::nullopt;
  return coincident_column(problem.keypoints->source, x);
}

std::optional<Eigen::Index> target_keypoint_index(const OtProblem& problem, const Point& y) {
  if (problem.mode != OtMode::SemiSupervised || !problem.keypoints) return std::nullopt;
  return coincident_column(problem.keypoints->target, y);
}

int mask(const OtProblem& problem, const Point& x, const Point& y) {
  if (problem.mode == OtMode::Unsupervised) return 1;
  return mask_from_indices(source_keypoint_index(problem, x), target_keypoint_index(problem, y));
}

int mask(const OtProblem& problem, const EmpiricalMeasure& p, const EmpiricalMeasure& q, Eigen::Index i,
         Eigen::Index j) {
  return mask(problem, p.point(i), q.point(j));
}

double xi(const OtProblem& problem, const Point& x, const Point& y) {
  return problem.mode == OtMode::Unsupervised ? cost(problem, x, y) : guiding_cost(problem, x, y);
}

PairTerms pair_terms(const OtProblem& problem, const PointSet& X, const PointSet& Y) {
  PairTerms out;
  if (problem.mode == OtMode::Unsupervised) {
    out.xi = cost_matrix(problem.cost_kind, X, Y);
    out.mask = Eigen::MatrixXd::Ones(X.cols(), Y.cols());
    return out;
  }
  const auto& kp = *problem.keypoints;
  const Eigen::Index n = X.cols(), m = Y.cols();
  std::vector<Eigen::VectorXd> rx(static_cast<std::size_t>(n)), ry(static_cast<std::size_t>(m));
  std::vector<std::optional<Eigen::Index>> kx(static_cast<std::size_t>(n)), ky(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    rx[static_cast<std::size_t>(i)] = relation_vector(X.col(i), kp.source, problem.tau, problem.cost_kind);
    kx[static_cast<std::size_t>(i)] = coincident_column(kp.source, X.col(i));
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    ry[static_cast<std::size_t>(j)] = relation_vector(Y.col(j), kp.target, problem.tau, problem.cost_kind);
    ky[static_cast<std::size_t>(j)] = coincident_column(kp.target, Y.col(j));
  }
  out.xi.resize(n, m);
  out.mask.resize(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      out.xi(i, j) = js_divergence(rx[static_cast<std::size_t>(i)], ry[static_cast<std::size_t>(j)]);
      out.mask(i, j) = mask_from_indices(kx[static_cast<std::size_t>(i)], ky[static_cast<std::size_t>(j)]);
    }
  return out;
}

namespace {

Point cost_gradient_y(CostKind kind, const Point& x, const Point& y) {
  Point g = 2.0 * (y - x);
  if (kind == CostKind::MeanSquaredL2) g /= static_cast<double>(y.size());
  return g;
}

}  // namespace

Point xi_gradient_y(const OtProblem& problem, const Point& x, const Point& y) {
  if (problem.mode == OtMode::Unsupervised) return cost_gradient_y(problem.cost_kind, x, y);
  const auto& kp = *problem.keypoints;
  const Eigen::VectorXd a = relation_vector(x, kp.source, problem.tau, problem.cost_kind);
  const Eigen::VectorXd b = relation_vector(y, kp.target, problem.tau, problem.cost_kind);
  // dJS/db_k = 0.5 * log(b_k / m_k); chain through the softmax and the costs.
  Eigen::VectorXd G(b.size());
  for (Eigen::Index k = 0; k < b.size(); ++k)
    G(k) = b(k) > 0.0 ? 0.5 * std::log(b(k) / (0.5 * (a(k) + b(k)))) : 0.0;
  const double mean_g = G.dot(b);
  Point grad = Point::Zero(y.size());
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    const double dlogit = b(k) * (G(k) - mean_g);
    grad -= dlogit * cost_gradient_y(problem.cost_kind, kp.target.col(k), y) / problem.tau;
  }
  return grad;
}

}  // namespace otcs
