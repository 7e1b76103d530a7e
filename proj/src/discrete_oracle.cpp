#include "otcs/discrete_oracle.hpp"

#include "otcs/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace otcs {

namespace {

struct DualState {
  Eigen::VectorXd u, v;
};

class DiscreteDual {
 public:
  DiscreteDual(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& weight, const Eigen::VectorXd& p,
               const Eigen::VectorXd& q, double eps)
      : xi_(xi), w_(weight), p_(p), q_(q), eps_(eps) {}

  double value(const DualState& s) const {
    double penalty = 0.0;
    for (Eigen::Index j = 0; j < xi_.cols(); ++j)
      for (Eigen::Index i = 0; i < xi_.rows(); ++i) {
        if (w_(i, j) == 0.0) continue;
        const double a = s.u(i) + s.v(j) - xi_(i, j);
        if (a > 0.0) penalty += w_(i, j) * a * a;
      }
    return p_.dot(s.u) + q_.dot(s.v) - penalty / (4.0 * eps_);
  }

  Eigen::MatrixXd plan(const DualState& s) const {
    Eigen::MatrixXd pi(xi_.rows(), xi_.cols());
    for (Eigen::Index j = 0; j < xi_.cols(); ++j)
      for (Eigen::Index i = 0; i < xi_.rows(); ++i) {
        const double a = s.u(i) + s.v(j) - xi_(i, j);
        pi(i, j) = (w_(i, j) > 0.0 && a > 0.0) ? w_(i, j) * a / (2.0 * eps_) : 0.0;
      }
    return pi;
  }

  /// Ascent gradient (p - row sums, q - col sums) and the Newton direction.
  void newton(const DualState& s, Eigen::VectorXd& grad, Eigen::VectorXd& dir) const {
    const Eigen::Index n = xi_.rows(), m = xi_.cols();
    const Eigen::MatrixXd pi = plan(s);
    grad.resize(n + m);
    grad.head(n) = p_ - pi.rowwise().sum();
    grad.tail(m) = q_ - pi.colwise().sum().transpose();

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + m, n + m);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = s.u(i) + s.v(j) - xi_(i, j);
        if (w_(i, j) == 0.0 || a <= 0.0) continue;
        const double k = w_(i, j) / (2.0 * eps_);
        M(i, i) += k;
        M(n + j, n + j) += k;
        M(i, n + j) += k;
        M(n + j, i) += k;
      }
    // Regularize the gauge direction and rows/columns with no active entry.
    const double scale = std::max(M.diagonal().maxCoeff(), 1.0 / (2.0 * eps_) * w_.maxCoeff());
    M.diagonal().array() += 1e-10 * scale;
    dir = M.ldlt().solve(grad);
  }

 private:
  const Eigen::MatrixXd& xi_;
  const Eigen::MatrixXd& w_;
  const Eigen::VectorXd& p_;
  const Eigen::VectorXd& q_;
  double eps_;
};

double kkt_residual(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& w, const Eigen::MatrixXd& pi,
                    const DualState& s, double eps) {
  double r = 0.0;
  for (Eigen::Index j = 0; j < xi.cols(); ++j)
    for (Eigen::Index i = 0; i < xi.rows(); ++i) {
      if (w(i, j) == 0.0) continue;
      if (pi(i, j) > 0.0)
        r = std::max(r, std::abs(xi(i, j) + 2.0 * eps * pi(i, j) / w(i, j) - s.u(i) - s.v(j)));
      else
        r = std::max(r, positive_part(s.u(i) + s.v(j) - xi(i, j)));
    }
  return r;
}

/// Alternating proportional row/column rescaling on the current support.
void repair_marginals(Eigen::MatrixXd& pi, const Eigen::VectorXd& p, const Eigen::VectorXd& q, double target) {
  for (int round = 0; round < 10'000; ++round) {
    const double rv = (pi.rowwise().sum() - p).lpNorm<1>();
    const double cv = (pi.colwise().sum().transpose() - q).lpNorm<1>();
    if (rv <= target && cv <= target) return;
    Eigen::VectorXd rs = pi.rowwise().sum();
    for (Eigen::Index i = 0; i < pi.rows(); ++i)
      if (rs(i) > 0.0) pi.row(i) *= p(i) / rs(i);
    Eigen::VectorXd cs = pi.colwise().sum().transpose();
    for (Eigen::Index j = 0; j < pi.cols(); ++j)
      if (cs(j) > 0.0) pi.col(j) *= q(j) / cs(j);
  }
}

}  // namespace

double plan_objective(const OtProblem& problem, const EmpiricalMeasure& p, const EmpiricalMeasure& q,
                      const Eigen::MatrixXd& plan) {
  const PairTerms terms = pair_terms(problem, p.points(), q.points());
  double obj = 0.0;
  for (Eigen::Index j = 0; j < plan.cols(); ++j)
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
      if (plan(i, j) == 0.0) continue;
      obj += terms.xi(i, j) * plan(i, j) + problem.epsilon * plan(i, j) * plan(i, j) / (p.weight(i) * q.weight(j));
    }
  return obj;
}

PlanMatrix solve_exact(const OtProblem& problem, const EmpiricalMeasure& p, const EmpiricalMeasure& q,
                       double tol) {
  problem.validate();
  require(tol > 0.0, ErrorKind::InvalidArgument, "solve_exact: tol must be > 0");
  require(p.size() * q.size() <= kOracleMaxEntries, ErrorKind::InvalidArgument,
          "solve_exact: n*m = " + std::to_string(p.size() * q.size()) + " exceeds the oracle cap of " +
              std::to_string(kOracleMaxEntries));
  require(p.dimension() == q.dimension() || problem.mode == OtMode::SemiSupervised, ErrorKind::DimensionMismatch,
          "solve_exact: source and target dimensions differ");

  const Eigen::Index n = p.size(), m = q.size();
  const PairTerms terms = pair_terms(problem, p.points(), q.points());
  if (problem.mode == OtMode::SemiSupervised) {
    // Each keypoint row/column has a single admissible entry; its masses must agree.
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) {
        const auto ks = source_keypoint_index(problem, p.point(i));
        const auto kt = target_keypoint_index(problem, q.point(j));
        if (ks && kt && *ks == *kt)
          require(std::abs(p.weight(i) - q.weight(j)) <= 1e-12, ErrorKind::Infeasible,
                  "solve_exact: keypoint pair (" + std::to_string(i) + "," + std::to_string(j) +
                      ") has unequal masses");
      }
  }
  const Eigen::MatrixXd w = (p.weights() * q.weights().transpose()).cwiseProduct(terms.mask);
  const double eps = problem.epsilon;
  DiscreteDual dual(terms.xi, w, p.weights(), q.weights(), eps);

  DualState s;
  s.u = Eigen::VectorXd::Zero(n);
  s.v.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) s.v(j) = terms.xi.col(j).maxCoeff() + 2.0 * eps;

  Eigen::VectorXd grad, dir;
  const double inner_tol = std::min(tol, 1e-10) * 1e-3;
  int it = 0;
  double value = dual.value(s);
  for (; it < 500; ++it) {
    dual.newton(s, grad, dir);
    if (grad.lpNorm<1>() <= inner_tol) break;
    double slope = grad.dot(dir);
    if (!(slope > 0.0)) {
      dir = grad;
      slope = grad.squaredNorm();
    }
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 200; ++ls) {
      DualState trial{s.u + step * dir.head(n), s.v + step * dir.tail(m)};
      const double tv = dual.value(trial);
      if (tv >= value + 1e-4 * step * slope) {
        s = std::move(trial);
        value = tv;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }

  PlanMatrix out;
  out.row_marginal = p.weights();
  out.col_marginal = q.weights();
  out.entries = dual.plan(s);
  repair_marginals(out.entries, p.weights(), q.weights(), tol * 1e-3);
  out.u = s.u;
  out.v = s.v;
  out.iterations = it;
  out.row_violation = (out.entries.rowwise().sum() - p.weights()).lpNorm<1>();
  out.col_violation = (out.entries.colwise().sum().transpose() - q.weights()).lpNorm<1>();
  out.kkt_residual = kkt_residual(terms.xi, w, out.entries, s, eps);
  out.objective = plan_objective(problem, p, q, out.entries);
  require(out.row_violation <= tol && out.col_violation <= tol, ErrorKind::NonConvergence,
          "solve_exact: marginal violation " + std::to_string(std::max(out.row_violation, out.col_violation)) +
              " exceeds tol after " + std::to_string(it) + " iterations");
  require(out.kkt_residual <= tol, ErrorKind::NonConvergence,
          "solve_exact: KKT residual " + std::to_string(out.kkt_residual) + " exceeds tol");
  return out;
}

Eigen::VectorXd conditional_row(const Eigen::MatrixXd& plan, Eigen::Index i) {
  require(i >= 0 && i < plan.rows(), ErrorKind::InvalidArgument, "conditional_row: index out of range");
  const double mass = plan.row(i).sum();
  require(mass > 0.0, ErrorKind::InvalidArgument, "conditional_row: row " + std::to_string(i) + " has zero mass");
  return plan.row(i).transpose() / mass;
}

Eigen::VectorXd conditional_row(const PlanMatrix& plan, Eigen::Index i) { return conditional_row(plan.entries, i); }

Point barycentric_map(const PlanMatrix& plan, const EmpiricalMeasure& q, Eigen::Index i) {
  require(q.size() == plan.cols(), ErrorKind::DimensionMismatch, "barycentric_map: support size mismatch");
  return q.points() * conditional_row(plan, i);
}

void save_plan_csv(const std::string& path, const Eigen::MatrixXd& plan) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << "i,j,value\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < plan.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.cols(); ++j) out << i << ',' << j << ',' << plan(i, j) << '\n';
}

Eigen::MatrixXd load_plan_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open " + path);
  std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> rows;
  std::string line;
  Eigen::Index n = 0, m = 0;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    long long i = 0, j = 0;
    double v = 0;
    char c1 = 0, c2 = 0;
    require(static_cast<bool>(ss >> i >> c1 >> j >> c2 >> v), ErrorKind::Io, path + ": malformed row");
    rows.emplace_back(i, j, v);
    n = std::max<Eigen::Index>(n, i + 1);
    m = std::max<Eigen::Index>(m, j + 1);
  }
  Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(n, m);
  for (const auto& [i, j, v] : rows) plan(i, j) = v;
  return plan;
}

}  // namespace otcs
