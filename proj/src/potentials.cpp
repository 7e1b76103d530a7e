#include "otcs/potentials.hpp"

#include "otcs/io.hpp"
#include "otcs/optimizer.hpp"

#include <spdlog/spdlog.h>

namespace otcs {

void PotentialTrainConfig::validate() const {
  require(learning_rate > 0.0, ErrorKind::InvalidArgument, "potential learning rate must be > 0");
  require(batch_size >= 1, ErrorKind::InvalidArgument, "potential batch size must be >= 1");
  require(iterations >= 0, ErrorKind::InvalidArgument, "potential iterations must be >= 0");
  require(monitor_every >= 1 && monitor_probes >= 1, ErrorKind::InvalidArgument,
          "monitor cadence and probe count must be >= 1");
  require(final_learning_rate >= 0.0, ErrorKind::InvalidArgument, "final potential learning rate must be >= 0");
  for (auto h : architecture.hidden) require(h >= 1, ErrorKind::InvalidArgument, "hidden widths must be >= 1");
}

double PotentialTrainConfig::learning_rate_at(std::int64_t iteration) const {
  if (final_learning_rate <= 0.0 || iterations <= 1) return learning_rate;
  const double frac = static_cast<double>(iteration - 1) / static_cast<double>(iterations - 1);
  return learning_rate * std::pow(final_learning_rate / learning_rate, frac);
}

PotentialPair::PotentialPair(OtProblem problem, Eigen::Index source_dim, Eigen::Index target_dim,
                             PotentialArchitecture arch)
    : problem_(std::move(problem)),
      arch_(std::move(arch)),
      u_net_(MlpArch::feedforward(source_dim, arch_.hidden, 1, arch_.activation)),
      v_net_(MlpArch::feedforward(target_dim, arch_.hidden, 1, arch_.activation)),
      omega_(Eigen::VectorXd::Zero(u_net_.parameter_count() + v_net_.parameter_count())) {
  problem_.validate();
}

void PotentialPair::initialize(Rng& rng) {
  u_net_.initialize(std::span<double>(omega_.data(), static_cast<std::size_t>(u_net_.parameter_count())), rng);
  v_net_.initialize(std::span<double>(omega_.data() + u_net_.parameter_count(),
                                      static_cast<std::size_t>(v_net_.parameter_count())),
                    rng);
}

void PotentialPair::set_omega(Eigen::VectorXd omega) {
  require(omega.size() == parameter_count(), ErrorKind::DimensionMismatch, "omega has wrong size");
  omega_ = std::move(omega);
}

std::span<const double> PotentialPair::u_params() const {
  return {omega_.data(), static_cast<std::size_t>(u_net_.parameter_count())};
}

std::span<const double> PotentialPair::v_params() const {
  return {omega_.data() + u_net_.parameter_count(), static_cast<std::size_t>(v_net_.parameter_count())};
}

Eigen::RowVectorXd PotentialPair::u(const PointSet& X) const { return u_net_.forward(u_params(), X); }
Eigen::RowVectorXd PotentialPair::v(const PointSet& Y) const { return v_net_.forward(v_params(), Y); }
double PotentialPair::u(const Point& x) const { return u(PointSet(x))(0); }
double PotentialPair::v(const Point& y) const { return v(PointSet(y))(0); }

Point PotentialPair::v_gradient(const Point& y) const {
  Mlp::Cache cache;
  v_net_.forward(v_params(), PointSet(y), &cache);
  Eigen::VectorXd scratch = Eigen::VectorXd::Zero(v_net_.parameter_count());
  const Eigen::MatrixXd dx = v_net_.backward(v_params(), cache, Eigen::MatrixXd::Ones(1, 1),
                                             std::span<double>(scratch.data(), scratch.size()), true);
  return dx.col(0);
}

namespace {

struct PenaltyTerms {
  double value = 0.0;
  Eigen::RowVectorXd du, dv;  // dF/du, dF/dv
  Eigen::Index clamp_events = 0;
};

PenaltyTerms evaluate_dual_terms(const PotentialPair& pp, const Eigen::RowVectorXd& u,
                                 const Eigen::RowVectorXd& v, const PairTerms& terms) {
  const Eigen::Index n = u.size(), m = v.size();
  const double eps = pp.problem().epsilon;
  const double pair_scale = 1.0 / (4.0 * eps * static_cast<double>(n) * static_cast<double>(m));
  PenaltyTerms out;
  out.du = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
  out.dv = Eigen::RowVectorXd::Constant(m, 1.0 / static_cast<double>(m));
  double penalty = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (terms.mask(i, j) == 0.0) continue;
      const double a = u(i) + v(j) - terms.xi(i, j);
      if (a <= 0.0) continue;
      if (a > kDualClamp) {
        ++out.clamp_events;
        penalty += kDualClamp * kDualClamp;
        continue;
      }
      penalty += a * a;
      const double d = 2.0 * a * pair_scale;
      out.du(i) -= d;
      out.dv(j) -= d;
    }
  }
  out.value = u.mean() + v.mean() - pair_scale * penalty;
  return out;
}

}  // namespace

double dual_objective(const PotentialPair& pp, const PointSet& batch_x, const PointSet& batch_y) {
  require(batch_x.cols() > 0 && batch_y.cols() > 0, ErrorKind::InvalidArgument, "dual batches must be nonempty");
  const PairTerms terms = pair_terms(pp.problem(), batch_x, batch_y);
  return evaluate_dual_terms(pp, pp.u(batch_x), pp.v(batch_y), terms).value;
}

DualEvaluation dual_objective_with_gradient(const PotentialPair& pp, const PointSet& batch_x,
                                            const PointSet& batch_y) {
  require(batch_x.cols() > 0 && batch_y.cols() > 0, ErrorKind::InvalidArgument, "dual batches must be nonempty");
  Mlp::Cache cu, cv;
  const Eigen::RowVectorXd u = pp.u_net().forward(pp.u_params(), batch_x, &cu);
  const Eigen::RowVectorXd v = pp.v_net().forward(pp.v_params(), batch_y, &cv);
  const PairTerms terms = pair_terms(pp.problem(), batch_x, batch_y);
  const PenaltyTerms t = evaluate_dual_terms(pp, u, v, terms);

  DualEvaluation out;
  out.value = t.value;
  out.clamp_events = t.clamp_events;
  out.gradient = Eigen::VectorXd::Zero(pp.parameter_count());
  const auto nu = static_cast<std::size_t>(pp.u_net().parameter_count());
  std::span<double> g(out.gradient.data(), static_cast<std::size_t>(out.gradient.size()));
  pp.u_net().backward(pp.u_params(), cu, t.du, g.subspan(0, nu), false);
  pp.v_net().backward(pp.v_params(), cv, t.dv, g.subspan(nu), false);
  return out;
}

PotentialPair train_potentials(const OtProblem& problem, const DataSource& p, const DataSource& q,
                               const PotentialTrainConfig& cfg, PotentialTrainingLog* log,
                               const PotentialPair* warm_start) {
  cfg.validate();
  problem.validate();
  PotentialPair pp(problem, p.dimension(), q.dimension(), cfg.architecture);
  Rng init_rng = named_stream(cfg.seed, "potentials.init");
  pp.initialize(init_rng);
  if (warm_start) {
    require(warm_start->source_dim() == pp.source_dim() && warm_start->target_dim() == pp.target_dim() &&
                warm_start->parameter_count() == pp.parameter_count(),
            ErrorKind::DimensionMismatch, "warm-start potentials have a different architecture");
    pp.set_omega(warm_start->omega());
  }
  if (cfg.iterations == 0) return pp;

  Rng monitor_rng = named_stream(cfg.seed, "potentials.monitor");
  const PointSet probe_x = p.draw(monitor_rng, cfg.monitor_probes);
  const PointSet probe_y = q.draw(monitor_rng, cfg.monitor_probes);
  Eigen::MatrixXd prev_h = compatibility_matrix(pp, probe_x, probe_y);

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  AdamOptimizer adam(adam_cfg, pp.omega());
  Eigen::VectorXd omega = pp.omega();
  Rng rng = named_stream(cfg.seed, "potentials.batches");
  Eigen::Index clamp_total = 0;

  for (std::int64_t it = 1; it <= cfg.iterations; ++it) {
    const PointSet bx = p.draw(rng, cfg.batch_size);
    const PointSet by = q.draw(rng, cfg.batch_size);
    DualEvaluation eval = dual_objective_with_gradient(pp, bx, by);
    if (!std::isfinite(eval.value) || !eval.gradient.allFinite())
      fail(ErrorKind::NonFinite, "potential training diverged at iteration " + std::to_string(it) +
                                     " (dual value " + std::to_string(eval.value) + ")");
    if (eval.clamp_events > 0) {
      if (clamp_total == 0)
        spdlog::warn("dual penalty clamped at iteration {} ({} pairs); learning rate may be too large for eps={}",
                     it, eval.clamp_events, problem.epsilon);
      clamp_total += eval.clamp_events;
    }
    adam.set_learning_rate(cfg.learning_rate_at(it));
    adam.step(omega, -eval.gradient);
    pp.set_omega(omega);
    if (log) log->dual_values.push_back(eval.value);

    if (it % cfg.monitor_every == 0) {
      Eigen::MatrixXd h = compatibility_matrix(pp, probe_x, probe_y);
      const double base = prev_h.norm();
      const double change = base > 0.0 ? (h - prev_h).norm() / base : std::numeric_limits<double>::quiet_NaN();
      if (log) log->h_relative_change.emplace_back(it, change);
      prev_h = std::move(h);
    }
  }
  if (log) log->clamp_events = clamp_total;
  return pp;
}

double compatibility(const PotentialPair& pp, const Point& x, const Point& y) {
  const auto& problem = pp.problem();
  if (mask(problem, x, y) == 0) return 0.0;
  return positive_part(pp.u(x) + pp.v(y) - xi(problem, x, y)) / (2.0 * problem.epsilon);
}

Eigen::MatrixXd compatibility_matrix(const PotentialPair& pp, const PointSet& X, const PointSet& Y) {
  const PairTerms terms = pair_terms(pp.problem(), X, Y);
  const Eigen::RowVectorXd u = pp.u(X), v = pp.v(Y);
  Eigen::MatrixXd a = (-terms.xi).colwise() + u.transpose();
  a.rowwise() += v;
  return (a.array().max(0.0) * terms.mask.array()).matrix() / (2.0 * pp.problem().epsilon);
}

Point log_compatibility_gradient(const PotentialPair& pp, const Point& x, const Point& y) {
  const auto& problem = pp.problem();
  if (mask(problem, x, y) == 0) return Point::Zero(y.size());
  const double a = pp.u(x) + pp.v(y) - xi(problem, x, y);
  if (!(a > 0.0)) return Point::Zero(y.size());
  return (pp.v_gradient(y) - xi_gradient_y(problem, x, y)) / a;
}

PlanEstimate plan_estimate(const PotentialPair& pp, const EmpiricalMeasure& p, const EmpiricalMeasure& q) {
  PlanEstimate out;
  const Eigen::MatrixXd H = compatibility_matrix(pp, p.points(), q.points());
  out.plan = (H.array().colwise() * p.weights().array()).rowwise() * q.weights().transpose().array();
  out.row_violation = (out.plan.rowwise().sum() - p.weights()).lpNorm<1>();
  out.col_violation = (out.plan.colwise().sum().transpose() - q.weights()).lpNorm<1>();
  return out;
}

namespace {

constexpr const char* kPotentialMagic = "OTCSPOT1";

Eigen::VectorXd flatten(const PointSet& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

}  // namespace

void save_potentials(const std::string& path, const PotentialPair& pp) {
  Blob blob;
  blob.magic = kPotentialMagic;
  const auto& pr = pp.problem();
  blob.header["mode"] = to_string(pr.mode);
  blob.header["cost"] = to_string(pr.cost_kind);
  blob.header["epsilon"] = pr.epsilon;
  blob.header["tau"] = pr.tau;
  blob.header["source_dim"] = pp.source_dim();
  blob.header["target_dim"] = pp.target_dim();
  blob.header["hidden"] = pp.architecture().hidden;
  blob.header["activation"] = to_string(pp.architecture().activation);
  blob.arrays.emplace_back("omega", pp.omega());
  if (pr.keypoints) {
    blob.header["keypoints"] = pr.keypoints->count();
    blob.arrays.emplace_back("keypoints.source", flatten(pr.keypoints->source));
    blob.arrays.emplace_back("keypoints.target", flatten(pr.keypoints->target));
  }
  save_blob(path, blob);
}

PotentialPair load_potentials(const std::string& path, OtMode expected_mode) {
  const Blob blob = load_blob(path, kPotentialMagic);
  const auto& h = blob.header;
  OtProblem pr;
  pr.mode = parse_ot_mode(h.at("mode").get<std::string>());
  require(pr.mode == expected_mode, ErrorKind::Config,
          path + ": potentials were trained for " + std::string(to_string(pr.mode)) + " OT, expected " +
              to_string(expected_mode));
  pr.cost_kind = parse_cost_kind(h.at("cost").get<std::string>());
  pr.epsilon = h.at("epsilon").get<double>();
  pr.tau = h.at("tau").get<double>();
  const auto dx = h.at("source_dim").get<Eigen::Index>();
  const auto dy = h.at("target_dim").get<Eigen::Index>();
  if (h.contains("keypoints")) {
    const auto k = h.at("keypoints").get<Eigen::Index>();
    KeypointSet kp;
    kp.source = Eigen::Map<const PointSet>(blob.array("keypoints.source").data(), dx, k);
    kp.target = Eigen::Map<const PointSet>(blob.array("keypoints.target").data(), dy, k);
    pr.keypoints = std::move(kp);
  }
  PotentialArchitecture arch;
  arch.hidden = h.at("hidden").get<std::vector<Eigen::Index>>();
  arch.activation = parse_activation(h.at("activation").get<std::string>());
  PotentialPair pp(std::move(pr), dx, dy, arch);
  pp.set_omega(blob.array("omega"));
  return pp;
}

}  // namespace otcs
