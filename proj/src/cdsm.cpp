#include "otcs/cdsm.hpp"

#include "otcs/io.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <iomanip>

namespace otcs {

const char* to_string(WeightMode mode) {
  return mode == WeightMode::SigmaSquared ? "sigma_squared" : "diffusion_squared";
}

WeightMode parse_weight_mode(const std::string& s) {
  if (s == "sigma_squared") return WeightMode::SigmaSquared;
  if (s == "diffusion_squared") return WeightMode::DiffusionSquared;
  fail(ErrorKind::Config, "unknown weight mode '" + s + "'");
}

Eigen::Index HTable::skipped_count() const {
  Eigen::Index n = 0;
  for (const auto& c : candidates) n += c.empty() ? 1 : 0;
  return n;
}

std::vector<Eigen::Index> HTable::active_sources() const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < source_count(); ++i)
    if (!empty(i)) out.push_back(i);
  return out;
}

HTable h_table_from_matrix(const Eigen::MatrixXd& H, double threshold) {
  require(threshold >= 0.0, ErrorKind::InvalidArgument, "H threshold must be >= 0");
  require(H.allFinite(), ErrorKind::NonFinite, "H matrix has non-finite entries");
  HTable table;
  table.threshold = threshold;
  const auto n = static_cast<std::size_t>(H.rows());
  table.candidates.resize(n);
  table.weights.resize(n);
  table.raw.resize(n);
  for (Eigen::Index i = 0; i < H.rows(); ++i) {
    auto& cand = table.candidates[static_cast<std::size_t>(i)];
    auto& raw = table.raw[static_cast<std::size_t>(i)];
    double total = 0.0;
    for (Eigen::Index j = 0; j < H.cols(); ++j)
      if (H(i, j) > threshold) {
        cand.push_back(j);
        raw.push_back(H(i, j));
        total += H(i, j);
      }
    auto& w = table.weights[static_cast<std::size_t>(i)];
    for (double h : raw) w.push_back(h / total);
  }
  require(table.skipped_count() < table.source_count() || H.rows() == 0, ErrorKind::Infeasible,
          "every source has an empty candidate set (H <= " + std::to_string(threshold) +
              " everywhere); potentials untrained or threshold too high");
  return table;
}

HTable build_h_table(const PotentialPair& pp, const EmpiricalMeasure& p, const EmpiricalMeasure& q,
                     double threshold) {
  HTable table = h_table_from_matrix(compatibility_matrix(pp, p.points(), q.points()), threshold);
  if (table.skipped_count() > 0)
    spdlog::info("H table: {} of {} sources have no candidate above {} and are skipped", table.skipped_count(),
                 table.source_count(), threshold);
  return table;
}

HTable paired_h_table(const std::vector<Eigen::Index>& pairing) {
  HTable table;
  table.threshold = 0.0;
  for (Eigen::Index j : pairing) {
    table.candidates.push_back({j});
    table.weights.push_back({1.0});
    table.raw.push_back({1.0});
  }
  return table;
}

Eigen::Index resample_by_compatibility(const HTable& table, Eigen::Index i, Rng& rng) {
  require(i >= 0 && i < table.source_count(), ErrorKind::InvalidArgument, "resample: source index out of range");
  const auto& cand = table.candidates[static_cast<std::size_t>(i)];
  require(!cand.empty(), ErrorKind::InvalidArgument, "resample: source " + std::to_string(i) + " has no candidates");
  const auto& w = table.weights[static_cast<std::size_t>(i)];
  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < cand.size(); ++k) {
    acc += w[k];
    if (u < acc) return cand[k];
  }
  return cand.back();
}

void save_h_table(const std::string& path, const HTable& table) {
  Blob blob;
  blob.magic = "OTCSHTB1";
  blob.header["threshold"] = table.threshold;
  blob.header["sources"] = table.source_count();
  std::vector<double> offsets{0.0}, idx, w, raw;
  for (std::size_t i = 0; i < table.candidates.size(); ++i) {
    for (std::size_t k = 0; k < table.candidates[i].size(); ++k) {
      idx.push_back(static_cast<double>(table.candidates[i][k]));
      w.push_back(table.weights[i][k]);
      raw.push_back(table.raw[i][k]);
    }
    offsets.push_back(static_cast<double>(idx.size()));
  }
  auto vec = [](const std::vector<double>& v) {
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  blob.arrays.emplace_back("offsets", vec(offsets));
  blob.arrays.emplace_back("indices", vec(idx));
  blob.arrays.emplace_back("weights", vec(w));
  blob.arrays.emplace_back("raw", vec(raw));
  save_blob(path, blob);
}

HTable load_h_table(const std::string& path) {
  const Blob blob = load_blob(path, "OTCSHTB1");
  HTable table;
  table.threshold = blob.header.at("threshold").get<double>();
  const auto& off = blob.array("offsets");
  const auto& idx = blob.array("indices");
  const auto& w = blob.array("weights");
  const auto& raw = blob.array("raw");
  for (Eigen::Index i = 0; i + 1 < off.size(); ++i) {
    std::vector<Eigen::Index> c;
    std::vector<double> wi, ri;
    for (auto k = static_cast<Eigen::Index>(off(i)); k < static_cast<Eigen::Index>(off(i + 1)); ++k) {
      c.push_back(static_cast<Eigen::Index>(idx(k)));
      wi.push_back(w(k));
      ri.push_back(raw(k));
    }
    table.candidates.push_back(std::move(c));
    table.weights.push_back(std::move(wi));
    table.raw.push_back(std::move(ri));
  }
  return table;
}

std::optional<Point> resample_continuous(const PotentialPair& pp, const Point& x, const DataSource& q, Eigen::Index L,
                                         Rng& rng, int max_retries) {
  require(L >= 1, ErrorKind::InvalidArgument, "resample_continuous: L must be >= 1");
  require(max_retries >= 0, ErrorKind::InvalidArgument, "resample_continuous: max_retries must be >= 0");
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    const PointSet Y = q.draw(rng, L);
    const Eigen::RowVectorXd h = compatibility_matrix(pp, x, Y).row(0);
    const double total = h.sum();
    if (!(total > 0.0)) continue;
    const double u = uniform(rng, 0.0, total);
    double acc = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      acc += h(l);
      if (u < acc) return Point(Y.col(l));
    }
    for (Eigen::Index l = L - 1; l >= 0; --l)
      if (h(l) > 0.0) return Point(Y.col(l));
  }
  return std::nullopt;
}

CandidatePool::CandidatePool(const PotentialPair& pp, PointSet points)
    : points_(std::move(points)), v_(pp.v(points_)) {
  require(points_.cols() >= 1, ErrorKind::InvalidArgument, "candidate pool must be non-empty");
}

std::optional<Point> CandidatePool::resample(const PotentialPair& pp, const Point& x, Eigen::Index L, Rng& rng,
                                             int max_retries) const {
  require(L >= 1, ErrorKind::InvalidArgument, "resample_continuous: L must be >= 1");
  const auto& problem = pp.problem();
  const double ux = pp.u(x);
  std::uniform_int_distribution<Eigen::Index> pick(0, size() - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(L));
  Eigen::VectorXd h(L);
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    double total = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      const Eigen::Index j = pick(rng);
      idx[static_cast<std::size_t>(l)] = j;
      const Point y = points_.col(j);
      h(l) = mask(problem, x, y) == 0 ? 0.0 : positive_part(ux + v_(j) - xi(problem, x, y));
      total += h(l);
    }
    if (!(total > 0.0)) continue;
    const double u = uniform(rng, 0.0, total);
    double acc = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      acc += h(l);
      if (u < acc) return Point(points_.col(idx[static_cast<std::size_t>(l)]));
    }
    for (Eigen::Index l = L - 1; l >= 0; --l)
      if (h(l) > 0.0) return Point(points_.col(idx[static_cast<std::size_t>(l)]));
  }
  return std::nullopt;
}

void CdsmTrainConfig::validate() const {
  require(batch_size >= 1, ErrorKind::Config, "score.batch_size must be >= 1");
  require(candidates >= 0, ErrorKind::Config, "score.candidates must be >= 0");
  require(iterations >= 0, ErrorKind::Config, "score.iterations must be >= 0");
  require(adam.learning_rate > 0.0, ErrorKind::Config, "score.learning_rate must be > 0");
  require(adam.ema_decay >= 0.0 && adam.ema_decay < 1.0, ErrorKind::Config, "score.ema_decay must be in [0, 1)");
  require(log_every >= 1, ErrorKind::Config, "score.log_every must be >= 1");
  require(max_retries >= 0, ErrorKind::Config, "score.max_retries must be >= 0");
  require(h_threshold >= 0.0, ErrorKind::Config, "score.h_threshold must be >= 0");
  require(candidate_pool >= 0, ErrorKind::Config, "score.candidate_pool must be >= 0");
}

double loss_weight(const SdeSpec& spec, double t, WeightMode mode) {
  if (mode == WeightMode::SigmaSquared) return 1.0;
  const double g = diffusion(spec, t);
  return g * g / kernel_variance(spec, t);
}

Eigen::MatrixXd noised_targets(const SdeSpec& spec, const DsmBatch& batch) {
  Eigen::MatrixXd Yt(batch.Y0.rows(), batch.Y0.cols());
  for (Eigen::Index k = 0; k < batch.size(); ++k)
    Yt.col(k) = mean_scale(spec, batch.t(k)) * batch.Y0.col(k) + sigma_t(spec, batch.t(k)) * batch.noise.col(k);
  return Yt;
}

namespace {

void check_batch(const ScoreModel& model, const DsmBatch& b) {
  require(b.Y0.rows() == model.dimension() && b.noise.rows() == model.dimension(), ErrorKind::DimensionMismatch,
          "DSM batch target dimension mismatch");
  require(b.t.size() == b.size() && b.noise.cols() == b.size(), ErrorKind::DimensionMismatch,
          "DSM batch size mismatch");
  if (model.conditional())
    require(b.X.cols() == b.size(), ErrorKind::DimensionMismatch, "DSM batch condition count mismatch");
}

DsmBatch single(const Point* x, const Point& y, double t, const Point& noise) {
  DsmBatch b;
  if (x) b.X = *x;
  else b.X.resize(0, 1);
  b.Y0 = y;
  b.t = Eigen::VectorXd::Constant(1, t);
  b.noise = noise;
  return b;
}

double fitting_noise_loss(const ScoreModel& model, const DsmBatch& batch, WeightMode mode) {
  check_batch(model, batch);
  const std::span<const double> params(model.theta().data(), static_cast<std::size_t>(model.theta().size()));
  const Eigen::MatrixXd S = model.forward_batch(params, noised_targets(model.sde(), batch), batch.X, batch.t);
  double loss = 0.0;
  for (Eigen::Index k = 0; k < batch.size(); ++k) {
    const double sigma = sigma_t(model.sde(), batch.t(k));
    loss += loss_weight(model.sde(), batch.t(k), mode) * (S.col(k) * sigma + batch.noise.col(k)).squaredNorm();
  }
  return loss / static_cast<double>(batch.size());
}

Eigen::VectorXd uniform_times(const SdeSpec& spec, Eigen::Index n, Rng& rng) {
  Eigen::VectorXd t(n);
  for (Eigen::Index k = 0; k < n; ++k) t(k) = uniform(rng, spec.t_min, spec.T);
  return t;
}

std::vector<Eigen::Index> weighted_indices(const Eigen::VectorXd& w, Eigen::Index n, Rng& rng) {
  std::discrete_distribution<Eigen::Index> pick(w.data(), w.data() + w.size());
  std::vector<Eigen::Index> out(static_cast<std::size_t>(n));
  for (auto& idx : out) idx = pick(rng);
  return out;
}

std::uint64_t resample_seed(std::uint64_t seed) { return derive_seed(seed, stream_tag("cdsm.resample")); }

template <class MakeBatch>
ScoreCheckpoint run_training(const ScoreModel& model, const CdsmTrainConfig& cfg, CdsmTrainingLog* log,
                             MakeBatch make_batch) {
  cfg.validate();
  ScoreModel live = model;
  Eigen::VectorXd theta = model.theta();
  AdamOptimizer opt(cfg.adam, theta);
  double window = 0.0;
  std::int64_t window_count = 0;
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    const DsmBatch batch = make_batch(it);
    if (batch.size() == 0) continue;
    const std::span<const double> params(theta.data(), static_cast<std::size_t>(theta.size()));
    const LossGradient lg = dsm_loss_gradient(live, params, batch, cfg.weight_mode);
    require(std::isfinite(lg.loss), ErrorKind::NonFinite,
            "score training: non-finite loss at iteration " + std::to_string(it));
    try {
      opt.step(theta, lg.gradient);
    } catch (const Error& e) {
      fail(e.kind(), std::string(e.what()) + " at iteration " + std::to_string(it));
    }
    window += lg.loss;
    ++window_count;
    if (log) {
      log->losses.push_back(lg.loss);
      if ((it + 1) % cfg.log_every == 0 || it + 1 == cfg.iterations) {
        log->entries.push_back({it + 1, window / static_cast<double>(window_count), cfg.adam.learning_rate});
        window = 0.0;
        window_count = 0;
      }
    }
  }
  live.set_theta(std::move(theta));
  return ScoreCheckpoint{std::move(live), std::move(opt)};
}

}  // namespace

double cdsm_loss(const ScoreModel& model, const Point* x, const Point& y, double t, const Point& noise,
                 WeightMode mode) {
  return fitting_noise_loss(model, single(x, y, t, noise), mode);
}

double paired_dsm_loss(const ScoreModel& model, const Point& x, const Point& y, double t, const Point& noise,
                       WeightMode mode) {
  require(model.conditional(), ErrorKind::InvalidArgument, "paired_dsm_loss needs a conditional model");
  return fitting_noise_loss(model, single(&x, y, t, noise), mode);
}

LossGradient dsm_loss_gradient(const ScoreModel& model, std::span<const double> params, const DsmBatch& batch,
                               WeightMode mode) {
  check_batch(model, batch);
  ScoreModel::Cache cache;
  const Eigen::MatrixXd S = model.forward_batch(params, noised_targets(model.sde(), batch), batch.X, batch.t, &cache);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Eigen::MatrixXd dS(S.rows(), S.cols());
  LossGradient out;
  for (Eigen::Index k = 0; k < batch.size(); ++k) {
    const double sigma = sigma_t(model.sde(), batch.t(k));
    const double c = loss_weight(model.sde(), batch.t(k), mode);
    const Eigen::VectorXd r = S.col(k) * sigma + batch.noise.col(k);
    out.loss += c * r.squaredNorm();
    dS.col(k) = (2.0 * c * sigma * inv_n) * r;
  }
  out.loss *= inv_n;
  out.gradient = Eigen::VectorXd::Zero(model.parameter_count());
  model.backward(params, cache, dS,
                 std::span<double>(out.gradient.data(), static_cast<std::size_t>(out.gradient.size())));
  return out;
}

LossGradient score_regression_gradient(const ScoreModel& model, std::span<const double> params,
                                       const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X, const Eigen::VectorXd& t,
                                       const Eigen::MatrixXd& target, const Eigen::VectorXd& weight) {
  require(target.rows() == Y.rows() && target.cols() == Y.cols() && weight.size() == Y.cols(),
          ErrorKind::DimensionMismatch, "score regression shape mismatch");
  ScoreModel::Cache cache;
  const Eigen::MatrixXd S = model.forward_batch(params, Y, X, t, &cache);
  const double inv_n = 1.0 / static_cast<double>(Y.cols());
  const Eigen::MatrixXd R = S - target;
  LossGradient out;
  Eigen::MatrixXd dS(S.rows(), S.cols());
  for (Eigen::Index k = 0; k < Y.cols(); ++k) {
    out.loss += weight(k) * R.col(k).squaredNorm();
    dS.col(k) = (2.0 * weight(k) * inv_n) * R.col(k);
  }
  out.loss *= inv_n;
  out.gradient = Eigen::VectorXd::Zero(model.parameter_count());
  model.backward(params, cache, dS,
                 std::span<double>(out.gradient.data(), static_cast<std::size_t>(out.gradient.size())));
  return out;
}

DsmBatch cdsm_batch(const HTable& table, const EmpiricalMeasure& p, const EmpiricalMeasure& q, const SdeSpec& spec,
                    Eigen::Index batch_size, std::uint64_t seed, std::int64_t iteration, Rng& main) {
  require(table.source_count() == p.size(), ErrorKind::DimensionMismatch, "H table does not match the source set");
  const auto active = table.active_sources();
  require(!active.empty(), ErrorKind::Infeasible, "H table has no usable sources");
  Eigen::VectorXd w(static_cast<Eigen::Index>(active.size()));
  for (std::size_t a = 0; a < active.size(); ++a) w(static_cast<Eigen::Index>(a)) = p.weight(active[a]);
  require(w.sum() > 0.0, ErrorKind::Infeasible, "usable sources carry zero mass");

  const auto picks = weighted_indices(w, batch_size, main);
  DsmBatch b;
  b.X.resize(p.dimension(), batch_size);
  b.Y0.resize(q.dimension(), batch_size);
  const std::uint64_t rs = resample_seed(seed);
  for (Eigen::Index k = 0; k < batch_size; ++k) {
    const Eigen::Index i = active[static_cast<std::size_t>(picks[static_cast<std::size_t>(k)])];
    Rng slot = make_rng(rs, static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(k));
    b.X.col(k) = p.points().col(i);
    b.Y0.col(k) = q.points().col(resample_by_compatibility(table, i, slot));
  }
  b.t = uniform_times(spec, batch_size, main);
  b.noise = standard_normal(main, q.dimension(), batch_size);
  return b;
}

DsmBatch paired_batch(const PointSet& X, const PointSet& Y, const Eigen::VectorXd& pair_weights, const SdeSpec& spec,
                      Eigen::Index batch_size, Rng& main) {
  require(X.cols() == Y.cols() && pair_weights.size() == Y.cols(), ErrorKind::DimensionMismatch,
          "paired dataset size mismatch");
  const auto picks = weighted_indices(pair_weights, batch_size, main);
  DsmBatch b;
  b.X.resize(X.rows(), batch_size);
  b.Y0.resize(Y.rows(), batch_size);
  for (Eigen::Index k = 0; k < batch_size; ++k) {
    b.X.col(k) = X.col(picks[static_cast<std::size_t>(k)]);
    b.Y0.col(k) = Y.col(picks[static_cast<std::size_t>(k)]);
  }
  b.t = uniform_times(spec, batch_size, main);
  b.noise = standard_normal(main, Y.rows(), batch_size);
  return b;
}

void save_loss_log_csv(const std::string& path, const CdsmTrainingLog& log) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << "iteration,loss,learning_rate\n" << std::setprecision(17);
  for (const auto& e : log.entries) out << e.iteration << ',' << e.loss << ',' << e.learning_rate << '\n';
}

ScoreCheckpoint train_conditional(const ScoreModel& model, const HTable& table, const EmpiricalMeasure& p,
                                  const EmpiricalMeasure& q, const CdsmTrainConfig& cfg, CdsmTrainingLog* log) {
  require(model.conditional(), ErrorKind::InvalidArgument, "train_conditional needs a conditional model");
  require(table.skipped_count() < table.source_count(), ErrorKind::Infeasible, "H table has no usable sources");
  if (log) log->skipped_sources = table.skipped_count();
  Rng main = named_stream(cfg.seed, "cdsm.main");
  return run_training(model, cfg, log, [&](std::int64_t it) {
    return cdsm_batch(table, p, q, model.sde(), cfg.batch_size, cfg.seed, it, main);
  });
}

ScoreCheckpoint train_conditional_continuous(const ScoreModel& model, const PotentialPair& pp, const DataSource& p,
                                             const DataSource& q, const CdsmTrainConfig& cfg,
                                             CdsmTrainingLog* log) {
  require(model.conditional(), ErrorKind::InvalidArgument, "train_conditional needs a conditional model");
  Rng main = named_stream(cfg.seed, "cdsm.main");
  const std::uint64_t rs = resample_seed(cfg.seed);
  std::optional<CandidatePool> pool;
  if (cfg.candidate_pool > 0) {
    Rng pool_rng = named_stream(cfg.seed, "cdsm.pool");
    pool.emplace(pp, q.draw(pool_rng, cfg.candidate_pool));
  }
  return run_training(model, cfg, log, [&](std::int64_t it) {
    const PointSet X = p.draw(main, cfg.batch_size);
    std::vector<Eigen::Index> kept;
    PointSet Y0(q.dimension(), cfg.batch_size);
    for (Eigen::Index k = 0; k < cfg.batch_size; ++k) {
      Rng slot = make_rng(rs, static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(k));
      const Point x = X.col(k);
      const auto y = pool ? pool->resample(pp, x, cfg.candidate_count(), slot, cfg.max_retries)
                          : resample_continuous(pp, x, q, cfg.candidate_count(), slot, cfg.max_retries);
      if (!y) continue;
      Y0.col(static_cast<Eigen::Index>(kept.size())) = *y;
      kept.push_back(k);
    }
    const auto skipped = cfg.batch_size - static_cast<Eigen::Index>(kept.size());
    if (skipped > 0) {
      if (log) log->skipped_conditions += skipped;
      spdlog::debug("iteration {}: {} conditions skipped after {} retries", it, skipped, cfg.max_retries);
    }
    require(!kept.empty(), ErrorKind::Infeasible,
            "retry cap exhausted for every condition in the batch at iteration " + std::to_string(it));
    DsmBatch b;
    const auto n = static_cast<Eigen::Index>(kept.size());
    b.X.resize(X.rows(), n);
    for (Eigen::Index k = 0; k < n; ++k) b.X.col(k) = X.col(kept[static_cast<std::size_t>(k)]);
    b.Y0 = Y0.leftCols(n);
    b.t = uniform_times(model.sde(), n, main);
    b.noise = standard_normal(main, q.dimension(), n);
    return b;
  });
}

ScoreCheckpoint train_unconditional(const ScoreModel& model, const DataSource& q, const CdsmTrainConfig& cfg,
                                    CdsmTrainingLog* log) {
  require(!model.conditional(), ErrorKind::InvalidArgument, "train_unconditional needs an unconditional model");
  Rng main = named_stream(cfg.seed, "cdsm.main");
  return run_training(model, cfg, log, [&](std::int64_t) {
    DsmBatch b;
    b.Y0 = q.draw(main, cfg.batch_size);
    b.X.resize(0, cfg.batch_size);
    b.t = uniform_times(model.sde(), cfg.batch_size, main);
    b.noise = standard_normal(main, q.dimension(), cfg.batch_size);
    return b;
  });
}

ScoreCheckpoint train_paired(const ScoreModel& model, const PointSet& X, const PointSet& Y,
                             const CdsmTrainConfig& cfg, CdsmTrainingLog* log) {
  require(model.conditional(), ErrorKind::InvalidArgument, "train_paired needs a conditional model");
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(Y.cols(), 1.0 / static_cast<double>(Y.cols()));
  Rng main = named_stream(cfg.seed, "cdsm.main");
  return run_training(model, cfg, log,
                      [&](std::int64_t) { return paired_batch(X, Y, w, model.sde(), cfg.batch_size, main); });
}

}  // namespace otcs
