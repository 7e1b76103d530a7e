#include "otcs/pipeline.hpp"

#include "otcs/discrete_oracle.hpp"
#include "otcs/io.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iomanip>

namespace otcs {

namespace {

EmpiricalMeasure discrete_side(const DataSpec& d, std::uint64_t seed, const char* name) {
  if (d.kind == "csv") return load_measure_csv(d.path, d.trailing_weight);
  GaussianSource g(d.mean, d.stddev);
  Rng rng = named_stream(seed, name);
  return EmpiricalMeasure::uniform(g.draw(rng, d.size));
}

std::vector<double> as_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json with_config(nlohmann::json j, const ExperimentConfig& cfg) {
  j["config"] = cfg.echo;
  return j;
}

void write_dual_log(const std::string& path, const PotentialTrainingLog& log) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << "iteration,dual\n" << std::setprecision(17);
  for (std::size_t k = 0; k < log.dual_values.size(); ++k) out << k + 1 << ',' << log.dual_values[k] << '\n';
}

void write_h_change_log(const std::string& path, const PotentialTrainingLog& log) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << "iteration,relative_change\n" << std::setprecision(17);
  for (const auto& [it, change] : log.h_relative_change) out << it << ',' << change << '\n';
}

ScoreModel fresh_model(const ExperimentConfig& cfg, Eigen::Index dim, Eigen::Index cond_dim, bool conditional,
                       const char* stream) {
  ScoreArchitecture arch = cfg.score_arch;
  arch.dim = dim;
  arch.cond_dim = cond_dim;
  arch.conditional = conditional;
  ScoreModel model(arch, cfg.sde);
  Rng rng = named_stream(cfg.score_train.seed, stream);
  model.initialize(rng);
  return model;
}

double tail_mean(const std::vector<double>& losses, std::size_t window) {
  if (losses.empty()) return 0.0;
  const std::size_t n = std::min(window, losses.size());
  double s = 0.0;
  for (std::size_t k = losses.size() - n; k < losses.size(); ++k) s += losses[k];
  return s / static_cast<double>(n);
}

nlohmann::json plan_report(const PlanEstimate& est) {
  return {{"row_violation", est.row_violation}, {"col_violation", est.col_violation}};
}

std::string eps_tag(std::size_t k, double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%zu_%.0e", k, eps);
  return buf;
}

ConditionalSampler sampler_for(const ScoreField& score, const SdeSpec& spec, SamplerConfig sc) {
  return [&score, spec, sc](const Point& x, Eigen::Index probe, Eigen::Index n) {
    return sample_condition(score, spec, &x, n, sc, static_cast<std::uint64_t>(probe * n));
  };
}

}  // namespace

ExperimentData load_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  const std::uint64_t seed = stream_seed(cfg.seed, "data");
  if (cfg.regime == Regime::Discrete) {
    data.p = discrete_side(cfg.source, seed, "source");
    data.q = discrete_side(cfg.target, seed, "target");
    data.p_eval = *data.p;
    data.q_eval = *data.q;
  } else {
    data.p_source = std::make_unique<GaussianSource>(cfg.source.mean, cfg.source.stddev);
    data.q_source = std::make_unique<GaussianSource>(cfg.target.mean, cfg.target.stddev);
    const std::uint64_t eval_seed = stream_seed(cfg.seed, "eval");
    Rng rp = named_stream(eval_seed, "source");
    Rng rq = named_stream(eval_seed, "target");
    data.p_eval = EmpiricalMeasure::uniform(data.p_source->draw(rp, cfg.eval_support));
    data.q_eval = EmpiricalMeasure::uniform(data.q_source->draw(rq, cfg.eval_support));
  }
  data.problem = cfg.problem;
  if (cfg.problem.mode == OtMode::SemiSupervised) {
    auto kp = keypoints_from_indices(*data.p, *data.q, load_keypoint_indices(cfg.keypoints_path));
    data.problem = OtProblem::semi_supervised(cfg.problem.cost_kind, cfg.problem.epsilon, std::move(kp),
                                              cfg.problem.tau);
  }
  data.problem.validate();
  return data;
}

std::string potentials_path(const ExperimentConfig& cfg) { return cfg.path_in("checkpoints", "potentials.bin"); }

std::string score_path(const ExperimentConfig& cfg, bool unconditional) {
  return cfg.path_in("checkpoints", unconditional ? "score_unconditional.bin" : "score.bin");
}

nlohmann::json cmd_fit_ot(const ExperimentConfig& cfg) {
  const ExperimentData data = load_data(cfg);
  spdlog::info("fitting potentials: eps={} iterations={}", data.problem.epsilon, cfg.ot_train.iterations);
  PotentialTrainingLog log;
  const PotentialPair pp = train_potentials(data.problem, data.p_draws(), data.q_draws(), cfg.ot_train, &log);
  const PlanEstimate est = plan_estimate(pp, data.p_eval, data.q_eval);

  save_potentials(potentials_path(cfg), pp);
  write_dual_log(cfg.path_in("logs", "dual.csv"), log);
  write_h_change_log(cfg.path_in("logs", "h_change.csv"), log);
  nlohmann::json j = {{"command", "fit-ot"},
                      {"final_dual", log.dual_values.empty() ? 0.0 : log.dual_values.back()},
                      {"clamp_events", log.clamp_events},
                      {"plan", plan_report(est)}};
  j = with_config(std::move(j), cfg);
  write_json(cfg.path_in("metrics", "fit_ot.json"), j);
  return j;
}

nlohmann::json cmd_oracle(const ExperimentConfig& cfg, const std::string& potentials) {
  require(cfg.regime == Regime::Discrete, ErrorKind::Config, "data.regime: the oracle needs the discrete regime");
  const ExperimentData data = load_data(cfg);
  std::optional<PotentialPair> pp;
  if (!potentials.empty()) pp = load_potentials(potentials, data.problem.mode);

  const PlanMatrix exact = solve_exact(data.problem, *data.p, *data.q);
  nlohmann::json j = {{"command", "oracle"},
                      {"exact",
                       {{"objective", exact.objective},
                        {"row_violation", exact.row_violation},
                        {"col_violation", exact.col_violation},
                        {"kkt_residual", exact.kkt_residual},
                        {"iterations", exact.iterations}}}};
  const Eigen::MatrixXd masks = pair_terms(data.problem, data.p->points(), data.q->points()).mask;
  const auto masked_max = [&](const Eigen::MatrixXd& plan) {
    return (masks.array() == 0.0).select(plan.array().abs(), 0.0).maxCoeff();
  };
  j["exact"]["masked_max"] = masked_max(exact.entries);
  save_plan_csv(cfg.path_in("metrics", "oracle_plan.csv"), exact.entries);
  if (pp) {
    const PlanEstimate est = plan_estimate(*pp, *data.p, *data.q);
    save_plan_csv(cfg.path_in("metrics", "reconstructed_plan.csv"), est.plan);
    j["reconstructed"] = plan_report(est);
    j["reconstructed"]["masked_max"] = masked_max(est.plan);
    j["l1_distance"] = (est.plan - exact.entries).cwiseAbs().sum();
  }
  j = with_config(std::move(j), cfg);
  write_json(cfg.path_in("metrics", "oracle.json"), j);
  return j;
}

nlohmann::json cmd_fit_score(const ExperimentConfig& cfg, const std::string& potentials, bool unconditional) {
  const ExperimentData data = load_data(cfg);
  const Eigen::Index dim = data.q_draws().dimension();
  const Eigen::Index cond_dim = data.p_draws().dimension();
  CdsmTrainingLog log;
  std::optional<ScoreCheckpoint> ck;
  nlohmann::json j = {{"command", "fit-score"}, {"unconditional", unconditional}};

  if (unconditional) {
    const ScoreModel model = fresh_model(cfg, dim, cond_dim, false, "unconditional");
    CdsmTrainConfig tc = cfg.score_train;
    if (cfg.unconditional_iterations > 0) tc.iterations = cfg.unconditional_iterations;
    ck = train_unconditional(model, data.q_draws(), tc, &log);
  } else {
    require(!potentials.empty(), ErrorKind::InvalidArgument, "fit-score needs a potentials checkpoint");
    const PotentialPair pp = load_potentials(potentials, data.problem.mode);
    require(pp.source_dim() == cond_dim && pp.target_dim() == dim, ErrorKind::DimensionMismatch,
            "potentials dimensions do not match the configured data");
    const ScoreModel model = fresh_model(cfg, dim, cond_dim, true, "conditional");
    if (cfg.regime == Regime::Discrete) {
      const HTable table = build_h_table(pp, *data.p, *data.q, cfg.score_train.h_threshold);
      save_h_table(cfg.path_in("checkpoints", "h_table.bin"), table);
      ck = train_conditional(model, table, *data.p, *data.q, cfg.score_train, &log);
    } else {
      ck = train_conditional_continuous(model, pp, *data.p_source, *data.q_source, cfg.score_train, &log);
    }
  }
  save_score_checkpoint(score_path(cfg, unconditional), ck->model, ck->optimizer);
  save_loss_log_csv(cfg.path_in("logs", unconditional ? "score_unconditional_loss.csv" : "score_loss.csv"), log);
  j["skipped_sources"] = log.skipped_sources;
  j["skipped_conditions"] = log.skipped_conditions;
  j["final_loss_window"] = tail_mean(log.losses, 100);
  j = with_config(std::move(j), cfg);
  write_json(cfg.path_in("metrics", unconditional ? "fit_score_unconditional.json" : "fit_score.json"), j);
  return j;
}

nlohmann::json cmd_sample(const ExperimentConfig& cfg, const SampleRequest& req) {
  require(req.n_samples >= 1, ErrorKind::InvalidArgument, "n_samples must be >= 1");
  const ScoreCheckpoint ck = load_score_checkpoint(req.model);
  const ScoreModel model = ck.ema_model();
  const SdeSpec& spec = model.sde();
  cfg.sampler.validate(spec);
  const PointSet conditions = load_points_csv(req.conditions);

  std::optional<PotentialPair> pp;
  std::unique_ptr<SconesScore> guided;
  const ScoreField* score = &model;
  if (!model.conditional()) {
    require(!req.potentials.empty(), ErrorKind::InvalidArgument,
            "an unconditional model needs a potentials checkpoint for guidance");
    pp = load_potentials(req.potentials, cfg.problem.mode);
    require(pp->target_dim() == model.dimension(), ErrorKind::DimensionMismatch,
            "potentials target dimension differs from the model");
    guided = std::make_unique<SconesScore>(model, *pp);
    score = guided.get();
  }
  const Eigen::Index cond_dim = model.conditional() ? model.architecture().cond_dim : pp->source_dim();
  require(conditions.rows() == cond_dim, ErrorKind::DimensionMismatch,
          "conditions have dimension " + std::to_string(conditions.rows()) + ", the model expects " +
              std::to_string(cond_dim));

  const Eigen::Index n = req.n_samples;
  PointSet xs(cond_dim, conditions.cols() * n), ys(model.dimension(), conditions.cols() * n);
  for (Eigen::Index c = 0; c < conditions.cols(); ++c) {
    const Point x = conditions.col(c);
    xs.middleCols(c * n, n) = x.replicate(1, n);
    ys.middleCols(c * n, n) = sample_condition(*score, spec, &x, n, cfg.sampler, static_cast<std::uint64_t>(c * n));
  }
  save_samples_csv(req.output, xs, ys);
  return {{"command", "sample"}, {"conditions", conditions.cols()}, {"samples", ys.cols()}, {"output", req.output}};
}

nlohmann::json cmd_reproduce_fig2(const ExperimentConfig& cfg) {
  const ExperimentData data = load_data(cfg);
  require(data.p_draws().dimension() == 1 && data.q_draws().dimension() == 1, ErrorKind::DimensionMismatch,
          "the epsilon sweep needs 1-D source and target");
  const PointSet probes = quantile_probes(data.p_eval, cfg.eval_probes);
  const Point hist_x = Point::Constant(1, cfg.histogram_condition);
  const Eigen::Index n = cfg.eval_samples;
  const auto hist_offset = static_cast<std::uint64_t>(probes.cols() * n);

  spdlog::info("fig2: training the unconditional score model");
  CdsmTrainConfig utc = cfg.score_train;
  if (cfg.unconditional_iterations > 0) utc.iterations = cfg.unconditional_iterations;
  const ScoreCheckpoint uck =
      train_unconditional(fresh_model(cfg, 1, 1, false, "unconditional"), data.q_draws(), utc);
  save_score_checkpoint(score_path(cfg, true), uck.model, uck.optimizer);
  const ScoreModel unconditional = uck.ema_model();

  SamplerConfig scones_cfg = cfg.sampler;
  scones_cfg.method = cfg.scones_method;

  nlohmann::json sweep = nlohmann::json::array();
  std::optional<PotentialPair> previous;
  for (std::size_t k = 0; k < cfg.fig2_epsilons.size(); ++k) {
    const double eps = cfg.fig2_epsilons[k];
    const std::string tag = eps_tag(k, eps);
    OtProblem problem = data.problem;
    problem.epsilon = eps;

    spdlog::info("fig2 eps={}: potentials", eps);
    PotentialTrainConfig otc = cfg.ot_train;
    otc.seed = derive_seed(cfg.ot_train.seed, k);
    PotentialTrainingLog plog;
    const PotentialPair pp = train_potentials(problem, data.p_draws(), data.q_draws(), otc, &plog,
                                              cfg.fig2_warm_start && previous ? &*previous : nullptr);
    previous = pp;
    save_potentials(cfg.path_in("checkpoints", "potentials_eps" + tag + ".bin"), pp);
    write_dual_log(cfg.path_in("logs", "dual_eps" + tag + ".csv"), plog);

    spdlog::info("fig2 eps={}: conditional score", eps);
    CdsmTrainingLog slog;
    const ScoreModel init = fresh_model(cfg, 1, 1, true, "conditional");
    const ScoreCheckpoint ck =
        cfg.regime == Regime::Discrete
            ? train_conditional(init, build_h_table(pp, *data.p, *data.q, cfg.score_train.h_threshold), *data.p,
                                *data.q, cfg.score_train, &slog)
            : train_conditional_continuous(init, pp, data.p_draws(), data.q_draws(), cfg.score_train, &slog);
    save_score_checkpoint(cfg.path_in("checkpoints", "score_eps" + tag + ".bin"), ck.model, ck.optimizer);
    save_loss_log_csv(cfg.path_in("logs", "score_loss_eps" + tag + ".csv"), slog);
    const ScoreModel otcs_model = ck.ema_model();
    const SconesScore scones(unconditional, pp);

    spdlog::info("fig2 eps={}: sampling {} probes x {} samples", eps, probes.cols(), n);
    const ExpectedW2 e_otcs = expected_w2(probes, data.q_eval, pp, sampler_for(otcs_model, cfg.sde, cfg.sampler), n);
    const ExpectedW2 e_scones = expected_w2(probes, data.q_eval, pp, sampler_for(scones, cfg.sde, scones_cfg), n);

    nlohmann::json entry = {{"epsilon", eps},
                            {"plan", plan_report(plan_estimate(pp, data.p_eval, data.q_eval))},
                            {"otcs", to_json(e_otcs)},
                            {"scones", to_json(e_scones)},
                            {"skipped_conditions", slog.skipped_conditions}};

    const PointSet s_otcs = sample_condition(otcs_model, cfg.sde, &hist_x, n, cfg.sampler, hist_offset);
    const PointSet s_scones = sample_condition(scones, cfg.sde, &hist_x, n, scones_cfg, hist_offset);
    std::vector<std::pair<std::string, Histogram>> hists;
    nlohmann::json cond = {{"x", cfg.histogram_condition},
                           {"otcs", to_json(summarize_samples(s_otcs))},
                           {"scones", to_json(summarize_samples(s_scones))}};
    try {
      const Eigen::VectorXd density = conditional_plan_density(pp, hist_x, data.q_eval);
      const GaussianSummary plan = summarize_weighted(data.q_eval.points(), density);
      cond["plan"] = to_json(plan);
      cond["otcs_w2"] = gaussian_w2(summarize_samples(s_otcs), plan);
      cond["scones_w2"] = gaussian_w2(summarize_samples(s_scones), plan);
      hists.emplace_back("plan", histogram(data.q_eval.points().row(0).transpose(), density, cfg.histogram_bins,
                                           cfg.histogram_lo, cfg.histogram_hi));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Infeasible) throw;
      cond["plan"] = nullptr;
    }
    const Histogram h_otcs =
        histogram(s_otcs.row(0).transpose(), cfg.histogram_bins, cfg.histogram_lo, cfg.histogram_hi);
    Eigen::Index mode = 0;
    h_otcs.density.maxCoeff(&mode);
    cond["otcs_mode"] = 0.5 * (h_otcs.edges(mode) + h_otcs.edges(mode + 1));
    hists.emplace_back("otcs", h_otcs);
    hists.emplace_back("scones", histogram(s_scones.row(0).transpose(), cfg.histogram_bins, cfg.histogram_lo,
                                           cfg.histogram_hi));
    entry["condition"] = cond;
    save_histograms_csv(cfg.path_in("figures", "fig2_eps" + tag + ".csv"), hists);
    char title[96];
    std::snprintf(title, sizeof title, "eps = %g, x = %g", eps, cfg.histogram_condition);
    save_histograms_svg(cfg.path_in("figures", "fig2_eps" + tag + ".svg"), title, hists);

    spdlog::info("fig2 eps={}: expected W2 otcs={} scones={}", eps, e_otcs.gaussian, e_scones.gaussian);
    sweep.push_back(std::move(entry));
  }

  nlohmann::json j = {{"command", "reproduce-fig2"},
                      {"probes", as_vector(probes.row(0).transpose())},
                      {"sweep", sweep}};
  j = with_config(std::move(j), cfg);
  write_json(cfg.path_in("metrics", "fig2.json"), j);
  return j;
}

}  // namespace otcs
