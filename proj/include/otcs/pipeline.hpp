#pragma once

#include "otcs/config.hpp"
#include "otcs/metrics.hpp"

#include <memory>
#include <optional>
#include <string>

namespace otcs {

/// Source/target measures of one experiment. Discrete runs carry empirical
/// measures; continuous runs carry generators plus empirical evaluation sets.
struct ExperimentData {
  std::unique_ptr<DataSource> p_source, q_source;
  std::optional<EmpiricalMeasure> p, q;  // discrete regime only
  EmpiricalMeasure p_eval, q_eval;       // supports used by metrics
  OtProblem problem;                     // keypoints resolved

  const DataSource& p_draws() const { return p ? static_cast<const DataSource&>(*p) : *p_source; }
  const DataSource& q_draws() const { return q ? static_cast<const DataSource&>(*q) : *q_source; }
};

ExperimentData load_data(const ExperimentConfig& cfg);

/// Default file locations inside the output directory.
std::string potentials_path(const ExperimentConfig& cfg);
std::string score_path(const ExperimentConfig& cfg, bool unconditional = false);

/// Each command writes under cfg.output_dir and returns the metrics it wrote.
nlohmann::json cmd_fit_ot(const ExperimentConfig& cfg);
/// `potentials` may be empty: the report then holds only the exact plan.
nlohmann::json cmd_oracle(const ExperimentConfig& cfg, const std::string& potentials);
/// Conditional model from a potentials checkpoint, or (unconditional = true)
/// a plain model of q used for SCONES guidance.
nlohmann::json cmd_fit_score(const ExperimentConfig& cfg, const std::string& potentials, bool unconditional = false);

struct SampleRequest {
  std::string model;        // score checkpoint
  std::string conditions;   // CSV of condition points
  std::string output;       // samples CSV
  Eigen::Index n_samples = 1;
  std::string potentials;   // set to guide an unconditional model (SCONES)
};
nlohmann::json cmd_sample(const ExperimentConfig& cfg, const SampleRequest& req);

nlohmann::json cmd_reproduce_fig2(const ExperimentConfig& cfg);

}  // namespace otcs
