#pragma once

#include "otcs/cdsm.hpp"
#include "otcs/potentials.hpp"
#include "otcs/samplers.hpp"

#include <json.hpp>

#include <map>
#include <set>
#include <string>
#include <vector>

namespace otcs {

/// Flat `key = value` text. '#' starts a comment, blank lines are ignored,
/// keys are dotted (`ot.epsilon`). Lists are comma separated.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::string& path);

  /// Adds or replaces a key (command-line overrides).
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  std::int64_t get_int(const std::string& key, std::int64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback);

  /// Parse problems met so far (one message per field).
  const std::vector<std::string>& errors() const { return errors_; }
  void add_error(const std::string& message) { errors_.push_back(message); }
  /// Keys present in the text but never read.
  std::vector<std::string> unused_keys() const;
  /// Every key read, with the value in effect (defaults included).
  const std::map<std::string, std::string>& resolved() const { return resolved_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> resolved_;
  std::set<std::string> used_;
  std::vector<std::string> errors_;
};

enum class Regime { Discrete, Continuous };

/// Either a Gaussian generator or a CSV of points.
struct DataSpec {
  std::string kind = "gaussian";  // gaussian | csv
  Point mean;
  Point stddev;
  std::string path;
  bool trailing_weight = false;
  Eigen::Index size = 0;  // discrete regime support size for generators
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";

  DataSpec source, target;
  Regime regime = Regime::Continuous;
  std::string keypoints_path;

  OtProblem problem;
  PotentialTrainConfig ot_train;

  SdeSpec sde;
  ScoreArchitecture score_arch;
  CdsmTrainConfig score_train;
  std::int64_t unconditional_iterations = 0;  // 0: same as score_train.iterations

  SamplerConfig sampler;
  SamplerMethod scones_method = SamplerMethod::EulerMaruyama;

  Eigen::Index eval_probes = 64;
  Eigen::Index eval_samples = 1000;
  Eigen::Index eval_support = 2000;
  Eigen::Index histogram_bins = 50;
  double histogram_lo = 0.0, histogram_hi = 8.0;
  double histogram_condition = -4.0;

  std::vector<double> fig2_epsilons{1e-1, 1e-2, 1e-3, 1e-4};
  bool fig2_warm_start = true;

  /// Resolved key/value echo for outputs.
  nlohmann::json echo = nlohmann::json::object();

  /// Reads every section, validates, and throws one Config error listing
  /// every violated field.
  static ExperimentConfig from(KeyValueConfig& kv);
  static ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides = {});

  std::string path_in(const std::string& subdir, const std::string& file) const;
};

/// Named sub-streams of the global seed.
std::uint64_t stream_seed(std::uint64_t seed, const char* name);

}  // namespace otcs
