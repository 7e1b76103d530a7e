#pragma once

#include "otcs/measure.hpp"
#include "otcs/potentials.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace otcs {

/// Per-coordinate mean and standard deviation.
struct GaussianSummary {
  Point mean;
  Point std;
};

/// Unbiased sample summary of the columns of S; needs >= 2 columns.
GaussianSummary summarize_samples(const PointSet& S);
/// Mean/std of a finitely supported distribution (points, weights).
GaussianSummary summarize_weighted(const PointSet& points, const Eigen::VectorXd& weights);

/// sqrt(|mu_a - mu_b|^2 + |sigma_a - sigma_b|^2).
double gaussian_w2(const GaussianSummary& a, const GaussianSummary& b);
/// 1-D form; both summaries must be 1-D.
double gaussian_w2_1d(const GaussianSummary& a, const GaussianSummary& b);

/// Exact W2 between two weighted 1-D distributions via the quantile coupling.
double empirical_w2_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& wa, const Eigen::VectorXd& b,
                       const Eigen::VectorXd& wb);
/// Equal-weight samples form.
double empirical_w2_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Entry j proportional to H(x, y_j) q_j, normalized. Throws Infeasible on zero mass.
Eigen::VectorXd conditional_plan_density(const PotentialPair& pp, const Point& x, const EmpiricalMeasure& q);

/// n weighted quantiles of a 1-D measure at levels (k + 1/2)/n.
PointSet quantile_probes(const EmpiricalMeasure& p, Eigen::Index n);

struct ProbeResult {
  Point condition;
  GaussianSummary samples;
  GaussianSummary plan;
  double w2_gaussian = 0.0;
  double w2_empirical = 0.0;
};

struct ExpectedW2 {
  std::vector<ProbeResult> probes;
  std::vector<Point> skipped;  // zero plan mass
  double gaussian = 0.0;   // mean Gaussian-approximated W2
  double empirical = 0.0;  // mean exact 1-D W2
};

/// Draws n samples for a condition; `probe_index` keys the rng streams.
using ConditionalSampler = std::function<PointSet(const Point& x, Eigen::Index probe_index, Eigen::Index n)>;
/// Plan density over q's support for a condition.
using PlanDensity = std::function<Eigen::VectorXd(const Point& x)>;

/// Mean over probes of W2(samples(.|x), pi(.|x)); zero-mass probes are skipped.
ExpectedW2 expected_w2(const PointSet& probes, const EmpiricalMeasure& q, const PlanDensity& plan,
                       const ConditionalSampler& sampler, Eigen::Index n_samples);
ExpectedW2 expected_w2(const PointSet& probes, const EmpiricalMeasure& q, const PotentialPair& pp,
                       const ConditionalSampler& sampler, Eigen::Index n_samples);

struct Histogram {
  Eigen::VectorXd edges;    // n_bins + 1
  Eigen::VectorXd density;  // n_bins, integrates to 1 over the range
  Eigen::Index counted = 0;
};

/// Density-normalized histogram over [lo, hi]; samples outside are ignored.
Histogram histogram(const Eigen::VectorXd& samples, Eigen::Index n_bins, double lo, double hi);
/// Weighted form (nonnegative weights).
Histogram histogram(const Eigen::VectorXd& samples, const Eigen::VectorXd& weights, Eigen::Index n_bins, double lo,
                    double hi);

nlohmann::json to_json(const GaussianSummary& s);
nlohmann::json to_json(const ExpectedW2& e);

void write_json(const std::string& path, const nlohmann::json& j);
void save_histograms_csv(const std::string& path, const std::vector<std::pair<std::string, Histogram>>& hists);
/// Overlaid step plots of histograms sharing one range.
void save_histograms_svg(const std::string& path, const std::string& title,
                         const std::vector<std::pair<std::string, Histogram>>& hists);

}  // namespace otcs
