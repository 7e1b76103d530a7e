#pragma once

#include "otcs/common.hpp"
#include "otcs/random.hpp"

#include <memory>
#include <string>
#include <vector>

namespace otcs {

/// Anything training code can draw i.i.d. minibatches from.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual Eigen::Index dimension() const = 0;
  /// Returns a D x n matrix of draws.
  virtual PointSet draw(Rng& rng, Eigen::Index n) const = 0;
};

/// Finitely supported probability measure: points (columns) with weights.
class EmpiricalMeasure final : public DataSource {
 public:
  EmpiricalMeasure() = default;
  /// Validates finiteness, nonnegativity and unit total mass (1e-9).
  EmpiricalMeasure(PointSet points, Eigen::VectorXd weights);
  static EmpiricalMeasure uniform(PointSet points);

  Eigen::Index dimension() const override { return points_.rows(); }
  Eigen::Index size() const { return points_.cols(); }
  const PointSet& points() const { return points_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  Point point(Eigen::Index i) const { return points_.col(i); }
  double weight(Eigen::Index i) const { return weights_(i); }

  PointSet draw(Rng& rng, Eigen::Index n) const override;
  /// Draws indices according to the weights.
  std::vector<Eigen::Index> draw_indices(Rng& rng, Eigen::Index n) const;

 private:
  PointSet points_;
  Eigen::VectorXd weights_;
};

/// Isotropic-per-coordinate Gaussian N(mean, diag(std^2)).
class GaussianSource final : public DataSource {
 public:
  GaussianSource(Point mean, Point stddev);
  Eigen::Index dimension() const override { return mean_.size(); }
  PointSet draw(Rng& rng, Eigen::Index n) const override;
  const Point& mean() const { return mean_; }
  const Point& stddev() const { return stddev_; }

 private:
  Point mean_;
  Point stddev_;
};

/// Equal-weight mixture of Gaussian components.
class GaussianMixtureSource final : public DataSource {
 public:
  explicit GaussianMixtureSource(std::vector<GaussianSource> components);
  Eigen::Index dimension() const override { return components_.front().dimension(); }
  PointSet draw(Rng& rng, Eigen::Index n) const override;

 private:
  std::vector<GaussianSource> components_;
};

/// CSV: one row per point, coordinates as columns; when `trailing_weight` is
/// set the last column is the (unnormalized) weight, otherwise weights are uniform.
EmpiricalMeasure load_measure_csv(const std::string& path, bool trailing_weight);
void save_points_csv(const std::string& path, const PointSet& points);
PointSet load_points_csv(const std::string& path);

}  // namespace otcs
