#include "otcs/measure.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace otcs {

EmpiricalMeasure::EmpiricalMeasure(PointSet points, Eigen::VectorXd weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  require(points_.cols() > 0, ErrorKind::InvalidArgument, "empirical measure needs at least one point");
  require(points_.rows() > 0, ErrorKind::InvalidArgument, "points must have dimension >= 1");
  require(weights_.size() == points_.cols(), ErrorKind::DimensionMismatch,
          "weight count does not match point count");
  require(points_.allFinite(), ErrorKind::NonFinite, "measure points must be finite");
  require(weights_.allFinite() && (weights_.array() >= 0.0).all(), ErrorKind::InvalidArgument,
          "weights must be finite and nonnegative");
  require(std::abs(weights_.sum() - 1.0) <= 1e-9, ErrorKind::InvalidArgument, "weights must sum to 1");
}

EmpiricalMeasure EmpiricalMeasure::uniform(PointSet points) {
  const Eigen::Index n = points.cols();
  require(n > 0, ErrorKind::InvalidArgument, "empirical measure needs at least one point");
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return EmpiricalMeasure(std::move(points), std::move(w));
}

std::vector<Eigen::Index> EmpiricalMeasure::draw_indices(Rng& rng, Eigen::Index n) const {
  std::discrete_distribution<Eigen::Index> pick(weights_.data(), weights_.data() + weights_.size());
  std::vector<Eigen::Index> out(static_cast<std::size_t>(n));
  for (auto& idx : out) idx = pick(rng);
  return out;
}

PointSet EmpiricalMeasure::draw(Rng& rng, Eigen::Index n) const {
  const auto idx = draw_indices(rng, n);
  PointSet out(dimension(), n);
  for (Eigen::Index k = 0; k < n; ++k) out.col(k) = points_.col(idx[static_cast<std::size_t>(k)]);
  return out;
}

GaussianSource::GaussianSource(Point mean, Point stddev) : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  require(mean_.size() > 0 && mean_.size() == stddev_.size(), ErrorKind::DimensionMismatch,
          "gaussian mean/std dimension mismatch");
  require((stddev_.array() > 0.0).all(), ErrorKind::InvalidArgument, "gaussian std must be positive");
}

PointSet GaussianSource::draw(Rng& rng, Eigen::Index n) const {
  PointSet z = standard_normal(rng, dimension(), n);
  return (z.array().colwise() * stddev_.array()).colwise() + mean_.array();
}

GaussianMixtureSource::GaussianMixtureSource(std::vector<GaussianSource> components)
    : components_(std::move(components)) {
  require(!components_.empty(), ErrorKind::InvalidArgument, "mixture needs components");
  for (const auto& c : components_)
    require(c.dimension() == components_.front().dimension(), ErrorKind::DimensionMismatch,
            "mixture components differ in dimension");
}

PointSet GaussianMixtureSource::draw(Rng& rng, Eigen::Index n) const {
  std::uniform_int_distribution<std::size_t> pick(0, components_.size() - 1);
  PointSet out(dimension(), n);
  for (Eigen::Index k = 0; k < n; ++k) out.col(k) = components_[pick(rng)].draw(rng, 1).col(0);
  return out;
}

namespace {

std::vector<std::vector<double>> read_rows(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      // A non-numeric first row is a header.
      require(rows.empty(), ErrorKind::Io, "non-numeric cell in " + path);
      continue;
    }
    if (!rows.empty())
      require(row.size() == rows.front().size(), ErrorKind::Io, "ragged row in " + path);
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::Io, "no data rows in " + path);
  return rows;
}

}  // namespace

PointSet load_points_csv(const std::string& path) {
  const auto rows = read_rows(path);
  PointSet out(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t d = 0; d < rows[j].size(); ++d)
      out(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = rows[j][d];
  return out;
}

EmpiricalMeasure load_measure_csv(const std::string& path, bool trailing_weight) {
  PointSet raw = load_points_csv(path);
  if (!trailing_weight) return EmpiricalMeasure::uniform(std::move(raw));
  require(raw.rows() >= 2, ErrorKind::Io, path + ": weighted CSV needs coordinates plus a weight column");
  Eigen::VectorXd w = raw.row(raw.rows() - 1).transpose();
  require((w.array() >= 0.0).all() && w.sum() > 0.0, ErrorKind::InvalidArgument,
          path + ": weights must be nonnegative with positive total");
  w /= w.sum();
  return EmpiricalMeasure(raw.topRows(raw.rows() - 1), std::move(w));
}

void save_points_csv(const std::string& path, const PointSet& points) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << std::setprecision(17);
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    for (Eigen::Index d = 0; d < points.rows(); ++d) out << (d ? "," : "") << points(d, j);
    out << '\n';
  }
}

}  // namespace otcs
