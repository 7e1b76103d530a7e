#pragma once

#include "otcs/common.hpp"
#include "otcs/random.hpp"

#include <cmath>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace otcs::testing {

inline Point pt(std::initializer_list<double> v) {
  Point p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) p(k++) = x;
  return p;
}

inline std::span<const double> view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// 1-D points as a 1 x n matrix.
inline PointSet row(std::initializer_list<double> v) { return pt(v).transpose(); }

/// Central difference of f along coordinate k of theta.
inline double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd theta,
                                 Eigen::Index k, double h) {
  const double c = theta(k);
  theta(k) = c + h;
  const double up = f(theta);
  theta(k) = c - h;
  const double down = f(theta);
  return (up - down) / (2.0 * h);
}

/// Relative error with a floor so near-zero derivatives compare absolutely.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::vector<Eigen::Index> random_coordinates(Eigen::Index n, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> out;
  for (int k = 0; k < count; ++k) out.push_back(pick(rng));
  return out;
}

}  // namespace otcs::testing
