#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace otcs {

/// A sample coordinate vector of dimension D.
using Point = Eigen::VectorXd;

/// D x n matrix holding n points as columns.
using PointSet = Eigen::MatrixXd;

/// Categories used to tag failures so the CLI can emit a machine-readable code.
enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  Infeasible,
  NonConvergence,
  NonFinite,
  Io,
  Config,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

inline double positive_part(double a) { return a > 0.0 ? a : 0.0; }

}  // namespace otcs
