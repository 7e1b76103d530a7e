#pragma once

#include "otcs/common.hpp"
#include "otcs/random.hpp"

#include <span>
#include <string>
#include <vector>

namespace otcs {

enum class Activation { Identity, Tanh, SiLU };

const char* to_string(Activation a);
Activation parse_activation(const std::string& s);

/// Layer sizes [in, h1, ..., out] and one activation per layer (applied to
/// that layer's output).
struct MlpArch {
  std::vector<Eigen::Index> sizes;
  std::vector<Activation> activations;

  Eigen::Index input_dim() const { return sizes.front(); }
  Eigen::Index output_dim() const { return sizes.back(); }
  std::size_t layer_count() const { return sizes.size() - 1; }
  Eigen::Index parameter_count() const;
  void validate() const;

  /// FC(in,h) -> act -> ... -> FC(h,out) with identity output.
  static MlpArch feedforward(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out,
                             Activation act);
  bool operator==(const MlpArch&) const = default;
};

/// Stateless evaluator of a dense network whose parameters live in an external
/// flat buffer. Layer l stores W_l (out x in, column-major) followed by b_l.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
    std::vector<Eigen::MatrixXd> post;    // activation output of each layer
  };

  Mlp() = default;
  explicit Mlp(MlpArch arch);

  const MlpArch& arch() const { return arch_; }
  Eigen::Index parameter_count() const { return param_count_; }

  /// X is in x n; returns out x n. Fills `cache` when non-null.
  Eigen::MatrixXd forward(std::span<const double> params, const Eigen::MatrixXd& X, Cache* cache = nullptr) const;

  /// Accumulates dLoss/dparams into `grad` (+=) given dLoss/dOutput.
  /// Returns dLoss/dInput when `want_input_grad`, otherwise an empty matrix.
  Eigen::MatrixXd backward(std::span<const double> params, const Cache& cache, const Eigen::MatrixXd& dY,
                           std::span<double> grad, bool want_input_grad) const;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases; the last
  /// layer is zeroed when `zero_last_layer`.
  void initialize(std::span<double> params, Rng& rng, bool zero_last_layer = false) const;

 private:
  MlpArch arch_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index param_count_ = 0;
};

/// Elementwise activation and its derivative evaluated at the pre-activation.
Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z);
Eigen::MatrixXd activate_derivative(Activation a, const Eigen::MatrixXd& z);

}  // namespace otcs
