#include "otcs/mlp.hpp"

namespace otcs {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::SiLU: return "silu";
  }
  return "identity";
}

Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "silu") return Activation::SiLU;
  fail(ErrorKind::Config, "unknown activation '" + s + "'");
}

Eigen::Index MlpArch::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l + 1] * sizes[l] + sizes[l + 1];
  return n;
}

void MlpArch::validate() const {
  require(sizes.size() >= 2, ErrorKind::InvalidArgument, "MLP needs at least one layer");
  require(activations.size() == sizes.size() - 1, ErrorKind::InvalidArgument,
          "MLP needs one activation per layer");
  for (auto s : sizes) require(s >= 1, ErrorKind::InvalidArgument, "MLP layer sizes must be >= 1");
}

MlpArch MlpArch::feedforward(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out,
                             Activation act) {
  MlpArch a;
  a.sizes.push_back(in);
  for (auto h : hidden) {
    a.sizes.push_back(h);
    a.activations.push_back(act);
  }
  a.sizes.push_back(out);
  a.activations.push_back(Activation::Identity);
  return a;
}

Mlp::Mlp(MlpArch arch) : arch_(std::move(arch)) {
  arch_.validate();
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < arch_.layer_count(); ++l) {
    offsets_.push_back(off);
    off += arch_.sizes[l + 1] * arch_.sizes[l] + arch_.sizes[l + 1];
  }
  param_count_ = off;
}

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Identity: return z;
    // exp form vectorizes; Eigen's tanh for double does not
    case Activation::Tanh: return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
    case Activation::SiLU: return (z.array() / (1.0 + (-z.array()).exp())).matrix();
  }
  return z;
}

Eigen::MatrixXd activate_derivative(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Identity: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    case Activation::Tanh: return (1.0 - activate(a, z).array().square()).matrix();
    case Activation::SiLU: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
      return (s * (1.0 + z.array() * (1.0 - s))).matrix();
    }
  }
  return z;
}

namespace {

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using Map = Eigen::Map<Eigen::MatrixXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

}  // namespace

Eigen::MatrixXd Mlp::forward(std::span<const double> params, const Eigen::MatrixXd& X, Cache* cache) const {
  require(static_cast<Eigen::Index>(params.size()) == param_count_, ErrorKind::DimensionMismatch,
          "MLP parameter buffer has wrong size");
  require(X.rows() == arch_.input_dim(), ErrorKind::DimensionMismatch, "MLP input dimension mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->post.clear();
  }
  Eigen::MatrixXd h = X;
  for (std::size_t l = 0; l < arch_.layer_count(); ++l) {
    const Eigen::Index in = arch_.sizes[l], out = arch_.sizes[l + 1];
    const double* base = params.data() + offsets_[l];
    ConstMap W(base, out, in);
    ConstVecMap b(base + out * in, out);
    Eigen::MatrixXd z = W * h;
    z.colwise() += b;
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(z);
    }
    h = activate(arch_.activations[l], z);
    if (cache) cache->post.push_back(h);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(std::span<const double> params, const Cache& cache, const Eigen::MatrixXd& dY,
                              std::span<double> grad, bool want_input_grad) const {
  require(static_cast<Eigen::Index>(grad.size()) == param_count_, ErrorKind::DimensionMismatch,
          "MLP gradient buffer has wrong size");
  require(cache.pre.size() == arch_.layer_count(), ErrorKind::InvalidArgument, "MLP cache is empty");
  Eigen::MatrixXd delta = dY;
  for (std::size_t l = arch_.layer_count(); l-- > 0;) {
    const Eigen::Index in = arch_.sizes[l], out = arch_.sizes[l + 1];
    if (arch_.activations[l] == Activation::Tanh && cache.post.size() == arch_.layer_count())
      delta = (delta.array() * (1.0 - cache.post[l].array().square())).matrix();
    else if (arch_.activations[l] != Activation::Identity)
      delta = (delta.array() * activate_derivative(arch_.activations[l], cache.pre[l]).array()).matrix();
    const double* base = params.data() + offsets_[l];
    double* gbase = grad.data() + offsets_[l];
    Map gW(gbase, out, in);
    VecMap gb(gbase + out * in, out);
    gW.noalias() += delta * cache.inputs[l].transpose();
    gb.noalias() += delta.rowwise().sum();
    if (l > 0 || want_input_grad) {
      ConstMap W(base, out, in);
      Eigen::MatrixXd next = W.transpose() * delta;
      delta = std::move(next);
    }
  }
  return want_input_grad ? delta : Eigen::MatrixXd();
}

void Mlp::initialize(std::span<double> params, Rng& rng, bool zero_last_layer) const {
  require(static_cast<Eigen::Index>(params.size()) == param_count_, ErrorKind::DimensionMismatch,
          "MLP parameter buffer has wrong size");
  for (std::size_t l = 0; l < arch_.layer_count(); ++l) {
    const Eigen::Index in = arch_.sizes[l], out = arch_.sizes[l + 1];
    const Eigen::Index count = out * in + out;
    double* base = params.data() + offsets_[l];
    if (zero_last_layer && l + 1 == arch_.layer_count()) {
      std::fill(base, base + count, 0.0);
      continue;
    }
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index k = 0; k < count; ++k) base[k] = u(rng);
  }
}

}  // namespace otcs
