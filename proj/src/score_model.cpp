#include "otcs/score_model.hpp"

#include "otcs/io.hpp"

#include <numbers>

namespace otcs {

void ScoreArchitecture::validate() const {
  require(dim >= 1 && hidden >= 1, ErrorKind::InvalidArgument, "score model needs dim >= 1 and hidden >= 1");
  require(trunk_hidden_layers >= 1, ErrorKind::InvalidArgument, "score trunk needs >= 1 hidden layer");
  require(fourier_features >= 2 && fourier_features % 2 == 0, ErrorKind::InvalidArgument,
          "fourier feature count must be even and >= 2");
  require(fourier_scale > 0.0, ErrorKind::InvalidArgument, "fourier scale must be > 0");
  if (conditional) {
    require(cond_dim >= 1, ErrorKind::InvalidArgument, "conditional score model needs cond_dim >= 1");
    require(cond_hidden_layers >= 0, ErrorKind::InvalidArgument, "cond_hidden_layers must be >= 0");
  }
}

ScoreModel::ScoreModel(ScoreArchitecture arch, SdeSpec spec) : arch_(arch), spec_(spec) {
  arch_.validate();
  spec_.validate();
  const Eigen::Index H = arch_.hidden;
  Eigen::Index off = 0;
  Eigen::Index in = arch_.dim;
  for (int l = 0; l <= arch_.trunk_hidden_layers; ++l) {
    const Eigen::Index out = (l == arch_.trunk_hidden_layers) ? arch_.dim : H;
    trunk_offsets_.push_back(off);
    off += out * in + out;
    in = out;
  }
  trunk_count_ = off;
  time_mlp_ = Mlp(MlpArch::feedforward(arch_.fourier_features, {H}, H, Activation::SiLU));
  off += time_mlp_.parameter_count();
  if (arch_.conditional) {
    cond_mlp_ = Mlp(MlpArch::feedforward(arch_.cond_dim, std::vector<Eigen::Index>(
                                                             static_cast<std::size_t>(arch_.cond_hidden_layers), H),
                                         H, Activation::SiLU));
    off += cond_mlp_.parameter_count();
  }
  param_count_ = off;
  theta_ = Eigen::VectorXd::Zero(param_count_);
  freqs_ = Eigen::VectorXd::Zero(arch_.fourier_features / 2);
}

void ScoreModel::initialize(Rng& rng) {
  std::normal_distribution<double> normal(0.0, arch_.fourier_scale);
  for (Eigen::Index k = 0; k < freqs_.size(); ++k) freqs_(k) = normal(rng);

  Eigen::Index in = arch_.dim;
  for (int l = 0; l <= arch_.trunk_hidden_layers; ++l) {
    const bool last = l == arch_.trunk_hidden_layers;
    const Eigen::Index out = last ? arch_.dim : arch_.hidden;
    double* base = theta_.data() + trunk_offsets_[static_cast<std::size_t>(l)];
    const Eigen::Index count = out * in + out;
    if (last && arch_.zero_init_output) {
      std::fill(base, base + count, 0.0);
    } else {
      const double bound = std::sqrt(1.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index k = 0; k < count; ++k) base[k] = u(rng);
    }
    in = out;
  }
  std::span<double> all(theta_.data(), static_cast<std::size_t>(theta_.size()));
  time_mlp_.initialize(all.subspan(static_cast<std::size_t>(trunk_count_),
                                   static_cast<std::size_t>(time_mlp_.parameter_count())),
                       rng);
  if (arch_.conditional)
    cond_mlp_.initialize(all.subspan(static_cast<std::size_t>(trunk_count_ + time_mlp_.parameter_count())), rng);
}

void ScoreModel::set_theta(Eigen::VectorXd theta) {
  require(theta.size() == param_count_, ErrorKind::DimensionMismatch, "score theta has wrong size");
  theta_ = std::move(theta);
}

void ScoreModel::set_fourier_frequencies(Eigen::VectorXd freqs) {
  require(freqs.size() == arch_.fourier_features / 2, ErrorKind::DimensionMismatch,
          "fourier frequency vector has wrong size");
  freqs_ = std::move(freqs);
}

ScoreModel ScoreModel::with_parameters(const Eigen::VectorXd& theta) const {
  ScoreModel copy = *this;
  copy.set_theta(theta);
  return copy;
}

std::span<const double> ScoreModel::time_params(std::span<const double> params) const {
  return params.subspan(static_cast<std::size_t>(trunk_count_), static_cast<std::size_t>(time_mlp_.parameter_count()));
}

std::span<const double> ScoreModel::cond_params(std::span<const double> params) const {
  return params.subspan(static_cast<std::size_t>(trunk_count_ + time_mlp_.parameter_count()));
}

Eigen::MatrixXd ScoreModel::fourier(const Eigen::VectorXd& t) const {
  const Eigen::Index half = freqs_.size();
  Eigen::MatrixXd F(2 * half, t.size());
  for (Eigen::Index c = 0; c < t.size(); ++c) {
    const Eigen::ArrayXd phase = (2.0 * std::numbers::pi * t(c)) * freqs_.array();
    F.col(c).head(half) = phase.sin().matrix();
    F.col(c).tail(half) = phase.cos().matrix();
  }
  return F;
}

Eigen::MatrixXd ScoreModel::embedding(std::span<const double> params, const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& t, Cache* cache) const {
  Eigen::MatrixXd E = time_mlp_.forward(time_params(params), fourier(t), cache ? &cache->time_cache : nullptr);
  if (arch_.conditional) {
    require(X.rows() == arch_.cond_dim, ErrorKind::DimensionMismatch, "score model condition dimension mismatch");
    require(X.cols() == t.size(), ErrorKind::DimensionMismatch, "score model condition/time count mismatch");
    E += cond_mlp_.forward(cond_params(params), X, cache ? &cache->cond_cache : nullptr);
  }
  return E;
}

Eigen::MatrixXd ScoreModel::trunk(std::span<const double> params, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& E,
                                  Cache* cache) const {
  const bool shared = E.cols() == 1 && Y.cols() != 1;
  Eigen::MatrixXd h = Y;
  Eigen::Index in = arch_.dim;
  for (int l = 0; l <= arch_.trunk_hidden_layers; ++l) {
    const bool last = l == arch_.trunk_hidden_layers;
    const Eigen::Index out = last ? arch_.dim : arch_.hidden;
    const double* base = params.data() + trunk_offsets_[static_cast<std::size_t>(l)];
    Eigen::Map<const Eigen::MatrixXd> W(base, out, in);
    Eigen::Map<const Eigen::VectorXd> b(base + out * in, out);
    Eigen::MatrixXd z = W * h;
    z.colwise() += b;
    if (cache) cache->trunk_inputs.push_back(h);
    if (last) return z;
    h = activate(Activation::SiLU, z);
    if (shared)
      h.colwise() += E.col(0);
    else
      h += E;
    if (cache) cache->trunk_pre.push_back(std::move(z));
    in = out;
  }
  return h;
}

Eigen::MatrixXd ScoreModel::forward_batch(std::span<const double> params, const Eigen::MatrixXd& Y,
                                          const Eigen::MatrixXd& X, const Eigen::VectorXd& t, Cache* cache) const {
  require(static_cast<Eigen::Index>(params.size()) == param_count_, ErrorKind::DimensionMismatch,
          "score parameter buffer has wrong size");
  require(Y.rows() == arch_.dim && t.size() == Y.cols(), ErrorKind::DimensionMismatch,
          "score model input shape mismatch");
  if (cache) *cache = Cache{};
  const Eigen::MatrixXd E = embedding(params, X, t, cache);
  Eigen::MatrixXd out = trunk(params, Y, E, cache);
  if (arch_.scale_by_sigma) {
    Eigen::RowVectorXd inv(t.size());
    for (Eigen::Index c = 0; c < t.size(); ++c) inv(c) = 1.0 / sigma_t(spec_, t(c));
    out = out.array().rowwise() * inv.array();
    if (cache) cache->inv_sigma = std::move(inv);
  }
  return out;
}

void ScoreModel::backward(std::span<const double> params, const Cache& cache, const Eigen::MatrixXd& d_out,
                          std::span<double> grad) const {
  require(static_cast<Eigen::Index>(grad.size()) == param_count_, ErrorKind::DimensionMismatch,
          "score gradient buffer has wrong size");
  Eigen::MatrixXd delta = d_out;
  if (arch_.scale_by_sigma) delta = delta.array().rowwise() * cache.inv_sigma.array();

  Eigen::MatrixXd dE = Eigen::MatrixXd::Zero(arch_.hidden, d_out.cols());
  for (int l = arch_.trunk_hidden_layers; l >= 0; --l) {
    const bool last = l == arch_.trunk_hidden_layers;
    const Eigen::Index in = l == 0 ? arch_.dim : arch_.hidden;
    const Eigen::Index out = last ? arch_.dim : arch_.hidden;
    if (!last) {
      dE += delta;
      delta = (delta.array() *
               activate_derivative(Activation::SiLU, cache.trunk_pre[static_cast<std::size_t>(l)]).array())
                  .matrix();
    }
    const auto off = trunk_offsets_[static_cast<std::size_t>(l)];
    Eigen::Map<Eigen::MatrixXd> gW(grad.data() + off, out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + off + out * in, out);
    gW.noalias() += delta * cache.trunk_inputs[static_cast<std::size_t>(l)].transpose();
    gb.noalias() += delta.rowwise().sum();
    if (l > 0) {
      Eigen::Map<const Eigen::MatrixXd> W(params.data() + off, out, in);
      Eigen::MatrixXd next = W.transpose() * delta;
      delta = std::move(next);
    }
  }
  auto g_time = grad.subspan(static_cast<std::size_t>(trunk_count_),
                             static_cast<std::size_t>(time_mlp_.parameter_count()));
  time_mlp_.backward(time_params(params), cache.time_cache, dE, g_time, false);
  if (arch_.conditional) {
    auto g_cond = grad.subspan(static_cast<std::size_t>(trunk_count_ + time_mlp_.parameter_count()));
    cond_mlp_.backward(cond_params(params), cache.cond_cache, dE, g_cond, false);
  }
}

Eigen::MatrixXd ScoreModel::evaluate(const Eigen::MatrixXd& Y, const Point* x, double t) const {
  require(conditional() == (x != nullptr), ErrorKind::InvalidArgument,
          conditional() ? "conditional score model called without a condition"
                        : "unconditional score model called with a condition");
  require(Y.rows() == arch_.dim, ErrorKind::DimensionMismatch, "score model input dimension mismatch");
  const std::span<const double> params(theta_.data(), static_cast<std::size_t>(theta_.size()));
  const Eigen::VectorXd tv = Eigen::VectorXd::Constant(1, t);
  Eigen::MatrixXd X;
  if (x) X = *x;
  const Eigen::MatrixXd E = embedding(params, X, tv, nullptr);
  Eigen::MatrixXd out = trunk(params, Y, E, nullptr);
  if (arch_.scale_by_sigma) out /= sigma_t(spec_, t);
  return out;
}

Point ScoreModel::forward(const Point& y, const Point* x, double t) const { return evaluate(y, x, t).col(0); }

namespace {

constexpr const char* kScoreMagic = "OTCSSCR1";

nlohmann::json sde_to_json(const SdeSpec& s) {
  return {{"kind", to_string(s.kind)}, {"alpha", s.alpha},   {"beta_min", s.beta_min},
          {"beta_max", s.beta_max},    {"T", s.T},           {"t_min", s.t_min}};
}

SdeSpec sde_from_json(const nlohmann::json& j) {
  SdeSpec s;
  s.kind = parse_sde_kind(j.at("kind").get<std::string>());
  s.alpha = j.at("alpha").get<double>();
  s.beta_min = j.at("beta_min").get<double>();
  s.beta_max = j.at("beta_max").get<double>();
  s.T = j.at("T").get<double>();
  s.t_min = j.at("t_min").get<double>();
  s.validate();
  return s;
}

}  // namespace

void save_score_checkpoint(const std::string& path, const ScoreModel& model, const AdamOptimizer& optimizer) {
  Blob blob;
  blob.magic = kScoreMagic;
  const auto& a = model.architecture();
  blob.header["architecture"] = {{"dim", a.dim},
                                 {"cond_dim", a.cond_dim},
                                 {"hidden", a.hidden},
                                 {"trunk_hidden_layers", a.trunk_hidden_layers},
                                 {"cond_hidden_layers", a.cond_hidden_layers},
                                 {"fourier_features", a.fourier_features},
                                 {"fourier_scale", a.fourier_scale},
                                 {"conditional", a.conditional},
                                 {"scale_by_sigma", a.scale_by_sigma},
                                 {"zero_init_output", a.zero_init_output}};
  blob.header["sde"] = sde_to_json(model.sde());
  const auto& oc = optimizer.config();
  blob.header["optimizer"] = {{"learning_rate", oc.learning_rate}, {"beta1", oc.beta1},
                              {"beta2", oc.beta2},                 {"eps", oc.eps},
                              {"ema_decay", oc.ema_decay},         {"step", optimizer.step_count()}};
  blob.arrays.emplace_back("theta", model.theta());
  blob.arrays.emplace_back("ema", optimizer.ema());
  blob.arrays.emplace_back("adam.m", optimizer.first_moment());
  blob.arrays.emplace_back("adam.v", optimizer.second_moment());
  blob.arrays.emplace_back("fourier", model.fourier_frequencies());
  save_blob(path, blob);
}

ScoreCheckpoint load_score_checkpoint(const std::string& path) {
  const Blob blob = load_blob(path, kScoreMagic);
  const auto& ja = blob.header.at("architecture");
  ScoreArchitecture a;
  a.dim = ja.at("dim").get<Eigen::Index>();
  a.cond_dim = ja.at("cond_dim").get<Eigen::Index>();
  a.hidden = ja.at("hidden").get<Eigen::Index>();
  a.trunk_hidden_layers = ja.at("trunk_hidden_layers").get<int>();
  a.cond_hidden_layers = ja.at("cond_hidden_layers").get<int>();
  a.fourier_features = ja.at("fourier_features").get<Eigen::Index>();
  a.fourier_scale = ja.at("fourier_scale").get<double>();
  a.conditional = ja.at("conditional").get<bool>();
  a.scale_by_sigma = ja.at("scale_by_sigma").get<bool>();
  a.zero_init_output = ja.at("zero_init_output").get<bool>();
  ScoreModel model(a, sde_from_json(blob.header.at("sde")));
  model.set_theta(blob.array("theta"));
  model.set_fourier_frequencies(blob.array("fourier"));
  const auto& jo = blob.header.at("optimizer");
  AdamConfig oc;
  oc.learning_rate = jo.at("learning_rate").get<double>();
  oc.beta1 = jo.at("beta1").get<double>();
  oc.beta2 = jo.at("beta2").get<double>();
  oc.eps = jo.at("eps").get<double>();
  oc.ema_decay = jo.at("ema_decay").get<double>();
  AdamOptimizer opt(oc, model.theta());
  opt.restore(jo.at("step").get<std::int64_t>(), blob.array("adam.m"), blob.array("adam.v"), blob.array("ema"));
  return ScoreCheckpoint{std::move(model), std::move(opt)};
}

}  // namespace otcs
