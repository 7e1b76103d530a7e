#include "otcs/config.hpp"

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace otcs {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// shortest text that reads back to the same double
std::string shortest(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      kv.errors_.push_back(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      kv.errors_.push_back(origin + ":" + std::to_string(lineno) + ": empty key");
      continue;
    }
    if (kv.values_.count(key))
      kv.errors_.push_back(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { values_[trim(key)] = trim(value); }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) {
  used_.insert(key);
  const auto it = values_.find(key);
  const std::string v = it == values_.end() ? fallback : it->second;
  resolved_[key] = v;
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  const std::string s = get_string(key, shortest(fallback));
  double v = 0.0;
  if (!parse_double(s, v)) {
    errors_.push_back(key + ": expected a finite number, got '" + s + "'");
    return fallback;
  }
  return v;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) {
  const std::string s = get_string(key, std::to_string(fallback));
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    errors_.push_back(key + ": expected an integer, got '" + s + "'");
    return fallback;
  }
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  const std::string s = get_string(key, fallback ? "true" : "false");
  if (s == "true") return true;
  if (s == "false") return false;
  errors_.push_back(key + ": expected true or false, got '" + s + "'");
  return fallback;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) {
  std::string def;
  for (std::size_t k = 0; k < fallback.size(); ++k) def += (k ? ", " : "") + shortest(fallback[k]);
  const std::string s = get_string(key, def);
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!parse_double(item, v)) {
      errors_.push_back(key + ": expected a comma-separated list of numbers, got '" + s + "'");
      return fallback;
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

std::uint64_t stream_seed(std::uint64_t seed, const char* name) { return derive_seed(seed, stream_tag(name)); }

namespace {

Point to_point(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

DataSpec read_data(KeyValueConfig& kv, const std::string& prefix, double default_mean) {
  DataSpec d;
  d.kind = kv.get_string(prefix + ".kind", "gaussian");
  if (d.kind == "gaussian") {
    d.mean = to_point(kv.get_doubles(prefix + ".mean", {default_mean}));
    d.stddev = to_point(kv.get_doubles(prefix + ".std", {1.0}));
    if (d.mean.size() != d.stddev.size())
      kv.add_error(prefix + ".std: must have as many entries as " + prefix + ".mean");
    if ((d.stddev.array() <= 0.0).any()) kv.add_error(prefix + ".std: entries must be > 0");
  } else if (d.kind == "csv") {
    d.path = kv.get_string(prefix + ".path", "");
    d.trailing_weight = kv.get_bool(prefix + ".weighted", false);
    if (d.path.empty()) kv.add_error(prefix + ".path: required when " + prefix + ".kind = csv");
  } else {
    kv.add_error(prefix + ".kind: expected gaussian or csv, got '" + d.kind + "'");
  }
  d.size = kv.get_int(prefix + ".size", 0);
  if (d.size < 0) kv.add_error(prefix + ".size: must be >= 0");
  return d;
}

template <class F>
void guarded(KeyValueConfig& kv, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    kv.add_error(e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from(KeyValueConfig& kv) {
  ExperimentConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.output_dir = kv.get_string("output_dir", "runs/default");

  const std::string regime = kv.get_string("data.regime", "continuous");
  if (regime == "continuous") c.regime = Regime::Continuous;
  else if (regime == "discrete") c.regime = Regime::Discrete;
  else kv.add_error("data.regime: expected continuous or discrete, got '" + regime + "'");
  c.source = read_data(kv, "data.source", -4.0);
  c.target = read_data(kv, "data.target", 4.0);
  c.keypoints_path = kv.get_string("data.keypoints", "");
  if (c.regime == Regime::Continuous && (c.source.kind == "csv" || c.target.kind == "csv"))
    kv.add_error("data.regime: csv data requires the discrete regime");
  if (c.regime == Regime::Discrete) {
    if (c.source.kind == "gaussian" && c.source.size < 1)
      kv.add_error("data.source.size: must be >= 1 for a generated discrete support");
    if (c.target.kind == "gaussian" && c.target.size < 1)
      kv.add_error("data.target.size: must be >= 1 for a generated discrete support");
  }

  guarded(kv, [&] { c.problem.mode = parse_ot_mode(kv.get_string("ot.mode", "unsupervised")); });
  guarded(kv, [&] { c.problem.cost_kind = parse_cost_kind(kv.get_string("ot.cost", "squared_l2")); });
  c.problem.epsilon = kv.get_double("ot.epsilon", 1e-4);
  c.problem.tau = kv.get_double("ot.tau", 0.1);
  if (!(c.problem.epsilon > 0.0)) kv.add_error("ot.epsilon: must be > 0");
  if (!(c.problem.tau > 0.0)) kv.add_error("ot.tau: must be > 0");
  if (c.problem.mode == OtMode::SemiSupervised) {
    if (c.keypoints_path.empty()) kv.add_error("data.keypoints: required when ot.mode = semi_supervised");
    if (c.regime != Regime::Discrete) kv.add_error("data.regime: semi_supervised mode needs the discrete regime");
  }
  auto& ot = c.ot_train;
  ot.learning_rate = kv.get_double("ot.learning_rate", 1e-5);
  ot.final_learning_rate = kv.get_double("ot.final_learning_rate", 0.0);
  ot.batch_size = kv.get_int("ot.batch_size", 256);
  ot.iterations = kv.get_int("ot.iterations", 10000);
  {
    std::vector<Eigen::Index> hidden;
    for (double h : kv.get_doubles("ot.hidden", {1024})) hidden.push_back(static_cast<Eigen::Index>(h));
    ot.architecture.hidden = hidden;
  }
  guarded(kv, [&] { ot.architecture.activation = parse_activation(kv.get_string("ot.activation", "tanh")); });
  ot.monitor_every = kv.get_int("ot.monitor_every", 100);
  ot.monitor_probes = kv.get_int("ot.monitor_probes", 64);
  ot.seed = stream_seed(c.seed, "ot");
  if (!(ot.learning_rate > 0.0)) kv.add_error("ot.learning_rate: must be > 0");
  if (ot.final_learning_rate < 0.0) kv.add_error("ot.final_learning_rate: must be >= 0");
  if (ot.batch_size < 1) kv.add_error("ot.batch_size: must be >= 1");
  if (ot.iterations < 0) kv.add_error("ot.iterations: must be >= 0");
  if (ot.monitor_every < 1) kv.add_error("ot.monitor_every: must be >= 1");
  if (ot.monitor_probes < 1) kv.add_error("ot.monitor_probes: must be >= 1");
  for (auto h : ot.architecture.hidden)
    if (h < 1) kv.add_error("ot.hidden: widths must be >= 1");

  guarded(kv, [&] { c.sde.kind = parse_sde_kind(kv.get_string("sde.kind", "ve")); });
  c.sde.alpha = kv.get_double("sde.alpha", 25.0);
  c.sde.beta_min = kv.get_double("sde.beta_min", 0.1);
  c.sde.beta_max = kv.get_double("sde.beta_max", 20.0);
  c.sde.t_min = kv.get_double("sde.t_min", 1e-5);
  guarded(kv, [&] { c.sde.validate(); });

  auto& a = c.score_arch;
  a.hidden = kv.get_int("score.hidden", 512);
  a.trunk_hidden_layers = static_cast<int>(kv.get_int("score.trunk_layers", 2));
  a.cond_hidden_layers = static_cast<int>(kv.get_int("score.cond_layers", 2));
  a.fourier_features = kv.get_int("score.fourier_features", 256);
  a.fourier_scale = kv.get_double("score.fourier_scale", 16.0);
  a.scale_by_sigma = kv.get_bool("score.scale_by_sigma", true);
  a.zero_init_output = kv.get_bool("score.zero_init_output", false);
  if (a.hidden < 1) kv.add_error("score.hidden: must be >= 1");
  if (a.trunk_hidden_layers < 1) kv.add_error("score.trunk_layers: must be >= 1");
  if (a.cond_hidden_layers < 0) kv.add_error("score.cond_layers: must be >= 0");
  if (a.fourier_features < 2 || a.fourier_features % 2 != 0)
    kv.add_error("score.fourier_features: must be even and >= 2");
  if (!(a.fourier_scale > 0.0)) kv.add_error("score.fourier_scale: must be > 0");

  auto& s = c.score_train;
  s.batch_size = kv.get_int("score.batch_size", 32);
  s.candidates = kv.get_int("score.candidates", 0);
  s.candidate_pool = kv.get_int("score.candidate_pool", 0);
  s.iterations = kv.get_int("score.iterations", 10000);
  c.unconditional_iterations = kv.get_int("score.unconditional_iterations", 0);
  s.adam.learning_rate = kv.get_double("score.learning_rate", 1e-4);
  s.adam.ema_decay = kv.get_double("score.ema_decay", 0.999);
  guarded(kv, [&] { s.weight_mode = parse_weight_mode(kv.get_string("score.weight_mode", "sigma_squared")); });
  s.h_threshold = kv.get_double("score.h_threshold", 1e-3);
  s.max_retries = static_cast<int>(kv.get_int("score.max_retries", 10));
  s.log_every = kv.get_int("score.log_every", 100);
  s.seed = stream_seed(c.seed, "score");
  guarded(kv, [&] { s.validate(); });
  if (c.unconditional_iterations < 0) kv.add_error("score.unconditional_iterations: must be >= 0");

  auto& sm = c.sampler;
  guarded(kv, [&] { sm.method = parse_sampler_method(kv.get_string("sampler.method", "em")); });
  guarded(kv, [&] { c.scones_method = parse_sampler_method(kv.get_string("sampler.scones_method", "em")); });
  sm.n_steps = kv.get_int("sampler.n_steps", 1000);
  sm.corrector_snr = kv.get_double("sampler.snr", 0.16);
  guarded(kv, [&] { sm.init = parse_init_mode(kv.get_string("sampler.init", "prior")); });
  sm.M = kv.get_double("sampler.M", 0.2);
  sm.seed = stream_seed(c.seed, "sample");
  guarded(kv, [&] { sm.validate(c.sde); });

  c.eval_probes = kv.get_int("eval.probes", 64);
  c.eval_samples = kv.get_int("eval.n_samples", 1000);
  c.eval_support = kv.get_int("eval.support", 2000);
  c.histogram_bins = kv.get_int("eval.histogram_bins", 50);
  c.histogram_lo = kv.get_double("eval.histogram_lo", 0.0);
  c.histogram_hi = kv.get_double("eval.histogram_hi", 8.0);
  c.histogram_condition = kv.get_double("eval.histogram_condition", -4.0);
  if (c.eval_probes < 1) kv.add_error("eval.probes: must be >= 1");
  if (c.eval_samples < 2) kv.add_error("eval.n_samples: must be >= 2");
  if (c.eval_support < 1) kv.add_error("eval.support: must be >= 1");
  if (c.histogram_bins < 1) kv.add_error("eval.histogram_bins: must be >= 1");
  if (!(c.histogram_hi > c.histogram_lo)) kv.add_error("eval.histogram_hi: must exceed eval.histogram_lo");

  c.fig2_epsilons = kv.get_doubles("fig2.epsilons", {1e-1, 1e-2, 1e-3, 1e-4});
  c.fig2_warm_start = kv.get_bool("fig2.warm_start", true);
  if (c.fig2_epsilons.empty()) kv.add_error("fig2.epsilons: must list at least one value");
  for (double e : c.fig2_epsilons)
    if (!(e > 0.0)) kv.add_error("fig2.epsilons: every entry must be > 0");

  for (const auto& k : kv.unused_keys()) kv.add_error(k + ": unknown key");
  if (!kv.errors().empty()) {
    std::string msg = "config validation failed:";
    for (const auto& e : kv.errors()) msg += "\n  " + e;
    fail(ErrorKind::Config, msg);
  }
  for (const auto& [k, v] : kv.resolved()) c.echo[k] = v;
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValueConfig kv = KeyValueConfig::load(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      kv.add_error("override '" + o + "': expected key=value");
      continue;
    }
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  ExperimentConfig c = from(kv);
  // data files are looked up next to the config file
  const auto base = std::filesystem::path(path).parent_path();
  for (std::string* f : {&c.source.path, &c.target.path, &c.keypoints_path})
    if (!f->empty() && std::filesystem::path(*f).is_relative()) *f = (base / *f).lexically_normal().string();
  return c;
}

std::string ExperimentConfig::path_in(const std::string& subdir, const std::string& file) const {
  return (std::filesystem::path(output_dir) / subdir / file).string();
}

}  // namespace otcs
