#include "otcs/metrics.hpp"

#include "otcs/io.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace otcs {

GaussianSummary summarize_samples(const PointSet& S) {
  require(S.cols() >= 2, ErrorKind::InvalidArgument, "summarize_samples needs >= 2 samples");
  GaussianSummary g;
  g.mean = S.rowwise().mean();
  const Eigen::MatrixXd c = S.colwise() - g.mean;
  g.std = (c.array().square().rowwise().sum() / static_cast<double>(S.cols() - 1)).sqrt().matrix();
  return g;
}

GaussianSummary summarize_weighted(const PointSet& points, const Eigen::VectorXd& weights) {
  require(points.cols() == weights.size() && points.cols() > 0, ErrorKind::DimensionMismatch,
          "summarize_weighted: size mismatch");
  const double total = weights.sum();
  require(total > 0.0, ErrorKind::InvalidArgument, "summarize_weighted: zero total weight");
  GaussianSummary g;
  g.mean = points * weights / total;
  const Eigen::MatrixXd c = points.colwise() - g.mean;
  g.std = ((c.array().square().matrix() * weights).array() / total).sqrt().matrix();
  return g;
}

double gaussian_w2(const GaussianSummary& a, const GaussianSummary& b) {
  require(a.mean.size() == b.mean.size() && a.std.size() == b.std.size(), ErrorKind::DimensionMismatch,
          "gaussian_w2: dimension mismatch");
  return std::sqrt((a.mean - b.mean).squaredNorm() + (a.std - b.std).squaredNorm());
}

double gaussian_w2_1d(const GaussianSummary& a, const GaussianSummary& b) {
  require(a.mean.size() == 1 && b.mean.size() == 1, ErrorKind::DimensionMismatch, "gaussian_w2_1d needs 1-D summaries");
  return gaussian_w2(a, b);
}

double empirical_w2_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& wa, const Eigen::VectorXd& b,
                       const Eigen::VectorXd& wb) {
  require(a.size() == wa.size() && b.size() == wb.size() && a.size() > 0 && b.size() > 0,
          ErrorKind::DimensionMismatch, "empirical_w2_1d: size mismatch");
  auto order = [](const Eigen::VectorXd& v) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v(i) < v(j); });
    return idx;
  };
  const auto ia = order(a), ib = order(b);
  const double ta = wa.sum(), tb = wb.sum();
  require(ta > 0.0 && tb > 0.0, ErrorKind::InvalidArgument, "empirical_w2_1d: zero total weight");
  // Walk both quantile functions, pairing mass.
  std::size_t ka = 0, kb = 0;
  double ra = wa(ia[0]) / ta, rb = wb(ib[0]) / tb, total = 0.0;
  while (ka < ia.size() && kb < ib.size()) {
    const double m = std::min(ra, rb);
    const double d = a(ia[ka]) - b(ib[kb]);
    total += m * d * d;
    ra -= m;
    rb -= m;
    if (ra <= 1e-15) {
      if (++ka < ia.size()) ra = wa(ia[ka]) / ta;
    }
    if (rb <= 1e-15) {
      if (++kb < ib.size()) rb = wb(ib[kb]) / tb;
    }
  }
  return std::sqrt(total);
}

double empirical_w2_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return empirical_w2_1d(a, Eigen::VectorXd::Ones(a.size()), b, Eigen::VectorXd::Ones(b.size()));
}

Eigen::VectorXd conditional_plan_density(const PotentialPair& pp, const Point& x, const EmpiricalMeasure& q) {
  const Eigen::RowVectorXd h = compatibility_matrix(pp, x, q.points()).row(0);
  Eigen::VectorXd d = h.transpose().cwiseProduct(q.weights());
  const double total = d.sum();
  require(total > 0.0, ErrorKind::Infeasible, "conditional plan has zero mass at this condition");
  return d / total;
}

PointSet quantile_probes(const EmpiricalMeasure& p, Eigen::Index n) {
  require(p.dimension() == 1, ErrorKind::DimensionMismatch, "quantile_probes needs a 1-D measure");
  require(n >= 1, ErrorKind::InvalidArgument, "quantile_probes: n must be >= 1");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(p.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return p.points()(0, i) < p.points()(0, j); });
  PointSet out(1, n);
  std::size_t k = 0;
  double acc = p.weight(idx[0]);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double level = (static_cast<double>(r) + 0.5) / static_cast<double>(n);
    while (acc < level && k + 1 < idx.size()) acc += p.weight(idx[++k]);
    out(0, r) = p.points()(0, idx[k]);
  }
  return out;
}

ExpectedW2 expected_w2(const PointSet& probes, const EmpiricalMeasure& q, const PlanDensity& plan,
                       const ConditionalSampler& sampler, Eigen::Index n_samples) {
  require(n_samples >= 2, ErrorKind::InvalidArgument, "expected_w2 needs >= 2 samples per condition");
  ExpectedW2 out;
  for (Eigen::Index c = 0; c < probes.cols(); ++c) {
    const Point x = probes.col(c);
    Eigen::VectorXd density;
    try {
      density = plan(x);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Infeasible) throw;
      out.skipped.push_back(x);
      continue;
    }
    ProbeResult r;
    r.condition = x;
    const PointSet S = sampler(x, c, n_samples);
    r.samples = summarize_samples(S);
    r.plan = summarize_weighted(q.points(), density);
    r.w2_gaussian = gaussian_w2(r.samples, r.plan);
    if (q.dimension() == 1)
      r.w2_empirical = empirical_w2_1d(S.row(0).transpose(), Eigen::VectorXd::Ones(S.cols()),
                                       q.points().row(0).transpose(), density);
    out.probes.push_back(std::move(r));
  }
  require(!out.probes.empty(), ErrorKind::Infeasible, "expected_w2: every probe condition has zero plan mass");
  for (const auto& r : out.probes) {
    out.gaussian += r.w2_gaussian;
    out.empirical += r.w2_empirical;
  }
  out.gaussian /= static_cast<double>(out.probes.size());
  out.empirical /= static_cast<double>(out.probes.size());
  return out;
}

ExpectedW2 expected_w2(const PointSet& probes, const EmpiricalMeasure& q, const PotentialPair& pp,
                       const ConditionalSampler& sampler, Eigen::Index n_samples) {
  return expected_w2(probes, q, [&](const Point& x) { return conditional_plan_density(pp, x, q); }, sampler,
                     n_samples);
}

Histogram histogram(const Eigen::VectorXd& samples, Eigen::Index n_bins, double lo, double hi) {
  return histogram(samples, Eigen::VectorXd::Ones(samples.size()), n_bins, lo, hi);
}

Histogram histogram(const Eigen::VectorXd& samples, const Eigen::VectorXd& weights, Eigen::Index n_bins, double lo,
                    double hi) {
  require(samples.size() >= 1, ErrorKind::InvalidArgument, "histogram needs >= 1 sample");
  require(weights.size() == samples.size(), ErrorKind::DimensionMismatch, "histogram weights size mismatch");
  require(n_bins >= 1, ErrorKind::InvalidArgument, "histogram needs >= 1 bin");
  require(std::isfinite(lo) && std::isfinite(hi) && hi > lo, ErrorKind::InvalidArgument,
          "histogram range must be finite with hi > lo");
  Histogram h;
  const double width = (hi - lo) / static_cast<double>(n_bins);
  h.edges = Eigen::VectorXd::LinSpaced(n_bins + 1, lo, hi);
  h.density = Eigen::VectorXd::Zero(n_bins);
  double mass = 0.0;
  for (Eigen::Index k = 0; k < samples.size(); ++k) {
    const double s = samples(k);
    if (!(s >= lo && s <= hi)) continue;
    auto b = static_cast<Eigen::Index>((s - lo) / width);
    b = std::clamp<Eigen::Index>(b, 0, n_bins - 1);
    h.density(b) += weights(k);
    mass += weights(k);
    ++h.counted;
  }
  if (mass > 0.0) h.density /= mass * width;
  return h;
}

nlohmann::json to_json(const GaussianSummary& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

nlohmann::json to_json(const ExpectedW2& e) {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& r : e.probes)
    probes.push_back({{"condition", std::vector<double>(r.condition.data(), r.condition.data() + r.condition.size())},
                      {"samples", to_json(r.samples)},
                      {"plan", to_json(r.plan)},
                      {"w2_gaussian", r.w2_gaussian},
                      {"w2_empirical", r.w2_empirical}});
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& x : e.skipped) skipped.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  return {{"expected_w2_gaussian", e.gaussian},
          {"expected_w2_empirical", e.empirical},
          {"probes", probes},
          {"skipped_probes", skipped}};
}

void write_json(const std::string& path, const nlohmann::json& j) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << j.dump(2) << '\n';
}

void save_histograms_csv(const std::string& path, const std::vector<std::pair<std::string, Histogram>>& hists) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << "series,bin_lo,bin_hi,density\n" << std::setprecision(17);
  for (const auto& [name, h] : hists)
    for (Eigen::Index b = 0; b < h.density.size(); ++b)
      out << name << ',' << h.edges(b) << ',' << h.edges(b + 1) << ',' << h.density(b) << '\n';
}

void save_histograms_svg(const std::string& path, const std::string& title,
                         const std::vector<std::pair<std::string, Histogram>>& hists) {
  require(!hists.empty(), ErrorKind::InvalidArgument, "no histograms to plot");
  const double W = 640, Hh = 400, pad = 50;
  const double lo = hists.front().second.edges(0);
  const double hi = hists.front().second.edges(hists.front().second.edges.size() - 1);
  double ymax = 0.0;
  for (const auto& [name, h] : hists) ymax = std::max(ymax, h.density.maxCoeff());
  if (ymax <= 0.0) ymax = 1.0;
  auto px = [&](double x) { return pad + (x - lo) / (hi - lo) * (W - 2 * pad); };
  auto py = [&](double y) { return Hh - pad - y / ymax * (Hh - 2 * pad); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << title << "</text>\n";
  s << "<line x1=\"" << pad << "\" y1=\"" << Hh - pad << "\" x2=\"" << W - pad << "\" y2=\"" << Hh - pad
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << Hh - pad
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double x = lo + (hi - lo) * k / 4.0;
    s << "<text x=\"" << px(x) << "\" y=\"" << Hh - pad + 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"11\">" << x << "</text>\n";
  }
  s << "<text x=\"" << pad - 6 << "\" y=\"" << py(ymax) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\""
    << " font-size=\"11\">" << ymax << "</text>\n";
  std::size_t c = 0;
  for (const auto& [name, h] : hists) {
    const char* color = colors[c % 5];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (Eigen::Index b = 0; b < h.density.size(); ++b)
      s << px(h.edges(b)) << ',' << py(h.density(b)) << ' ' << px(h.edges(b + 1)) << ',' << py(h.density(b)) << ' ';
    s << "\"/>\n";
    s << "<text x=\"" << W - pad << "\" y=\"" << pad + 16.0 * static_cast<double>(c)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color << "\">" << name
      << "</text>\n";
    ++c;
  }
  s << "</svg>\n";
  ensure_parent_dir(path);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << s.str();
}

}  // namespace otcs
