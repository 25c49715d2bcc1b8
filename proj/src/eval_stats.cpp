#include "hedgebench/eval_stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hedgebench/error.hpp"
#include "hedgebench/io_util.hpp"
#include "hedgebench/policy.hpp"

namespace hedgebench {

using nlohmann::json;

namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (const double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

void MetricsReport::refresh() {
  n_paths = pnl.size();
  if (n_paths < 2) fail(ErrorKind::Degenerate, "a report needs at least two paths");
  mean_pnl = mean_of(pnl);
  mean_cost = mean_of(cost);
  pnl_variance = sample_variance(pnl, mean_pnl);
  const double sd = std::sqrt(pnl_variance);
  sharpe = sd < 1e-15 ? 0.0 : mean_pnl / sd;
}

void MetricsReport::validate() const {
  if (pnl.size() != n_paths || cost.size() != n_paths || (!trading_gain.empty() && trading_gain.size() != n_paths)) {
    fail(ErrorKind::Validation, "report vectors disagree with n_paths");
  }
  if (n_paths < 2) fail(ErrorKind::Degenerate, "a report needs at least two paths");
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (!std::isfinite(pnl[i]) || !std::isfinite(cost[i])) fail(ErrorKind::Validation, "report holds non-finite values");
  }
  MetricsReport check = *this;
  check.refresh();
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  if (!close(pnl_variance, check.pnl_variance) || !close(mean_cost, check.mean_cost) ||
      !close(mean_pnl, check.mean_pnl) || !close(sharpe, check.sharpe)) {
    fail(ErrorKind::Validation, "report scalars are inconsistent with the per-path vectors");
  }
}

MetricsReport make_report(std::span<const PnLRecord> records, Provenance provenance) {
  MetricsReport r;
  r.provenance = std::move(provenance);
  for (const auto& rec : records) {
    r.pnl.push_back(rec.pnl);
    r.cost.push_back(rec.cost);
    r.trading_gain.push_back(rec.trading_gain);
  }
  r.refresh();
  return r;
}

MetricsReport evaluate(const ModelDocument& model, const PathBatch& paths, Provenance provenance) {
  if (paths.n_paths() < 2) fail(ErrorKind::Degenerate, "evaluation needs at least two paths");
  const FeatureTensor features = normalize(paths, model.norm);
  const RowMatrix hedges = predict(model.params, features);
  const auto records = compute_pnl_batch(paths.prices, hedges, model.option, model.cost);
  if (provenance.optimizer.empty()) provenance.optimizer = model.optimizer;
  if (provenance.train_seed == 0) provenance.train_seed = model.train_seed;
  if (provenance.sim_seed == 0) provenance.sim_seed = model.sim_seed;
  if (provenance.config_hash.empty()) provenance.config_hash = model.config_hash;
  if (provenance.label.empty()) provenance.label = model.optimizer;
  return make_report(records, std::move(provenance));
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 100000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  fail(ErrorKind::Numeric, "incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "incomplete beta needs a, b > 0 and x in [0, 1]");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) fail(ErrorKind::InvalidArgument, "degrees of freedom must be > 0");
  if (std::isnan(t)) fail(ErrorKind::Numeric, "t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(regularized_incomplete_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

TTestResult welch_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) fail(ErrorKind::InvalidArgument, "Welch test needs at least two samples per side");
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  const double mx = mean_of(x);
  const double my = mean_of(y);
  const double vx = sample_variance(x, mx) / n;
  const double vy = sample_variance(y, my) / m;
  const double se2 = vx + vy;
  TTestResult r;
  if (se2 == 0.0) {
    r.degrees_of_freedom = n + m - 2.0;
    if (mx == my) {
      r.t_statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_statistic = mx > my ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
    return r;
  }
  r.t_statistic = (mx - my) / std::sqrt(se2);
  r.degrees_of_freedom = se2 * se2 / (vx * vx / (n - 1.0) + vy * vy / (m - 1.0));
  r.p_value = student_t_two_sided_p(r.t_statistic, r.degrees_of_freedom);
  return r;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::InvalidArgument, "Pearson needs equal lengths >= 2");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::Degenerate, "Pearson correlation of a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double level_correlation(const FeatureTensor& features) {
  const std::size_t n = features.n_paths * static_cast<std::size_t>(features.n_steps);
  std::vector<double> price(n), var(n);
  for (std::size_t k = 0; k < n; ++k) {
    price[k] = features.data[2 * k];
    var[k] = features.data[2 * k + 1];
  }
  return pearson_correlation(price, var);
}

double increment_correlation(const PathBatch& batch) {
  const auto cols = batch.prices.cols() - 1;
  std::vector<double> ds, dv;
  ds.reserve(static_cast<std::size_t>(batch.prices.rows() * cols));
  dv.reserve(ds.capacity());
  for (Eigen::Index i = 0; i < batch.prices.rows(); ++i) {
    for (Eigen::Index t = 0; t < cols; ++t) {
      ds.push_back(batch.prices(i, t + 1) - batch.prices(i, t));
      dv.push_back(batch.variances(i, t + 1) - batch.variances(i, t));
    }
  }
  return pearson_correlation(ds, dv);
}

double percent_change(double from, double to) {
  if (from == to) return 0.0;
  if (from == 0.0) return to > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  return (to - from) / std::abs(from) * 100.0;
}

ComparisonReport compare(const MetricsReport& a, const MetricsReport& b) {
  a.validate();
  b.validate();
  if (a.n_paths != b.n_paths) fail(ErrorKind::Shape, "reports were built on different numbers of paths");
  ComparisonReport c;
  c.label_a = a.provenance.label.empty() ? "A" : a.provenance.label;
  c.label_b = b.provenance.label.empty() ? "B" : b.provenance.label;
  c.n_paths = a.n_paths;
  c.pnl_test = welch_t_test(a.pnl, b.pnl);
  c.cost_test = welch_t_test(a.cost, b.cost);
  c.pnl_variance_a = a.pnl_variance;
  c.pnl_variance_b = b.pnl_variance;
  c.mean_cost_a = a.mean_cost;
  c.mean_cost_b = b.mean_cost;
  c.sharpe_a = a.sharpe;
  c.sharpe_b = b.sharpe;
  c.mean_pnl_a = a.mean_pnl;
  c.mean_pnl_b = b.mean_pnl;
  c.variance_change_pct = percent_change(a.pnl_variance, b.pnl_variance);
  c.cost_change_pct = percent_change(a.mean_cost, b.mean_cost);
  c.sharpe_change_pct = percent_change(a.sharpe, b.sharpe);
  return c;
}

namespace {

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string p_text(double p) { return p < 1e-6 ? "< 1e-6" : fixed(p, 4); }

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

}  // namespace

std::string ComparisonReport::render_table() const {
  std::ostringstream out;
  const bool pnl_sig = pnl_test.p_value < 0.05;
  const bool cost_sig = cost_test.p_value < 0.05;
  const std::string pnl_inf = pnl_sig ? "Significant P&L variation" : "Non-significant P&L variation";
  std::string cost_inf = "Non-significant cost difference";
  if (cost_sig) cost_inf = mean_cost_b < mean_cost_a ? "Significant cost reduction" : "Significant cost increase";

  out << "Statistical significance (Welch two-sided, " << label_a << " minus " << label_b << ", n=" << n_paths
      << " paths)\n";
  out << "| " << pad("Metric", 29) << " | " << pad("t-statistic", 11) << " | " << pad("p-value", 8) << " | "
      << pad("df", 9) << " | Statistical Inference |\n";
  out << "| " << pad("P&L Differential", 29) << " | " << pad(fixed(pnl_test.t_statistic, 4), 11) << " | "
      << pad(p_text(pnl_test.p_value), 8) << " | " << pad(fixed(pnl_test.degrees_of_freedom, 1), 9) << " | "
      << pnl_inf << " |\n";
  out << "| " << pad("Transaction Cost Differential", 29) << " | " << pad(fixed(cost_test.t_statistic, 4), 11)
      << " | " << pad(p_text(cost_test.p_value), 8) << " | " << pad(fixed(cost_test.degrees_of_freedom, 1), 9)
      << " | " << cost_inf << " |\n\n";

  out << "Performance metrics (validation set)\n";
  out << "| " << pad("Implementation", 16) << " | " << pad("P&L Variance", 14) << " | " << pad("Mean Trans. Cost", 16)
      << " | " << pad("Sharpe Ratio", 12) << " | " << pad("Mean P&L", 12) << " |\n";
  auto row = [&](const std::string& name, double var, double cost, double sharpe, double mean) {
    out << "| " << pad(name, 16) << " | " << pad(fixed(var, 6), 14) << " | " << pad(fixed(cost, 6), 16) << " | "
        << pad(fixed(sharpe, 4), 12) << " | " << pad(fixed(mean, 6), 12) << " |\n";
  };
  row(label_a, pnl_variance_a, mean_cost_a, sharpe_a, mean_pnl_a);
  row(label_b, pnl_variance_b, mean_cost_b, sharpe_b, mean_pnl_b);
  out << "| " << pad("change", 16) << " | " << pad(fixed(variance_change_pct, 2) + "%", 14) << " | "
      << pad(fixed(cost_change_pct, 2) + "%", 16) << " | " << pad(fixed(sharpe_change_pct, 2) + "%", 12) << " | "
      << pad("", 12) << " |\n";
  if (convergence) {
    auto ep = [](const std::optional<int>& e) { return e ? std::to_string(*e) : std::string("not reached"); };
    out << "\nEpochs to validation loss <= " << fixed(convergence->threshold, 6) << ": " << label_a << " "
        << ep(convergence->epoch_a) << ", " << label_b << " " << ep(convergence->epoch_b) << "\n";
  }
  return out.str();
}

std::vector<HistogramBin> pnl_histogram(const MetricsReport& a, const MetricsReport& b, int bins) {
  if (bins < 1) fail(ErrorKind::InvalidArgument, "histogram needs at least one bin");
  if (a.pnl.empty() || b.pnl.empty()) fail(ErrorKind::InvalidArgument, "histogram of an empty report");
  double lo = std::min(*std::min_element(a.pnl.begin(), a.pnl.end()), *std::min_element(b.pnl.begin(), b.pnl.end()));
  double hi = std::max(*std::max_element(a.pnl.begin(), a.pnl.end()), *std::max_element(b.pnl.begin(), b.pnl.end()));
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / bins;
  std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    out[static_cast<std::size_t>(k)].left = lo + k * width;
    out[static_cast<std::size_t>(k)].right = k + 1 == bins ? hi : lo + (k + 1) * width;
  }
  auto bin_of = [&](double v) {
    auto k = static_cast<int>(std::floor((v - lo) / width));
    return static_cast<std::size_t>(std::clamp(k, 0, bins - 1));
  };
  for (const double v : a.pnl) ++out[bin_of(v)].count_a;
  for (const double v : b.pnl) ++out[bin_of(v)].count_b;
  return out;
}

void write_report(const MetricsReport& r, std::ostream& out) {
  json doc = {
      {"format", "hedgebench-report"},
      {"version", 1},
      {"n_paths", r.n_paths},
      {"pnl_variance", r.pnl_variance},
      {"mean_cost", r.mean_cost},
      {"mean_pnl", r.mean_pnl},
      {"sharpe", r.sharpe},
      {"provenance",
       {{"label", r.provenance.label},
        {"optimizer", r.provenance.optimizer},
        {"train_seed", r.provenance.train_seed},
        {"sim_seed", r.provenance.sim_seed},
        {"config_hash", r.provenance.config_hash},
        {"subset", r.provenance.subset},
        {"pnl_test_pairing", "per-path"}}},
      {"pnl", r.pnl},
      {"cost", r.cost},
      {"trading_gain", r.trading_gain},
  };
  out << doc.dump(1) << '\n';
}

MetricsReport read_report(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("report document: ") + e.what());
  }
  try {
    if (doc.value("format", std::string{}) != "hedgebench-report") fail(ErrorKind::Validation, "not a report document");
    MetricsReport r;
    r.pnl = doc.at("pnl").get<std::vector<double>>();
    r.cost = doc.at("cost").get<std::vector<double>>();
    r.trading_gain = doc.value("trading_gain", std::vector<double>{});
    r.n_paths = doc.at("n_paths").get<std::size_t>();
    r.pnl_variance = doc.at("pnl_variance").get<double>();
    r.mean_cost = doc.at("mean_cost").get<double>();
    r.mean_pnl = doc.at("mean_pnl").get<double>();
    r.sharpe = doc.at("sharpe").get<double>();
    const auto& p = doc.at("provenance");
    r.provenance.label = p.value("label", std::string{});
    r.provenance.optimizer = p.value("optimizer", std::string{});
    r.provenance.train_seed = p.value("train_seed", std::uint64_t{0});
    r.provenance.sim_seed = p.value("sim_seed", std::uint64_t{0});
    r.provenance.config_hash = p.value("config_hash", std::string{});
    r.provenance.subset = p.value("subset", std::string{"all"});
    r.validate();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::Validation, std::string("report document: ") + e.what());
  }
}

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  io::write_file_atomic(path, [&](std::ostream& out) { write_report(report, out); });
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open report '" + path.string() + "'");
  return read_report(in);
}

void write_evaluation_csv(const MetricsReport& r, std::ostream& out) {
  out << "path,pnl,cost,trading_gain\n";
  for (std::size_t i = 0; i < r.n_paths; ++i) {
    out << i << ',' << io::format_double(r.pnl[i]) << ',' << io::format_double(r.cost[i]) << ','
        << io::format_double(r.trading_gain.empty() ? 0.0 : r.trading_gain[i]) << '\n';
  }
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json ttest_json(const TTestResult& t) {
  return {{"t_statistic", finite_or_null(t.t_statistic)},
          {"degrees_of_freedom", t.degrees_of_freedom},
          {"p_value", t.p_value},
          {"two_sided", true}};
}

}  // namespace

void write_comparison(const ComparisonReport& c, std::ostream& out) {
  json doc = {
      {"format", "hedgebench-comparison"},
      {"version", 1},
      {"label_a", c.label_a},
      {"label_b", c.label_b},
      {"n_paths", c.n_paths},
      {"pnl_test", ttest_json(c.pnl_test)},
      {"cost_test", ttest_json(c.cost_test)},
      {"metrics",
       {{c.label_a,
         {{"pnl_variance", c.pnl_variance_a}, {"mean_cost", c.mean_cost_a}, {"sharpe", c.sharpe_a}, {"mean_pnl", c.mean_pnl_a}}},
        {c.label_b,
         {{"pnl_variance", c.pnl_variance_b}, {"mean_cost", c.mean_cost_b}, {"sharpe", c.sharpe_b}, {"mean_pnl", c.mean_pnl_b}}}}},
      {"percent_change",
       {{"pnl_variance", finite_or_null(c.variance_change_pct)},
        {"mean_cost", finite_or_null(c.cost_change_pct)},
        {"sharpe", finite_or_null(c.sharpe_change_pct)}}},
      {"table", c.render_table()},
  };
  if (c.convergence) {
    auto ep = [](const std::optional<int>& e) { return e ? json(*e) : json(nullptr); };
    doc["convergence"] = {{"threshold", c.convergence->threshold},
                          {"epoch_a", ep(c.convergence->epoch_a)},
                          {"epoch_b", ep(c.convergence->epoch_b)}};
  }
  out << doc.dump(1) << '\n';
}

void write_histogram_csv(std::span<const HistogramBin> bins, std::ostream& out) {
  out << "bin_left,bin_right,count_a,count_b\n";
  for (const auto& b : bins) {
    out << io::format_double(b.left) << ',' << io::format_double(b.right) << ',' << b.count_a << ',' << b.count_b << '\n';
  }
}

}  // namespace hedgebench
