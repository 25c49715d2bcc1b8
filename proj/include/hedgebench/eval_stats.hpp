#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hedgebench/market_sim.hpp"
#include "hedgebench/objective.hpp"
#include "hedgebench/train.hpp"

namespace hedgebench {

struct Provenance {
  std::string label;
  std::string optimizer;
  std::uint64_t train_seed = 0;
  std::uint64_t sim_seed = 0;
  std::string config_hash;
  /// Which rows of the path file were evaluated: "all" or "validation".
  std::string subset = "all";
};

struct MetricsReport {
  std::vector<double> pnl;
  std::vector<double> cost;
  std::vector<double> trading_gain;
  double pnl_variance = 0.0;
  double mean_cost = 0.0;
  double mean_pnl = 0.0;
  double sharpe = 0.0;
  std::size_t n_paths = 0;
  Provenance provenance;

  /// Recomputes the scalars from the vectors.
  void refresh();
  void validate() const;
};

MetricsReport make_report(std::span<const PnLRecord> records, Provenance provenance = {});

/// Runs the model over every path in `paths` using its stored normalization,
/// option and cost model.
MetricsReport evaluate(const ModelDocument& model, const PathBatch& paths, Provenance provenance = {});

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
};

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df` degrees
/// of freedom (df may be fractional).
double student_t_two_sided_p(double t, double df);

/// Unequal-variance two-sample t-test with Welch-Satterthwaite df.
TTestResult welch_t_test(std::span<const double> x, std::span<const double> y);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

/// Pearson r between normalized price and normalized variance levels pooled
/// over every (path, step) of the tensor.
double level_correlation(const FeatureTensor& features);

/// Pearson r between per-step price and variance increments pooled over paths.
double increment_correlation(const PathBatch& batch);

struct ConvergenceSummary {
  double threshold = 0.0;
  std::optional<int> epoch_a;
  std::optional<int> epoch_b;
};

struct ComparisonReport {
  std::string label_a;
  std::string label_b;
  std::size_t n_paths = 0;
  TTestResult pnl_test;
  TTestResult cost_test;
  double pnl_variance_a = 0.0, pnl_variance_b = 0.0;
  double mean_cost_a = 0.0, mean_cost_b = 0.0;
  double sharpe_a = 0.0, sharpe_b = 0.0;
  double mean_pnl_a = 0.0, mean_pnl_b = 0.0;
  /// (b - a) / |a| * 100; 0 when both are zero.
  double variance_change_pct = 0.0;
  double cost_change_pct = 0.0;
  double sharpe_change_pct = 0.0;
  std::optional<ConvergenceSummary> convergence;

  std::string render_table() const;
};

double percent_change(double from, double to);

/// Welch tests are taken as a minus b, so a positive cost t means b is cheaper.
ComparisonReport compare(const MetricsReport& a, const MetricsReport& b);

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  std::size_t count_a = 0;
  std::size_t count_b = 0;
};

/// Equal-width bins over the pooled pnl range; the last bin is closed.
std::vector<HistogramBin> pnl_histogram(const MetricsReport& a, const MetricsReport& b, int bins = 50);

void write_report(const MetricsReport& report, std::ostream& out);
MetricsReport read_report(std::istream& in);
void write_report(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport read_report(const std::filesystem::path& path);

/// Per-path CSV `path,pnl,cost,trading_gain`.
void write_evaluation_csv(const MetricsReport& report, std::ostream& out);
void write_comparison(const ComparisonReport& cmp, std::ostream& out);
void write_histogram_csv(std::span<const HistogramBin> bins, std::ostream& out);

}  // namespace hedgebench
