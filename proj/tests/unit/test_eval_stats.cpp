#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "hedgebench/error.hpp"
#include "hedgebench/eval_stats.hpp"

using namespace hedgebench;

namespace {

MetricsReport report_from(std::vector<double> pnl, std::vector<double> cost, std::string label = "") {
  MetricsReport r;
  r.pnl = std::move(pnl);
  r.cost = std::move(cost);
  r.provenance.label = std::move(label);
  r.refresh();
  return r;
}

// Two-path report whose sample variance and mean cost equal the given values.
MetricsReport report_with(double variance, double mean_cost) {
  const double d = std::sqrt(variance / 2.0);
  return report_from({-d, d}, {mean_cost, mean_cost});
}

}  // namespace

// Two-sided Student-t tail probabilities, computed with mpmath at 40 digits
// as I_{df/(df+t^2)}(df/2, 1/2).
TEST(StudentT, MatchesHighPrecisionTable) {
  struct Row {
    double df, t, p;
  };
  const Row table[] = {
      {1, 0, 1.0},
      {1, 1, 0.5},
      {1, 2, 0.29516723530086655},
      {1, 5, 0.12566591637800237},
      {2.5, 0, 1.0},
      {2.5, 1, 0.40406102727827347},
      {2.5, 2, 0.15739149575796599},
      {2.5, 5, 0.023451189970861847},
      {10, 0, 1.0},
      {10, 1, 0.34089313230205987},
      {10, 2, 0.073388034770740366},
      {10, 5, 0.00053733360275645262},
      {100, 0, 1.0},
      {100, 1, 0.31972415578412336},
      {100, 2, 0.04821217873113368},
      {100, 5, 2.4501734135038004e-6},
  };
  for (const auto& r : table) {
    EXPECT_NEAR(student_t_two_sided_p(r.t, r.df), r.p, 1e-6 * r.p) << "df=" << r.df << " t=" << r.t;
    EXPECT_NEAR(student_t_two_sided_p(-r.t, r.df), r.p, 1e-6 * r.p);
  }
}

TEST(IncompleteBeta, Boundaries) {
  EXPECT_EQ(regularized_incomplete_beta(2.0, 3.0, 0.0), 0.0);
  EXPECT_EQ(regularized_incomplete_beta(2.0, 3.0, 1.0), 1.0);
  EXPECT_NEAR(regularized_incomplete_beta(1.0, 1.0, 0.3), 0.3, 1e-15);
  // I_x(a, b) = 1 - I_{1-x}(b, a)
  EXPECT_NEAR(regularized_incomplete_beta(2.5, 0.5, 0.8), 1.0 - regularized_incomplete_beta(0.5, 2.5, 0.2), 1e-14);
}

TEST(Welch, IdenticalSamples) {
  const std::vector<double> x{1.0, 2.5, 3.0, 7.0};
  const auto r = welch_t_test(x, x);
  EXPECT_EQ(r.t_statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

// References from scipy.stats.ttest_ind(..., equal_var=False).
TEST(Welch, SmallTextbookSample) {
  const std::vector<double> x{1, 2, 3}, y{2, 4, 6};
  const auto r = welch_t_test(x, y);
  EXPECT_NEAR(r.t_statistic, -1.5491933384829668, 1e-12);
  EXPECT_NEAR(r.degrees_of_freedom, 2.9411764705882346, 1e-12);
  EXPECT_NEAR(r.p_value, 0.2208808404940958, 1e-6 * 0.2208808404940958);
}

TEST(Welch, UnequalSizes) {
  const std::vector<double> x{0.3, 1.7, 2.2, 4.1, 0.9, 3.3}, y{2.5, 2.9, 3.1, 5.0, 4.4};
  const auto r = welch_t_test(x, y);
  EXPECT_NEAR(r.t_statistic, -1.9817847333121188, 1e-6 * 1.9817847333121188);
  EXPECT_NEAR(r.degrees_of_freedom, 8.92438847194063, 1e-6 * 8.92438847194063);
  EXPECT_NEAR(r.p_value, 0.07910283017936123, 1e-6 * 0.07910283017936123);
}

TEST(Welch, Antisymmetry) {
  const std::vector<double> x{0.3, 1.7, 2.2, 4.1}, y{2.5, 2.9, 3.1, 5.0, 4.4};
  const auto a = welch_t_test(x, y), b = welch_t_test(y, x);
  EXPECT_EQ(a.t_statistic, -b.t_statistic);
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_EQ(a.degrees_of_freedom, b.degrees_of_freedom);
}

TEST(Welch, ZeroVarianceEdgeCases) {
  const std::vector<double> c1{2, 2, 2}, c2{3, 3, 3};
  auto r = welch_t_test(c1, c1);
  EXPECT_EQ(r.t_statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
  r = welch_t_test(c1, c2);
  EXPECT_TRUE(std::isinf(r.t_statistic));
  EXPECT_LT(r.t_statistic, 0.0);
  EXPECT_EQ(r.p_value, 0.0);
  EXPECT_THROW(welch_t_test(std::vector<double>{1.0}, c1), Error);
}

TEST(Pearson, PerfectAndAffineInvariant) {
  const std::vector<double> x{0.1, 2.3, -1.2, 4.4, 0.7, 3.1};
  std::vector<double> y{1.0, -0.5, 2.2, 0.3, 0.9, -1.7};
  EXPECT_NEAR(pearson_correlation(x, x), 1.0, 1e-15);
  std::vector<double> lin(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) lin[i] = -2.0 * x[i] + 3.0;
  EXPECT_NEAR(pearson_correlation(x, lin), -1.0, 1e-15);
  const double r = pearson_correlation(x, y);
  std::vector<double> xs(x.size()), ys(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xs[i] = 3.7 * x[i] - 11.0;
    ys[i] = 0.02 * y[i] + 5.0;
  }
  EXPECT_NEAR(pearson_correlation(xs, ys), r, 1e-12);
  std::vector<double> flipped(ys);
  for (auto& v : flipped) v = -v;
  EXPECT_NEAR(pearson_correlation(xs, flipped), -r, 1e-12);
  EXPECT_THROW(pearson_correlation(x, std::vector<double>(6, 1.0)), Error);
}

TEST(Correlation, SimulatedLevelsAndIncrements) {
  HestonParams p;
  const auto batch = simulate_paths(p, 1000, 42);
  const auto f = normalize(batch, compute_norm_stats(batch));
  const double level = level_correlation(f);
  EXPECT_GE(level, -0.9);
  EXPECT_LE(level, -0.5);
  const double inc = increment_correlation(batch);
  EXPECT_GE(inc, -0.8);
  EXPECT_LE(inc, -0.6);
}

TEST(Report, ScalarsAndScaling) {
  const auto r = report_from({1.0, 2.0, 4.0, -1.0}, {0.1, 0.2, 0.3, 0.2});
  EXPECT_NEAR(r.mean_pnl, 1.5, 1e-15);
  EXPECT_NEAR(r.pnl_variance, 13.0 / 3.0, 1e-14);
  EXPECT_NEAR(r.mean_cost, 0.2, 1e-15);
  EXPECT_NEAR(r.sharpe, 1.5 / std::sqrt(13.0 / 3.0), 1e-14);
  const auto s = report_from({3.0, 6.0, 12.0, -3.0}, r.cost);
  EXPECT_NEAR(s.pnl_variance, 9.0 * r.pnl_variance, 1e-12);
  EXPECT_NEAR(s.sharpe, r.sharpe, 1e-14);
  const auto flat = report_from({0.5, 0.5}, {0, 0});
  EXPECT_EQ(flat.sharpe, 0.0);
  auto bad = r;
  bad.mean_cost += 1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Evaluate, ZeroHedgeOnFlatPathsGivesZeroMetrics) {
  ModelDocument m;
  m.params = PolicyParams::zeros(ArchConfig{});
  m.norm = {100.0, 1.0, 0.04, 1.0};
  PathBatch flat;
  flat.prices = RowMatrix::Constant(2, 6, 100.0);
  flat.variances = RowMatrix::Constant(2, 6, 0.04);
  const auto r = evaluate(m, flat);
  EXPECT_EQ(r.n_paths, 2u);
  EXPECT_EQ(r.pnl_variance, 0.0);
  EXPECT_EQ(r.mean_cost, 0.0);
  EXPECT_EQ(r.mean_pnl, 0.0);
  EXPECT_EQ(r.sharpe, 0.0);
}

TEST(Compare, SelfComparisonIsNeutral) {
  const auto r = report_from({1.0, 2.0, 4.0, -1.0}, {0.1, 0.2, 0.3, 0.2});
  const auto c = compare(r, r);
  EXPECT_EQ(c.pnl_test.t_statistic, 0.0);
  EXPECT_EQ(c.cost_test.t_statistic, 0.0);
  EXPECT_EQ(c.variance_change_pct, 0.0);
  EXPECT_EQ(c.cost_change_pct, 0.0);
  EXPECT_EQ(c.sharpe_change_pct, 0.0);
}

TEST(Compare, PublishedReductions) {
  const auto adam = report_with(0.003176, 0.003432);
  const auto kfac = report_with(0.002084, 0.000745);
  const auto c = compare(adam, kfac);
  EXPECT_NEAR(c.cost_change_pct, -78.29, 0.005);
  EXPECT_NEAR(c.variance_change_pct, -34.38, 0.005);
}

TEST(Compare, TableShowsTinyPValuesAsBound) {
  std::vector<double> a(200), b(200), ca(200), cb(200);
  for (int i = 0; i < 200; ++i) {
    a[i] = std::sin(i);
    b[i] = std::cos(i);
    ca[i] = 1.0 + 0.01 * std::sin(3 * i);
    cb[i] = 0.2 + 0.01 * std::cos(5 * i);
  }
  auto c = compare(report_from(a, ca, "adam"), report_from(b, cb, "kfac"));
  const auto table = c.render_table();
  EXPECT_NE(table.find("< 1e-6"), std::string::npos);
  EXPECT_NE(table.find("Significant cost reduction"), std::string::npos);
  EXPECT_NE(table.find("adam minus kfac"), std::string::npos);
}

TEST(Compare, RejectsMismatchedPathCounts) {
  EXPECT_THROW(compare(report_from({1, 2, 3}, {0, 0, 0}), report_from({1, 2}, {0, 0})), Error);
}

TEST(Histogram, BinsCoverEverySample) {
  const auto a = report_from({-1.0, 0.0, 0.5, 1.0}, {0, 0, 0, 0});
  const auto b = report_from({-0.5, 0.25, 0.75, 2.0}, {0, 0, 0, 0});
  const auto bins = pnl_histogram(a, b, 6);
  ASSERT_EQ(bins.size(), 6u);
  EXPECT_EQ(bins.front().left, -1.0);
  EXPECT_EQ(bins.back().right, 2.0);
  std::size_t na = 0, nb = 0;
  for (const auto& bin : bins) {
    na += bin.count_a;
    nb += bin.count_b;
  }
  EXPECT_EQ(na, 4u);
  EXPECT_EQ(nb, 4u);
  EXPECT_EQ(bins.back().count_b, 1u);
}

TEST(ReportIo, RoundTripAndCorruption) {
  auto r = report_from({1.0, 2.0, 4.0, -1.0}, {0.1, 0.2, 0.3, 0.2}, "kfac");
  r.provenance.config_hash = "abc";
  r.provenance.subset = "validation";
  std::stringstream ss;
  write_report(r, ss);
  const auto back = read_report(ss);
  EXPECT_EQ(back.pnl, r.pnl);
  EXPECT_EQ(back.pnl_variance, r.pnl_variance);
  EXPECT_EQ(back.provenance.label, "kfac");
  EXPECT_EQ(back.provenance.subset, "validation");

  std::stringstream again;
  write_report(r, again);
  auto doc = nlohmann::json::parse(again.str());
  doc["mean_cost"] = 42.0;
  std::stringstream tampered(doc.dump());
  EXPECT_THROW(read_report(tampered), Error);
  std::stringstream junk("{\"format\":");
  EXPECT_THROW(read_report(junk), Error);
}
