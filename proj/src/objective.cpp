#include "hedgebench/objective.hpp"

#include <algorithm>
#include <cmath>

#include "hedgebench/error.hpp"
#include "hedgebench/io_util.hpp"

namespace hedgebench {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Position change executed at time t (t = 0..T): entry, rebalances, unwind.
double trade_at(std::span<const double> hedges, std::size_t t) {
  const std::size_t T = hedges.size();
  if (t == 0) return hedges[0];
  if (t == T) return -hedges[T - 1];
  return hedges[t] - hedges[t - 1];
}

void check_lengths(std::size_t n_hedges, std::size_t n_prices) {
  if (n_hedges < 1 || n_prices != n_hedges + 1) {
    fail(ErrorKind::Shape, "expected prices of length steps+1 for " + std::to_string(n_hedges) + " hedge ratios");
  }
}

}  // namespace

void OptionSpec::validate() const {
  if (!(std::isfinite(strike) && strike > 0.0)) fail(ErrorKind::InvalidArgument, "option strike must be > 0");
}

std::string to_string(OptionSide side) { return side == OptionSide::Short ? "short" : "long"; }

OptionSide parse_option_side(const std::string& s) {
  if (s == "short") return OptionSide::Short;
  if (s == "long") return OptionSide::Long;
  fail(ErrorKind::Parse, "option side must be 'short' or 'long', got '" + s + "'");
}

void CostModel::validate() const {
  if (!(std::isfinite(rate) && rate >= 0.0)) fail(ErrorKind::InvalidArgument, "cost rate must be >= 0");
}

double option_payoff(double s_T, const OptionSpec& spec) {
  switch (spec.kind) {
    case OptionKind::EuropeanCall:
      return std::max(s_T - spec.strike, 0.0);
  }
  return 0.0;
}

double transaction_costs(std::span<const double> hedges, std::span<const double> prices, const CostModel& model) {
  check_lengths(hedges.size(), prices.size());
  double traded = 0.0;
  for (std::size_t t = 0; t <= hedges.size(); ++t) traded += prices[t] * std::abs(trade_at(hedges, t));
  return model.rate * traded;
}

PnLRecord compute_pnl(std::span<const double> prices, std::span<const double> hedges, const OptionSpec& spec,
                      const CostModel& model) {
  check_lengths(hedges.size(), prices.size());
  PnLRecord r;
  for (std::size_t t = 0; t < hedges.size(); ++t) r.trading_gain += hedges[t] * (prices[t + 1] - prices[t]);
  r.cost = transaction_costs(hedges, prices, model);
  r.pnl = r.trading_gain - r.cost - spec.side_sign() * option_payoff(prices.back(), spec);
  return r;
}

std::vector<PnLRecord> compute_pnl_batch(const RowMatrix& prices, const RowMatrix& hedges, const OptionSpec& spec,
                                         const CostModel& model) {
  if (prices.rows() != hedges.rows()) fail(ErrorKind::Shape, "prices and hedges disagree on the number of paths");
  std::vector<PnLRecord> out(static_cast<std::size_t>(hedges.rows()));
  for (Eigen::Index i = 0; i < hedges.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        compute_pnl({prices.row(i).data(), static_cast<std::size_t>(prices.cols())},
                    {hedges.row(i).data(), static_cast<std::size_t>(hedges.cols())}, spec, model);
  }
  return out;
}

namespace {

LossResult loss_impl(const RowMatrix& hedges, const RowMatrix& prices, const OptionSpec& spec, const CostModel& model,
                     double lambda, bool with_grad) {
  const Eigen::Index n = hedges.rows();
  if (n < 2) fail(ErrorKind::InvalidArgument, "loss needs at least two paths (sample variance)");
  if (prices.cols() != hedges.cols() + 1) fail(ErrorKind::Shape, "prices must have one more column than hedges");

  LossResult res;
  res.records = compute_pnl_batch(prices, hedges, spec, model);
  const double nn = static_cast<double>(n);
  double sum_pnl = 0.0;
  double sum_cost = 0.0;
  for (const auto& r : res.records) {
    sum_pnl += r.pnl;
    sum_cost += r.cost;
  }
  res.mean_pnl = sum_pnl / nn;
  res.mean_cost = sum_cost / nn;
  double ss = 0.0;
  for (const auto& r : res.records) ss += (r.pnl - res.mean_pnl) * (r.pnl - res.mean_pnl);
  res.pnl_variance = ss / (nn - 1.0);
  res.loss = res.pnl_variance + lambda * res.mean_cost;
  if (!std::isfinite(res.loss)) fail(ErrorKind::Numeric, "non-finite loss");
  if (!with_grad) return res;

  const Eigen::Index T = hedges.cols();
  res.d_hedges.resize(n, T);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::span<const double> h{hedges.row(i).data(), static_cast<std::size_t>(T)};
    const double* s = prices.row(i).data();
    const double d_var = 2.0 * (res.records[static_cast<std::size_t>(i)].pnl - res.mean_pnl) / (nn - 1.0);
    const double d_cost = lambda / nn;
    double sign_here = sgn(trade_at(h, 0));
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto tu = static_cast<std::size_t>(t);
      const double sign_next = sgn(trade_at(h, tu + 1));
      // d cost / d hedge_t = rate * (S_t sgn(u_t) - S_{t+1} sgn(u_{t+1}))
      const double dcost = model.rate * (s[t] * sign_here - s[t + 1] * sign_next);
      const double dpnl = (s[t + 1] - s[t]) - dcost;
      res.d_hedges(i, t) = d_var * dpnl + d_cost * dcost;
      sign_here = sign_next;
    }
  }
  return res;
}

}  // namespace

LossResult loss_and_grad(const RowMatrix& hedges, const RowMatrix& prices, const OptionSpec& spec,
                         const CostModel& model, double lambda) {
  return loss_impl(hedges, prices, spec, model, lambda, true);
}

LossResult evaluate_loss(const RowMatrix& hedges, const RowMatrix& prices, const OptionSpec& spec,
                         const CostModel& model, double lambda) {
  return loss_impl(hedges, prices, spec, model, lambda, false);
}

}  // namespace hedgebench
