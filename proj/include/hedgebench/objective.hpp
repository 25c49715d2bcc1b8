#pragma once

#include <span>
#include <string>
#include <vector>

#include "hedgebench/market_sim.hpp"

namespace hedgebench {

enum class OptionSide { Short, Long };
enum class OptionKind { EuropeanCall };

/// The hedged claim: a European call, written (short) or held (long).
struct OptionSpec {
  double strike = 100.0;
  OptionSide side = OptionSide::Short;
  OptionKind kind = OptionKind::EuropeanCall;

  void validate() const;
  /// +1 for a short position (payoff is owed), -1 for a long one.
  double side_sign() const { return side == OptionSide::Short ? 1.0 : -1.0; }
};

std::string to_string(OptionSide side);
OptionSide parse_option_side(const std::string& s);

/// Proportional cost per unit of traded notional.
struct CostModel {
  double rate = 0.001;

  void validate() const;
};

struct PnLRecord {
  double pnl = 0.0;
  double cost = 0.0;
  double trading_gain = 0.0;
};

double option_payoff(double s_T, const OptionSpec& spec);

/// rate * (S_0 |d_0| + sum_{t=1}^{T-1} S_t |d_t - d_{t-1}| + S_T |d_{T-1}|):
/// entry, rebalancing and terminal unwind.
double transaction_costs(std::span<const double> hedges, std::span<const double> prices, const CostModel& model);

/// pnl = trading_gain - cost - side * payoff(S_T).
PnLRecord compute_pnl(std::span<const double> prices, std::span<const double> hedges, const OptionSpec& spec,
                      const CostModel& model);

/// Per-path records for a hedge matrix (B x T) against prices (B x (T+1)).
std::vector<PnLRecord> compute_pnl_batch(const RowMatrix& prices, const RowMatrix& hedges, const OptionSpec& spec,
                                         const CostModel& model);

struct LossResult {
  double loss = 0.0;
  double pnl_variance = 0.0;
  double mean_cost = 0.0;
  double mean_pnl = 0.0;
  RowMatrix d_hedges;  // B x T
  std::vector<PnLRecord> records;
};

/// loss = sample variance of pnl + lambda * mean cost, together with its exact
/// gradient with respect to every hedge ratio. |x| uses the subgradient
/// sign(0) = 0 at no-trade points.
LossResult loss_and_grad(const RowMatrix& hedges, const RowMatrix& prices, const OptionSpec& spec,
                         const CostModel& model, double lambda);

/// Loss only, skipping the gradient.
LossResult evaluate_loss(const RowMatrix& hedges, const RowMatrix& prices, const OptionSpec& spec,
                         const CostModel& model, double lambda);

}  // namespace hedgebench
