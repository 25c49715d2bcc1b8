#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hedgebench/market_sim.hpp"
#include "hedgebench/objective.hpp"
#include "hedgebench/optim.hpp"
#include "hedgebench/policy.hpp"

namespace hedgebench {

enum class OptimizerKind { Adam, Kfac };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& s);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamHyper adam;
  KfacHyper kfac;
  double lambda = 1.0;
  std::uint64_t seed = 7;
  /// Validation-loss level for convergence_epoch(); unset means "derive from
  /// the baseline run".
  std::optional<double> convergence_threshold;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_mean_pnl = 0.0;
  double val_mean_cost = 0.0;
  double seconds = 0.0;
};

/// Aligned features (n x T x 2) and prices (n x (T+1)).
struct Dataset {
  const FeatureTensor* features = nullptr;
  const RowMatrix* prices = nullptr;

  std::size_t size() const { return features ? features->n_paths : 0; }
  void validate(const char* name) const;
};

struct TrainResult {
  PolicyParams params;
  std::vector<EpochRecord> curve;
  std::size_t dropped_per_epoch = 0;
  double total_seconds = 0.0;
};

using LogFn = std::function<void(const std::string&)>;

/// Mini-batch training with epoch-keyed shuffling. Initial parameters come from
/// init_policy(arch, config.seed), so two runs with the same seed start from
/// the same weights and see the same batch order regardless of optimizer.
TrainResult train(const TrainConfig& config, const ArchConfig& arch, const Dataset& train_set, const Dataset& validation,
                  const OptionSpec& spec, const CostModel& cost, const LogFn& log = {});

/// Shuffled path order for one epoch (Fisher-Yates on CounterRng(seed, SHUF + epoch)).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// First (1-based) epoch whose validation loss is <= threshold.
std::optional<int> convergence_epoch(std::span<const EpochRecord> curve, double threshold);

void write_curve_csv(std::span<const EpochRecord> curve, std::ostream& out);
std::vector<EpochRecord> read_curve_csv(std::istream& in);

/// Everything needed to reproduce hedges and P&L from a trained network.
struct ModelDocument {
  PolicyParams params;
  NormStats norm;
  std::uint64_t train_seed = 0;
  std::string optimizer = "adam";
  OptionSpec option;
  CostModel cost;
  double lambda = 1.0;
  std::size_t n_train_paths = 0;
  std::uint64_t sim_seed = 0;
  std::string config_hash;
};

inline constexpr int kModelFormatVersion = 1;

void save_model(const ModelDocument& model, std::ostream& out);
ModelDocument load_model(std::istream& in);
void save_model(const ModelDocument& model, const std::filesystem::path& path);
ModelDocument load_model(const std::filesystem::path& path);

}  // namespace hedgebench
