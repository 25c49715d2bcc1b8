#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace hedgebench {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Heston coefficients plus the discretization grid. Defaults are the
/// daily-step, one-year parameterization used throughout the experiments.
struct HestonParams {
  double s0 = 100.0;
  double v0 = 0.04;
  double theta = 0.04;
  double kappa = 2.0;
  double xi = 0.5;
  double rho = -0.7;
  double mu = 0.0;
  double dt = 1.0 / 250.0;
  int n_steps = 250;
  /// Lower clamp applied to simulated prices.
  double price_floor = 1e-8;

  void validate() const;
  double horizon() const { return dt * n_steps; }
};

/// Simulated price/variance trajectories, one row per path, column 0 is the
/// initial state.
struct PathBatch {
  RowMatrix prices;
  RowMatrix variances;
  std::uint64_t seed = 0;
  HestonParams params;
  /// Number of times the price floor was hit during generation.
  std::size_t floor_clamps = 0;

  std::size_t n_paths() const { return static_cast<std::size_t>(prices.rows()); }
  int n_steps() const { return static_cast<int>(prices.cols()) - 1; }
  void validate() const;
  PathBatch rows(std::size_t first, std::size_t count) const;
};

/// Trajectory equality (prices and variances bit for bit).
bool same_trajectories(const PathBatch& a, const PathBatch& b);

struct NormStats {
  double price_mean = 0.0;
  double price_std = 1.0;
  double var_mean = 0.0;
  double var_std = 1.0;

  void validate() const;
};

/// Normalized inputs, laid out [path][step][feature] with feature 0 the price
/// and feature 1 the variance.
struct FeatureTensor {
  std::size_t n_paths = 0;
  int n_steps = 0;
  std::vector<double> data;

  static constexpr int kFeatures = 2;

  double& at(std::size_t path, int step, int feature) {
    return data[(path * static_cast<std::size_t>(n_steps) + static_cast<std::size_t>(step)) * kFeatures +
                static_cast<std::size_t>(feature)];
  }
  double at(std::size_t path, int step, int feature) const {
    return data[(path * static_cast<std::size_t>(n_steps) + static_cast<std::size_t>(step)) * kFeatures +
                static_cast<std::size_t>(feature)];
  }
};

struct CorrelatedShocks {
  double w_s;
  double w_v;
};

/// 2x2 Cholesky factor of [[1, rho], [rho, 1]] applied to independent normals.
CorrelatedShocks correlate(double z1, double z2, double rho);

struct HestonState {
  double s;
  /// Variance after truncation at zero.
  double v;
  /// The same update before truncation. Carrying this value into the next
  /// step, rather than `v`, keeps the scheme free of the upward bias that
  /// absorbing at zero introduces.
  double v_raw;
  bool floored = false;
};

/// One full-truncation Euler-Maruyama step. Only max(v, 0) enters the drift
/// and diffusion, so `v` may be a negative raw state from the previous step.
HestonState heston_step(double s, double v, const HestonParams& params, double w_s, double w_v);

/// Path i draws from CounterRng(seed, i), one Box-Muller pair per step, so the
/// result does not depend on `workers`. Steps chain through `v_raw` while
/// `variances` records the truncated `v`. workers == 0 means io::worker_count().
PathBatch simulate_paths(const HestonParams& params, std::size_t n_paths, std::uint64_t seed,
                         unsigned workers = 0);

/// Pooled mean and sample std (n - 1) over steps 0..n_steps-1 of every path.
NormStats compute_norm_stats(const PathBatch& batch);

/// Features at the decision points 0..n_steps-1; the terminal column is not a
/// decision point and is excluded.
FeatureTensor normalize(const PathBatch& batch, const NormStats& stats);

/// First floor(n * train_fraction) rows train, the rest validate.
std::pair<PathBatch, PathBatch> split(const PathBatch& batch, double train_fraction);

/// CSV `path,step,price,variance`, one row per (path, step), LF line endings.
void write_paths(const PathBatch& batch, std::ostream& out);
/// Parses the CSV written by write_paths. Coefficients other than s0, v0 and
/// n_steps are not stored in the file; they are taken from `params`.
PathBatch read_paths(std::istream& in, const HestonParams& params = {});

}  // namespace hedgebench
