#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hedgebench/market_sim.hpp"

namespace hedgebench {

struct ArchConfig {
  int input_dim = FeatureTensor::kFeatures;
  int hidden_dim = 32;
  int n_lstm_layers = 1;
  int output_dim = 1;

  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

/// One LSTM layer. Gate blocks are stacked in the order input, forget, cell,
/// output, so rows [k*h, (k+1)*h) of w_x, w_h and b belong to gate k.
struct LstmLayer {
  Eigen::MatrixXd w_x;  // 4h x in
  Eigen::MatrixXd w_h;  // 4h x h
  Eigen::VectorXd b;    // 4h
};

struct PolicyParams {
  ArchConfig arch;
  std::vector<LstmLayer> layers;
  Eigen::MatrixXd w_out;  // out x h
  Eigen::VectorXd b_out;  // out

  static PolicyParams zeros(const ArchConfig& arch);

  /// Total parameter count and the count of the LSTM prefix.
  Eigen::Index size() const;
  Eigen::Index lstm_size() const;

  /// Flat layout: per layer w_x, w_h (row-major), b; then w_out (row-major),
  /// b_out. The LSTM block occupies the first lstm_size() entries.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::Ref<const Eigen::VectorXd>& flat);

  /// Output layer as [w_out | b_out], shape out x (h + 1).
  Eigen::MatrixXd output_layer() const;
  void set_output_layer(const Eigen::Ref<const Eigen::MatrixXd>& m);

  /// Shapes consistent with arch and every entry finite.
  void validate() const;
};

/// Activations kept by forward() for backward(). Column t*batch + b of each
/// per-step matrix holds sample b at step t. `hidden` and `cell` carry an extra
/// leading block holding the zero initial state.
struct LayerCache {
  Eigen::MatrixXd input;      // in x (B*T)
  Eigen::MatrixXd gates;      // 4h x (B*T), post-activation
  Eigen::MatrixXd cell;       // h x (B*(T+1))
  Eigen::MatrixXd cell_tanh;  // h x (B*T)
  Eigen::MatrixXd hidden;     // h x (B*(T+1))
};

struct ForwardCache {
  int batch = 0;
  int steps = 0;
  std::vector<LayerCache> layers;
  Eigen::MatrixXd out_pre;  // out x (B*T)
  RowMatrix hedges;         // B x T

  /// Top-layer hidden states at steps 0..T-1, h x (B*T).
  auto top_hidden() const { return layers.back().hidden.rightCols(static_cast<Eigen::Index>(batch) * steps); }
};

struct ForwardResult {
  RowMatrix hedges;  // B x T
  ForwardCache cache;
};

struct PolicyGrads {
  PolicyParams d;
  /// g = d_hedge * (1 - hedge^2) per (sample, step), B x T.
  RowMatrix out_signal;
};

/// Output-layer statistics for Kronecker-factored curvature: one row per
/// (sample, step), activations carry a trailing constant 1 for the bias.
/// out_grads are the backprop signals rescaled by the batch size, i.e. the
/// per-path loss gradient with respect to the output pre-activation.
struct OutputLayerStats {
  Eigen::MatrixXd activations;  // n x (h + 1)
  Eigen::MatrixXd out_grads;    // n x out
};

/// Largest hedge magnitude emitted; keeps hedges strictly inside (-1, 1).
inline constexpr double kMaxHedge = 1.0 - 0x1.0p-53;

Eigen::MatrixXd orthogonal_init(int rows, int cols, std::uint64_t seed);

PolicyParams init_policy(const ArchConfig& arch, std::uint64_t seed);

/// Runs the network over the selected feature rows (all rows if `rows` is
/// empty), zero initial state per path.
ForwardResult forward(const PolicyParams& params, const FeatureTensor& features,
                      std::span<const std::size_t> rows = {});

/// Hedges only; does not keep a cache, so memory stays O(batch * hidden).
RowMatrix predict(const PolicyParams& params, const FeatureTensor& features,
                  std::span<const std::size_t> rows = {});

/// Gradient of sum(d_hedges .* hedges) with respect to every parameter.
PolicyGrads backward(const PolicyParams& params, const ForwardCache& cache, const RowMatrix& d_hedges);

/// Hedges produced by a replacement output layer on cached hidden states.
RowMatrix output_hedges(const ForwardCache& cache, const Eigen::Ref<const Eigen::MatrixXd>& output_layer);

OutputLayerStats output_layer_stats(const ForwardCache& cache, const PolicyGrads& grads);

/// Output layer gradient as [dw_out | db_out].
Eigen::MatrixXd output_layer_grad(const PolicyGrads& grads);

}  // namespace hedgebench
