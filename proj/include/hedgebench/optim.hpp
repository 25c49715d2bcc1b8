#pragma once

#include <optional>

#include <Eigen/Core>

#include "hedgebench/policy.hpp"

namespace hedgebench {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamState {
  AdamHyper hyper;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  static AdamState for_size(Eigen::Index n, const AdamHyper& hyper);
};

/// Bias-corrected Adam with L2 decay folded into the gradient (g + wd * theta).
void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads);

struct KfacHyper {
  double lr = 0.1;
  double damping = 1e-2;
  double ema_decay = 0.95;
};

inline constexpr double kMinDamping = 1e-8;
inline constexpr double kMaxDamping = 1e2;

/// Kronecker factors of the output layer curvature. `a` is the second moment
/// of [h; 1], `g` the second moment of the output backprop signal.
struct KfacState {
  Eigen::MatrixXd a;
  Eigen::MatrixXd g;
  double damping = 1e-2;
  double ema_decay = 0.95;
  long step = 0;
  /// Reduction ratio of the last K-FAC update, consumed by the next step.
  std::optional<double> pending_ratio;

  static KfacState create(Eigen::Index activation_dim, Eigen::Index output_dim, const KfacHyper& hyper);
};

/// A <- d A + (1 - d) a'a / n and G <- d G + (1 - d) g'g / n; the first call
/// stores the plain averages.
void kfac_update_factors(KfacState& state, const Eigen::Ref<const Eigen::MatrixXd>& activations,
                         const Eigen::Ref<const Eigen::MatrixXd>& out_grads);

/// (G + sqrt(l) I)^-1 grad (A + sqrt(l) I)^-1 for grad of shape out x (h+1).
Eigen::MatrixXd kfac_precondition(const KfacState& state, const Eigen::Ref<const Eigen::MatrixXd>& grad);

/// Levenberg-Marquardt rule: ratio < 0.25 grows damping by 1.5, ratio > 0.75
/// shrinks it by 1.5; the result is clamped to [kMinDamping, kMaxDamping].
void adjust_damping(KfacState& state, double reduction_ratio);

/// Quadratic model change grad.delta + 0.5 delta'(A (x) G + l I) delta.
double kfac_predicted_change(const KfacState& state, const Eigen::Ref<const Eigen::MatrixXd>& grad,
                             const Eigen::Ref<const Eigen::MatrixXd>& delta);

/// Stores actual / predicted change as the pending reduction ratio. A model
/// that predicts no decrease yields ratio 0.
void kfac_record_outcome(KfacState& state, double predicted_change, double actual_change);

struct HybridStepInfo {
  Eigen::MatrixXd delta;  // applied output-layer update
  double predicted_change = 0.0;
};

/// Factor update, damping adjustment from the previous ratio, K-FAC step on
/// the output layer, Adam step on the LSTM layers. `adam` covers the LSTM
/// prefix of the flat parameter vector only.
HybridStepInfo hybrid_step(AdamState& adam, KfacState& kfac, double kfac_lr, PolicyParams& params,
                           const PolicyGrads& grads, const OutputLayerStats& stats);

}  // namespace hedgebench
