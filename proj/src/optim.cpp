#include "hedgebench/optim.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "hedgebench/error.hpp"

namespace hedgebench {

using Eigen::MatrixXd;

AdamState AdamState::for_size(Eigen::Index n, const AdamHyper& hyper) {
  AdamState s;
  s.hyper = hyper;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  return s;
}

void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    fail(ErrorKind::Shape, "Adam state, parameters and gradients differ in length");
  }
  if (!grads.allFinite()) fail(ErrorKind::Numeric, "non-finite gradient passed to Adam");
  const auto& hp = state.hyper;
  ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grads[i] + hp.weight_decay * params[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.epsilon);
  }
}

KfacState KfacState::create(Eigen::Index activation_dim, Eigen::Index output_dim, const KfacHyper& hyper) {
  if (!(hyper.damping >= 0.0) || !(hyper.ema_decay > 0.0 && hyper.ema_decay < 1.0)) {
    fail(ErrorKind::InvalidArgument, "K-FAC needs damping >= 0 and ema_decay in (0, 1)");
  }
  KfacState s;
  s.a = MatrixXd::Zero(activation_dim, activation_dim);
  s.g = MatrixXd::Zero(output_dim, output_dim);
  s.damping = hyper.damping;
  s.ema_decay = hyper.ema_decay;
  return s;
}

void kfac_update_factors(KfacState& state, const Eigen::Ref<const MatrixXd>& activations,
                         const Eigen::Ref<const MatrixXd>& out_grads) {
  const auto n = activations.rows();
  if (n < 1 || out_grads.rows() != n || activations.cols() != state.a.rows() || out_grads.cols() != state.g.rows()) {
    fail(ErrorKind::Shape, "K-FAC statistics do not match the factor shapes");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  MatrixXd a_batch = MatrixXd::Zero(state.a.rows(), state.a.cols());
  a_batch.selfadjointView<Eigen::Lower>().rankUpdate(activations.transpose(), inv_n);
  a_batch = a_batch.selfadjointView<Eigen::Lower>();
  MatrixXd g_batch = MatrixXd::Zero(state.g.rows(), state.g.cols());
  g_batch.selfadjointView<Eigen::Lower>().rankUpdate(out_grads.transpose(), inv_n);
  g_batch = g_batch.selfadjointView<Eigen::Lower>();
  if (state.step == 0) {
    state.a = a_batch;
    state.g = g_batch;
  } else {
    const double d = state.ema_decay;
    state.a = d * state.a + (1.0 - d) * a_batch;
    state.g = d * state.g + (1.0 - d) * g_batch;
  }
  ++state.step;
}

namespace {

MatrixXd damped_inverse(const MatrixXd& m, double shift, const char* name) {
  if (!m.allFinite()) fail(ErrorKind::Numeric, std::string("non-finite K-FAC factor ") + name);
  MatrixXd damped = m;
  damped.diagonal().array() += shift;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(damped);
  if (eig.info() != Eigen::Success) fail(ErrorKind::Numeric, std::string("eigendecomposition failed for ") + name);
  const auto& values = eig.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  if (values.minCoeff() < -1e-10 * scale) {
    fail(ErrorKind::Numeric, std::string("K-FAC factor ") + name + " is not positive semidefinite after damping");
  }
  const Eigen::VectorXd inv = values.cwiseMax(1e-12).cwiseInverse();
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

MatrixXd kfac_precondition(const KfacState& state, const Eigen::Ref<const MatrixXd>& grad) {
  if (grad.rows() != state.g.rows() || grad.cols() != state.a.rows()) {
    fail(ErrorKind::Shape, "gradient shape does not match the K-FAC factors");
  }
  const double shift = std::sqrt(std::max(state.damping, 0.0));
  return damped_inverse(state.g, shift, "G") * grad * damped_inverse(state.a, shift, "A");
}

void adjust_damping(KfacState& state, double reduction_ratio) {
  if (!(reduction_ratio >= 0.25)) {
    state.damping *= 1.5;
  } else if (reduction_ratio > 0.75) {
    state.damping /= 1.5;
  }
  state.damping = std::clamp(state.damping, kMinDamping, kMaxDamping);
}

double kfac_predicted_change(const KfacState& state, const Eigen::Ref<const MatrixXd>& grad,
                             const Eigen::Ref<const MatrixXd>& delta) {
  const double linear = (grad.array() * delta.array()).sum();
  const double curvature = (delta.array() * (state.g * delta * state.a).array()).sum();
  return linear + 0.5 * (curvature + state.damping * delta.squaredNorm());
}

void kfac_record_outcome(KfacState& state, double predicted_change, double actual_change) {
  state.pending_ratio = predicted_change < 0.0 ? actual_change / predicted_change : 0.0;
}

HybridStepInfo hybrid_step(AdamState& adam, KfacState& kfac, double kfac_lr, PolicyParams& params,
                           const PolicyGrads& grads, const OutputLayerStats& stats) {
  kfac_update_factors(kfac, stats.activations, stats.out_grads);
  if (kfac.pending_ratio) {
    adjust_damping(kfac, *kfac.pending_ratio);
    kfac.pending_ratio.reset();
  }

  const MatrixXd grad_out = output_layer_grad(grads);
  if (!grad_out.allFinite()) fail(ErrorKind::Numeric, "non-finite output-layer gradient");
  HybridStepInfo info;
  info.delta = -kfac_lr * kfac_precondition(kfac, grad_out);
  info.predicted_change = kfac_predicted_change(kfac, grad_out, info.delta);
  params.set_output_layer(params.output_layer() + info.delta);

  const Eigen::Index n_lstm = params.lstm_size();
  Eigen::VectorXd flat = params.flatten();
  const Eigen::VectorXd flat_grad = grads.d.flatten();
  adam_step(adam, flat.head(n_lstm), flat_grad.head(n_lstm));
  params.assign(flat);
  return info;
}

}  // namespace hedgebench
