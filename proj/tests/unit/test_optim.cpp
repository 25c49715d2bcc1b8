#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "hedgebench/error.hpp"
#include "hedgebench/optim.hpp"
#include "hedgebench/rng.hpp"

using namespace hedgebench;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_spd(int n, std::uint64_t seed) {
  CounterRng rng(seed, 1);
  MatrixXd m(n, n);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m * m.transpose() + 0.5 * MatrixXd::Identity(n, n);
}

MatrixXd random_mat(int r, int c, std::uint64_t seed) {
  CounterRng rng(seed, 2);
  MatrixXd m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

KfacState state_with(const MatrixXd& a, const MatrixXd& g, double damping) {
  KfacState s = KfacState::create(a.rows(), g.rows(), KfacHyper{});
  s.a = a;
  s.g = g;
  s.damping = damping;
  return s;
}

}  // namespace

TEST(Adam, DefaultsMatchExperimentSetup) {
  AdamHyper h;
  EXPECT_EQ(h.lr, 1e-3);
  EXPECT_EQ(h.weight_decay, 1e-4);
  EXPECT_EQ(h.beta1, 0.9);
  EXPECT_EQ(h.beta2, 0.999);
  EXPECT_EQ(h.epsilon, 1e-8);
}

TEST(Adam, ZeroGradientWithoutDecayLeavesParameters) {
  AdamHyper h;
  h.weight_decay = 0.0;
  auto s = AdamState::for_size(3, h);
  VectorXd p(3);
  p << 1, -2, 3;
  const VectorXd before = p;
  adam_step(s, p, VectorXd::Zero(3));
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamHyper h;
  h.weight_decay = 0.0;
  auto s = AdamState::for_size(1, h);
  VectorXd p = VectorXd::Constant(1, 0.5);
  adam_step(s, p, VectorXd::Constant(1, 1.0));
  EXPECT_NEAR(0.5 - p[0], 1e-3, 1e-6);
}

TEST(Adam, MatchesScalarReferenceOverScriptedSequence) {
  AdamHyper h;
  h.lr = 0.01;
  auto s = AdamState::for_size(1, h);
  VectorXd p = VectorXd::Constant(1, 0.7);
  const double script[10] = {0.3, -1.2, 0.05, 2.0, -0.4, 0.0, 0.9, -0.9, 1e-3, 0.6};
  double theta = 0.7, m = 0.0, v = 0.0;
  for (int k = 1; k <= 10; ++k) {
    adam_step(s, p, VectorXd::Constant(1, script[k - 1]));
    const double g = script[k - 1] + 1e-4 * theta;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, k));
    const double vh = v / (1.0 - std::pow(0.999, k));
    theta -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p[0], theta, 1e-12) << "step " << k;
  }
}

TEST(Adam, RejectsNonFiniteAndMismatchedGradients) {
  auto s = AdamState::for_size(2, AdamHyper{});
  VectorXd p = VectorXd::Zero(2);
  VectorXd g(2);
  g << 1.0, std::nan("");
  EXPECT_THROW(adam_step(s, p, g), Error);
  EXPECT_THROW(adam_step(s, p, VectorXd::Zero(3)), Error);
}

TEST(KfacFactors, SingleSampleOuterProduct) {
  auto s = KfacState::create(5, 1, KfacHyper{});
  MatrixXd a = MatrixXd::Zero(1, 5);
  a(0, 0) = 1.0;
  a(0, 4) = 1.0;
  kfac_update_factors(s, a, MatrixXd::Constant(1, 1, 2.0));
  MatrixXd expect = MatrixXd::Zero(5, 5);
  expect(0, 0) = expect(0, 4) = expect(4, 0) = expect(4, 4) = 1.0;
  EXPECT_EQ(s.a, expect);
  EXPECT_EQ(s.g(0, 0), 4.0);
}

TEST(KfacFactors, ZeroActivationsDecayTowardZero) {
  auto s = KfacState::create(3, 1, KfacHyper{});
  const MatrixXd x = random_mat(4, 3, 1);
  kfac_update_factors(s, x, MatrixXd::Ones(4, 1));
  const MatrixXd first = s.a;
  kfac_update_factors(s, MatrixXd::Zero(4, 3), MatrixXd::Ones(4, 1));
  EXPECT_LT((s.a - 0.95 * first).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(KfacFactors, GeometricConvergenceToRepeatedBatch) {
  auto s = KfacState::create(3, 2, KfacHyper{});
  const MatrixXd x1 = random_mat(5, 3, 3), x2 = random_mat(5, 3, 4);
  const MatrixXd g = random_mat(5, 2, 5);
  const MatrixXd a1 = x1.transpose() * x1 / 5.0, a2 = x2.transpose() * x2 / 5.0;
  kfac_update_factors(s, x1, g);
  for (int k = 1; k <= 20; ++k) {
    kfac_update_factors(s, x2, g);
    const MatrixXd expect = a2 + std::pow(0.95, k) * (a1 - a2);
    ASSERT_LT((s.a - expect).cwiseAbs().maxCoeff(), 1e-12) << "update " << k;
  }
  EXPECT_LT((s.g - g.transpose() * g / 5.0).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s.a);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
  EXPECT_EQ(s.a, s.a.transpose());
}

TEST(KfacFactors, ShapeMismatch) {
  auto s = KfacState::create(3, 1, KfacHyper{});
  EXPECT_THROW(kfac_update_factors(s, MatrixXd::Zero(4, 2), MatrixXd::Zero(4, 1)), Error);
  EXPECT_THROW(kfac_update_factors(s, MatrixXd::Zero(4, 3), MatrixXd::Zero(3, 1)), Error);
}

TEST(KfacPrecondition, IdentityAndDiagonalScaling) {
  const MatrixXd grad = random_mat(1, 4, 9);
  EXPECT_LT((kfac_precondition(state_with(MatrixXd::Identity(4, 4), MatrixXd::Identity(1, 1), 0.0), grad) - grad)
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
  const auto s = state_with(2.0 * MatrixXd::Identity(4, 4), MatrixXd::Constant(1, 1, 4.0), 0.0);
  EXPECT_LT((kfac_precondition(s, grad) - grad / 8.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(KfacPrecondition, MatchesDenseKroneckerInverse) {
  for (auto [na, ng, seed] : {std::tuple{3, 1, 1}, std::tuple{4, 2, 2}, std::tuple{3, 1, 3}, std::tuple{4, 2, 4}}) {
    const MatrixXd a = random_spd(na, seed), g = random_spd(ng, seed + 100);
    const MatrixXd grad = random_mat(ng, na, seed + 200);
    const MatrixXd fast = kfac_precondition(state_with(a, g, 0.0), grad);
    // vec() is column-major: vec(G^-1 X A^-1) = (A (x) G)^-1 vec(X) for symmetric A.
    const MatrixXd dense = Eigen::kroneckerProduct(a, g);
    const VectorXd vec_grad = Eigen::Map<const VectorXd>(grad.data(), grad.size());
    const VectorXd slow = dense.lu().solve(vec_grad);
    const VectorXd vec_fast = Eigen::Map<const VectorXd>(fast.data(), fast.size());
    EXPECT_LT((vec_fast - slow).cwiseAbs().maxCoeff(), 1e-10) << na << "x" << ng;
  }
}

TEST(KfacPrecondition, DescentDirection) {
  for (int seed = 1; seed <= 20; ++seed) {
    const auto s = state_with(random_spd(5, seed), random_spd(1, seed + 50), 1e-3);
    const MatrixXd grad = random_mat(1, 5, seed + 99);
    EXPECT_GT((kfac_precondition(s, grad).array() * grad.array()).sum(), 0.0);
  }
}

TEST(KfacPrecondition, HeavyDampingApproachesScaledGradient) {
  const double lambda = 1e12;
  const auto s = state_with(random_spd(4, 1), random_spd(1, 2), lambda);
  const MatrixXd grad = random_mat(1, 4, 3);
  EXPECT_LT((kfac_precondition(s, grad) * lambda - grad).cwiseAbs().maxCoeff(), 1e-4 * grad.cwiseAbs().maxCoeff());
}

TEST(KfacPrecondition, IndefiniteFactorIsNumericError) {
  MatrixXd a = MatrixXd::Identity(3, 3);
  a(1, 1) = -1.0;
  try {
    kfac_precondition(state_with(a, MatrixXd::Identity(1, 1), 0.0), MatrixXd::Ones(1, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
  }
}

TEST(Damping, LevenbergMarquardtRule) {
  auto s = KfacState::create(2, 1, KfacHyper{});
  adjust_damping(s, 0.5);
  EXPECT_EQ(s.damping, 1e-2);
  adjust_damping(s, 0.1);
  EXPECT_NEAR(s.damping, 1.5e-2, 1e-17);
  s.damping = 1e-2;
  double expect = 1e-2;
  for (int i = 0; i < 60; ++i) {
    adjust_damping(s, 0.9);
    expect = std::max(expect / 1.5, kMinDamping);
    ASSERT_NEAR(s.damping, expect, 1e-20);
  }
  EXPECT_EQ(s.damping, kMinDamping);
  for (int i = 0; i < 200; ++i) adjust_damping(s, -3.0);
  EXPECT_EQ(s.damping, kMaxDamping);
  adjust_damping(s, std::nan(""));
  EXPECT_EQ(s.damping, kMaxDamping);
}

TEST(Damping, PredictedChangeAndRatio) {
  auto s = state_with(2.0 * MatrixXd::Identity(2, 2), MatrixXd::Constant(1, 1, 3.0), 0.5);
  MatrixXd grad(1, 2), delta(1, 2);
  grad << 1.0, -2.0;
  delta << -0.5, 0.25;
  // linear -1, curvature 6 * 0.3125 = 1.875, damping 0.5 * 0.3125
  EXPECT_NEAR(kfac_predicted_change(s, grad, delta), -1.0 + 0.5 * (1.875 + 0.15625), 1e-15);
  kfac_record_outcome(s, -2.0, -1.0);
  EXPECT_EQ(*s.pending_ratio, 0.5);
  kfac_record_outcome(s, 0.1, -1.0);
  EXPECT_EQ(*s.pending_ratio, 0.0);
}

namespace {

PolicyGrads grads_for(const PolicyParams& p, const MatrixXd& out_grad, double lstm_grad) {
  PolicyGrads g;
  g.d = PolicyParams::zeros(p.arch);
  VectorXd flat = VectorXd::Constant(p.size(), lstm_grad);
  flat.tail(out_grad.size()) = Eigen::Map<const VectorXd>(out_grad.data(), out_grad.size());
  g.d.assign(flat);
  return g;
}

}  // namespace

TEST(Hybrid, ZeroKfacRateFreezesOutputLayer) {
  ArchConfig arch;
  arch.hidden_dim = 3;
  auto p = init_policy(arch, 1);
  const MatrixXd before_out = p.output_layer();
  const VectorXd before_lstm = p.flatten().head(p.lstm_size());
  auto adam = AdamState::for_size(p.lstm_size(), AdamHyper{});
  auto kfac = KfacState::create(4, 1, KfacHyper{});
  OutputLayerStats st{random_mat(6, 4, 1), random_mat(6, 1, 2)};
  st.activations.col(3).setOnes();
  hybrid_step(adam, kfac, 0.0, p, grads_for(p, random_mat(1, 4, 3), 0.5), st);
  EXPECT_EQ(p.output_layer(), before_out);
  EXPECT_GT((p.flatten().head(p.lstm_size()) - before_lstm).cwiseAbs().minCoeff(), 0.0);
  EXPECT_EQ(adam.step, 1);
  EXPECT_EQ(kfac.step, 1);
}

TEST(Hybrid, NewtonStepSolvesLeastSquares) {
  // Output layer alone on fixed activations with squared loss
  // L(w) = 1/(2n) sum (w . a_i - y_i)^2: unit output curvature means G = 1 and
  // A is the exact Hessian, so one undamped step with rate 1 is Newton's.
  ArchConfig arch;
  arch.hidden_dim = 4;
  auto p = init_policy(arch, 3);
  const int n = 40;
  MatrixXd acts = random_mat(n, 5, 11);
  acts.col(4).setOnes();
  const VectorXd y = random_mat(n, 1, 12).col(0);
  const VectorXd w0 = p.output_layer().transpose();
  const VectorXd resid = acts * w0 - y;
  const MatrixXd grad = (acts.transpose() * resid / n).transpose();

  auto adam = AdamState::for_size(p.lstm_size(), AdamHyper{});
  KfacHyper hyper;
  hyper.damping = 0.0;
  auto kfac = KfacState::create(5, 1, hyper);
  hybrid_step(adam, kfac, 1.0, p, grads_for(p, grad, 0.0), OutputLayerStats{acts, MatrixXd::Ones(n, 1)});
  const VectorXd optimum = acts.colPivHouseholderQr().solve(y);
  EXPECT_LT((p.output_layer().transpose() - optimum).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Hybrid, DampingUsesPreviousRatio) {
  ArchConfig arch;
  arch.hidden_dim = 2;
  auto p = init_policy(arch, 3);
  auto adam = AdamState::for_size(p.lstm_size(), AdamHyper{});
  auto kfac = KfacState::create(3, 1, KfacHyper{});
  OutputLayerStats st{random_mat(4, 3, 1), MatrixXd::Ones(4, 1)};
  kfac.pending_ratio = 0.1;
  hybrid_step(adam, kfac, 0.1, p, grads_for(p, random_mat(1, 3, 2), 0.1), st);
  EXPECT_NEAR(kfac.damping, 1.5e-2, 1e-17);
  EXPECT_FALSE(kfac.pending_ratio.has_value());
}
