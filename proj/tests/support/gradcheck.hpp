#pragma once

// Central finite-difference checks shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Core>

#include "hedgebench/market_sim.hpp"
#include "hedgebench/objective.hpp"
#include "hedgebench/policy.hpp"
#include "hedgebench/rng.hpp"

namespace hbtest {

using hedgebench::RowMatrix;

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline hedgebench::FeatureTensor random_features(std::size_t n, int steps, std::uint64_t seed) {
  hedgebench::FeatureTensor f;
  f.n_paths = n;
  f.n_steps = steps;
  f.data.resize(n * static_cast<std::size_t>(steps) * 2);
  hedgebench::CounterRng rng(seed, 99);
  for (auto& x : f.data) x = rng.normal();
  return f;
}

inline RowMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  RowMatrix m(r, c);
  hedgebench::CounterRng rng(seed, 7);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Max relative error between backward() and central differences of
/// L(theta) = sum(weights .* hedges(theta)) over every parameter.
inline double policy_gradient_error(const hedgebench::PolicyParams& params, const hedgebench::FeatureTensor& f,
                                    const RowMatrix& weights, double step = 1e-4) {
  auto objective = [&](const hedgebench::PolicyParams& p) {
    return (hedgebench::predict(p, f).array() * weights.array()).sum();
  };
  const auto fwd = hedgebench::forward(params, f);
  const Eigen::VectorXd analytic = hedgebench::backward(params, fwd.cache, weights).d.flatten();
  Eigen::VectorXd theta = params.flatten();
  hedgebench::PolicyParams probe = params;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + step;
    probe.assign(theta);
    const double up = objective(probe);
    theta[i] = keep - step;
    probe.assign(theta);
    const double down = objective(probe);
    theta[i] = keep;
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

/// Max relative error of loss_and_grad().d_hedges against central differences,
/// skipping coordinates within `step` of a trade kink.
inline double loss_gradient_error(const RowMatrix& hedges, const RowMatrix& prices, const hedgebench::OptionSpec& spec,
                                  const hedgebench::CostModel& cost, double lambda, double step = 1e-6) {
  const auto res = hedgebench::loss_and_grad(hedges, prices, spec, cost, lambda);
  const Eigen::Index T = hedges.cols();
  double worst = 0.0;
  RowMatrix probe = hedges;
  for (Eigen::Index b = 0; b < hedges.rows(); ++b) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const double prev = t > 0 ? hedges(b, t - 1) : 0.0;
      const double next = t + 1 < T ? hedges(b, t + 1) : 0.0;
      const double x = hedges(b, t);
      if (std::abs(x - prev) < 10 * step || std::abs(x - next) < 10 * step) continue;
      probe(b, t) = x + step;
      const double up = hedgebench::evaluate_loss(probe, prices, spec, cost, lambda).loss;
      probe(b, t) = x - step;
      const double down = hedgebench::evaluate_loss(probe, prices, spec, cost, lambda).loss;
      probe(b, t) = x;
      worst = std::max(worst, rel_err(res.d_hedges(b, t), (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

}  // namespace hbtest
