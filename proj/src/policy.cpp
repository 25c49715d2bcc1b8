#include "hedgebench/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/QR>

#include "hedgebench/error.hpp"
#include "hedgebench/rng.hpp"

namespace hedgebench {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void ArchConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || n_lstm_layers < 1 || output_dim < 1) {
    fail(ErrorKind::InvalidArgument, "architecture dimensions must all be >= 1");
  }
  if (input_dim != FeatureTensor::kFeatures) {
    fail(ErrorKind::InvalidArgument, "input_dim must be " + std::to_string(FeatureTensor::kFeatures));
  }
  if (output_dim != 1) fail(ErrorKind::InvalidArgument, "output_dim must be 1 (single hedging instrument)");
}

PolicyParams PolicyParams::zeros(const ArchConfig& arch) {
  arch.validate();
  PolicyParams p;
  p.arch = arch;
  const Index h = arch.hidden_dim;
  for (int l = 0; l < arch.n_lstm_layers; ++l) {
    const Index in = l == 0 ? arch.input_dim : h;
    p.layers.push_back({MatrixXd::Zero(4 * h, in), MatrixXd::Zero(4 * h, h), VectorXd::Zero(4 * h)});
  }
  p.w_out = MatrixXd::Zero(arch.output_dim, h);
  p.b_out = VectorXd::Zero(arch.output_dim);
  return p;
}

Index PolicyParams::lstm_size() const {
  Index n = 0;
  for (const auto& l : layers) n += l.w_x.size() + l.w_h.size() + l.b.size();
  return n;
}

Index PolicyParams::size() const { return lstm_size() + w_out.size() + b_out.size(); }

namespace {

template <typename Fn>
void visit_blocks(PolicyParams& p, Fn&& fn) {
  for (auto& l : p.layers) {
    fn(l.w_x);
    fn(l.w_h);
    fn(l.b);
  }
  fn(p.w_out);
  fn(p.b_out);
}

template <typename Fn>
void visit_blocks(const PolicyParams& p, Fn&& fn) {
  for (const auto& l : p.layers) {
    fn(l.w_x);
    fn(l.w_h);
    fn(l.b);
  }
  fn(p.w_out);
  fn(p.b_out);
}

}  // namespace

VectorXd PolicyParams::flatten() const {
  VectorXd flat(size());
  Index pos = 0;
  visit_blocks(*this, [&](const auto& block) {
    for (Index r = 0; r < block.rows(); ++r) {
      for (Index c = 0; c < block.cols(); ++c) flat[pos++] = block(r, c);
    }
  });
  return flat;
}

void PolicyParams::assign(const Eigen::Ref<const VectorXd>& flat) {
  if (flat.size() != size()) fail(ErrorKind::Shape, "flat parameter vector has the wrong length");
  Index pos = 0;
  visit_blocks(*this, [&](auto& block) {
    for (Index r = 0; r < block.rows(); ++r) {
      for (Index c = 0; c < block.cols(); ++c) block(r, c) = flat[pos++];
    }
  });
}

MatrixXd PolicyParams::output_layer() const {
  MatrixXd m(w_out.rows(), w_out.cols() + 1);
  m.leftCols(w_out.cols()) = w_out;
  m.col(w_out.cols()) = b_out;
  return m;
}

void PolicyParams::set_output_layer(const Eigen::Ref<const MatrixXd>& m) {
  if (m.rows() != w_out.rows() || m.cols() != w_out.cols() + 1) {
    fail(ErrorKind::Shape, "output layer matrix has the wrong shape");
  }
  w_out = m.leftCols(w_out.cols());
  b_out = m.col(w_out.cols());
}

void PolicyParams::validate() const {
  arch.validate();
  const Index h = arch.hidden_dim;
  if (static_cast<int>(layers.size()) != arch.n_lstm_layers) {
    fail(ErrorKind::Validation, "layer count does not match the architecture");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Index in = l == 0 ? arch.input_dim : h;
    const auto& L = layers[l];
    if (L.w_x.rows() != 4 * h || L.w_x.cols() != in || L.w_h.rows() != 4 * h || L.w_h.cols() != h ||
        L.b.size() != 4 * h) {
      fail(ErrorKind::Validation, "LSTM layer " + std::to_string(l) + " tensors do not match the architecture");
    }
  }
  if (w_out.rows() != arch.output_dim || w_out.cols() != h || b_out.size() != arch.output_dim) {
    fail(ErrorKind::Validation, "output layer tensors do not match the architecture");
  }
  bool finite = true;
  visit_blocks(*this, [&](const auto& block) { finite = finite && block.allFinite(); });
  if (!finite) fail(ErrorKind::Validation, "parameters contain non-finite entries");
}

MatrixXd orthogonal_init(int rows, int cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) fail(ErrorKind::InvalidArgument, "orthogonal_init needs rows, cols >= 1");
  const bool tall = rows >= cols;
  const Index m = tall ? rows : cols;
  const Index n = tall ? cols : rows;
  CounterRng rng(seed, streams::kInitBase);
  MatrixXd a(m, n);
  for (Index r = 0; r < m; ++r) {
    for (Index c = 0; c < n; ++c) a(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<MatrixXd> qr(a);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(m, n);
  const MatrixXd& r = qr.matrixQR();
  for (Index k = 0; k < n; ++k) {
    if (r(k, k) < 0.0) q.col(k) *= -1.0;
  }
  if (tall) return q;
  return q.transpose();
}

PolicyParams init_policy(const ArchConfig& arch, std::uint64_t seed) {
  PolicyParams p = PolicyParams::zeros(arch);
  const Index h = arch.hidden_dim;
  auto xavier = [](MatrixXd& w, double fan_in, double fan_out, CounterRng& rng) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (Index r = 0; r < w.rows(); ++r) {
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = (2.0 * rng.uniform() - 1.0) * a;
    }
  };
  for (int l = 0; l < arch.n_lstm_layers; ++l) {
    auto& L = p.layers[static_cast<std::size_t>(l)];
    CounterRng rng(seed, streams::kInitBase + 16 * static_cast<std::uint64_t>(l) + 1);
    xavier(L.w_x, static_cast<double>(L.w_x.cols()), static_cast<double>(L.w_x.rows()), rng);
    for (int gate = 0; gate < 4; ++gate) {
      const auto gate_seed = splitmix64(seed ^ splitmix64(streams::kInitBase + 16 * static_cast<std::uint64_t>(l) + 2 +
                                                          static_cast<std::uint64_t>(gate)));
      L.w_h.middleRows(gate * h, h) = orthogonal_init(static_cast<int>(h), static_cast<int>(h), gate_seed);
    }
    L.b.segment(h, h).setOnes();
  }
  CounterRng rng(seed, streams::kInitBase + 15);
  xavier(p.w_out, static_cast<double>(h), static_cast<double>(arch.output_dim), rng);
  return p;
}

namespace {

template <typename Derived>
void sigmoid_inplace(Eigen::ArrayBase<Derived>&& x) {
  x = 1.0 / (1.0 + (-x).exp());
}

// tanh through the vectorized exponential; saturates cleanly at +-1.
template <typename Derived>
void tanh_inplace(Eigen::ArrayBase<Derived>&& x) {
  x = 2.0 / (1.0 + (-2.0 * x).exp()) - 1.0;
}

std::vector<std::size_t> resolve_rows(const FeatureTensor& features, std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  if (rows.empty()) {
    out.resize(features.n_paths);
    std::iota(out.begin(), out.end(), std::size_t{0});
  } else {
    out.assign(rows.begin(), rows.end());
    for (const auto r : out) {
      if (r >= features.n_paths) fail(ErrorKind::Shape, "feature row index out of range");
    }
  }
  return out;
}

void check_inputs(const PolicyParams& params, const FeatureTensor& features) {
  if (params.arch.input_dim != FeatureTensor::kFeatures) fail(ErrorKind::Shape, "feature width does not match input_dim");
  if (features.n_steps < 1 || features.data.size() != features.n_paths * static_cast<std::size_t>(features.n_steps) *
                                                         FeatureTensor::kFeatures) {
    fail(ErrorKind::Shape, "feature tensor is malformed");
  }
}

double bound_hedge(double z) { return std::clamp(std::tanh(z), -kMaxHedge, kMaxHedge); }

// One LSTM cell update on a batch block. `z` receives the activated gates.
void lstm_cell(const LstmLayer& L, Index h, const Eigen::Ref<const MatrixXd>& x, const Eigen::Ref<const MatrixXd>& h_prev,
               const Eigen::Ref<const MatrixXd>& c_prev, Eigen::Ref<MatrixXd> z, Eigen::Ref<MatrixXd> c,
               Eigen::Ref<MatrixXd> c_tanh, Eigen::Ref<MatrixXd> h_next) {
  z.noalias() = L.w_h * h_prev;
  z.noalias() += L.w_x * x;
  z.colwise() += L.b;
  sigmoid_inplace(z.topRows(2 * h).array());
  tanh_inplace(z.middleRows(2 * h, h).array());
  sigmoid_inplace(z.bottomRows(h).array());
  c.array() = z.middleRows(h, h).array() * c_prev.array() + z.topRows(h).array() * z.middleRows(2 * h, h).array();
  c_tanh = c;
  tanh_inplace(c_tanh.array());
  h_next.array() = z.bottomRows(h).array() * c_tanh.array();
}

}  // namespace

ForwardResult forward(const PolicyParams& params, const FeatureTensor& features, std::span<const std::size_t> rows) {
  check_inputs(params, features);
  const auto idx = resolve_rows(features, rows);
  const Index B = static_cast<Index>(idx.size());
  const Index T = features.n_steps;
  const Index h = params.arch.hidden_dim;
  const Index BT = B * T;

  ForwardResult res;
  ForwardCache& cache = res.cache;
  cache.batch = static_cast<int>(B);
  cache.steps = static_cast<int>(T);
  cache.layers.resize(params.layers.size());

  {
    auto& in0 = cache.layers[0].input;
    in0.resize(params.arch.input_dim, BT);
    for (Index t = 0; t < T; ++t) {
      for (Index b = 0; b < B; ++b) {
        for (int f = 0; f < FeatureTensor::kFeatures; ++f) {
          in0(f, t * B + b) = features.at(idx[static_cast<std::size_t>(b)], static_cast<int>(t), f);
        }
      }
    }
  }

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& L = params.layers[l];
    auto& lc = cache.layers[l];
    if (l > 0) lc.input = cache.layers[l - 1].hidden.rightCols(BT);
    lc.gates.resize(4 * h, BT);
    lc.cell = MatrixXd::Zero(h, B * (T + 1));
    lc.cell_tanh.resize(h, BT);
    lc.hidden = MatrixXd::Zero(h, B * (T + 1));
    for (Index t = 0; t < T; ++t) {
      lstm_cell(L, h, lc.input.middleCols(t * B, B), lc.hidden.middleCols(t * B, B), lc.cell.middleCols(t * B, B),
                lc.gates.middleCols(t * B, B), lc.cell.middleCols((t + 1) * B, B), lc.cell_tanh.middleCols(t * B, B),
                lc.hidden.middleCols((t + 1) * B, B));
      if (!lc.hidden.middleCols((t + 1) * B, B).allFinite()) {
        fail(ErrorKind::Numeric, "non-finite LSTM activation at step " + std::to_string(t) + ", layer " +
                                     std::to_string(l));
      }
    }
  }

  cache.out_pre.noalias() = params.w_out * cache.top_hidden();
  cache.out_pre.colwise() += params.b_out;
  cache.hedges.resize(B, T);
  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < B; ++b) cache.hedges(b, t) = bound_hedge(cache.out_pre(0, t * B + b));
  }
  if (!cache.hedges.allFinite()) fail(ErrorKind::Numeric, "non-finite hedge ratio");
  res.hedges = cache.hedges;
  return res;
}

RowMatrix predict(const PolicyParams& params, const FeatureTensor& features, std::span<const std::size_t> rows) {
  check_inputs(params, features);
  const auto idx = resolve_rows(features, rows);
  const Index B = static_cast<Index>(idx.size());
  const Index T = features.n_steps;
  const Index h = params.arch.hidden_dim;
  const std::size_t n_layers = params.layers.size();

  std::vector<MatrixXd> hs(n_layers, MatrixXd::Zero(h, B));
  std::vector<MatrixXd> cs(n_layers, MatrixXd::Zero(h, B));
  MatrixXd z(4 * h, B);
  MatrixXd c_next(h, B);
  MatrixXd c_tanh(h, B);
  MatrixXd h_next(h, B);
  MatrixXd x0(params.arch.input_dim, B);
  RowMatrix hedges(B, T);
  Eigen::RowVectorXd out(B);

  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < B; ++b) {
      for (int f = 0; f < FeatureTensor::kFeatures; ++f) {
        x0(f, b) = features.at(idx[static_cast<std::size_t>(b)], static_cast<int>(t), f);
      }
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
      const MatrixXd& x = l == 0 ? x0 : hs[l - 1];
      lstm_cell(params.layers[l], h, x, hs[l], cs[l], z, c_next, c_tanh, h_next);
      cs[l].swap(c_next);
      hs[l].swap(h_next);
    }
    if (!hs.back().allFinite()) fail(ErrorKind::Numeric, "non-finite LSTM activation at step " + std::to_string(t));
    out.noalias() = params.w_out * hs.back();
    for (Index b = 0; b < B; ++b) hedges(b, t) = bound_hedge(out[b] + params.b_out[0]);
  }
  return hedges;
}

PolicyGrads backward(const PolicyParams& params, const ForwardCache& cache, const RowMatrix& d_hedges) {
  const Index B = cache.batch;
  const Index T = cache.steps;
  const Index h = params.arch.hidden_dim;
  const Index BT = B * T;
  if (d_hedges.rows() != B || d_hedges.cols() != T) fail(ErrorKind::Shape, "d_hedges shape does not match the cache");
  if (cache.layers.size() != params.layers.size() || cache.hedges.rows() != B) {
    fail(ErrorKind::Shape, "cache does not match the parameters");
  }

  PolicyGrads g;
  g.d = PolicyParams::zeros(params.arch);
  g.out_signal.resize(B, T);
  MatrixXd dy(1, BT);
  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < B; ++b) {
      const double hedge = cache.hedges(b, t);
      const double s = d_hedges(b, t) * (1.0 - hedge * hedge);
      g.out_signal(b, t) = s;
      dy(0, t * B + b) = s;
    }
  }
  g.d.w_out.noalias() = dy * cache.top_hidden().transpose();
  g.d.b_out = dy.rowwise().sum();

  MatrixXd d_input = params.w_out.transpose() * dy;  // h x BT, gradient reaching the top layer output
  MatrixXd dz(4 * h, BT);
  MatrixXd dh(h, B);
  MatrixXd dh_next(h, B);
  MatrixXd dc(h, B);
  MatrixXd dc_next(h, B);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& L = params.layers[li];
    const auto& lc = cache.layers[li];
    dh_next.setZero();
    dc_next.setZero();
    for (Index t = T - 1; t >= 0; --t) {
      const Index col = t * B;
      const auto gates = lc.gates.middleCols(col, B);
      const auto ig = gates.topRows(h).array();
      const auto fg = gates.middleRows(h, h).array();
      const auto gg = gates.middleRows(2 * h, h).array();
      const auto og = gates.bottomRows(h).array();
      const auto tc = lc.cell_tanh.middleCols(col, B).array();
      const auto c_prev = lc.cell.middleCols(col, B).array();

      dh = d_input.middleCols(col, B) + dh_next;
      dc.array() = dc_next.array() + dh.array() * og * (1.0 - tc * tc);
      auto dzt = dz.middleCols(col, B);
      dzt.topRows(h).array() = dc.array() * gg * ig * (1.0 - ig);
      dzt.middleRows(h, h).array() = dc.array() * c_prev * fg * (1.0 - fg);
      dzt.middleRows(2 * h, h).array() = dc.array() * ig * (1.0 - gg * gg);
      dzt.bottomRows(h).array() = dh.array() * tc * og * (1.0 - og);
      dc_next.array() = dc.array() * fg;
      dh_next.noalias() = L.w_h.transpose() * dzt;
    }
    auto& gl = g.d.layers[li];
    gl.w_x.noalias() = dz * lc.input.transpose();
    gl.w_h.noalias() = dz * lc.hidden.leftCols(BT).transpose();
    gl.b = dz.rowwise().sum();
    if (li > 0) d_input.noalias() = L.w_x.transpose() * dz;
  }
  return g;
}

RowMatrix output_hedges(const ForwardCache& cache, const Eigen::Ref<const MatrixXd>& output_layer) {
  const Index B = cache.batch;
  const Index T = cache.steps;
  const auto top = cache.top_hidden();
  const Index h = top.rows();
  if (output_layer.rows() != 1 || output_layer.cols() != h + 1) fail(ErrorKind::Shape, "output layer shape mismatch");
  Eigen::RowVectorXd z = output_layer.leftCols(h) * top;
  RowMatrix hedges(B, T);
  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < B; ++b) hedges(b, t) = bound_hedge(z[t * B + b] + output_layer(0, h));
  }
  return hedges;
}

OutputLayerStats output_layer_stats(const ForwardCache& cache, const PolicyGrads& grads) {
  const Index B = cache.batch;
  const Index T = cache.steps;
  const auto top = cache.top_hidden();
  const Index h = top.rows();
  OutputLayerStats s;
  s.activations.resize(B * T, h + 1);
  s.activations.leftCols(h) = top.transpose();
  s.activations.col(h).setOnes();
  // The loss is a batch mean, so each path's signal carries a 1/B factor.
  // Undo it so G reflects per-path gradient magnitudes.
  const double scale = static_cast<double>(B);
  s.out_grads.resize(B * T, 1);
  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < B; ++b) s.out_grads(t * B + b, 0) = scale * grads.out_signal(b, t);
  }
  return s;
}

MatrixXd output_layer_grad(const PolicyGrads& grads) { return grads.d.output_layer(); }

}  // namespace hedgebench
