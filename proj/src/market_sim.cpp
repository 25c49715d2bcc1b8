#include "hedgebench/market_sim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <istream>
#include <ostream>
#include <string>
#include <thread>

#include "hedgebench/error.hpp"
#include "hedgebench/io_util.hpp"
#include "hedgebench/rng.hpp"

namespace hedgebench {

namespace {

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorKind::InvalidArgument, std::string("invalid Heston parameter: ") + what);
}

}  // namespace

void HestonParams::validate() const {
  require(std::isfinite(s0) && s0 > 0.0, "s0 must be > 0");
  require(std::isfinite(v0) && v0 >= 0.0, "v0 must be >= 0");
  require(std::isfinite(theta) && theta >= 0.0, "theta must be >= 0");
  require(std::isfinite(kappa) && kappa >= 0.0, "kappa must be >= 0");
  require(std::isfinite(xi) && xi >= 0.0, "xi must be >= 0");
  require(std::isfinite(rho) && rho >= -1.0 && rho <= 1.0, "rho must lie in [-1, 1]");
  require(std::isfinite(mu), "mu must be finite");
  require(std::isfinite(dt) && dt > 0.0, "dt must be > 0");
  require(n_steps >= 1, "n_steps must be >= 1");
  require(std::isfinite(price_floor) && price_floor > 0.0, "price_floor must be > 0");
}

void PathBatch::validate() const {
  if (prices.rows() != variances.rows() || prices.cols() != variances.cols()) {
    fail(ErrorKind::Shape, "price and variance matrices differ in shape");
  }
  if (prices.rows() < 1 || prices.cols() < 2) fail(ErrorKind::Shape, "path batch is empty");
  for (Eigen::Index i = 0; i < prices.rows(); ++i) {
    if (prices(i, 0) != prices(0, 0) || variances(i, 0) != variances(0, 0)) {
      fail(ErrorKind::Validation, "path " + std::to_string(i) + " does not start at the common initial state");
    }
    for (Eigen::Index j = 0; j < prices.cols(); ++j) {
      if (!(std::isfinite(prices(i, j)) && prices(i, j) > 0.0)) {
        fail(ErrorKind::Validation, "non-positive price at path " + std::to_string(i) + ", step " +
                                        std::to_string(j));
      }
      if (!(std::isfinite(variances(i, j)) && variances(i, j) >= 0.0)) {
        fail(ErrorKind::Validation, "negative variance at path " + std::to_string(i) + ", step " +
                                        std::to_string(j));
      }
    }
  }
}

PathBatch PathBatch::rows(std::size_t first, std::size_t count) const {
  PathBatch out;
  out.prices = prices.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
  out.variances = variances.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
  out.seed = seed;
  out.params = params;
  return out;
}

bool same_trajectories(const PathBatch& a, const PathBatch& b) {
  if (a.prices.rows() != b.prices.rows() || a.prices.cols() != b.prices.cols()) return false;
  if (a.variances.rows() != b.variances.rows() || a.variances.cols() != b.variances.cols()) return false;
  return std::equal(a.prices.data(), a.prices.data() + a.prices.size(), b.prices.data()) &&
         std::equal(a.variances.data(), a.variances.data() + a.variances.size(), b.variances.data());
}

void NormStats::validate() const {
  if (!(std::isfinite(price_mean) && std::isfinite(var_mean))) fail(ErrorKind::Validation, "non-finite normalization mean");
  if (!(std::isfinite(price_std) && price_std > 0.0)) fail(ErrorKind::Degenerate, "price_std must be > 0");
  if (!(std::isfinite(var_std) && var_std > 0.0)) fail(ErrorKind::Degenerate, "var_std must be > 0");
}

CorrelatedShocks correlate(double z1, double z2, double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "correlation must lie in [-1, 1], got " + io::format_double(rho));
  }
  return {z1, rho * z1 + std::sqrt(1.0 - rho * rho) * z2};
}

HestonState heston_step(double s, double v, const HestonParams& p, double w_s, double w_v) {
  if (!(std::isfinite(s) && std::isfinite(v) && std::isfinite(w_s) && std::isfinite(w_v))) {
    fail(ErrorKind::Numeric, "non-finite input to Heston step (s=" + io::format_double(s) +
                                 ", v=" + io::format_double(v) + ")");
  }
  const double v_plus = std::max(v, 0.0);
  const double sqrt_v = std::sqrt(v_plus);
  const double sqrt_dt = std::sqrt(p.dt);
  HestonState next{};
  next.s = s + p.mu * s * p.dt + sqrt_v * s * sqrt_dt * w_s;
  if (next.s < p.price_floor) {
    next.s = p.price_floor;
    next.floored = true;
  }
  next.v_raw = v + p.kappa * (p.theta - v_plus) * p.dt + p.xi * sqrt_v * sqrt_dt * w_v;
  next.v = std::max(next.v_raw, 0.0);
  if (!(std::isfinite(next.s) && std::isfinite(next.v_raw))) {
    fail(ErrorKind::Numeric, "Heston step produced a non-finite state");
  }
  return next;
}

PathBatch simulate_paths(const HestonParams& params, std::size_t n_paths, std::uint64_t seed,
                         unsigned workers) {
  params.validate();
  if (n_paths < 1) fail(ErrorKind::InvalidArgument, "n_paths must be >= 1");
  const int n = params.n_steps;

  PathBatch batch;
  batch.prices.resize(static_cast<Eigen::Index>(n_paths), n + 1);
  batch.variances.resize(static_cast<Eigen::Index>(n_paths), n + 1);
  batch.seed = seed;
  batch.params = params;

  std::vector<std::size_t> clamps(n_paths, 0);
  auto run_path = [&](std::size_t i) {
    CounterRng rng(seed, i);
    double* s_row = batch.prices.row(static_cast<Eigen::Index>(i)).data();
    double* v_row = batch.variances.row(static_cast<Eigen::Index>(i)).data();
    s_row[0] = params.s0;
    v_row[0] = params.v0;
    double v_raw = params.v0;
    for (int t = 0; t < n; ++t) {
      const auto [z1, z2] = rng.normal_pair();
      const auto w = correlate(z1, z2, params.rho);
      HestonState next{};
      try {
        next = heston_step(s_row[t], v_raw, params, w.w_s, w.w_v);
      } catch (const Error& e) {
        fail(e.kind(), std::string(e.what()) + " at path " + std::to_string(i) + ", step " + std::to_string(t));
      }
      s_row[t + 1] = next.s;
      v_raw = next.v_raw;
      v_row[t + 1] = next.v;
      clamps[i] += next.floored ? 1 : 0;
    }
  };

  if (workers == 0) workers = io::worker_count();
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_paths));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_paths; ++i) run_path(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n_paths; i += workers) run_path(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (const auto c : clamps) batch.floor_clamps += c;
  return batch;
}

namespace {

struct MeanStd {
  double mean;
  double std;
};

// Mean and sample std over the first `cols` columns of every row.
MeanStd sample_mean_std(const RowMatrix& m, Eigen::Index cols) {
  const auto block = m.leftCols(cols);
  const double n = static_cast<double>(block.size());
  const double mean = block.sum() / n;
  const double ss = (block.array() - mean).square().sum();
  return {mean, block.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

}  // namespace

NormStats compute_norm_stats(const PathBatch& batch) {
  if (batch.prices.rows() == 0 || batch.prices.cols() < 2) {
    fail(ErrorKind::Degenerate, "cannot normalize an empty batch");
  }
  // Only decision points enter the network, so the terminal column is left out.
  const Eigen::Index cols = batch.prices.cols() - 1;
  const auto p = sample_mean_std(batch.prices, cols);
  const auto v = sample_mean_std(batch.variances, cols);
  // Rounding in the mean leaves a tiny spread on constant data.
  auto flat = [](const MeanStd& m) { return !(m.std > 1e-12 * std::max(1.0, std::abs(m.mean))); };
  if (flat(p)) fail(ErrorKind::Degenerate, "prices have zero spread");
  if (flat(v)) fail(ErrorKind::Degenerate, "variances have zero spread");
  return {p.mean, p.std, v.mean, v.std};
}

FeatureTensor normalize(const PathBatch& batch, const NormStats& stats) {
  stats.validate();
  if (batch.prices.rows() != batch.variances.rows() || batch.prices.cols() != batch.variances.cols() ||
      batch.prices.cols() < 2) {
    fail(ErrorKind::Shape, "path batch has inconsistent shape");
  }
  FeatureTensor f;
  f.n_paths = batch.n_paths();
  f.n_steps = batch.n_steps();
  f.data.resize(f.n_paths * static_cast<std::size_t>(f.n_steps) * FeatureTensor::kFeatures);
  for (std::size_t i = 0; i < f.n_paths; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (int t = 0; t < f.n_steps; ++t) {
      f.at(i, t, 0) = (batch.prices(row, t) - stats.price_mean) / stats.price_std;
      f.at(i, t, 1) = (batch.variances(row, t) - stats.var_mean) / stats.var_std;
    }
  }
  return f;
}

std::pair<PathBatch, PathBatch> split(const PathBatch& batch, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail(ErrorKind::InvalidArgument, "train_fraction must lie in (0, 1)");
  }
  const std::size_t n = batch.n_paths();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
  if (n_train == 0 || n_train == n) {
    fail(ErrorKind::InvalidArgument, "split of " + std::to_string(n) + " paths leaves one side empty");
  }
  return {batch.rows(0, n_train), batch.rows(n_train, n - n_train)};
}

void write_paths(const PathBatch& batch, std::ostream& out) {
  out << "path,step,price,variance\n";
  std::string line;
  for (Eigen::Index i = 0; i < batch.prices.rows(); ++i) {
    for (Eigen::Index t = 0; t < batch.prices.cols(); ++t) {
      line.clear();
      line += std::to_string(i);
      line += ',';
      line += std::to_string(t);
      line += ',';
      line += io::format_double(batch.prices(i, t));
      line += ',';
      line += io::format_double(batch.variances(i, t));
      line += '\n';
      out << line;
    }
  }
}

PathBatch read_paths(std::istream& in, const HestonParams& params) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || io::trim(line) != "path,step,price,variance") {
    fail(ErrorKind::Parse, "line 1: expected header 'path,step,price,variance'");
  }
  std::vector<double> prices;
  std::vector<double> variances;
  long long expected_path = 0;
  long long expected_step = 0;
  long long steps_per_path = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const std::string ctx = "line " + std::to_string(line_no);
    const auto fields = io::split(line, ',');
    if (fields.size() != 4) fail(ErrorKind::Parse, ctx + ": expected 4 fields");
    const auto path = io::parse_int(fields[0], ctx);
    const auto step = io::parse_int(fields[1], ctx);
    if (path == expected_path + 1 && step == 0) {
      if (steps_per_path < 0) steps_per_path = expected_step;
      if (expected_step != steps_per_path) fail(ErrorKind::Parse, ctx + ": ragged path length");
      expected_path = path;
      expected_step = 0;
    }
    if (path != expected_path || step != expected_step) {
      fail(ErrorKind::Parse, ctx + ": rows must be ordered by path then step");
    }
    prices.push_back(io::parse_double(fields[2], ctx));
    variances.push_back(io::parse_double(fields[3], ctx));
    ++expected_step;
  }
  if (prices.empty()) fail(ErrorKind::Parse, "no data rows");
  if (steps_per_path < 0) steps_per_path = expected_step;
  if (expected_step != steps_per_path) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": ragged path length");
  if (steps_per_path < 2) fail(ErrorKind::Parse, "paths need at least two points");

  const auto rows = static_cast<Eigen::Index>(expected_path + 1);
  PathBatch batch;
  batch.prices = Eigen::Map<RowMatrix>(prices.data(), rows, steps_per_path);
  batch.variances = Eigen::Map<RowMatrix>(variances.data(), rows, steps_per_path);
  batch.params = params;
  batch.params.s0 = batch.prices(0, 0);
  batch.params.v0 = batch.variances(0, 0);
  batch.params.n_steps = static_cast<int>(steps_per_path - 1);
  batch.validate();
  return batch;
}

}  // namespace hedgebench
