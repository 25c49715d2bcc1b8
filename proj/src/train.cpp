#include "hedgebench/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hedgebench/error.hpp"
#include "hedgebench/io_util.hpp"
#include "hedgebench/rng.hpp"

namespace hedgebench {

using nlohmann::json;

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "kfac"; }

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "kfac") return OptimizerKind::Kfac;
  fail(ErrorKind::Parse, "optimizer must be 'adam' or 'kfac', got '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (batch_size < 2) fail(ErrorKind::InvalidArgument, "batch_size must be >= 2");
  if (!(std::isfinite(lambda) && lambda >= 0.0)) fail(ErrorKind::InvalidArgument, "lambda must be >= 0");
  if (!(adam.lr >= 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
        adam.epsilon > 0.0 && adam.weight_decay >= 0.0)) {
    fail(ErrorKind::InvalidArgument, "invalid Adam hyperparameters");
  }
  if (!(kfac.lr >= 0.0 && kfac.damping > 0.0 && kfac.ema_decay > 0.0 && kfac.ema_decay < 1.0)) {
    fail(ErrorKind::InvalidArgument, "invalid K-FAC hyperparameters");
  }
}

void Dataset::validate(const char* name) const {
  if (features == nullptr || prices == nullptr) fail(ErrorKind::InvalidArgument, std::string(name) + " set is missing");
  if (static_cast<std::size_t>(prices->rows()) != features->n_paths || prices->cols() != features->n_steps + 1) {
    fail(ErrorKind::Shape, std::string(name) + " features and prices are not aligned");
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed, streams::kShuffleBase + static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

namespace {

RowMatrix gather_rows(const RowMatrix& m, std::span<const std::size_t> rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const ArchConfig& arch, const Dataset& train_set, const Dataset& validation,
                  const OptionSpec& spec, const CostModel& cost, const LogFn& log) {
  config.validate();
  arch.validate();
  spec.validate();
  cost.validate();
  train_set.validate("training");
  validation.validate("validation");
  if (validation.size() < 2) fail(ErrorKind::InvalidArgument, "validation set needs at least two paths");
  const std::size_t n = train_set.size();
  const auto B = static_cast<std::size_t>(config.batch_size);
  if (n < B) fail(ErrorKind::InvalidArgument, "training set is smaller than one batch");

  TrainResult result;
  result.params = init_policy(arch, config.seed);
  PolicyParams& params = result.params;
  const bool use_kfac = config.optimizer == OptimizerKind::Kfac;
  AdamState adam = AdamState::for_size(use_kfac ? params.lstm_size() : params.size(), config.adam);
  KfacState kfac = KfacState::create(arch.hidden_dim + 1, arch.output_dim, config.kfac);

  const std::size_t n_batches = n / B;
  result.dropped_per_epoch = n - n_batches * B;
  if (log && result.dropped_per_epoch > 0) {
    log("dropping " + std::to_string(result.dropped_per_epoch) + " ragged-tail paths per epoch");
  }

  using clock = std::chrono::steady_clock;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = clock::now();
    const auto order = epoch_order(n, config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < n_batches; ++k) {
      const std::span<const std::size_t> rows(order.data() + k * B, B);
      try {
        auto fwd = forward(params, *train_set.features, rows);
        const RowMatrix prices = gather_rows(*train_set.prices, rows);
        const LossResult loss = loss_and_grad(fwd.hedges, prices, spec, cost, config.lambda);
        const PolicyGrads grads = backward(params, fwd.cache, loss.d_hedges);
        loss_sum += loss.loss;
        if (use_kfac) {
          const auto info = hybrid_step(adam, kfac, config.kfac.lr, params, grads, output_layer_stats(fwd.cache, grads));
          const RowMatrix moved = output_hedges(fwd.cache, params.output_layer());
          const double after = evaluate_loss(moved, prices, spec, cost, config.lambda).loss;
          kfac_record_outcome(kfac, info.predicted_change, after - loss.loss);
        } else {
          Eigen::VectorXd flat = params.flatten();
          adam_step(adam, flat, grads.d.flatten());
          params.assign(flat);
        }
      } catch (const Error& e) {
        fail(e.kind(), std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(k) + ")");
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n_batches);
    const RowMatrix val_hedges = predict(params, *validation.features);
    const LossResult val = evaluate_loss(val_hedges, *validation.prices, spec, cost, config.lambda);
    rec.val_loss = val.loss;
    rec.val_mean_pnl = val.mean_pnl;
    rec.val_mean_cost = val.mean_cost;
    rec.seconds = std::chrono::duration<double>(clock::now() - start).count();
    if (!(std::isfinite(rec.train_loss) && std::isfinite(rec.val_loss))) {
      fail(ErrorKind::Numeric, "non-finite loss at epoch " + std::to_string(epoch));
    }
    result.total_seconds += rec.seconds;
    result.curve.push_back(rec);
    if (log) {
      std::ostringstream msg;
      msg << to_string(config.optimizer) << " epoch " << epoch << "/" << config.epochs << " train_loss=" << rec.train_loss
          << " val_loss=" << rec.val_loss << " val_cost=" << rec.val_mean_cost;
      if (use_kfac) msg << " damping=" << kfac.damping;
      log(msg.str());
    }
  }
  return result;
}

std::optional<int> convergence_epoch(std::span<const EpochRecord> curve, double threshold) {
  for (const auto& r : curve) {
    if (r.val_loss <= threshold) return r.epoch;
  }
  return std::nullopt;
}

void write_curve_csv(std::span<const EpochRecord> curve, std::ostream& out) {
  out << "epoch,train_loss,val_loss,val_mean_pnl,val_mean_cost,seconds\n";
  for (const auto& r : curve) {
    out << r.epoch << ',' << io::format_double(r.train_loss) << ',' << io::format_double(r.val_loss) << ','
        << io::format_double(r.val_mean_pnl) << ',' << io::format_double(r.val_mean_cost) << ','
        << io::format_double(r.seconds) << '\n';
  }
}

std::vector<EpochRecord> read_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || io::trim(line) != "epoch,train_loss,val_loss,val_mean_pnl,val_mean_cost,seconds") {
    fail(ErrorKind::Parse, "line 1: unexpected curve header");
  }
  std::vector<EpochRecord> curve;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const std::string ctx = "line " + std::to_string(line_no);
    const auto f = io::split(line, ',');
    if (f.size() != 6) fail(ErrorKind::Parse, ctx + ": expected 6 fields");
    EpochRecord r;
    r.epoch = static_cast<int>(io::parse_int(f[0], ctx));
    r.train_loss = io::parse_double(f[1], ctx);
    r.val_loss = io::parse_double(f[2], ctx);
    r.val_mean_pnl = io::parse_double(f[3], ctx);
    r.val_mean_cost = io::parse_double(f[4], ctx);
    r.seconds = io::parse_double(f[5], ctx);
    curve.push_back(r);
  }
  return curve;
}

namespace {

json tensor_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

void tensor_from_json(const json& doc, const std::string& key, Eigen::Ref<Eigen::MatrixXd> out) {
  if (!doc.contains(key)) fail(ErrorKind::Validation, "model is missing tensor '" + key + "'");
  const auto& t = doc.at(key);
  const auto shape = t.at("shape").get<std::vector<long long>>();
  const auto& data = t.at("data");
  if (shape.size() != 2 || shape[0] != out.rows() || shape[1] != out.cols() ||
      static_cast<long long>(data.size()) != shape[0] * shape[1]) {
    fail(ErrorKind::Validation, "tensor '" + key + "' does not match the architecture");
  }
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = data.at(k++).get<double>();
  }
}

}  // namespace

void save_model(const ModelDocument& model, std::ostream& out) {
  model.params.validate();
  const auto& a = model.params.arch;
  json tensors = json::object();
  for (std::size_t l = 0; l < model.params.layers.size(); ++l) {
    const auto& L = model.params.layers[l];
    const std::string prefix = "lstm." + std::to_string(l) + ".";
    tensors[prefix + "w_x"] = tensor_json(L.w_x);
    tensors[prefix + "w_h"] = tensor_json(L.w_h);
    tensors[prefix + "b"] = tensor_json(L.b);
  }
  tensors["out.w"] = tensor_json(model.params.w_out);
  tensors["out.b"] = tensor_json(model.params.b_out);

  json doc = {
      {"format", "hedgebench-model"},
      {"version", kModelFormatVersion},
      {"arch",
       {{"input_dim", a.input_dim},
        {"hidden_dim", a.hidden_dim},
        {"n_lstm_layers", a.n_lstm_layers},
        {"output_dim", a.output_dim},
        {"gate_order", {"input", "forget", "cell", "output"}}}},
      {"tensors", std::move(tensors)},
      {"norm_stats",
       {{"price_mean", model.norm.price_mean},
        {"price_std", model.norm.price_std},
        {"var_mean", model.norm.var_mean},
        {"var_std", model.norm.var_std}}},
      {"train_seed", model.train_seed},
      {"optimizer", model.optimizer},
      {"objective",
       {{"kind", "european_call"},
        {"strike", model.option.strike},
        {"side", to_string(model.option.side)},
        {"cost_rate", model.cost.rate},
        {"lambda", model.lambda}}},
      {"data", {{"n_train_paths", model.n_train_paths}, {"sim_seed", model.sim_seed}}},
      {"config_hash", model.config_hash},
  };
  out << doc.dump(1) << '\n';
}

ModelDocument load_model(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("model document: ") + e.what());
  }
  try {
    if (doc.value("format", std::string{}) != "hedgebench-model") fail(ErrorKind::Validation, "not a model document");
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion) {
      fail(ErrorKind::Validation, "unsupported model version " + std::to_string(version));
    }
    ArchConfig arch;
    const auto& a = doc.at("arch");
    arch.input_dim = a.at("input_dim").get<int>();
    arch.hidden_dim = a.at("hidden_dim").get<int>();
    arch.n_lstm_layers = a.at("n_lstm_layers").get<int>();
    arch.output_dim = a.at("output_dim").get<int>();
    try {
      arch.validate();
    } catch (const Error& e) {
      fail(ErrorKind::Validation, e.what());
    }
    ModelDocument m;
    m.params = PolicyParams::zeros(arch);
    const auto& t = doc.at("tensors");
    for (std::size_t l = 0; l < m.params.layers.size(); ++l) {
      auto& L = m.params.layers[l];
      const std::string prefix = "lstm." + std::to_string(l) + ".";
      tensor_from_json(t, prefix + "w_x", L.w_x);
      tensor_from_json(t, prefix + "w_h", L.w_h);
      tensor_from_json(t, prefix + "b", L.b);
    }
    tensor_from_json(t, "out.w", m.params.w_out);
    tensor_from_json(t, "out.b", m.params.b_out);
    if (t.size() != 3 * m.params.layers.size() + 2) fail(ErrorKind::Validation, "model has unexpected tensors");
    m.params.validate();

    const auto& ns = doc.at("norm_stats");
    m.norm = {ns.at("price_mean").get<double>(), ns.at("price_std").get<double>(), ns.at("var_mean").get<double>(),
              ns.at("var_std").get<double>()};
    m.norm.validate();
    m.train_seed = doc.at("train_seed").get<std::uint64_t>();
    m.optimizer = doc.at("optimizer").get<std::string>();
    const auto& obj = doc.at("objective");
    if (obj.at("kind").get<std::string>() != "european_call") fail(ErrorKind::Validation, "unsupported option kind");
    m.option.strike = obj.at("strike").get<double>();
    m.option.side = parse_option_side(obj.at("side").get<std::string>());
    m.cost.rate = obj.at("cost_rate").get<double>();
    m.lambda = obj.at("lambda").get<double>();
    m.option.validate();
    m.cost.validate();
    m.n_train_paths = doc.at("data").at("n_train_paths").get<std::size_t>();
    m.sim_seed = doc.at("data").at("sim_seed").get<std::uint64_t>();
    m.config_hash = doc.at("config_hash").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::Validation, std::string("model document: ") + e.what());
  }
}

void save_model(const ModelDocument& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, [&](std::ostream& out) { save_model(model, out); });
}

ModelDocument load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open model '" + path.string() + "'");
  return load_model(in);
}

}  // namespace hedgebench
