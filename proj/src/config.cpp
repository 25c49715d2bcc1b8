#include "hedgebench/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <type_traits>
#include <sstream>

#include "hedgebench/error.hpp"
#include "hedgebench/io_util.hpp"

namespace hedgebench {

namespace {

struct KeySpec {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

void check(bool ok, const std::string& key, const char* rule) {
  if (!ok) fail(ErrorKind::Validation, "key '" + key + "': " + rule);
}

template <typename Getter>
KeySpec real_key(Getter field, std::function<bool(double)> valid, const char* rule) {
  return {[=](RunConfig& c, const std::string& key, const std::string& v) {
            const double x = io::parse_double(v, "key '" + key + "'");
            check(std::isfinite(x) && valid(x), key, rule);
            field(c) = x;
          },
          [=](const RunConfig& c) { return io::format_double(field(c)); }};
}

template <typename Getter>
KeySpec count_key(Getter field, long long min_value, const char* rule) {
  return {[=](RunConfig& c, const std::string& key, const std::string& v) {
            const long long x = io::parse_int(v, "key '" + key + "'");
            check(x >= min_value, key, rule);
            using T = std::remove_reference_t<decltype(field(c))>;
            field(c) = static_cast<T>(x);
          },
          [=](const RunConfig& c) { return std::to_string(field(c)); }};
}

template <typename Getter>
KeySpec seed_key(Getter field) {
  return {[=](RunConfig& c, const std::string& key, const std::string& v) {
            field(c) = io::parse_u64(v, "key '" + key + "'");
          },
          [=](const RunConfig& c) { return std::to_string(field(c)); }};
}

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = [] {
    std::map<std::string, KeySpec> t;
    auto any = [](double) { return true; };
    auto positive = [](double x) { return x > 0.0; };
    auto non_negative = [](double x) { return x >= 0.0; };
    auto unit_open = [](double x) { return x > 0.0 && x < 1.0; };
    auto unit_half_open = [](double x) { return x >= 0.0 && x < 1.0; };

    t["heston.s0"] = real_key([](auto& c) -> auto& { return c.heston.s0; }, positive, "must be > 0");
    t["heston.v0"] = real_key([](auto& c) -> auto& { return c.heston.v0; }, non_negative, "must be >= 0");
    t["heston.theta"] = real_key([](auto& c) -> auto& { return c.heston.theta; }, non_negative, "must be >= 0");
    t["heston.kappa"] = real_key([](auto& c) -> auto& { return c.heston.kappa; }, non_negative, "must be >= 0");
    t["heston.xi"] = real_key([](auto& c) -> auto& { return c.heston.xi; }, non_negative, "must be >= 0");
    t["heston.rho"] = real_key([](auto& c) -> auto& { return c.heston.rho; },
                               [](double x) { return x >= -1.0 && x <= 1.0; }, "must lie in [-1, 1]");
    t["heston.mu"] = real_key([](auto& c) -> auto& { return c.heston.mu; }, any, "must be finite");
    t["heston.dt"] = real_key([](auto& c) -> auto& { return c.heston.dt; }, positive, "must be > 0");
    t["heston.n_steps"] = count_key([](auto& c) -> auto& { return c.heston.n_steps; }, 1, "must be >= 1");
    t["heston.price_floor"] =
        real_key([](auto& c) -> auto& { return c.heston.price_floor; }, positive, "must be > 0");

    t["sim.n_train_paths"] =
        count_key([](auto& c) -> auto& { return c.sim.n_train_paths; }, 2, "must be >= 2");
    t["sim.n_val_paths"] = count_key([](auto& c) -> auto& { return c.sim.n_val_paths; }, 2, "must be >= 2");
    t["sim.seed"] = seed_key([](auto& c) -> auto& { return c.sim.seed; });

    t["net.hidden_dim"] = count_key([](auto& c) -> auto& { return c.net.hidden_dim; }, 1, "must be >= 1");
    t["net.layers"] = count_key([](auto& c) -> auto& { return c.net.n_lstm_layers; }, 1, "must be >= 1");

    t["train.epochs"] = count_key([](auto& c) -> auto& { return c.train.epochs; }, 1, "must be >= 1");
    t["train.batch_size"] = count_key([](auto& c) -> auto& { return c.train.batch_size; }, 2, "must be >= 2");
    t["train.seed"] = seed_key([](auto& c) -> auto& { return c.train.seed; });
    t["train.lambda"] =
        real_key([](auto& c) -> auto& { return c.train.lambda; }, non_negative, "must be >= 0");
    t["train.convergence_threshold"] = {
        [](RunConfig& c, const std::string& key, const std::string& v) {
          if (v == "auto") {
            c.train.convergence_threshold.reset();
            return;
          }
          const double x = io::parse_double(v, "key '" + key + "'");
          check(std::isfinite(x), key, "must be finite or 'auto'");
          c.train.convergence_threshold = x;
        },
        [](const RunConfig& c) {
          return c.train.convergence_threshold ? io::format_double(*c.train.convergence_threshold) : std::string("auto");
        }};

    t["optim.kind"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                         try {
                           c.train.optimizer = parse_optimizer_kind(v);
                         } catch (const Error&) {
                           fail(ErrorKind::Validation, "key '" + key + "': must be 'adam' or 'kfac'");
                         }
                       },
                       [](const RunConfig& c) { return to_string(c.train.optimizer); }};
    t["optim.lr"] = real_key([](auto& c) -> auto& { return c.train.adam.lr; }, non_negative, "must be >= 0");
    t["optim.weight_decay"] =
        real_key([](auto& c) -> auto& { return c.train.adam.weight_decay; }, non_negative, "must be >= 0");
    t["optim.beta1"] =
        real_key([](auto& c) -> auto& { return c.train.adam.beta1; }, unit_half_open, "must lie in [0, 1)");
    t["optim.beta2"] =
        real_key([](auto& c) -> auto& { return c.train.adam.beta2; }, unit_half_open, "must lie in [0, 1)");
    t["optim.epsilon"] = real_key([](auto& c) -> auto& { return c.train.adam.epsilon; }, positive, "must be > 0");

    t["kfac.lr"] = real_key([](auto& c) -> auto& { return c.train.kfac.lr; }, non_negative, "must be >= 0");
    t["kfac.damping"] = real_key([](auto& c) -> auto& { return c.train.kfac.damping; }, positive, "must be > 0");
    t["kfac.ema_decay"] =
        real_key([](auto& c) -> auto& { return c.train.kfac.ema_decay; }, unit_open, "must lie in (0, 1)");

    t["option.strike"] = real_key([](auto& c) -> auto& { return c.option.strike; }, positive, "must be > 0");
    t["option.side"] = {[](RunConfig& c, const std::string& key, const std::string& v) {
                          if (v == "short") {
                            c.option.side = OptionSide::Short;
                          } else if (v == "long") {
                            c.option.side = OptionSide::Long;
                          } else {
                            fail(ErrorKind::Validation, "key '" + key + "': must be 'short' or 'long'");
                          }
                        },
                        [](const RunConfig& c) { return to_string(c.option.side); }};
    t["cost.rate"] = real_key([](auto& c) -> auto& { return c.cost.rate; }, non_negative, "must be >= 0");
    return t;
  }();
  return table;
}

}  // namespace

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& table = key_table();
  const auto it = table.find(key);
  if (it == table.end()) fail(ErrorKind::Validation, "unknown key '" + key + "'");
  it->second.set(config, key, value);
}

void RunConfig::validate() const {
  heston.validate();
  net.validate();
  train.validate();
  option.validate();
  cost.validate();
  if (sim.n_train_paths < static_cast<std::size_t>(train.batch_size)) {
    fail(ErrorKind::Validation, "key 'sim.n_train_paths': must be >= train.batch_size");
  }
  if (sim.n_val_paths < 2) fail(ErrorKind::Validation, "key 'sim.n_val_paths': must be >= 2");
}

std::string RunConfig::canonical() const {
  std::ostringstream out;
  for (const auto& [key, spec] : key_table()) out << key << " = " << spec.get(*this) << '\n';
  return out.str();
}

std::string RunConfig::content_hash() const { return io::hex64(io::fnv1a64(canonical())); }

RunConfig parse_config(std::istream& in) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = io::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected 'section.key = value'");
    }
    const std::string key(io::trim(view.substr(0, eq)));
    const std::string value(io::trim(view.substr(eq + 1)));
    try {
      set_config_value(config, key, value);
    } catch (const Error& e) {
      fail(e.kind(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open config '" + path.string() + "'");
  return parse_config(in);
}

}  // namespace hedgebench
