#include "hedgebench/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hedgebench/error.hpp"
#include "hedgebench/io_util.hpp"

namespace hedgebench {

namespace fs = std::filesystem;
using nlohmann::json;

std::string curve_hash_content(const std::vector<EpochRecord>& curve) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,val_mean_pnl,val_mean_cost\n";
  for (const auto& r : curve) {
    out << r.epoch << ',' << io::format_double(r.train_loss) << ',' << io::format_double(r.val_loss) << ','
        << io::format_double(r.val_mean_pnl) << ',' << io::format_double(r.val_mean_cost) << '\n';
  }
  return out.str();
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(e.kind(), std::string("stage ") + name + ": " + e.what());
  } catch (const std::exception& e) {
    fail(ErrorKind::Io, std::string("stage ") + name + ": " + e.what());
  }
}

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}

  void text(const std::string& name, const std::string& content) {
    io::write_file_atomic(dir_ / name, [&](std::ostream& out) { out << content; });
    entries_.push_back({name, io::hex64(io::fnv1a64(content)), "full"});
  }

  void curve(const std::string& name, const std::vector<EpochRecord>& curve) {
    std::ostringstream ss;
    write_curve_csv(curve, ss);
    io::write_file_atomic(dir_ / name, [&](std::ostream& out) { out << ss.str(); });
    entries_.push_back({name, io::hex64(io::fnv1a64(curve_hash_content(curve))), "excluding-seconds"});
  }

  void volatile_text(const std::string& name, const std::string& content) {
    io::write_file_atomic(dir_ / name, [&](std::ostream& out) { out << content; });
    entries_.push_back({name, "", "volatile"});
  }

  const std::vector<ManifestEntry>& entries() const { return entries_; }

 private:
  fs::path dir_;
  std::vector<ManifestEntry> entries_;
};

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  return ss.str();
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, const fs::path& out_dir, const LogFn& log) {
  config.validate();
  const std::string config_hash = config.content_hash();
  auto note = [&](const std::string& msg) {
    if (log) log(msg);
  };

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create '" + out_dir.string() + "': " + ec.message());

  PipelineResult result;
  std::string previous_hash;
  if (fs::exists(out_dir / "manifest.json")) {
    try {
      const auto prev = json::parse(io::read_file(out_dir / "manifest.json"));
      if (prev.value("config_hash", std::string{}) == config_hash) {
        previous_hash = prev.value("manifest_hash", std::string{});
        result.had_previous = !previous_hash.empty();
      }
    } catch (const json::exception&) {
      note("ignoring unreadable manifest.json in output directory");
    }
  }

  ArtifactWriter writer(out_dir);
  writer.text("config.resolved", config.canonical());

  const PathBatch all = stage("simulate", [&] {
    note("simulating " + std::to_string(config.sim.total()) + " paths");
    auto batch = simulate_paths(config.heston, config.sim.total(), config.sim.seed);
    if (batch.floor_clamps > 0) note("price floor hit " + std::to_string(batch.floor_clamps) + " times");
    return batch;
  });

  const auto [train_paths, val_paths] = stage("split", [&] {
    const std::size_t n_train = config.sim.n_train_paths;
    return std::pair{all.rows(0, n_train), all.rows(n_train, all.n_paths() - n_train)};
  });
  stage("write paths", [&] {
    writer.text("paths_train.csv", render([&](std::ostream& o) { write_paths(train_paths, o); }));
    writer.text("paths_val.csv", render([&](std::ostream& o) { write_paths(val_paths, o); }));
  });

  const NormStats stats = stage("normalize", [&] { return compute_norm_stats(train_paths); });
  const FeatureTensor train_features = normalize(train_paths, stats);
  const FeatureTensor val_features = normalize(val_paths, stats);

  stage("correlation", [&] {
    const double r = level_correlation(val_features);
    writer.text("correlation.csv", "variable,norm_price,norm_variance\nnorm_price,1," + io::format_double(r) +
                                       "\nnorm_variance," + io::format_double(r) + ",1\n");
  });

  const Dataset train_set{&train_features, &train_paths.prices};
  const Dataset val_set{&val_features, &val_paths.prices};

  struct Arm {
    OptimizerKind kind;
    TrainResult run;
    ModelDocument model;
    MetricsReport report;
  };
  std::vector<Arm> arms;
  for (const auto kind : {OptimizerKind::Adam, OptimizerKind::Kfac}) {
    const std::string name = to_string(kind);
    Arm arm{kind, {}, {}, {}};
    arm.run = stage(("train " + name).c_str(), [&] {
      TrainConfig tc = config.train;
      tc.optimizer = kind;
      return train(tc, config.net, train_set, val_set, config.option, config.cost, log);
    });
    arm.model.params = arm.run.params;
    arm.model.norm = stats;
    arm.model.train_seed = config.train.seed;
    arm.model.optimizer = name;
    arm.model.option = config.option;
    arm.model.cost = config.cost;
    arm.model.lambda = config.train.lambda;
    arm.model.n_train_paths = config.sim.n_train_paths;
    arm.model.sim_seed = config.sim.seed;
    arm.model.config_hash = config_hash;
    stage(("save " + name).c_str(), [&] {
      writer.text("model_" + name + ".json", render([&](std::ostream& o) { save_model(arm.model, o); }));
      writer.curve("curve_" + name + ".csv", arm.run.curve);
    });
    arm.report = stage(("evaluate " + name).c_str(), [&] {
      Provenance prov{name, name, config.train.seed, config.sim.seed, config_hash, "validation"};
      return evaluate(arm.model, val_paths, prov);
    });
    stage(("write report " + name).c_str(), [&] {
      writer.text("report_" + name + ".json", render([&](std::ostream& o) { write_report(arm.report, o); }));
      writer.text("eval_" + name + ".csv", render([&](std::ostream& o) { write_evaluation_csv(arm.report, o); }));
    });
    arms.push_back(std::move(arm));
  }

  result.comparison = stage("compare", [&] {
    auto cmp = compare(arms[0].report, arms[1].report);
    ConvergenceSummary conv;
    conv.threshold = config.train.convergence_threshold.value_or(1.1 * arms[0].run.curve.back().val_loss);
    conv.epoch_a = convergence_epoch(arms[0].run.curve, conv.threshold);
    conv.epoch_b = convergence_epoch(arms[1].run.curve, conv.threshold);
    cmp.convergence = conv;
    return cmp;
  });
  stage("write comparison", [&] {
    writer.text("comparison.json", render([&](std::ostream& o) { write_comparison(result.comparison, o); }));
    writer.text("comparison.txt", result.comparison.render_table());
    const auto bins = pnl_histogram(arms[0].report, arms[1].report, 50);
    writer.text("pnl_histogram.csv", render([&](std::ostream& o) { write_histogram_csv(bins, o); }));

    const std::size_t n_show = std::min<std::size_t>(10, val_paths.n_paths());
    std::vector<std::size_t> rows(n_show);
    for (std::size_t i = 0; i < n_show; ++i) rows[i] = i;
    const RowMatrix h_a = predict(arms[0].model.params, val_features, rows);
    const RowMatrix h_b = predict(arms[1].model.params, val_features, rows);
    writer.text("hedges_sample.csv", render([&](std::ostream& o) {
                  o << "path,step,hedge_adam,hedge_kfac\n";
                  for (Eigen::Index i = 0; i < h_a.rows(); ++i) {
                    for (Eigen::Index t = 0; t < h_a.cols(); ++t) {
                      o << i << ',' << t << ',' << io::format_double(h_a(i, t)) << ',' << io::format_double(h_b(i, t))
                        << '\n';
                    }
                  }
                }));
  });

  json timing = json::object();
  for (const auto& arm : arms) {
    timing[to_string(arm.kind)] = {{"total_seconds", arm.run.total_seconds},
                                   {"mean_epoch_seconds", arm.run.total_seconds / arm.run.curve.size()},
                                   {"epochs", arm.run.curve.size()}};
  }
  timing["ratio_kfac_over_adam"] = arms[0].run.total_seconds > 0 ? arms[1].run.total_seconds / arms[0].run.total_seconds : 0.0;
  writer.volatile_text("timing.json", timing.dump(1) + "\n");

  result.files = writer.entries();
  std::string listing = config_hash + "\n";
  json files = json::array();
  for (const auto& e : result.files) {
    listing += e.name + " " + e.scope + " " + e.hash + "\n";
    files.push_back({{"name", e.name}, {"hash", e.hash}, {"scope", e.scope}});
  }
  result.manifest_hash = io::hex64(io::fnv1a64(listing));
  json manifest = {
      {"format", "hedgebench-manifest"},
      {"version", 1},
      {"tool_version", kToolVersion},
      {"config_hash", config_hash},
      {"sim_seed", config.sim.seed},
      {"train_seed", config.train.seed},
      {"hash_algorithm", "fnv1a64"},
      {"files", files},
      {"manifest_hash", result.manifest_hash},
  };
  io::write_file_atomic(out_dir / "manifest.json", [&](std::ostream& o) { o << manifest.dump(1) << '\n'; });

  if (result.had_previous) {
    result.verified_previous = previous_hash == result.manifest_hash;
    if (!result.verified_previous) {
      fail(ErrorKind::Determinism, "manifest hash " + result.manifest_hash + " differs from the previous run (" +
                                       previous_hash + ") with the same config");
    }
    note("manifest verified against the previous run");
  }
  return result;
}

}  // namespace hedgebench
