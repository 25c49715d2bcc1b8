// Command-line front end. Talks to the library only through hedgebench.h.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hedgebench/hedgebench.h"

namespace {

struct Failure {
  std::string stage;
  hb_status status;
};

void check(hb_status status, const std::string& stage) {
  if (status != HB_OK) throw Failure{stage, status};
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Config = Handle<hb_config, hb_config_free>;
using Paths = Handle<hb_paths, hb_paths_free>;
using Model = Handle<hb_model, hb_model_free>;
using Curve = Handle<hb_curve, hb_curve_free>;
using Report = Handle<hb_report, hb_report_free>;
using Comparison = Handle<hb_comparison, hb_comparison_free>;

void log_to_stderr(const char* msg, void*) { std::cerr << "[hedgebench] " << msg << '\n'; }

void load_config(Config& cfg, const std::string& path) {
  check(hb_config_load(path.empty() ? nullptr : path.c_str(), cfg.out()), "load config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-hedging optimizer benchmark: Heston simulation, LSTM hedging, Adam vs K-FAC"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hb_version()));
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  std::string config_path, out_path, paths_path, model_path, curve_path, report_path;
  std::string report_a, report_b, out_dir, optimizer = "adam", subset = "all";
  std::optional<std::uint64_t> seed;

  auto* sim = app.add_subcommand("simulate", "Simulate Heston paths to CSV");
  sim->add_option("--config", config_path, "Config file (defaults if omitted)")->check(CLI::ExistingFile);
  sim->add_option("--out", out_path, "Output path CSV")->required();
  sim->add_option("--seed", seed, "Override sim.seed");

  auto* tr = app.add_subcommand("train", "Train a hedging policy");
  tr->add_option("--config", config_path, "Config file (defaults if omitted)")->check(CLI::ExistingFile);
  tr->add_option("--paths", paths_path, "Path CSV (training rows first, then validation rows)")
      ->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--optimizer", optimizer, "Optimizer")->check(CLI::IsMember({"adam", "kfac"}));
  tr->add_option("--model-out", model_path, "Model JSON output")->required();
  tr->add_option("--curve-out", curve_path, "Training curve CSV output");

  auto* ev = app.add_subcommand("evaluate", "Evaluate a model on a path file");
  ev->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--paths", paths_path, "Path CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--report-out", report_path, "Report JSON output")->required();
  ev->add_option("--subset", subset, "Rows to evaluate: all, or the rows after the model's training set")
      ->check(CLI::IsMember({"all", "validation"}));
  std::string eval_csv;
  ev->add_option("--csv-out", eval_csv, "Per-path P&L CSV output");

  auto* cmp = app.add_subcommand("compare", "Compare two evaluation reports");
  cmp->add_option("--report-a", report_a, "Baseline report")->required()->check(CLI::ExistingFile);
  cmp->add_option("--report-b", report_b, "Challenger report")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", out_path, "Comparison JSON output")->required();
  std::string hist_path;
  cmp->add_option("--histogram-out", hist_path, "P&L histogram CSV output");

  auto* pipe = app.add_subcommand("pipeline", "Run the full Adam vs K-FAC experiment");
  pipe->add_option("--config", config_path, "Config file (defaults if omitted)")->check(CLI::ExistingFile);
  pipe->add_option("--out-dir", out_dir, "Artifact directory")->required();

  CLI11_PARSE(app, argc, argv);
  if (!quiet) hb_set_log_callback(log_to_stderr, nullptr);

  try {
    if (*sim) {
      Config cfg;
      load_config(cfg, config_path);
      Paths paths;
      check(hb_simulate(cfg.get(), seed ? &*seed : nullptr, paths.out()), "simulate");
      check(hb_paths_write(paths.get(), out_path.c_str()), "write paths");
    } else if (*tr) {
      Config cfg;
      load_config(cfg, config_path);
      Paths paths;
      check(hb_paths_read(paths_path.c_str(), cfg.get(), paths.out()), "read paths");
      Model model;
      Curve curve;
      const hb_optimizer kind = optimizer == "kfac" ? HB_OPTIMIZER_KFAC : HB_OPTIMIZER_ADAM;
      check(hb_train(cfg.get(), paths.get(), kind, model.out(), curve.out()), "train " + optimizer);
      check(hb_model_save(model.get(), model_path.c_str()), "write model");
      if (!curve_path.empty()) check(hb_curve_write(curve.get(), curve_path.c_str()), "write curve");
    } else if (*ev) {
      Model model;
      check(hb_model_load(model_path.c_str(), model.out()), "read model");
      Paths paths;
      check(hb_paths_read(paths_path.c_str(), nullptr, paths.out()), "read paths");
      Report report;
      const hb_subset which = subset == "validation" ? HB_SUBSET_VALIDATION : HB_SUBSET_ALL;
      check(hb_evaluate(model.get(), paths.get(), which, report.out()), "evaluate");
      check(hb_report_write(report.get(), report_path.c_str()), "write report");
      if (!eval_csv.empty()) check(hb_report_write_csv(report.get(), eval_csv.c_str()), "write evaluation csv");
      hb_report_summary s{};
      check(hb_report_summary_get(report.get(), &s), "summarize");
      std::printf("paths %zu  pnl variance %.6g  mean cost %.6g  mean pnl %.6g  sharpe %.6g\n", s.n_paths,
                  s.pnl_variance, s.mean_cost, s.mean_pnl, s.sharpe);
    } else if (*cmp) {
      Report a, b;
      check(hb_report_read(report_a.c_str(), a.out()), "read report a");
      check(hb_report_read(report_b.c_str(), b.out()), "read report b");
      Comparison c;
      check(hb_compare(a.get(), b.get(), c.out()), "compare");
      check(hb_comparison_write(c.get(), out_path.c_str(), hist_path.empty() ? nullptr : hist_path.c_str()),
            "write comparison");
      std::size_t needed = 0;
      check(hb_comparison_table(c.get(), nullptr, 0, &needed), "render table");
      std::string table(needed + 1, '\0');
      check(hb_comparison_table(c.get(), table.data(), table.size(), nullptr), "render table");
      table.resize(needed);
      std::cout << table;
    } else if (*pipe) {
      Config cfg;
      load_config(cfg, config_path);
      hb_pipeline_result res{};
      check(hb_pipeline(cfg.get(), out_dir.c_str(), &res), "pipeline");
      std::cout << "manifest " << res.manifest_hash;
      if (res.had_previous) std::cout << " (matches previous run)";
      std::cout << '\n';
    }
  } catch (const Failure& f) {
    std::cerr << "hedgebench: " << f.stage << " failed (" << hb_status_name(f.status) << "): " << hb_last_error()
              << '\n';
    return static_cast<int>(f.status);
  }
  return 0;
}
