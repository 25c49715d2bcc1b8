#include "hedgebench/hedgebench.h"

#include <algorithm>
#include <cstring>
#include <memory>
#include <tuple>
#include <fstream>
#include <mutex>
#include <new>
#include <string>

#include "hedgebench/config.hpp"
#include "hedgebench/error.hpp"
#include "hedgebench/eval_stats.hpp"
#include "hedgebench/io_util.hpp"
#include "hedgebench/market_sim.hpp"
#include "hedgebench/pipeline.hpp"
#include "hedgebench/train.hpp"

struct hb_config {
  hedgebench::RunConfig value;
};
struct hb_paths {
  hedgebench::PathBatch value;
};
struct hb_model {
  hedgebench::ModelDocument value;
};
struct hb_curve {
  std::vector<hedgebench::EpochRecord> value;
};
struct hb_report {
  hedgebench::MetricsReport value;
};
struct hb_comparison {
  hedgebench::ComparisonReport value;
  hedgebench::MetricsReport a;
  hedgebench::MetricsReport b;
};

namespace {

using namespace hedgebench;

thread_local std::string g_last_error;

std::mutex g_log_mutex;
hb_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void emit_log(const std::string& msg) {
  std::lock_guard lock(g_log_mutex);
  if (g_log_fn) g_log_fn(msg.c_str(), g_log_user);
}

LogFn logger() {
  std::lock_guard lock(g_log_mutex);
  if (!g_log_fn) return {};
  return emit_log;
}

hb_status to_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return HB_ERR_INVALID_ARGUMENT;
    case ErrorKind::Parse: return HB_ERR_PARSE;
    case ErrorKind::Validation: return HB_ERR_VALIDATION;
    case ErrorKind::Numeric: return HB_ERR_NUMERIC;
    case ErrorKind::Degenerate: return HB_ERR_DEGENERATE;
    case ErrorKind::Shape: return HB_ERR_SHAPE;
    case ErrorKind::Io: return HB_ERR_IO;
    case ErrorKind::Determinism: return HB_ERR_DETERMINISM;
  }
  return HB_ERR_INTERNAL;
}

template <typename Fn>
hb_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return HB_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return HB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HB_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) fail(ErrorKind::InvalidArgument, std::string(name) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* hb_version(void) { return kToolVersion; }

const char* hb_last_error(void) { return g_last_error.c_str(); }

const char* hb_status_name(hb_status status) {
  switch (status) {
    case HB_OK: return "ok";
    case HB_ERR_INVALID_ARGUMENT: return "invalid argument";
    case HB_ERR_PARSE: return "parse error";
    case HB_ERR_VALIDATION: return "validation error";
    case HB_ERR_NUMERIC: return "numeric error";
    case HB_ERR_DEGENERATE: return "degenerate data";
    case HB_ERR_SHAPE: return "shape mismatch";
    case HB_ERR_IO: return "i/o error";
    case HB_ERR_DETERMINISM: return "determinism violation";
    case HB_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void hb_set_log_callback(hb_log_fn fn, void* user) {
  std::lock_guard lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

hb_status hb_config_load(const char* path, hb_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto cfg = std::make_unique<hb_config>();
    if (path != nullptr) cfg->value = load_config(path);
    *out = cfg.release();
  });
}

hb_status hb_config_set(hb_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    // Per-key rules only; cross-key rules are checked when the config is used.
    set_config_value(config->value, key, value);
  });
}

hb_status hb_config_hash(const hb_config* config, char* buf, size_t buf_len) {
  return guarded([&] {
    require(config, "config");
    require(buf, "buf");
    if (buf_len < 17) fail(ErrorKind::InvalidArgument, "hash buffer needs 17 bytes");
    const auto h = config->value.content_hash();
    std::memcpy(buf, h.c_str(), h.size() + 1);
  });
}

void hb_config_free(hb_config* config) { delete config; }

hb_status hb_simulate(const hb_config* config, const uint64_t* seed_override, hb_paths** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = nullptr;
    const auto& c = config->value;
    c.validate();
    const std::uint64_t seed = seed_override ? *seed_override : c.sim.seed;
    auto p = std::make_unique<hb_paths>();
    p->value = simulate_paths(c.heston, c.sim.total(), seed);
    if (p->value.floor_clamps > 0) emit_log("price floor hit " + std::to_string(p->value.floor_clamps) + " times");
    *out = p.release();
  });
}

hb_status hb_paths_write(const hb_paths* paths, const char* path) {
  return guarded([&] {
    require(paths, "paths");
    require(path, "path");
    io::write_file_atomic(path, [&](std::ostream& o) { write_paths(paths->value, o); });
  });
}

hb_status hb_paths_read(const char* path, const hb_config* config, hb_paths** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, std::string("cannot open '") + path + "'");
    auto p = std::make_unique<hb_paths>();
    p->value = read_paths(in, config ? config->value.heston : HestonParams{});
    if (config) p->value.seed = config->value.sim.seed;
    *out = p.release();
  });
}

size_t hb_paths_count(const hb_paths* paths) { return paths ? paths->value.n_paths() : 0; }

int hb_paths_steps(const hb_paths* paths) { return paths ? paths->value.n_steps() : 0; }

void hb_paths_free(hb_paths* paths) { delete paths; }

hb_status hb_train(const hb_config* config, const hb_paths* paths, hb_optimizer optimizer, hb_model** model_out,
                   hb_curve** curve_out) {
  return guarded([&] {
    require(config, "config");
    require(paths, "paths");
    require(model_out, "model_out");
    *model_out = nullptr;
    if (curve_out) *curve_out = nullptr;
    const auto& c = config->value;
    c.validate();
    const auto& all = paths->value;
    if (all.n_steps() != c.heston.n_steps) {
      emit_log("path file has " + std::to_string(all.n_steps()) + " steps; config says " +
               std::to_string(c.heston.n_steps));
    }
    PathBatch train_paths, val_paths;
    if (all.n_paths() == c.sim.total()) {
      train_paths = all.rows(0, c.sim.n_train_paths);
      val_paths = all.rows(c.sim.n_train_paths, c.sim.n_val_paths);
    } else {
      std::tie(train_paths, val_paths) = split(all, c.sim.train_fraction());
    }
    const NormStats stats = compute_norm_stats(train_paths);
    const FeatureTensor tf = normalize(train_paths, stats);
    const FeatureTensor vf = normalize(val_paths, stats);
    TrainConfig tc = c.train;
    tc.optimizer = optimizer == HB_OPTIMIZER_KFAC ? OptimizerKind::Kfac : OptimizerKind::Adam;
    auto run = train(tc, c.net, {&tf, &train_paths.prices}, {&vf, &val_paths.prices}, c.option, c.cost, logger());

    auto m = std::make_unique<hb_model>();
    m->value.params = std::move(run.params);
    m->value.norm = stats;
    m->value.train_seed = tc.seed;
    m->value.optimizer = to_string(tc.optimizer);
    m->value.option = c.option;
    m->value.cost = c.cost;
    m->value.lambda = tc.lambda;
    m->value.n_train_paths = train_paths.n_paths();
    m->value.sim_seed = all.seed;
    m->value.config_hash = c.content_hash();
    if (curve_out) {
      auto cv = std::make_unique<hb_curve>();
      cv->value = std::move(run.curve);
      *curve_out = cv.release();
    }
    *model_out = m.release();
  });
}

hb_status hb_curve_write(const hb_curve* curve, const char* path) {
  return guarded([&] {
    require(curve, "curve");
    require(path, "path");
    io::write_file_atomic(path, [&](std::ostream& o) { write_curve_csv(curve->value, o); });
  });
}

size_t hb_curve_epochs(const hb_curve* curve) { return curve ? curve->value.size() : 0; }

void hb_curve_free(hb_curve* curve) { delete curve; }

hb_status hb_model_save(const hb_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_model(model->value, std::filesystem::path(path));
  });
}

hb_status hb_model_load(const char* path, hb_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<hb_model>();
    m->value = load_model(std::filesystem::path(path));
    *out = m.release();
  });
}

void hb_model_free(hb_model* model) { delete model; }

hb_status hb_evaluate(const hb_model* model, const hb_paths* paths, hb_subset subset, hb_report** out) {
  return guarded([&] {
    require(model, "model");
    require(paths, "paths");
    require(out, "out");
    *out = nullptr;
    const auto& m = model->value;
    const auto& all = paths->value;
    Provenance prov;
    PathBatch chosen;
    if (subset == HB_SUBSET_VALIDATION) {
      if (m.n_train_paths >= all.n_paths()) {
        fail(ErrorKind::InvalidArgument, "path file has no rows beyond the model's training set");
      }
      chosen = all.rows(m.n_train_paths, all.n_paths() - m.n_train_paths);
      prov.subset = "validation";
    } else {
      chosen = all;
      prov.subset = "all";
    }
    auto r = std::make_unique<hb_report>();
    r->value = evaluate(m, chosen, prov);
    *out = r.release();
  });
}

hb_status hb_report_write(const hb_report* report, const char* path) {
  return guarded([&] {
    require(report, "report");
    require(path, "path");
    write_report(report->value, std::filesystem::path(path));
  });
}

hb_status hb_report_write_csv(const hb_report* report, const char* path) {
  return guarded([&] {
    require(report, "report");
    require(path, "path");
    io::write_file_atomic(path, [&](std::ostream& o) { write_evaluation_csv(report->value, o); });
  });
}

hb_status hb_report_read(const char* path, hb_report** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto r = std::make_unique<hb_report>();
    r->value = read_report(std::filesystem::path(path));
    *out = r.release();
  });
}

hb_status hb_report_summary_get(const hb_report* report, hb_report_summary* out) {
  return guarded([&] {
    require(report, "report");
    require(out, "out");
    const auto& r = report->value;
    *out = {r.n_paths, r.pnl_variance, r.mean_cost, r.mean_pnl, r.sharpe};
  });
}

void hb_report_free(hb_report* report) { delete report; }

hb_status hb_compare(const hb_report* a, const hb_report* b, hb_comparison** out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<hb_comparison>();
    c->value = compare(a->value, b->value);
    c->a = a->value;
    c->b = b->value;
    *out = c.release();
  });
}

hb_status hb_comparison_write(const hb_comparison* cmp, const char* json_path, const char* histogram_csv_path) {
  return guarded([&] {
    require(cmp, "cmp");
    require(json_path, "json_path");
    io::write_file_atomic(json_path, [&](std::ostream& o) { write_comparison(cmp->value, o); });
    if (histogram_csv_path != nullptr) {
      const auto bins = pnl_histogram(cmp->a, cmp->b, 50);
      io::write_file_atomic(histogram_csv_path, [&](std::ostream& o) { write_histogram_csv(bins, o); });
    }
  });
}

hb_status hb_comparison_summary_get(const hb_comparison* cmp, hb_comparison_summary* out) {
  return guarded([&] {
    require(cmp, "cmp");
    require(out, "out");
    const auto& c = cmp->value;
    *out = {c.pnl_test.t_statistic,  c.pnl_test.degrees_of_freedom,  c.pnl_test.p_value,
            c.cost_test.t_statistic, c.cost_test.degrees_of_freedom, c.cost_test.p_value,
            c.variance_change_pct,   c.cost_change_pct,              c.sharpe_change_pct};
  });
}

hb_status hb_comparison_table(const hb_comparison* cmp, char* buf, size_t buf_len, size_t* needed) {
  return guarded([&] {
    require(cmp, "cmp");
    const std::string table = cmp->value.render_table();
    if (needed) *needed = table.size();
    if (buf != nullptr && buf_len > 0) {
      const std::size_t n = std::min(table.size(), buf_len - 1);
      std::memcpy(buf, table.data(), n);
      buf[n] = '\0';
    }
  });
}

void hb_comparison_free(hb_comparison* cmp) { delete cmp; }

hb_status hb_pipeline(const hb_config* config, const char* out_dir, hb_pipeline_result* out) {
  return guarded([&] {
    require(config, "config");
    require(out_dir, "out_dir");
    const auto res = run_pipeline(config->value, out_dir, logger());
    if (out) {
      std::memset(out, 0, sizeof *out);
      std::memcpy(out->manifest_hash, res.manifest_hash.c_str(), std::min<std::size_t>(16, res.manifest_hash.size()));
      out->had_previous = res.had_previous ? 1 : 0;
      out->verified_previous = res.verified_previous ? 1 : 0;
    }
  });
}

}  // extern "C"
