/*
 * hedgebench C API.
 *
 * Every function returns an hb_status; on failure hb_last_error() returns a
 * thread-local diagnostic. Objects are opaque handles released with the
 * matching *_free function (passing NULL is allowed).
 */
#ifndef HEDGEBENCH_H
#define HEDGEBENCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(HEDGEBENCH_BUILDING_LIBRARY)
#    define HB_API __declspec(dllexport)
#  else
#    define HB_API __declspec(dllimport)
#  endif
#else
#  define HB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hb_status {
  HB_OK = 0,
  HB_ERR_INVALID_ARGUMENT = 1,
  HB_ERR_PARSE = 2,
  HB_ERR_VALIDATION = 3,
  HB_ERR_NUMERIC = 4,
  HB_ERR_DEGENERATE = 5,
  HB_ERR_SHAPE = 6,
  HB_ERR_IO = 7,
  HB_ERR_DETERMINISM = 8,
  HB_ERR_INTERNAL = 99
} hb_status;

typedef enum hb_optimizer { HB_OPTIMIZER_ADAM = 0, HB_OPTIMIZER_KFAC = 1 } hb_optimizer;

typedef enum hb_subset { HB_SUBSET_ALL = 0, HB_SUBSET_VALIDATION = 1 } hb_subset;

typedef struct hb_config hb_config;
typedef struct hb_paths hb_paths;
typedef struct hb_model hb_model;
typedef struct hb_curve hb_curve;
typedef struct hb_report hb_report;
typedef struct hb_comparison hb_comparison;

typedef void (*hb_log_fn)(const char* message, void* user);

typedef struct hb_report_summary {
  size_t n_paths;
  double pnl_variance;
  double mean_cost;
  double mean_pnl;
  double sharpe;
} hb_report_summary;

typedef struct hb_comparison_summary {
  double pnl_t;
  double pnl_df;
  double pnl_p;
  double cost_t;
  double cost_df;
  double cost_p;
  double variance_change_pct;
  double cost_change_pct;
  double sharpe_change_pct;
} hb_comparison_summary;

typedef struct hb_pipeline_result {
  char manifest_hash[17];
  int had_previous;
  int verified_previous;
} hb_pipeline_result;

HB_API const char* hb_version(void);
HB_API const char* hb_last_error(void);
HB_API const char* hb_status_name(hb_status status);

/* Progress messages from long-running calls; NULL disables logging. */
HB_API void hb_set_log_callback(hb_log_fn fn, void* user);

/* --- configuration ------------------------------------------------------ */
/* path == NULL yields the default configuration. */
HB_API hb_status hb_config_load(const char* path, hb_config** out);
/* Checks the key and its own value range; rules spanning several keys are
 * checked when the config is used. */
HB_API hb_status hb_config_set(hb_config* config, const char* key, const char* value);
/* Writes 16 hex digits plus NUL; buf must hold at least 17 bytes. */
HB_API hb_status hb_config_hash(const hb_config* config, char* buf, size_t buf_len);
HB_API void hb_config_free(hb_config* config);

/* --- paths --------------------------------------------------------------- */
/* Simulates sim.n_train_paths + sim.n_val_paths paths; seed_override may be NULL. */
HB_API hb_status hb_simulate(const hb_config* config, const uint64_t* seed_override, hb_paths** out);
HB_API hb_status hb_paths_write(const hb_paths* paths, const char* path);
/* config may be NULL; it supplies coefficients not stored in the CSV. */
HB_API hb_status hb_paths_read(const char* path, const hb_config* config, hb_paths** out);
HB_API size_t hb_paths_count(const hb_paths* paths);
HB_API int hb_paths_steps(const hb_paths* paths);
HB_API void hb_paths_free(hb_paths* paths);

/* --- training ------------------------------------------------------------ */
/* Splits `paths` into sim.n_train_paths training rows and the remaining
 * validation rows (or by the same fraction when the count differs). */
HB_API hb_status hb_train(const hb_config* config, const hb_paths* paths, hb_optimizer optimizer,
                          hb_model** model_out, hb_curve** curve_out);
HB_API hb_status hb_curve_write(const hb_curve* curve, const char* path);
HB_API size_t hb_curve_epochs(const hb_curve* curve);
HB_API void hb_curve_free(hb_curve* curve);

HB_API hb_status hb_model_save(const hb_model* model, const char* path);
HB_API hb_status hb_model_load(const char* path, hb_model** out);
HB_API void hb_model_free(hb_model* model);

/* --- evaluation ---------------------------------------------------------- */
HB_API hb_status hb_evaluate(const hb_model* model, const hb_paths* paths, hb_subset subset, hb_report** out);
HB_API hb_status hb_report_write(const hb_report* report, const char* path);
/* Per-path CSV path,pnl,cost,trading_gain. */
HB_API hb_status hb_report_write_csv(const hb_report* report, const char* path);
HB_API hb_status hb_report_read(const char* path, hb_report** out);
HB_API hb_status hb_report_summary_get(const hb_report* report, hb_report_summary* out);
HB_API void hb_report_free(hb_report* report);

HB_API hb_status hb_compare(const hb_report* a, const hb_report* b, hb_comparison** out);
/* histogram_csv_path may be NULL. */
HB_API hb_status hb_comparison_write(const hb_comparison* cmp, const char* json_path, const char* histogram_csv_path);
HB_API hb_status hb_comparison_summary_get(const hb_comparison* cmp, hb_comparison_summary* out);
/* Copies the rendered table into buf (truncated, NUL-terminated) and returns
 * the full length through needed (excluding NUL). buf may be NULL. */
HB_API hb_status hb_comparison_table(const hb_comparison* cmp, char* buf, size_t buf_len, size_t* needed);
HB_API void hb_comparison_free(hb_comparison* cmp);

/* --- end to end ---------------------------------------------------------- */
HB_API hb_status hb_pipeline(const hb_config* config, const char* out_dir, hb_pipeline_result* out);

#ifdef __cplusplus
}
#endif

#endif /* HEDGEBENCH_H */
