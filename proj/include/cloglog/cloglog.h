/* Apache License, Version 2.0, refer to LICENSE.txt */

/*
 * C interface to the cloglog library. Every function returns a status code;
 * on failure cloglog_last_error() describes the problem (per thread, valid
 * until the next call). Handles are opaque and owned by the caller.
 */

#ifndef CLOGLOG_H
#define CLOGLOG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cloglog_status {
  CLOGLOG_OK = 0,
  CLOGLOG_INTERNAL = 1,
  CLOGLOG_USAGE = 2,
  CLOGLOG_DATA = 3,
  CLOGLOG_NUMERICAL = 4,
  CLOGLOG_VERIFY_FAILED = 5
} cloglog_status;

typedef struct cloglog_config cloglog_config;
typedef struct cloglog_dataset cloglog_dataset;
typedef struct cloglog_fit cloglog_fit;

/* Receives one chunk of report text. */
typedef void (*cloglog_text_fn)(const char* text, void* user);

const char* cloglog_last_error(void);
const char* cloglog_version(void);

/* Warnings go to stderr unless a sink is installed; NULL restores stderr. */
void cloglog_set_warning_sink(cloglog_text_fn fn, void* user);

/* ---- configuration: flat key=value settings with documented defaults */
cloglog_status cloglog_config_create(cloglog_config** out);
void cloglog_config_destroy(cloglog_config* config);
cloglog_status cloglog_config_set(cloglog_config* config, const char* key, const char* value);
cloglog_status cloglog_config_load(cloglog_config* config, const char* path);
/* Copies the effective value (NUL terminated, truncated to size). */
cloglog_status cloglog_config_get(const cloglog_config* config, const char* key, char* buffer, size_t size);

/* ---- pipelines: fit-binary, fit-ordinal, fit-density, fit-survival, predict,
 * cv, elpd, project, simulate, verify, sbc. Report text goes to `out`.
 * CLOGLOG_VERIFY_FAILED means a check ran and failed. */
cloglog_status cloglog_run(const char* command, const cloglog_config* config, cloglog_text_fn out, void* user);

/* ---- datasets */
/* Roles come from the outcome/time/status/predictors/categorical keys and the
 * model key (binary and ordinal outcomes are validated). */
cloglog_status cloglog_dataset_load(const char* path, const cloglog_config* config, cloglog_dataset** out);
cloglog_status cloglog_dataset_simulate_dunson(size_t n, uint64_t seed, cloglog_dataset** out);
cloglog_status cloglog_dataset_write(const cloglog_dataset* data, const char* path);
void cloglog_dataset_destroy(cloglog_dataset* data);
size_t cloglog_dataset_rows(const cloglog_dataset* data);
size_t cloglog_dataset_cols(const cloglog_dataset* data);
cloglog_status cloglog_dataset_value(const cloglog_dataset* data, size_t row, size_t col, double* out);
const char* cloglog_dataset_column_name(const cloglog_dataset* data, size_t col);

/* ---- fits (single chain, seeded from the config) */
cloglog_status cloglog_fit_run(const cloglog_config* config, const cloglog_dataset* data, cloglog_fit** out);
cloglog_status cloglog_fit_load(const char* model_path, cloglog_fit** out);
cloglog_status cloglog_fit_save(const cloglog_fit* fit, const char* model_path);
void cloglog_fit_destroy(cloglog_fit* fit);
size_t cloglog_fit_num_draws(const cloglog_fit* fit);
size_t cloglog_fit_num_predictors(const cloglog_fit* fit);
/* Posterior mean of a model-specific quantity at one point x (length
 * num_predictors): binary Pr(Y=1); ordinal Pr(Y=k); density f(value | x);
 * survival S(value | x). `k` is ignored except for ordinal models. */
cloglog_status cloglog_fit_predict(const cloglog_fit* fit, const double* x, size_t p, int k, double value,
                                   double* out);
/* PSIS-LOO from the fit's pointwise log likelihood. */
cloglog_status cloglog_fit_elpd(const cloglog_fit* fit, double* elpd, double* se);

/* ---- oracles */
cloglog_status cloglog_oracle_integrated_marginal(double a, double b, double A, double B, double* out);
cloglog_status cloglog_check_link_equivalence(const double* gamma, size_t num_gamma, double r, double* out);

#ifdef __cplusplus
}
#endif

#endif
