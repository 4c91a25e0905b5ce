/*
 * Copyright 2026 The mdsp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C interface to the mdsp library.
 *
 * Every function returns an mdsp_status. On failure a human-readable
 * message is available from mdsp_last_error() on the calling thread until
 * the next call into the library from that thread. Strings returned through
 * char** out-parameters are owned by the caller and released with
 * mdsp_string_free(). Handles are released with their *_free function;
 * passing NULL to any *_free function is a no-op.
 */
#ifndef MDSP_MDSP_H_
#define MDSP_MDSP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MDSP_BUILDING_LIBRARY)
#    define MDSP_API __declspec(dllexport)
#  else
#    define MDSP_API __declspec(dllimport)
#  endif
#else
#  define MDSP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mdsp_status {
  MDSP_OK = 0,
  MDSP_E_INVALID_ARGUMENT = 1,
  MDSP_E_IO = 2,
  MDSP_E_MISSING_COLUMN = 3,
  MDSP_E_UNBALANCED_PANEL = 4,
  MDSP_E_NON_FINITE_VALUE = 5,
  MDSP_E_DUPLICATE_ID = 6,
  MDSP_E_DEGENERATE_CORRELATION = 7,
  MDSP_E_ZERO_VARIANCE = 8,
  MDSP_E_SINGULAR_SYSTEM = 9,
  MDSP_E_DEGENERATE_DF = 10,
  MDSP_E_SHAPE_MISMATCH = 11,
  MDSP_E_NO_CONVERGENCE = 12,
  MDSP_E_INVALID_SPEC = 13,
  MDSP_E_INTERNAL = 99
} mdsp_status;

typedef struct mdsp_dataset mdsp_dataset;
typedef struct mdsp_config mdsp_config;
typedef struct mdsp_fit mdsp_fit;
typedef struct mdsp_tuning mdsp_tuning;
typedef struct mdsp_metrics mdsp_metrics;

MDSP_API const char* mdsp_version(void);
MDSP_API const char* mdsp_last_error(void);
MDSP_API const char* mdsp_status_name(mdsp_status status);
MDSP_API void mdsp_string_free(char* s);

/* Worker threads for replications, restarts and BIC sweeps. 0 = all cores. */
MDSP_API void mdsp_set_threads(unsigned threads);

/* ---- datasets ---------------------------------------------------------- */

/* schema_json may be NULL: columns id, time, y, x1.., z1... */
MDSP_API mdsp_status mdsp_dataset_load_csv(const char* path, const char* schema_json,
                                           mdsp_dataset** out);
MDSP_API mdsp_status mdsp_dataset_parse_csv(const char* text, const char* schema_json,
                                            mdsp_dataset** out);
/* Row-major arrays: y is N*m, x is (N*m)*p, z is (N*m)*q. */
MDSP_API mdsp_status mdsp_dataset_from_arrays(size_t n, size_t m, size_t p, size_t q,
                                             const double* y, const double* x,
                                             const double* z, mdsp_dataset** out);
MDSP_API mdsp_status mdsp_dataset_shape(const mdsp_dataset* d, size_t* n, size_t* m, size_t* p,
                                       size_t* q);
MDSP_API void mdsp_dataset_free(mdsp_dataset* d);

/* ---- configuration ----------------------------------------------------- */

MDSP_API mdsp_status mdsp_config_new(mdsp_config** out);
/* Keys: lambda, kappa, correlation, rho, groups, sign_constraints,
   eps_primal, eps_residual, max_iterations, restarts, seed, polish. */
MDSP_API mdsp_status mdsp_config_from_json(const char* json, mdsp_config** out);
MDSP_API mdsp_status mdsp_config_set_lambda(mdsp_config* c, double lambda);
MDSP_API mdsp_status mdsp_config_set_kappa(mdsp_config* c, double kappa);
/* kind: "ind", "exch" or "ar1". */
MDSP_API mdsp_status mdsp_config_set_correlation(mdsp_config* c, const char* kind);
/* Covariate k counts from 0; groups includes the zero group. */
MDSP_API mdsp_status mdsp_config_set_groups(mdsp_config* c, size_t k, int groups);
MDSP_API mdsp_status mdsp_config_set_seed(mdsp_config* c, uint64_t seed);
MDSP_API mdsp_status mdsp_config_to_json(const mdsp_config* c, char** out);
MDSP_API void mdsp_config_free(mdsp_config* c);

/* ---- fitting ----------------------------------------------------------- */

/* MDSP at the configured lambda. A fit that stops at max_iterations is
   still returned with converged = 0. */
MDSP_API mdsp_status mdsp_fit_run(const mdsp_dataset* d, const mdsp_config* c, mdsp_fit** out);
MDSP_API mdsp_status mdsp_fit_load_json(const char* json, mdsp_fit** out);
MDSP_API mdsp_status mdsp_fit_to_json(const mdsp_fit* f, char** out);
/* id,covariate,beta,group_label */
MDSP_API mdsp_status mdsp_fit_coefficients_csv(const mdsp_fit* f, char** out);
MDSP_API mdsp_status mdsp_fit_shape(const mdsp_fit* f, size_t* n, size_t* p, size_t* q);
/* beta is written row-major (N*p). */
MDSP_API mdsp_status mdsp_fit_beta(const mdsp_fit* f, double* beta);
MDSP_API mdsp_status mdsp_fit_alpha(const mdsp_fit* f, double* alpha);
MDSP_API mdsp_status mdsp_fit_summary(const mdsp_fit* f, double* lambda, int* converged,
                                     int* iterations, size_t* df);
/* Borrowed views, valid until the fit is freed. */
MDSP_API mdsp_status mdsp_fit_trace(const mdsp_fit* f, size_t* length, const double** objective,
                                   const double** primal_residual);
MDSP_API void mdsp_fit_free(mdsp_fit* f);

/* ---- tuning ------------------------------------------------------------ */

/* grid may be NULL (grid_length 0) for the default 30-point grid. */
MDSP_API mdsp_status mdsp_tune(const mdsp_dataset* d, const mdsp_config* c, const double* grid,
                              size_t grid_length, mdsp_tuning** out);
MDSP_API mdsp_status mdsp_select_groups(const mdsp_dataset* d, const mdsp_config* c,
                                       int min_groups, int max_groups, mdsp_tuning** out);
MDSP_API mdsp_status mdsp_tuning_to_json(const mdsp_tuning* t, char** out);
/* lambda,df,gcv */
MDSP_API mdsp_status mdsp_tuning_csv(const mdsp_tuning* t, char** out);
MDSP_API mdsp_status mdsp_tuning_chosen_lambda(const mdsp_tuning* t, double* lambda);
/* chosen_B has room for p entries. */
MDSP_API mdsp_status mdsp_tuning_chosen_groups(const mdsp_tuning* t, int* chosen_B, size_t p);
/* Copy of the fit at the chosen lambda; MDSP_E_INVALID_ARGUMENT for a group
   selection report, which carries no fit. */
MDSP_API mdsp_status mdsp_tuning_fit(const mdsp_tuning* t, mdsp_fit** out);
MDSP_API void mdsp_tuning_free(mdsp_tuning* t);

/* ---- new individuals --------------------------------------------------- */

/* Fits every individual of new_data with the trained directions frozen.
   has_lambda = 0 reuses the trained fit's lambda. Writes
   id,covariate,beta,group_label,selected; all_converged may be NULL. */
MDSP_API mdsp_status mdsp_predict_new(const mdsp_fit* trained, const mdsp_dataset* new_data,
                                     const mdsp_config* c, int has_lambda, double lambda_star,
                                     char** out_csv, int* all_converged);

/* ---- benchmarks -------------------------------------------------------- */

MDSP_API mdsp_status mdsp_bench_run(const char* spec_json, mdsp_metrics** out);
/* table: "1", "2", "3" or "semi-new". */
MDSP_API mdsp_status mdsp_bench_preset(const char* table, int replications, uint64_t seed,
                                      mdsp_metrics** out);
MDSP_API mdsp_status mdsp_metrics_csv(const mdsp_metrics* m, char** out);
MDSP_API mdsp_status mdsp_metrics_text(const mdsp_metrics* m, char** out);
MDSP_API mdsp_status mdsp_metrics_raw_csv(const mdsp_metrics* m, char** out);
/* Cells with more than 5% failed replications. */
MDSP_API mdsp_status mdsp_metrics_invalid_cells(const mdsp_metrics* m, size_t* count);
MDSP_API void mdsp_metrics_free(mdsp_metrics* m);

#ifdef __cplusplus
}
#endif

#endif /* MDSP_MDSP_H_ */
