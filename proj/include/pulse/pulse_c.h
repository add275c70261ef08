/* C interface to the PULSE / K-class library.
 *
 * Every function returns a pulse_status. On failure the message and the
 * library error code of the calling thread are available from
 * pulse_last_error() and pulse_last_error_code() until the next call.
 * Handles are opaque and owned by the caller; release them with the
 * matching *_free function (NULL is accepted). Strings returned by
 * accessors stay valid as long as the handle that produced them.
 */
#ifndef PULSE_C_H
#define PULSE_C_H

#include <stddef.h>
#include <stdint.h>

#if defined(PULSE_C_BUILDING)
#define PULSE_API __attribute__((visibility("default")))
#else
#define PULSE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum pulse_status {
  PULSE_OK = 0,
  PULSE_ERR_INTERNAL = 1,
  PULSE_ERR_USAGE = 2,
  PULSE_ERR_DATA = 3,
  PULSE_ERR_NUMERICAL = 4,
  PULSE_ERR_DUAL_INFEASIBLE = 5
} pulse_status;

typedef enum pulse_preprocess {
  PULSE_PREPROCESS_NONE = 0,
  PULSE_PREPROCESS_CENTER = 1,
  PULSE_PREPROCESS_INTERCEPT = 2
} pulse_preprocess;

typedef enum pulse_scaling { PULSE_SCALING_AR = 0, PULSE_SCALING_PLAIN = 1 } pulse_scaling;

typedef enum pulse_identification {
  PULSE_UNDER_IDENTIFIED = -1,
  PULSE_JUST_IDENTIFIED = 0,
  PULSE_OVER_IDENTIFIED = 1
} pulse_identification;

typedef enum pulse_message {
  PULSE_MESSAGE_NONE = 0,
  PULSE_MESSAGE_OLS_ACCEPTED = 1,
  PULSE_MESSAGE_TSLS_REJECTED = 2
} pulse_message;

typedef struct pulse_dataset pulse_dataset;
typedef struct pulse_design pulse_design;
typedef struct pulse_result pulse_result;
typedef struct pulse_sem pulse_sem;
typedef struct pulse_experiment pulse_experiment;
typedef struct pulse_experiment_result pulse_experiment_result;

typedef struct pulse_options {
  double p_min;
  pulse_scaling scaling;
  uint64_t precision;
  /* Estimator used when TSLS is rejected: "tsls", "liml", "fuller:A", or
   * "none" to fail with PULSE_ERR_DUAL_INFEASIBLE. NULL means "fuller:4". */
  const char* fallback;
  int use_lambda_bound;
} pulse_options;

typedef struct pulse_test_result {
  double statistic;
  double threshold;
  int accepted;
  double p_value_bound;
} pulse_test_result;

PULSE_API const char* pulse_version(void);
PULSE_API const char* pulse_last_error(void);
/* Library error name such as "SingularGram"; empty when the last call succeeded. */
PULSE_API const char* pulse_last_error_code(void);
PULSE_API void pulse_options_default(pulse_options* opts);

/* ---- data ---- */
PULSE_API pulse_status pulse_dataset_load_csv(const char* path, const char* target, const char* const* endogenous,
                                              size_t n_endogenous, const char* const* exogenous,
                                              size_t n_exogenous, pulse_dataset** out);
/* x is n x d and a is n x q, both row-major. */
PULSE_API pulse_status pulse_dataset_from_arrays(size_t n, size_t d, size_t q, const double* y, const double* x,
                                                 const double* a, pulse_dataset** out);
PULSE_API void pulse_dataset_free(pulse_dataset* ds);
PULSE_API pulse_status pulse_dataset_dims(const pulse_dataset* ds, size_t* n, size_t* d, size_t* q);
/* Columns in the order exogenous, endogenous, target. */
PULSE_API pulse_status pulse_dataset_write_csv(const pulse_dataset* ds, const char* path);

/* ---- design ---- */
PULSE_API pulse_status pulse_design_create(const pulse_dataset* ds, const int* included_endogenous, size_t n_endo,
                                           const int* included_exogenous, size_t n_exo, pulse_preprocess pre,
                                           pulse_design** out);
PULSE_API void pulse_design_free(pulse_design* design);
PULSE_API pulse_status pulse_design_dims(const pulse_design* design, size_t* n, size_t* p, size_t* q, size_t* d1,
                                         pulse_identification* id);
PULSE_API const char* pulse_design_coef_name(const pulse_design* design, size_t i);

/* ---- estimation ---- */
/* spec: "ols", "tsls", "kclass:K", "anchor:L", "liml", "fuller:A", "modified-tsls". */
PULSE_API pulse_status pulse_estimate(const pulse_design* design, const char* spec, pulse_result** out);
PULSE_API pulse_status pulse_run(const pulse_design* design, const pulse_options* opts, pulse_result** out);
PULSE_API void pulse_result_free(pulse_result* res);
PULSE_API size_t pulse_result_coef_count(const pulse_result* res);
PULSE_API pulse_status pulse_result_coefs(const pulse_result* res, double* buf, size_t len);
/* *has is set to 0 when the value is absent. */
PULSE_API pulse_status pulse_result_kappa(const pulse_result* res, double* kappa, int* has);
PULSE_API pulse_status pulse_result_lambda(const pulse_result* res, double* lambda, int* has);
PULSE_API pulse_message pulse_result_message(const pulse_result* res);
/* Warning line for the message, "" for none. */
PULSE_API const char* pulse_result_warning(const pulse_result* res);
PULSE_API int pulse_result_fallback_used(const pulse_result* res);
/* Test at the solution; only filled for pulse_run results. */
PULSE_API pulse_status pulse_result_test(const pulse_result* res, pulse_test_result* out);
PULSE_API size_t pulse_result_diagnostic_count(const pulse_result* res);
PULSE_API const char* pulse_result_diagnostic(const pulse_result* res, size_t i);

/* ---- inference ---- */
PULSE_API pulse_status pulse_test(const pulse_design* design, const double* alpha, size_t len,
                                  const pulse_options* opts, pulse_test_result* out);
/* g receives the d1 x d1 matrix row-major when g_len >= d1 * d1 (may be NULL). */
PULSE_API pulse_status pulse_weak_instrument(const pulse_design* design, double* min_eigenvalue, int* passes,
                                             double* g, size_t g_len);
PULSE_API pulse_status pulse_chi2_quantile(int dof, double prob, double* out);

/* ---- simulation ---- */
PULSE_API pulse_status pulse_sem_load(const char* path, pulse_sem** out);
PULSE_API void pulse_sem_free(pulse_sem* sem);
/* Replaces the intervention embedded in the SEM file. */
PULSE_API pulse_status pulse_sem_set_intervention_file(pulse_sem* sem, const char* path);
/* "none", "hard" or "stochastic". */
PULSE_API const char* pulse_sem_intervention_kind(const pulse_sem* sem);
/* Intervention as a JSON object. */
PULSE_API const char* pulse_sem_intervention_json(const pulse_sem* sem);
PULSE_API pulse_status pulse_sem_sample(const pulse_sem* sem, size_t n, uint64_t seed, pulse_dataset** out);

/* ---- experiments ---- */
PULSE_API pulse_status pulse_experiment_from_file(const char* path, pulse_experiment** out);
PULSE_API pulse_status pulse_experiment_from_design(const char* design, pulse_experiment** out);
PULSE_API void pulse_experiment_free(pulse_experiment* exp);
PULSE_API const char* pulse_experiment_design(const pulse_experiment* exp);
PULSE_API const char* pulse_experiment_design_names(void);
PULSE_API pulse_status pulse_experiment_set_repetitions(pulse_experiment* exp, int reps);
PULSE_API pulse_status pulse_experiment_set_seed(pulse_experiment* exp, uint64_t seed);
PULSE_API pulse_status pulse_experiment_set_threads(pulse_experiment* exp, int threads);
/* Runs and writes the report files into out_dir. */
PULSE_API pulse_status pulse_experiment_run(const pulse_experiment* exp, const char* out_dir,
                                            pulse_experiment_result** out);
PULSE_API void pulse_experiment_result_free(pulse_experiment_result* res);
PULSE_API size_t pulse_experiment_cell_count(const pulse_experiment_result* res);
PULSE_API size_t pulse_experiment_param_count(const pulse_experiment_result* res);
PULSE_API const char* pulse_experiment_param_name(const pulse_experiment_result* res, size_t j);
PULSE_API double pulse_experiment_param_value(const pulse_experiment_result* res, size_t cell, size_t j);
PULSE_API size_t pulse_experiment_method_count(const pulse_experiment_result* res);
PULSE_API const char* pulse_experiment_method_label(const pulse_experiment_result* res, size_t k);
/* metric: "trace_mse", "det_mse", "rmse", "bias_norm", "median_abs_error" or
 * "repetitions_used". NaN for unknown metrics or out-of-range indices. */
PULSE_API double pulse_experiment_metric(const pulse_experiment_result* res, size_t cell, size_t k,
                                         const char* metric);
PULSE_API size_t pulse_experiment_file_count(const pulse_experiment_result* res);
PULSE_API const char* pulse_experiment_file(const pulse_experiment_result* res, size_t i);
PULSE_API size_t pulse_experiment_warning_count(const pulse_experiment_result* res);
PULSE_API const char* pulse_experiment_warning(const pulse_experiment_result* res, size_t i);

#ifdef __cplusplus
}
#endif

#endif
