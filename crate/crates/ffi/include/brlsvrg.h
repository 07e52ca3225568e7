#ifndef BRLSVRG_H
#define BRLSVRG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every fallible function.
 */
typedef enum {
  BR_STATUS_OK = 0,
  BR_STATUS_NULL_POINTER = 1,
  BR_STATUS_INVALID_ARGUMENT = 2,
  BR_STATUS_PARSE_ERROR = 3,
  BR_STATUS_IO_ERROR = 4,
  BR_STATUS_NUMERICAL_ERROR = 5,
  BR_STATUS_NOT_CONVERGED = 6,
  BR_STATUS_CONFIG_ERROR = 7,
  BR_STATUS_DOMAIN_ERROR = 8,
  BR_STATUS_BUFFER_TOO_SMALL = 9,
  BR_STATUS_PANIC = 10,
} BrStatus;

/**
 * Complexity formulas selectable through [`br_complexity_bounds`].
 */
typedef enum {
  BR_COMPLEXITY_METHOD_BR_LSVRG = 0,
  BR_COMPLEXITY_METHOD_BYRD_SAGA = 1,
  BR_COMPLEXITY_METHOD_BYZ_VR_MARINA = 2,
} BrComplexityMethod;

/**
 * Opaque dataset handle.
 */
typedef struct BrDataset BrDataset;

/**
 * Opaque regularized logistic-regression objective.
 */
typedef struct BrObjective BrObjective;

/**
 * Opaque result of [`br_run`].
 */
typedef struct BrTrace BrTrace;

/**
 * One evaluation point of a run trace.
 */
typedef struct {
  uint64_t k;
  double subopt;
  double dist2;
  double sigma_k2;
  double psi_k;
  uint64_t oracle_calls;
  double elapsed_s;
} BrTraceRecord;

typedef struct {
  double l;
  double mu;
  double m;
  double n;
  double b;
  double c;
  double delta;
  double eps;
} BrComplexityInputs;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length plus one,
 * or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t br_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *br_version(void);

/**
 * Parses LIBSVM text. `dim == 0` infers the dimension from the data.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
BrStatus br_dataset_parse_libsvm(const char *text, size_t dim, BrDataset **out);

/**
 * Loads a LIBSVM file (`.gz` is decompressed). `dim == 0` infers the dimension.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
BrStatus br_dataset_load(const char *path, size_t dim, BrDataset **out);

/**
 * Synthetic one-hot dataset shaped like LIBSVM `mushrooms`.
 *
 * # Safety
 * `out` must be writable.
 */
BrStatus br_dataset_synthetic(size_t rows, uint64_t seed, BrDataset **out);

/**
 * Seeded subset of `count` rows without replacement, keeping the dimension.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` must be writable.
 */
BrStatus br_dataset_subsample(const BrDataset *ds, size_t count, uint64_t seed, BrDataset **out);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t br_dataset_len(const BrDataset *ds);

/**
 * Feature dimension, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t br_dataset_dim(const BrDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void br_dataset_free(BrDataset *ds);

/**
 * Logistic objective over a copy of `ds`. `l2 <= 0` selects the default
 * weight `L0/1000`.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` must be writable.
 */
BrStatus br_objective_new(const BrDataset *ds, double l2, BrObjective **out);

/**
 * Writes `L`, `μ` and the ℓ2 weight; any output pointer may be null.
 *
 * # Safety
 * `obj` must be a live handle; non-null outputs must be writable.
 */
BrStatus br_objective_constants(const BrObjective *obj, double *lipschitz, double *mu, double *l2);

/**
 * # Safety
 * `obj` must be null or a live handle.
 */
size_t br_objective_dim(const BrObjective *obj);

/**
 * `f(x)`.
 *
 * # Safety
 * `x` must point to `len` values; `out` must be writable.
 */
BrStatus br_objective_loss(const BrObjective *obj, const double *x, size_t len, double *out);

/**
 * `∇f(x)` written into `grad` (`len` values, equal to the dimension).
 *
 * # Safety
 * `x` must point to `len` values and `grad` to `len` writable values.
 */
BrStatus br_objective_grad(const BrObjective *obj, const double *x, size_t len, double *grad);

/**
 * # Safety
 * `obj` must be null or a handle not yet freed.
 */
void br_objective_free(BrObjective *obj);

/**
 * Solves `min f` to gradient norm `tol`. Writes `x*` (`len` values) and `f*`.
 *
 * # Safety
 * `x_star` must point to `len` writable values; `f_star` must be writable.
 */
BrStatus br_solve_reference(const BrObjective *obj,
                            double tol,
                            size_t max_iter,
                            double *x_star,
                            size_t len,
                            double *f_star);

/**
 * Aggregates `count` vectors of length `dim` stored row-major in `vectors`.
 * `spec_json` is an aggregator spec, e.g.
 * `{"base":"geometric-median","bucketing":{"bucket_size":2}}`.
 *
 * # Safety
 * `vectors` must hold `count * dim` values and `out` `dim` writable values.
 */
BrStatus br_aggregate(const char *spec_json,
                      const double *vectors,
                      size_t count,
                      size_t dim,
                      uint64_t round_seed,
                      double *out);

/**
 * Runs the simulator. `config_json` is a run configuration; `x0` may be null
 * for the zero vector. When `x_star` is non-null the trace reports
 * suboptimality and distances against (`x_star`, `f_star`).
 *
 * # Safety
 * Non-null vectors must hold `len` values; `out` must be writable.
 */
BrStatus br_run(const BrObjective *obj,
                const char *config_json,
                const double *x0,
                const double *x_star,
                double f_star,
                size_t len,
                BrTrace **out);

/**
 * Number of records in the trace, or 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t br_trace_len(const BrTrace *trace);

/**
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
BrStatus br_trace_record(const BrTrace *trace, size_t index, BrTraceRecord *out);

/**
 * Writes the round after which the run diverged, or -1 if it completed.
 *
 * # Safety
 * `trace` must be a live handle; `diverged_round` must be writable.
 */
BrStatus br_trace_status(const BrTrace *trace, int64_t *diverged_round);

/**
 * Copies the last iterate into `out` (`len` values, at least the dimension).
 *
 * # Safety
 * `out` must point to `len` writable values.
 */
BrStatus br_trace_final_x(const BrTrace *trace, double *out, size_t len);

/**
 * Total component-gradient evaluations by honest workers.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
uint64_t br_trace_honest_oracle_calls(const BrTrace *trace);

/**
 * Writes the trace as CSV to `path`.
 *
 * # Safety
 * `trace` must be a live handle; `path` a NUL-terminated string.
 */
BrStatus br_trace_write_csv(const BrTrace *trace, const char *path, bool include_timing);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void br_trace_free(BrTrace *trace);

/**
 * Iteration and oracle-call bounds with absolute constants set to 1.
 *
 * # Safety
 * `inputs` must be readable; `iterations` and `oracle_calls` writable.
 */
BrStatus br_complexity_bounds(BrComplexityMethod method,
                              const BrComplexityInputs *inputs,
                              double *iterations,
                              double *oracle_calls);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRLSVRG_H */
