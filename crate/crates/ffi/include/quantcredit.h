#ifndef QUANTCREDIT_H
#define QUANTCREDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QcStatus {
  QC_STATUS_OK = 0,
  QC_STATUS_NULL_POINTER = 1,
  QC_STATUS_INVALID_ARGUMENT = 2,
  QC_STATUS_NUMERICAL = 3,
  QC_STATUS_IO = 4,
  QC_STATUS_BUFFER_TOO_SMALL = 5,
  QC_STATUS_PANIC = 6,
} QcStatus;

/**
 * Opaque quantization tree.
 */
typedef struct QcTree QcTree;

/**
 * Geometric Brownian signal and observation parameters.
 */
typedef struct QcGbmParams {
  double mu;
  double sigma;
  double delta;
  double x0;
  double y0;
  double barrier;
} QcGbmParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after a
 * success. Valid until the next call into the library from this thread.
 */
const char *qc_last_error(void);

/**
 * Build a tree with `size` points per date on `obs_steps` equal steps up to
 * `t_obs`, continued with the same step to `t_end`.
 *
 * # Safety
 * `params` must point to a valid `QcGbmParams` and `out` to writable
 * storage for one pointer.
 */
enum QcStatus qc_tree_build_gbm(const struct QcGbmParams *params,
                                double t_obs,
                                size_t obs_steps,
                                double t_end,
                                size_t size,
                                struct QcTree **out);

/**
 * Load a tree saved by `qc_tree_save` (or the `quantize` command).
 *
 * # Safety
 * `params` and `path` must be valid, `path` NUL-terminated, `out` writable.
 */
enum QcStatus qc_tree_load(const struct QcGbmParams *params, const char *path, struct QcTree **out);

/**
 * # Safety
 * `tree` must come from this library; `path` must be NUL-terminated.
 */
enum QcStatus qc_tree_save(const struct QcTree *tree, const char *path);

/**
 * Release a tree. Null is ignored.
 *
 * # Safety
 * `tree` must come from this library and not be used afterwards.
 */
void qc_tree_free(struct QcTree *tree);

/**
 * Number of time steps and index of the observation date.
 *
 * # Safety
 * Pointers must be valid.
 */
enum QcStatus qc_tree_dims(const struct QcTree *tree, size_t *steps, size_t *obs_index);

/**
 * Copy the date of step `k` into `time`, and its grid points and weights
 * into the caller's arrays of capacity `cap`. `len` always receives the
 * grid size; `QC_STATUS_BUFFER_TOO_SMALL` is returned if `cap` is short.
 *
 * # Safety
 * `points` and `weights` must hold `cap` doubles (may be null if `cap` is 0).
 */
enum QcStatus qc_tree_grid(const struct QcTree *tree,
                           size_t k,
                           double *time,
                           double *points,
                           double *weights,
                           size_t cap,
                           size_t *len);

/**
 * Survival to date index `horizon` given observations `obs[0..=m]` on the
 * tree dates, with (`p_full`) and without (`p_y_only`) knowledge of
 * survival up to the observation date.
 *
 * # Safety
 * `obs` must hold `obs_len` doubles; outputs must be writable.
 */
enum QcStatus qc_conditional_survival(const struct QcTree *tree,
                                      const double *obs,
                                      size_t obs_len,
                                      size_t horizon,
                                      double *p_full,
                                      double *p_y_only);

/**
 * Closed-form probability that the geometric signal started at `x` stays
 * above `barrier` for a period `u`.
 *
 * # Safety
 * `out` must be writable.
 */
enum QcStatus qc_gbm_survival(double mu,
                              double sigma,
                              double barrier,
                              double x,
                              double u,
                              double *out);

/**
 * Black payer price `annuity (forward N(d1) - strike N(d2))`.
 *
 * # Safety
 * `out` must be writable.
 */
enum QcStatus qc_black_payer(double forward,
                             double strike,
                             double expiry,
                             double annuity,
                             double vol,
                             double *out);

/**
 * Black volatility reproducing `price`.
 *
 * # Safety
 * `out` must be writable.
 */
enum QcStatus qc_implied_vol(double price,
                             double forward,
                             double strike,
                             double expiry,
                             double annuity,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUANTCREDIT_H */
