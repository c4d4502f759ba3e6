#ifndef STVE_H
#define STVE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define STVE_WARN_WEAK_GAP 1

#define STVE_WARN_CLAMPED_ETA2 2

#define STVE_WARN_CLAMPED_SIGMA2 4

#define STVE_WARN_ROWS_DROPPED 8

typedef enum StveStatus {
  STVE_OK = 0,
  STVE_ERR_NULL_POINTER = 1,
  STVE_ERR_INVALID_INPUT = 2,
  STVE_ERR_DIMENSION = 3,
  STVE_ERR_INSUFFICIENT_ROWS = 4,
  /**
   * Flat inverse spectrum: the two moment equations coincide.
   */
  STVE_ERR_SINGULAR = 5,
  /**
   * Eigensolver failure, loss of definiteness or filter divergence.
   */
  STVE_ERR_NUMERICAL = 6,
  STVE_ERR_IO = 7,
  STVE_ERR_PARSE = 8,
  STVE_ERR_PANIC = 9,
} StveStatus;

/**
 * Opaque dataset handle.
 */
typedef struct StveDataset StveDataset;

typedef struct StveOptions {
  double alpha;
  double min_row_norm;
  double gap_warn_threshold;
  bool clamp_nonnegative;
} StveOptions;

typedef struct StveEstimateResult {
  double sigma2;
  double eta2;
  double sigma2_raw;
  double eta2_raw;
  double gap_ratio;
  double hs_r_sq;
  double hs_rp_sq;
  size_t p;
  size_t effective_t;
  /**
   * Bitwise OR of the `STVE_WARN_*` flags.
   */
  uint32_t warnings;
} StveEstimateResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *stve_version(void);

/**
 * Message for the last failed call on this thread, or NULL.
 *
 * The pointer stays valid until the next library call on the same thread.
 */
const char *stve_last_error_message(void);

/**
 * Default estimator options.
 */
struct StveOptions stve_options_default(void);

/**
 * Builds a dataset from a row-major `horizon x dim` matrix `u` and
 * observations `y`.
 *
 * `observed` may be NULL (all rows observed); otherwise a zero entry marks
 * a missing observation whose `y` value is ignored.
 *
 * # Safety
 * `u` must point to `horizon * dim` doubles, `y` to `horizon` doubles and
 * `observed`, when not NULL, to `horizon` bytes. `out` must be writable.
 */
enum StveStatus stve_dataset_new(const double *u,
                                 const double *y,
                                 const uint8_t *observed,
                                 size_t horizon,
                                 size_t dim,
                                 struct StveDataset **out);

/**
 * Reads a dataset CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum StveStatus stve_dataset_read_csv(const char *path, struct StveDataset **out);

/**
 * Simulates a trajectory with Gaussian `u_t` and Gaussian noise.
 *
 * # Safety
 * `out` must be writable.
 */
enum StveStatus stve_simulate(size_t horizon,
                              size_t dim,
                              double sigma2,
                              double eta2,
                              uint64_t seed,
                              struct StveDataset **out);

/**
 * Releases a dataset. NULL is ignored.
 *
 * # Safety
 * `dataset` must come from this library and not have been freed.
 */
void stve_dataset_free(struct StveDataset *dataset);

/**
 * Number of rows, or 0 for NULL.
 *
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t stve_dataset_horizon(const struct StveDataset *dataset);

/**
 * Dimension of `u_t`, or 0 for NULL.
 *
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t stve_dataset_dim(const struct StveDataset *dataset);

/**
 * Copies the observations into `y` (length `horizon`); missing entries are NaN.
 *
 * # Safety
 * `dataset` must be a live handle and `y` must have room for `horizon` doubles.
 */
enum StveStatus stve_dataset_copy_y(const struct StveDataset *dataset, double *y);

/**
 * Estimates `(sigma^2, eta^2)`. `options` may be NULL for defaults.
 *
 * # Safety
 * `dataset` must be a live handle, `options` NULL or valid, `out` writable.
 */
enum StveStatus stve_estimate(const struct StveDataset *dataset,
                              const struct StveOptions *options,
                              struct StveEstimateResult *out);

/**
 * Runs the Kalman filter from `x_0 = 0`, `C_0 = c0_scale * I`.
 *
 * Any of `predictions` (length `horizon`), `final_state` (length `dim`) and
 * `loglik` may be NULL.
 *
 * # Safety
 * `dataset` must be a live handle; non-NULL outputs must have the stated
 * lengths.
 */
enum StveStatus stve_kalman_filter(const struct StveDataset *dataset,
                                   double sigma2,
                                   double eta2,
                                   double c0_scale,
                                   double *predictions,
                                   double *final_state,
                                   double *loglik);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STVE_H */
