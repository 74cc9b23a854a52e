#ifndef TIERBOUND_H
#define TIERBOUND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 2 to 4 agree with the command-line exit codes.
 */
typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_ARGUMENT = 1,
  TB_STATUS_CONFIG = 2,
  TB_STATUS_DATA = 3,
  TB_STATUS_NUMERICAL = 4,
  TB_STATUS_PANIC = 5,
} TbStatus;

typedef enum TbMethod {
  TB_METHOD_PLUG_IN = 0,
  TB_METHOD_ONE_STEP = 1,
  TB_METHOD_ONE_STEP_GELU = 2,
  TB_METHOD_S1S = 3,
} TbMethod;

/**
 * Opaque list of per-stratum estimates.
 */
typedef struct TbEstimates TbEstimates;

/**
 * Opaque observation table.
 */
typedef struct TbTable TbTable;

/**
 * Settings for [`tb_estimate`]; start from [`tb_estimate_options_default`].
 */
typedef struct TbEstimateOptions {
  enum TbMethod method;
  /**
   * Training fraction for the one-step methods.
   */
  double split;
  /**
   * GELU smoothing for `OneStepGelu`.
   */
  double h;
  /**
   * Initial batch size for `S1s`.
   */
  size_t l;
  uint64_t seed;
} TbEstimateOptions;

/**
 * One stratum's bounds. `cov` holds `[xx, xy, yy]` when `has_cov`.
 */
typedef struct TbBounds {
  int64_t stratum;
  enum TbMethod method;
  double lower;
  double upper;
  double cov[3];
  bool has_cov;
  size_t n_units;
  bool out_of_space;
  bool ridge_applied;
} TbBounds;

typedef struct TbOracle {
  double pb;
  double lower;
  double upper;
  double pb_quadrature;
  double lower_quadrature;
  double upper_quadrature;
} TbOracle;

typedef struct TbRegion {
  double lo;
  double hi;
  double s_hat;
} TbRegion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *tb_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *tb_last_error_message(void);

/**
 * Draws `n` units from the benchmark design.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum TbStatus tb_simulate(size_t n, uint64_t seed, struct TbTable **out);

/**
 * Reads a CSV with columns `x`, `a`, `y` and covariates `w*`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TbStatus tb_table_read_csv(const char *path, struct TbTable **out);

/**
 * Number of units, or 0 for a null handle.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
size_t tb_table_len(const struct TbTable *table);

/**
 * # Safety
 * `table` must be null or a handle not yet freed.
 */
void tb_table_free(struct TbTable *table);

struct TbEstimateOptions tb_estimate_options_default(void);

/**
 * Bounds for every stratum of `table` with default nuisance models.
 *
 * # Safety
 * `table` must be a live handle, `thresholds` must point to
 * `n_thresholds` values and `out` must be writable.
 */
enum TbStatus tb_estimate(const struct TbTable *table,
                          const double *thresholds,
                          size_t n_thresholds,
                          struct TbEstimateOptions options,
                          struct TbEstimates **out);

/**
 * # Safety
 * `est` must be null or a live handle.
 */
size_t tb_estimates_len(const struct TbEstimates *est);

/**
 * Copies entry `index` into `out`.
 *
 * # Safety
 * `est` must be a live handle and `out` writable.
 */
enum TbStatus tb_estimates_get(const struct TbEstimates *est, size_t index, struct TbBounds *out);

/**
 * # Safety
 * `est` must be null or a handle not yet freed.
 */
void tb_estimates_free(struct TbEstimates *est);

/**
 * Ground truth for stratum 0 or 1 of the benchmark design.
 *
 * # Safety
 * `thresholds` must point to `n_thresholds` values and `out` be writable.
 */
enum TbStatus tb_oracle(int64_t stratum,
                        const double *thresholds,
                        size_t n_thresholds,
                        size_t mc_samples,
                        uint64_t seed,
                        struct TbOracle *out);

/**
 * `(sigma + ridge I)^(-1/2)` for `sigma = [xx, xy, yy]`.
 *
 * # Safety
 * `sigma` and `out` must each point to three values.
 */
enum TbStatus tb_matrix_inv_sqrt(const double *sigma, double ridge, double *out);

/**
 * Monte-Carlo uncertainty region for one set of bounds.
 *
 * # Safety
 * `bounds` must be readable and `out` writable.
 */
enum TbStatus tb_uncertainty_region(const struct TbBounds *bounds,
                                    double level,
                                    size_t draws,
                                    uint64_t seed,
                                    struct TbRegion *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIERBOUND_H */
