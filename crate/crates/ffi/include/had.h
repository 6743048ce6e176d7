#ifndef HAD_H
#define HAD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HadStatus {
  HAD_STATUS_OK = 0,
  HAD_STATUS_NULL_POINTER = 1,
  HAD_STATUS_INVALID_ARGUMENT = 2,
  HAD_STATUS_INSUFFICIENT_DATA = 3,
  HAD_STATUS_DEGENERATE_DOSE = 4,
  HAD_STATUS_SINGULAR = 5,
  HAD_STATUS_NO_MASS_POINT = 6,
  HAD_STATUS_UNTREATED_UNITS = 7,
  HAD_STATUS_PANIC = 99,
} HadStatus;

typedef enum HadMode {
  /**
   * Boundary at zero.
   */
  HAD_MODE_QUG = 0,
  /**
   * Boundary at the lowest dose.
   */
  HAD_MODE_SHIFTED = 1,
  /**
   * Ratio estimator at a mass point.
   */
  HAD_MODE_MASS_POINT = 2,
} HadMode;

typedef enum HadKernel {
  HAD_KERNEL_EPANECHNIKOV = 0,
  HAD_KERNEL_TRIANGULAR = 1,
  HAD_KERNEL_UNIFORM = 2,
} HadKernel;

typedef enum HadTestMode {
  HAD_TEST_MODE_LINEARITY = 0,
  HAD_TEST_MODE_MEAN_INDEPENDENCE = 1,
} HadTestMode;

/**
 * Opaque per-unit sample of outcome changes and doses.
 */
typedef struct HadSample HadSample;

typedef struct HadWasResult {
  double beta;
  double mu0_hat;
  double bias_hat;
  double se;
  double ci_low;
  double ci_high;
  /**
   * NaN for the mass-point estimator.
   */
  double h_used;
  double b_used;
  double boundary;
  size_t n_eff;
} HadWasResult;

typedef struct HadQugResult {
  double d1;
  double d2;
  double t_stat;
  double p_value;
  bool reject;
  size_t ties_collapsed;
} HadQugResult;

typedef struct HadStuteResult {
  double statistic;
  double p_value;
  size_t draws;
} HadStuteResult;

typedef struct HadYatchewResult {
  double sig2_lin;
  double sig2_diff;
  double sig_w4;
  /**
   * NaN when every residual is zero.
   */
  double t_hr;
  double p_value;
} HadYatchewResult;

typedef struct HadTwfeResult {
  double beta_fe;
  double beta0;
  double se;
  double ci_low;
  double ci_high;
  double dof;
} HadTwfeResult;

typedef struct HadWeightSummary {
  size_t n_positive;
  size_t n_negative;
  double negative_sum;
} HadWeightSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *had_last_error(void);

/**
 * Copies `n` outcome changes and doses into a new sample. Returns null on
 * failure and writes the reason to `status` when it is not null.
 *
 * # Safety
 * `dy` and `d` must point to `n` readable doubles; `status` must be null or writable.
 */
struct HadSample *had_sample_new(const double *dy,
                                 const double *d,
                                 size_t n,
                                 enum HadStatus *status);

/**
 * # Safety
 * `sample` must be null or a pointer returned by [`had_sample_new`] that has not been freed.
 */
void had_sample_free(struct HadSample *sample);

/**
 * Number of units, or 0 for a null handle.
 *
 * # Safety
 * `sample` must be null or a live handle.
 */
size_t had_sample_len(const struct HadSample *sample);

/**
 * WAS estimate. A `bandwidth <= 0` triggers data-driven selection.
 *
 * # Safety
 * `sample` must be a live handle and `out` writable.
 */
enum HadStatus had_estimate(const struct HadSample *sample,
                            enum HadMode mode,
                            enum HadKernel kernel,
                            double alpha,
                            double bandwidth,
                            struct HadWasResult *out);

/**
 * Test for a quasi-untreated group on `n` strictly positive doses.
 *
 * # Safety
 * `d` must point to `n` readable doubles and `out` be writable.
 */
enum HadStatus had_test_qug(const double *d, size_t n, double alpha, struct HadQugResult *out);

/**
 * Stute test with a wild bootstrap of `draws` replications.
 *
 * # Safety
 * `sample` must be a live handle and `out` writable.
 */
enum HadStatus had_stute_test(const struct HadSample *sample,
                              enum HadTestMode mode,
                              size_t draws,
                              uint64_t seed,
                              struct HadStuteResult *out);

/**
 * Heteroskedasticity-robust Yatchew test.
 *
 * # Safety
 * `sample` must be a live handle and `out` writable.
 */
enum HadStatus had_yatchew_test(const struct HadSample *sample,
                                double alpha,
                                struct HadYatchewResult *out);

/**
 * TWFE slope with HC2 standard error and Bell–McCaffrey interval.
 *
 * # Safety
 * `sample` must be a live handle and `out` writable.
 */
enum HadStatus had_twfe_fit(const struct HadSample *sample,
                            double alpha,
                            struct HadTwfeResult *out);

/**
 * Writes the `n` TWFE weights to `weights` and a summary to `out`.
 *
 * # Safety
 * `d` must point to `n` readable doubles, `weights` to `n` writable doubles, `out` be writable.
 */
enum HadStatus had_twfe_weights(const double *d,
                                size_t n,
                                double *weights,
                                struct HadWeightSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAD_H */
