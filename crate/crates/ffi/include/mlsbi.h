#ifndef MLSBI_H
#define MLSBI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MlsbiStatus {
  MLSBI_STATUS_OK = 0,
  MLSBI_STATUS_NULL_POINTER = 1,
  MLSBI_STATUS_INVALID_ARGUMENT = 2,
  MLSBI_STATUS_INFEASIBLE = 3,
  MLSBI_STATUS_DIVERGED = 4,
  MLSBI_STATUS_SAMPLER = 5,
  MLSBI_STATUS_CONFIG = 6,
  MLSBI_STATUS_IO = 7,
  MLSBI_STATUS_PANIC = 8,
} MlsbiStatus;

typedef enum MlsbiCorrectionCost {
  /**
   * `C_l + C_{l-1}`
   */
  MLSBI_CORRECTION_COST_PREVIOUS = 0,
  /**
   * `C_l + C_{l+1}`
   */
  MLSBI_CORRECTION_COST_NEXT = 1,
} MlsbiCorrectionCost;

/**
 * Trained mixture density network.
 */
typedef struct MlsbiEstimator MlsbiEstimator;

/**
 * Outcome of an experiment run.
 */
typedef struct MlsbiResults MlsbiResults;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mlsbi_version(void);

/**
 * Copy the calling thread's last error message into `buf`. Returns the
 * message length; a return value `>= len` means it was truncated.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t mlsbi_last_error(char *buf, size_t len);

/**
 * Simulation cost `n_0 C_0 + Σ_{l≥1} n_l (C_l + C_{l-1})`.
 *
 * # Safety
 * `n` and `costs` must point to `levels` readable values; `out` must be writable.
 */
enum MlsbiStatus mlsbi_cost(const size_t *n, const double *costs, size_t levels, double *out);

/**
 * Sample sizes from generator-difference norms. `out_n` receives `levels`
 * counts; `out_cost` (may be null) the achieved cost.
 *
 * # Safety
 * `costs` and `norms` must hold `levels` values; `out_n` must hold `levels` slots.
 */
enum MlsbiStatus mlsbi_plan_norms(const double *costs,
                                  const double *norms,
                                  size_t levels,
                                  double budget,
                                  enum MlsbiCorrectionCost form,
                                  size_t *out_n,
                                  double *out_cost);

/**
 * Sample sizes from pilot variances of the per-level loss terms.
 *
 * # Safety
 * As for [`mlsbi_plan_norms`].
 */
enum MlsbiStatus mlsbi_plan_variances(const double *costs,
                                      const double *variances,
                                      size_t levels,
                                      double budget,
                                      size_t *out_n,
                                      double *out_cost);

/**
 * Combine the level-0 gradient with `corrections` pairs of positive and
 * negative correction gradients. `g_plus` and `g_minus` are
 * `corrections × dim`. Writes the update direction to `out` and whether
 * the conflict projection fired to `conflict` (may be null).
 *
 * # Safety
 * All buffers must hold the stated number of values.
 */
enum MlsbiStatus mlsbi_adjust_gradients(const double *g_h0,
                                        const double *g_plus,
                                        const double *g_minus,
                                        size_t dim,
                                        size_t corrections,
                                        double *out,
                                        bool *conflict);

/**
 * Grid KLD of two log-densities evaluated on `n` equidistant points in `[lo, hi]`.
 *
 * # Safety
 * `p_log` and `q_log` must hold `n` values.
 */
enum MlsbiStatus mlsbi_grid_kld(const double *p_log,
                                const double *q_log,
                                size_t n,
                                double lo,
                                double hi,
                                double *out);

/**
 * Squared MMD between `na × dim` and `nb × dim` samples.
 *
 * # Safety
 * `a` and `b` must hold `na·dim` and `nb·dim` values.
 */
enum MlsbiStatus mlsbi_mmd(const double *a,
                           size_t na,
                           const double *b,
                           size_t nb,
                           size_t dim,
                           double *out);

/**
 * Validate a JSON config. Writes the diagnostics, one per line, to `buf`
 * and their count to `count`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `buf` null or `len` writable bytes.
 */
enum MlsbiStatus mlsbi_validate_config(const char *json, char *buf, size_t len, size_t *count);

/**
 * Run an experiment from a JSON config. `out_dir` may be null to skip
 * writing the results bundle.
 *
 * # Safety
 * `json` must be NUL-terminated, `out_dir` null or NUL-terminated, `out`
 * writable. Release the handle with [`mlsbi_results_free`].
 */
enum MlsbiStatus mlsbi_run(const char *json, const char *out_dir, struct MlsbiResults **out);

/**
 * Number of variants (count sets) in a run.
 *
 * # Safety
 * `results` must be a live handle or null.
 */
size_t mlsbi_results_variants(const struct MlsbiResults *results);

/**
 * Median over replicates of a scalar metric such as `"kld"` or `"nlpd"`.
 *
 * # Safety
 * `results` must be a live handle, `metric` NUL-terminated, `out` writable.
 */
enum MlsbiStatus mlsbi_results_median(const struct MlsbiResults *results,
                                      size_t variant,
                                      const char *metric,
                                      double *out);

/**
 * # Safety
 * `results` must come from [`mlsbi_run`] and not be used afterwards.
 */
void mlsbi_results_free(struct MlsbiResults *results);

/**
 * Load a checkpoint saved as `<path>.json` and `<path>.bin`.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` writable. Release the handle
 * with [`mlsbi_estimator_free`].
 */
enum MlsbiStatus mlsbi_estimator_load(const char *path, struct MlsbiEstimator **out);

/**
 * Take the estimator of replicate `replicate` of `variant` out of a run.
 *
 * # Safety
 * `results` must be a live handle and `out` writable.
 */
enum MlsbiStatus mlsbi_results_estimator(const struct MlsbiResults *results,
                                         size_t variant,
                                         size_t replicate,
                                         struct MlsbiEstimator **out);

/**
 * # Safety
 * `est` must come from this library and not be used afterwards.
 */
void mlsbi_estimator_free(struct MlsbiEstimator *est);

/**
 * Condition and target dimensions.
 *
 * # Safety
 * `est` must be a live handle; the outputs writable.
 */
enum MlsbiStatus mlsbi_estimator_dims(const struct MlsbiEstimator *est,
                                      size_t *condition_dim,
                                      size_t *target_dim);

/**
 * `log q(target_i | condition_i)` for `n` row pairs.
 *
 * # Safety
 * `conditions` holds `n × condition_dim`, `targets` `n × target_dim`, `out` `n` values.
 */
enum MlsbiStatus mlsbi_estimator_logpdf(const struct MlsbiEstimator *est,
                                        const double *conditions,
                                        const double *targets,
                                        size_t n,
                                        double *out);

/**
 * `n` draws from `q(· | condition)` into `out` (`n × target_dim`), deterministic in `seed`.
 *
 * # Safety
 * `condition` holds `condition_dim` values, `out` `n × target_dim`.
 */
enum MlsbiStatus mlsbi_estimator_sample(const struct MlsbiEstimator *est,
                                        const double *condition,
                                        size_t n,
                                        uint64_t seed,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLSBI_H */
