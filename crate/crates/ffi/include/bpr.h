#ifndef BPR_H
#define BPR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum BprStatus {
  BPR_STATUS_OK = 0,
  BPR_STATUS_NULL_POINTER = 1,
  BPR_STATUS_INVALID_ARGUMENT = 2,
  BPR_STATUS_INVALID_UTF8 = 3,
  BPR_STATUS_IO = 4,
  BPR_STATUS_PANEL = 5,
  BPR_STATUS_BUNDLING = 6,
  BPR_STATUS_RECONCILE = 7,
  BPR_STATUS_METRICS = 8,
  BPR_STATUS_PIPELINE = 9,
  BPR_STATUS_BUFFER_TOO_SMALL = 10,
  BPR_STATUS_PANIC = 11,
} BprStatus;

/**
 * Covariance criterion used by the bundling calls.
 */
typedef enum BprCriterion {
  BPR_CRITERION_VARIANCE = 0,
  BPR_CRITERION_SAVAR = 1,
  BPR_CRITERION_IMCY = 2,
} BprCriterion;

typedef struct BprBundling BprBundling;

typedef struct BprPanel BprPanel;

typedef struct BprReconciler BprReconciler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a NUL-terminated
 * string, truncating if needed. Returns the untruncated length including the
 * terminator, or 0 when there is no pending error.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t bpr_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bpr_version(void);

/**
 * Loads and validates a panel from the asset table and wide series CSV.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` must be a valid pointer.
 */
enum BprStatus bpr_panel_load(const char *assets_path,
                              const char *series_path,
                              struct BprPanel **out);

/**
 * # Safety
 * `panel` must come from [`bpr_panel_load`] and not be used afterwards.
 */
void bpr_panel_free(struct BprPanel *panel);

/**
 * Number of assets, or 0 for a null handle.
 *
 * # Safety
 * `panel` must be null or a live handle.
 */
size_t bpr_panel_n_assets(const struct BprPanel *panel);

/**
 * Number of time steps, or 0 for a null handle.
 *
 * # Safety
 * `panel` must be null or a live handle.
 */
size_t bpr_panel_n_steps(const struct BprPanel *panel);

/**
 * Greedy bundling into `k` bundles. Pass `INFINITY` for no diameter cap.
 *
 * # Safety
 * `panel` must be a live handle; `out` must be a valid pointer.
 */
enum BprStatus bpr_bundle_greedy(const struct BprPanel *panel,
                                 enum BprCriterion criterion,
                                 size_t k,
                                 double diameter_km,
                                 struct BprBundling **out);

/**
 * Exhaustive optimum for small panels (at most 12 assets).
 *
 * # Safety
 * As [`bpr_bundle_greedy`].
 */
enum BprStatus bpr_bundle_exact(const struct BprPanel *panel,
                                enum BprCriterion criterion,
                                size_t k,
                                double diameter_km,
                                struct BprBundling **out);

/**
 * Builds a bundling from per-asset labels; labels are canonicalised.
 *
 * # Safety
 * `labels` must hold `n_assets` entries.
 */
enum BprStatus bpr_bundling_from_assignment(const size_t *labels,
                                            size_t n_assets,
                                            struct BprBundling **out);

/**
 * # Safety
 * `bundling` must come from this library and not be used afterwards.
 */
void bpr_bundling_free(struct BprBundling *bundling);

/**
 * Number of bundles, or 0 for a null handle.
 *
 * # Safety
 * `bundling` must be null or a live handle.
 */
size_t bpr_bundling_k(const struct BprBundling *bundling);

/**
 * Writes the bundle index of every asset into `out` (length `len`).
 *
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum BprStatus bpr_bundling_assignment(const struct BprBundling *bundling, size_t *out, size_t len);

/**
 * Criterion objective of `bundling` on `panel`.
 *
 * # Safety
 * Handles must be live; `out` must be a valid pointer.
 */
enum BprStatus bpr_bundling_objective(const struct BprPanel *panel,
                                      const struct BprBundling *bundling,
                                      enum BprCriterion criterion,
                                      double *out);

/**
 * Per-lead WLS reconciler. `weights` is `horizon x (N+K+1)` row-major.
 *
 * # Safety
 * `weights` must hold `horizon * n_rows` values.
 */
enum BprStatus bpr_reconciler_build(const struct BprBundling *bundling,
                                    const double *weights,
                                    size_t horizon,
                                    size_t n_rows,
                                    struct BprReconciler **out);

/**
 * # Safety
 * `r` must come from [`bpr_reconciler_build`] and not be used afterwards.
 */
void bpr_reconciler_free(struct BprReconciler *r);

/**
 * Reconciles one stacked vector `(total, bundles, assets)` at lead `lead` (0-based).
 *
 * # Safety
 * `input` and `output` must each hold `len` values; they may alias.
 */
enum BprStatus bpr_reconciler_apply(const struct BprReconciler *r,
                                    size_t lead,
                                    const double *input,
                                    double *output,
                                    size_t len);

/**
 * NMAE in percent; arrays are `m x n x t` row-major, `capacities` has `n` entries.
 *
 * # Safety
 * Arrays must hold the stated number of values.
 */
enum BprStatus bpr_metric_nmae(const double *actuals,
                               const double *forecasts,
                               size_t m,
                               size_t n,
                               size_t t,
                               const double *capacities,
                               double *out);

/**
 * # Safety
 * As [`bpr_metric_nmae`].
 */
enum BprStatus bpr_metric_rmse(const double *actuals,
                               const double *forecasts,
                               size_t m,
                               size_t n,
                               size_t t,
                               double *out);

/**
 * Variogram score of order `p`.
 *
 * # Safety
 * As [`bpr_metric_nmae`].
 */
enum BprStatus bpr_metric_variogram(const double *actuals,
                                    const double *forecasts,
                                    size_t m,
                                    size_t n,
                                    size_t t,
                                    double p,
                                    double *out);

/**
 * # Safety
 * As [`bpr_metric_nmae`].
 */
enum BprStatus bpr_metric_energy_distance(const double *actuals,
                                          const double *forecasts,
                                          size_t m,
                                          size_t n,
                                          size_t t,
                                          double *out);

/**
 * Runs every stage for the config file. `out_dir` may be null to use the
 * directory named in the config.
 *
 * # Safety
 * Strings must be NUL-terminated.
 */
enum BprStatus bpr_run(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BPR_H */
