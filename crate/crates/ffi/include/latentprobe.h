#ifndef LATENTPROBE_H
#define LATENTPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_ARGUMENT = 2,
  LP_STATUS_DIMENSION = 3,
  LP_STATUS_IO = 4,
  LP_STATUS_FORMAT = 5,
  LP_STATUS_NUMERICAL = 6,
  LP_STATUS_PANIC = 7,
} LpStatus;

/**
 * Distance used by [`lp_nn_distance`].
 */
typedef enum LpMetric {
  LP_METRIC_EUCLIDEAN = 0,
  LP_METRIC_COSINE = 1,
  LP_METRIC_CLASS_CONDITIONAL = 2,
} LpMetric;

/**
 * Tapped activations with labels and base-network predictions.
 */
typedef struct LpActivations LpActivations;

/**
 * Convex hull of a fixed generator set.
 */
typedef struct LpHullTester LpHullTester;

/**
 * A frozen classifier.
 */
typedef struct LpNetwork LpNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call on the same thread.
 */
const char *lp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lp_version(void);

/**
 * Builds an activation set from a `rows x cols` matrix, per-row labels and
 * base predictions. `split` is 0 for train and 1 for test.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out_handle` receives a handle.
 */
enum LpStatus lp_activations_new(const double *data,
                                 size_t rows,
                                 size_t cols,
                                 const uint32_t *labels,
                                 const uint32_t *predictions,
                                 size_t n_classes,
                                 uint8_t split,
                                 struct LpActivations **out_handle);

/**
 * Reads an activation dump.
 *
 * # Safety
 * `file` must be a NUL-terminated string; `out_handle` receives a handle.
 */
enum LpStatus lp_activations_load(const char *file, struct LpActivations **out_handle);

/**
 * Writes an activation dump.
 *
 * # Safety
 * `set` must come from this library; `file` must be NUL-terminated.
 */
enum LpStatus lp_activations_save(const struct LpActivations *set, const char *file);

/**
 * # Safety
 * `set` must come from this library and not be used afterwards. Null is ignored.
 */
void lp_activations_free(struct LpActivations *set);

/**
 * Row count, column count and base accuracy. Any output may be null.
 *
 * # Safety
 * `set` must come from this library.
 */
enum LpStatus lp_activations_shape(const struct LpActivations *set,
                                   size_t *rows,
                                   size_t *cols,
                                   double *base_accuracy);

/**
 * Copies the activation matrix (row-major) into `buffer` of `len` doubles.
 *
 * # Safety
 * `buffer` must hold `len` doubles.
 */
enum LpStatus lp_activations_copy(const struct LpActivations *set, double *buffer, size_t len);

/**
 * Copies labels and base predictions; either output may be null.
 *
 * # Safety
 * Non-null buffers must hold one entry per row.
 */
enum LpStatus lp_activations_labels(const struct LpActivations *set,
                                    uint32_t *labels_out,
                                    uint32_t *predictions_out);

/**
 * Prepares hull tests against `rows x cols` generators.
 *
 * # Safety
 * `generators` must hold `rows * cols` doubles; `out_handle` receives a handle.
 */
enum LpStatus lp_hull_tester_new(const double *generators,
                                 size_t rows,
                                 size_t cols,
                                 double tolerance,
                                 struct LpHullTester **out_handle);

/**
 * Tests one query of `dim` coordinates. `inside` gets 1 or 0; `residual`
 * may be null.
 *
 * # Safety
 * `tester` must come from this library; `query` must hold `dim` doubles.
 */
enum LpStatus lp_hull_tester_contains(const struct LpHullTester *tester,
                                      const double *query,
                                      size_t dim,
                                      uint8_t *inside,
                                      double *residual);

/**
 * # Safety
 * `tester` must come from this library and not be used afterwards. Null is ignored.
 */
void lp_hull_tester_free(struct LpHullTester *tester);

/**
 * Fraction of `n_queries` points inside the hull of `n_generators` points,
 * all of dimension `dim`. `inside_out` (optional) gets one flag per query.
 *
 * # Safety
 * Pointers must be valid for the stated sizes.
 */
enum LpStatus lp_hull_fraction(const double *queries,
                               size_t n_queries,
                               const double *generators,
                               size_t n_generators,
                               size_t dim,
                               double tolerance,
                               double *fraction,
                               uint8_t *inside_out);

/**
 * Distance from each query to its nearest reference. Labels are needed
 * only for the class-conditional metric and may be null otherwise.
 *
 * # Safety
 * Pointers must be valid for the stated sizes; `distances` holds `n_queries` doubles.
 */
enum LpStatus lp_nn_distance(const double *queries,
                             size_t n_queries,
                             const double *references,
                             size_t n_references,
                             size_t dim,
                             enum LpMetric metric,
                             const uint32_t *reference_labels,
                             const uint32_t *query_labels,
                             double *distances);

/**
 * Two-sample Kolmogorov-Smirnov statistic.
 *
 * # Safety
 * `a` and `b` must hold `n_a` and `n_b` doubles.
 */
enum LpStatus lp_ks_statistic(const double *a,
                              size_t n_a,
                              const double *b,
                              size_t n_b,
                              double *statistic);

/**
 * Percentile bootstrap interval for the mean.
 *
 * # Safety
 * `values` must hold `n` doubles.
 */
enum LpStatus lp_bootstrap_ci(const double *values,
                              size_t n,
                              size_t resamples,
                              double level,
                              uint64_t seed,
                              double *low,
                              double *high);

/**
 * Logistic regression of correctness on z-scored distance, hull
 * membership and their interaction. Each output holds four values in the
 * order intercept, distance, in_hull, interaction; any may be null.
 *
 * # Safety
 * Inputs must hold `n` entries; non-null outputs must hold 4 doubles.
 */
enum LpStatus lp_logistic_fit(const double *distance,
                              const uint8_t *in_hull,
                              const uint8_t *correct,
                              size_t n,
                              double *coefficients,
                              double *standard_errors,
                              double *z_values);

/**
 * Loads a classifier saved as JSON and freezes it.
 *
 * # Safety
 * `file` must be NUL-terminated; `out_handle` receives a handle.
 */
enum LpStatus lp_network_load(const char *file, struct LpNetwork **out_handle);

/**
 * Input width and tap-layer width; either output may be null.
 *
 * # Safety
 * `net` must come from this library.
 */
enum LpStatus lp_network_dims(const struct LpNetwork *net, size_t *input_dim, size_t *tap_width);

/**
 * Tap-layer activations of `rows` inputs; `output` holds `rows * tap_width` doubles.
 *
 * # Safety
 * `inputs` must hold `rows * input_dim` doubles.
 */
enum LpStatus lp_network_tap(const struct LpNetwork *net,
                             const double *inputs,
                             size_t rows,
                             double *output,
                             size_t output_len);

/**
 * # Safety
 * `net` must come from this library and not be used afterwards. Null is ignored.
 */
void lp_network_free(struct LpNetwork *net);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATENTPROBE_H */
