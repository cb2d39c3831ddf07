#ifndef SEASURROGATE_H
#define SEASURROGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_ARGUMENT = 1,
  SS_STATUS_INVALID_ARGUMENT = 2,
  SS_STATUS_IO = 3,
  SS_STATUS_NUMERIC = 4,
  SS_STATUS_BUFFER_TOO_SMALL = 5,
  SS_STATUS_PANIC = 6,
} SsStatus;

/**
 * Trained surrogate handle.
 */
typedef struct SsModel SsModel;

/**
 * Oracle configuration handle.
 */
typedef struct SsOracle SsOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *ss_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/**
 * Pierson-Moskowitz spectral density at `omega` (rad/s), in m²·s.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
enum SsStatus ss_pm_spectrum(double hs, double tp, double omega, double *out);

/**
 * Create an oracle with the library defaults.
 *
 * # Safety
 * `out` must be null or point to writable memory for one pointer.
 */
enum SsStatus ss_oracle_new_default(struct SsOracle **out);

/**
 * Set the record duration in seconds.
 *
 * # Safety
 * `oracle` must be null or a live handle from `ss_oracle_new_default`.
 */
enum SsStatus ss_oracle_set_duration(struct SsOracle *oracle, double duration);

/**
 * Number of samples each simulated channel will hold.
 *
 * # Safety
 * `oracle` must be null or a live handle; `out` null or writable.
 */
enum SsStatus ss_oracle_sample_count(const struct SsOracle *oracle, size_t *out);

/**
 * Simulate one realization. Each output buffer must hold `capacity` doubles,
 * at least `ss_oracle_sample_count`. Pitch and roll are in degrees.
 *
 * # Safety
 * `oracle` must be a live handle. Non-null buffers must be writable for
 * `capacity` doubles.
 */
enum SsStatus ss_oracle_simulate(const struct SsOracle *oracle,
                                 double hs,
                                 double tp,
                                 uint64_t seed,
                                 double *wave,
                                 double *heave,
                                 double *pitch,
                                 double *roll,
                                 size_t capacity);

/**
 * # Safety
 * `oracle` must be null or a handle not yet freed.
 */
void ss_oracle_free(struct SsOracle *oracle);

/**
 * Load a checkpoint written by the training pipeline.
 *
 * # Safety
 * `path` must be null or a NUL-terminated string; `out` null or writable.
 */
enum SsStatus ss_model_load(const char *path, struct SsModel **out);

/**
 * Window shape expected by `ss_model_predict`: `rows` time steps of
 * `inputs` probe values each.
 *
 * # Safety
 * `model` must be a live handle; outputs null or writable.
 */
enum SsStatus ss_model_window_shape(const struct SsModel *model, size_t *rows, size_t *inputs);

/**
 * Predict heave (m), pitch (deg) and roll (deg) from one raw elevation
 * window, row-major with row 0 the newest sample.
 *
 * # Safety
 * `window` must hold `len` doubles; `out` must be writable for three.
 */
enum SsStatus ss_model_predict(const struct SsModel *model,
                               const double *window,
                               size_t len,
                               double *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void ss_model_free(struct SsModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEASURROGATE_H */
