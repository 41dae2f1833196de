#ifndef AGGDIFF_H
#define AGGDIFF_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum AggdiffStatus {
  AGGDIFF_STATUS_OK = 0,
  AGGDIFF_STATUS_NULL_POINTER = 1,
  AGGDIFF_STATUS_INVALID_UTF8 = 2,
  AGGDIFF_STATUS_INVALID_CONFIG = 3,
  AGGDIFF_STATUS_DOMAIN = 4,
  AGGDIFF_STATUS_NUMERICAL = 5,
  AGGDIFF_STATUS_IO = 6,
  AGGDIFF_STATUS_OUT_OF_RANGE = 7,
  AGGDIFF_STATUS_BUFFER_TOO_SMALL = 8,
  AGGDIFF_STATUS_PANIC = 9,
} AggdiffStatus;

/**
 * An experiment configuration.
 */
typedef struct AggdiffConfig AggdiffConfig;

/**
 * A finished run: snapshots and diagnostics.
 */
typedef struct AggdiffRun AggdiffRun;

/**
 * Diagnostics of one snapshot.
 */
typedef struct AggdiffDiagnostics {
  double time;
  double mass;
  double center;
  double second_moment;
  double energy;
  double max_speed;
  double max_density;
  size_t n_particles;
  size_t n_remesh;
} AggdiffDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call into the library on the same thread.
 */
const char *aggdiff_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *aggdiff_version(void);

/**
 * Parses a JSON config. Validation happens in [`aggdiff_config_validate`]
 * and [`aggdiff_run`].
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum AggdiffStatus aggdiff_config_from_json(const char *json, struct AggdiffConfig **out);

/**
 * Loads a named preset.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum AggdiffStatus aggdiff_config_preset(const char *name, struct AggdiffConfig **out);

/**
 * Applies one `key.path=value` override in place.
 *
 * # Safety
 * `cfg` must come from this library; `assignment` must be NUL-terminated.
 */
enum AggdiffStatus aggdiff_config_override(struct AggdiffConfig *cfg, const char *assignment);

/**
 * Validates a config. Returns `InvalidConfig` with every problem in the
 * error message.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum AggdiffStatus aggdiff_config_validate(const struct AggdiffConfig *cfg);

/**
 * Serializes a config to JSON. The string is released with
 * [`aggdiff_string_free`].
 *
 * # Safety
 * `cfg` must come from this library; `out` must be writable.
 */
enum AggdiffStatus aggdiff_config_to_json(const struct AggdiffConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must come from this library or be null.
 */
void aggdiff_config_free(struct AggdiffConfig *cfg);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void aggdiff_string_free(char *s);

/**
 * Particle velocities for the config's model at the given positions and
 * weights.
 *
 * # Safety
 * `cfg` must come from this library; the three arrays must hold `n` values.
 */
enum AggdiffStatus aggdiff_velocity(const struct AggdiffConfig *cfg,
                                    const double *positions,
                                    const double *weights,
                                    size_t n,
                                    double *velocities);

/**
 * Runs an experiment. With a non-null `out_dir` the outputs are written
 * there as well.
 *
 * # Safety
 * `cfg` must come from this library; `out_dir` is null or NUL-terminated;
 * `out` must be writable.
 */
enum AggdiffStatus aggdiff_run(const struct AggdiffConfig *cfg,
                               const char *out_dir,
                               struct AggdiffRun **out);

/**
 * # Safety
 * `run` must come from this library or be null.
 */
void aggdiff_run_free(struct AggdiffRun *run);

/**
 * Number of recorded snapshots.
 *
 * # Safety
 * `run` must come from this library; `out` must be writable.
 */
enum AggdiffStatus aggdiff_run_snapshot_count(const struct AggdiffRun *run, size_t *out);

/**
 * Diagnostics of snapshot `index`.
 *
 * # Safety
 * `run` must come from this library; `out` must be writable.
 */
enum AggdiffStatus aggdiff_run_diagnostics(const struct AggdiffRun *run,
                                           size_t index,
                                           struct AggdiffDiagnostics *out);

/**
 * Copies the particles of snapshot `index`. `len` receives the particle
 * count; when `capacity` is smaller nothing is copied and
 * `BufferTooSmall` is returned, so a call with `capacity = 0` queries the
 * size.
 *
 * # Safety
 * `run` must come from this library; `positions` and `weights` must hold
 * `capacity` values; `len` must be writable.
 */
enum AggdiffStatus aggdiff_run_particles(const struct AggdiffRun *run,
                                         size_t index,
                                         double *positions,
                                         double *weights,
                                         size_t capacity,
                                         size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGGDIFF_H */
