#ifndef CLMC_H
#define CLMC_H

/* Generated from the clmc-ffi crate. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ClmcStatus {
  /**
   * The call succeeded and its out parameters are valid.
   */
  CLMC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CLMC_STATUS_NULL_POINTER = 1,
  /**
   * An argument value violates the callee's documented domain.
   */
  CLMC_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A string argument was not valid UTF-8.
   */
  CLMC_STATUS_INVALID_UTF8 = 3,
  /**
   * A JSON argument failed to parse or validate.
   */
  CLMC_STATUS_INVALID_JSON = 4,
  /**
   * The experiment ran and reported a failure.
   */
  CLMC_STATUS_RUN_FAILED = 5,
  /**
   * An internal invariant broke; the library state is still sound.
   */
  CLMC_STATUS_INTERNAL = 6,
} ClmcStatus;

/**
 * Stopping-level distribution handle. Create with one of the
 * `clmc_law_*` constructors, release with [`clmc_law_free`].
 */
typedef struct ClmcLevelLaw ClmcLevelLaw;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * ABI revision of this header and library pair. Incremented on any
 * breaking change to the exported surface.
 */
uint32_t clmc_abi_version(void);

/**
 * Message describing the most recent failure on the calling thread, as a
 * NUL-terminated UTF-8 string. Empty if nothing failed yet. The pointer
 * stays valid until the next failing clmc call on the same thread; the
 * caller must not free it.
 */
const char *clmc_last_error_message(void);

/**
 * Releases a string returned through a `char **` out parameter.
 *
 * # Safety
 *
 * `text` must be null or a pointer obtained from this library's out
 * parameters, not yet freed. Passing anything else is undefined behavior.
 */
void clmc_string_free(char *text);

/**
 * Expected-contribution weight of the interval `(l_prev, l_next]` for a
 * sample whose exponential-law stopping level was clipped to `l_tilde`.
 * Writes the weight to `out`.
 *
 * # Safety
 *
 * `out` must point to writable memory for one double.
 */
enum ClmcStatus clmc_interval_weight(double rate,
                                     double l_prev,
                                     double l_next,
                                     double l_tilde,
                                     double *out);

/**
 * Creates the continuous law with survival `exp(-rate * l)`, `rate > 0`.
 *
 * # Safety
 *
 * `out` must point to writable memory for one handle pointer.
 */
enum ClmcStatus clmc_law_exponential(double rate, struct ClmcLevelLaw **out);

/**
 * Creates the geometric law on {0, 1, 2, ...} with success probability
 * `rate` in (0, 1).
 *
 * # Safety
 *
 * `out` must point to writable memory for one handle pointer.
 */
enum ClmcStatus clmc_law_geometric(double rate, struct ClmcLevelLaw **out);

/**
 * Creates a law from its JSON form, e.g.
 * `{"law":"exponential","rate":1.5}` or
 * `{"law":"piecewise","survival":[[1,0.65],[2,0.4225]]}`.
 *
 * # Safety
 *
 * `json` must be a NUL-terminated string; `out` must point to writable
 * memory for one handle pointer.
 */
enum ClmcStatus clmc_law_from_json(const char *json, struct ClmcLevelLaw **out);

/**
 * Writes `P(L >= level)` under `law` to `out`.
 *
 * # Safety
 *
 * `law` must be a live handle from a `clmc_law_*` constructor; `out`
 * must point to writable memory for one double.
 */
enum ClmcStatus clmc_law_survival(const struct ClmcLevelLaw *law, double level, double *out);

/**
 * Releases a law handle. Null is a no-op.
 *
 * # Safety
 *
 * `law` must be null or a live handle from a `clmc_law_*` constructor;
 * it must not be used afterwards.
 */
void clmc_law_free(struct ClmcLevelLaw *law);

/**
 * Runs pilot calibration for the JSON experiment config and hands back
 * the fitted-rates artifact as JSON. Files are also written to the
 * config's output directory, exactly as the command-line tool does.
 * Free the result with [`clmc_string_free`].
 *
 * # Safety
 *
 * `config_json` must be a NUL-terminated string; `out_json` must point
 * to writable memory for one `char *`.
 */
enum ClmcStatus clmc_run_calibrate_json(const char *config_json, char **out_json);

/**
 * Runs a full estimate for the JSON experiment config and hands back the
 * estimate artifact as JSON. Files are also written to the config's
 * output directory. Free the result with [`clmc_string_free`].
 *
 * # Safety
 *
 * `config_json` must be a NUL-terminated string; `out_json` must point
 * to writable memory for one `char *`.
 */
enum ClmcStatus clmc_run_estimate_json(const char *config_json, char **out_json);

/**
 * Runs a tolerance sweep over `epsilons` (at least 3 values) for the
 * JSON experiment config and hands back the sweep artifact as JSON.
 * Files are also written to the config's output directory. Free the
 * result with [`clmc_string_free`].
 *
 * # Safety
 *
 * `config_json` must be a NUL-terminated string; `epsilons` must point
 * to `count` readable doubles; `out_json` must point to writable memory
 * for one `char *`.
 */
enum ClmcStatus clmc_run_sweep_json(const char *config_json,
                                    const double *epsilons,
                                    size_t count,
                                    char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLMC_H */
