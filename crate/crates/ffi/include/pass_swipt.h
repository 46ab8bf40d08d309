#ifndef PASS_SWIPT_H
#define PASS_SWIPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PassStatus {
  PASS_STATUS_OK = 0,
  PASS_STATUS_NULL_POINTER = 1,
  PASS_STATUS_INVALID_ARGUMENT = 2,
  PASS_STATUS_BUFFER_TOO_SMALL = 3,
  PASS_STATUS_INVALID_CONFIG = 4,
  PASS_STATUS_PARSE = 5,
  PASS_STATUS_INDEX_OUT_OF_RANGE = 6,
  PASS_STATUS_LAYOUT_VIOLATION = 7,
  PASS_STATUS_DEGENERATE_CHANNEL = 8,
  PASS_STATUS_INFEASIBLE_SCENARIO = 9,
  PASS_STATUS_INFEASIBLE_SUBPROBLEM = 10,
  PASS_STATUS_QP_MAX_ITERATIONS = 11,
  PASS_STATUS_NOT_CONVERGED = 12,
  PASS_STATUS_IO = 13,
  PASS_STATUS_INTERNAL = 14,
  PASS_STATUS_PANIC = 15,
} PassStatus;

typedef enum PassScheme {
  PASS_SCHEME_PROPOSED = 0,
  PASS_SCHEME_ZF_PASS = 1,
  PASS_SCHEME_FIXED_PA = 2,
  PASS_SCHEME_CONVENTIONAL_MIMO = 3,
} PassScheme;

/**
 * Opaque validated configuration.
 */
typedef struct PassConfig PassConfig;

/**
 * Opaque solver result.
 */
typedef struct PassSolution PassSolution;

typedef struct PassDims {
  size_t num_waveguides;
  size_t num_pas_per_waveguide;
  size_t num_idrs;
  size_t num_ehrs;
  size_t num_rx_antennas;
  size_t num_streams;
  size_t grid_points;
} PassDims;

typedef struct PassSolveOptions {
  size_t max_outer_iters;
  size_t max_inner_iters;
  double outer_rel_tol;
  double inner_rel_tol;
  /**
   * Nonzero scores PA candidates with frozen receive filters.
   */
  int32_t fixed_filters;
} PassSolveOptions;

typedef struct PassSummary {
  /**
   * bit/s/Hz
   */
  double sum_rate;
  /**
   * W
   */
  double power;
  /**
   * `min_q (E_q − E_min)` in W
   */
  double min_energy_margin;
  bool energy_feasible;
  bool converged;
  bool has_layout;
  size_t outer_iterations;
  size_t inner_iterations;
} PassSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static name for a `PassStatus` value, e.g. `"infeasible_scenario"`;
 * `"unknown"` for values outside the enum.
 */
const char *pass_status_name(int32_t status);

/**
 * Message of the last failed call on this thread, empty after a success.
 * Valid until the next call into this library from the same thread.
 */
const char *pass_last_error_message(void);

const char *pass_version(void);

/**
 * The reference configuration (M = 4, N = 3, K = Q = 2, J = 3, 43 dBm).
 */
enum PassStatus pass_config_reference(struct PassConfig **out);

/**
 * Parses a TOML document; keys left out keep their reference values.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a writable pointer.
 */
enum PassStatus pass_config_from_toml(const char *toml, struct PassConfig **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum PassStatus pass_config_load(const char *path, struct PassConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards. Null is ignored.
 */
void pass_config_free(struct PassConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live config handle and `out` a writable pointer.
 */
enum PassStatus pass_config_clone(const struct PassConfig *cfg, struct PassConfig **out);

/**
 * # Safety
 * `cfg` must be a live config handle and `out` writable.
 */
enum PassStatus pass_config_dims(const struct PassConfig *cfg, struct PassDims *out);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum PassStatus pass_config_set_max_power_dbm(struct PassConfig *cfg, double dbm);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum PassStatus pass_config_set_min_energy_w(struct PassConfig *cfg, double watts);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum PassStatus pass_config_set_pas_per_waveguide(struct PassConfig *cfg, size_t n);

/**
 * Also resets the waveguide spacing to `L_y/(M − 1)`.
 *
 * # Safety
 * `cfg` must be a live config handle.
 */
enum PassStatus pass_config_set_waveguides(struct PassConfig *cfg, size_t m);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum PassStatus pass_config_set_grid_points(struct PassConfig *cfg, size_t points);

struct PassSolveOptions pass_solve_options_default(void);

/**
 * Samples the scenario for `seed` and runs `scheme`, a `PassScheme` value. `options` may be null
 * for the defaults. Hitting the outer cap is not an error: the solution is
 * returned with `converged = false`.
 *
 * # Safety
 * `cfg` must be a live config handle, `options` null or valid, `out` writable.
 */
enum PassStatus pass_solve(const struct PassConfig *cfg,
                           uint64_t seed,
                           int32_t scheme,
                           const struct PassSolveOptions *options,
                           struct PassSolution **out);

/**
 * # Safety
 * `sol` must come from [`pass_solve`] and not be used afterwards. Null is ignored.
 */
void pass_solution_free(struct PassSolution *sol);

/**
 * # Safety
 * `sol` must be a live solution handle and `out` writable.
 */
enum PassStatus pass_solution_summary(const struct PassSolution *sol, struct PassSummary *out);

/**
 * PA positions in metres, row-major `M × N`. `*written` receives the
 * required length even when the buffer is too small; it is 0 for the
 * conventional array.
 *
 * # Safety
 * `sol` must be a live solution handle, `buf` valid for `len` doubles,
 * `written` null or writable.
 */
enum PassStatus pass_solution_layout(const struct PassSolution *sol,
                                     double *buf,
                                     size_t len,
                                     size_t *written);

/**
 * Harvested power per EHR in W.
 *
 * # Safety
 * As for [`pass_solution_layout`].
 */
enum PassStatus pass_solution_energies(const struct PassSolution *sol,
                                       double *buf,
                                       size_t len,
                                       size_t *written);

/**
 * Sum-rate after each outer iteration, starting with iteration 0.
 *
 * # Safety
 * As for [`pass_solution_layout`].
 */
enum PassStatus pass_solution_outer_rates(const struct PassSolution *sol,
                                          double *buf,
                                          size_t len,
                                          size_t *written);

/**
 * Beamformer of IDR `k` as interleaved `(re, im)` pairs, column-major `M × N_d`.
 *
 * # Safety
 * As for [`pass_solution_layout`].
 */
enum PassStatus pass_solution_beamformer(const struct PassSolution *sol,
                                         size_t k,
                                         double *buf,
                                         size_t len,
                                         size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PASS_SWIPT_H */
