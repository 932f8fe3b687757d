#ifndef THETA_BRANCH_H
#define THETA_BRANCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_POINTER = 1,
  TB_STATUS_INVALID_ARGUMENT = 2,
  TB_STATUS_CONFIG = 3,
  TB_STATUS_NUMERIC = 4,
  TB_STATUS_INCONCLUSIVE = 5,
  TB_STATUS_PANIC = 6,
} TbStatus;

/**
 * Asymptotic regime. `Inconclusive` means the probes did not settle.
 */
typedef enum TbRegime {
  TB_REGIME_INCONCLUSIVE = 0,
  TB_REGIME_SUPERCRITICAL = 1,
  TB_REGIME_ASYMPTOTICALLY_DEGENERATE = 2,
  TB_REGIME_CRITICAL = 3,
  TB_REGIME_STRICTLY_SUBCRITICAL = 4,
  TB_REGIME_LOOSELY_SUBCRITICAL = 5,
} TbRegime;

/**
 * Opaque environment handle.
 */
typedef struct TbEnvironment TbEnvironment;

/**
 * Transform values at one time.
 */
typedef struct TbTransforms {
  double t;
  double lambda;
  double log_mu;
  double a;
  double v;
  double b;
  double mu_theta_v;
  /**
   * Largest absolute error bound over the six values.
   */
  double abs_error;
} TbTransforms;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *tb_version(void);

/**
 * Message of the last failed call on this thread, or NULL if none.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *tb_last_error(void);

/**
 * Parses and validates a JSON environment configuration.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 * The handle written to `out` must be released with [`tb_env_free`].
 */
enum TbStatus tb_env_from_json(const char *json, struct TbEnvironment **out);

/**
 * Builds a named built-in scenario. A NaN `theta` keeps the scenario default.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string and `out` a valid pointer.
 * The handle written to `out` must be released with [`tb_env_free`].
 */
enum TbStatus tb_env_builtin(const char *name, double theta, struct TbEnvironment **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `env` must be NULL or a handle from this library that was not freed yet.
 */
void tb_env_free(struct TbEnvironment *env);

/**
 * Serializes the environment as JSON. Free the result with [`tb_string_free`].
 * Returns NULL on failure.
 *
 * # Safety
 * `env` must be a live handle.
 */
char *tb_env_to_json(const struct TbEnvironment *env);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must be NULL or a string from this library that was not freed yet.
 */
void tb_string_free(char *s);

/**
 * Evaluates `Lambda_t`, `ln mu_t`, `A_t`, `V_t`, `B_t` and `mu_t^theta V_t`
 * to absolute tolerance `tol`.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum TbStatus tb_transforms(const struct TbEnvironment *env,
                            double t,
                            double tol,
                            struct TbTransforms *out);

/**
 * `E[s^Z_t | Z_0 = 1]` for `s` in `[0, 1]`.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum TbStatus tb_pgf(const struct TbEnvironment *env, double t, double s, double tol, double *out);

/**
 * `P(Z_t > 0)`.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum TbStatus tb_survival(const struct TbEnvironment *env, double t, double tol, double *out);

/**
 * `E[Z_t | Z_t > 0]`.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum TbStatus tb_conditional_mean(const struct TbEnvironment *env,
                                  double t,
                                  double tol,
                                  double *out);

/**
 * `E[s^Z_t | Z_tau = 1]` for `tau <= t`.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum TbStatus tb_transition_pgf(const struct TbEnvironment *env,
                                double tau,
                                double t,
                                double s,
                                double tol,
                                double *out);

/**
 * Extinction probability `q`. Returns `TB_STATUS_INCONCLUSIVE` when the
 * limit probes do not settle.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum TbStatus tb_extinction(const struct TbEnvironment *env, double *out);

/**
 * Classifies the environment with the default probe schedule. An
 * inconclusive outcome is `TB_REGIME_INCONCLUSIVE` with status OK.
 *
 * # Safety
 * `env` must be a live handle and `out` a valid pointer.
 */
enum TbStatus tb_classify(const struct TbEnvironment *env, enum TbRegime *out);

/**
 * Simulates replica `replica` of seed `seed` up to `t_end` from one
 * individual. `Z` at each of the `n_checkpoints` sorted times is written to
 * `values`; `n_recorded` receives how many were reached (fewer when the
 * population exceeded `cap`, which also sets `capped` to 1). A zero `cap`
 * uses the library default.
 *
 * # Safety
 * `env` must be a live handle. `checkpoints` and `values` must point to
 * `n_checkpoints` elements (they may be NULL when it is zero). `n_recorded`
 * and `capped` must be valid pointers.
 */
enum TbStatus tb_simulate(const struct TbEnvironment *env,
                          uint64_t seed,
                          uint64_t replica,
                          double t_end,
                          const double *checkpoints,
                          size_t n_checkpoints,
                          uint64_t cap,
                          uint64_t *values,
                          size_t *n_recorded,
                          int32_t *capped);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THETA_BRANCH_H */
