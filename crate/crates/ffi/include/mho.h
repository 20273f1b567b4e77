#ifndef MHO_H
#define MHO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MhoStatus {
  MHO_STATUS_OK = 0,
  MHO_STATUS_NULL_POINTER = 1,
  MHO_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Not enough samples yet, e.g. no cost before the first cycle.
   */
  MHO_STATUS_WINDOW_UNDERFLOW = 3,
  MHO_STATUS_DIVERGENCE = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  MHO_STATUS_INTERNAL = 5,
} MhoStatus;

/**
 * Opaque iteration-budget adapter.
 */
typedef struct MhoRateAdapter MhoRateAdapter;

/**
 * Opaque on-line observer owning its measurement log.
 */
typedef struct MhoVdpObserver MhoVdpObserver;

typedef struct MhoContractionTerms {
  /**
   * Efficiency `J_best / J_star`.
   */
  double e;
  /**
   * Disturbance ratio `J_star / J_prev`.
   */
  double d;
  /**
   * Gain `E D`.
   */
  double k;
} MhoContractionTerms;

/**
 * Settings of an on-line observer for `x1' = x2`,
 * `x2' = -a x1 + (1 - u x3 x1^2) x2`, `x3' = 0`, `y = x1`.
 */
typedef struct MhoVdpObserverConfig {
  /**
   * Model gain `a`.
   */
  double a;
  /**
   * Sampling period, seconds.
   */
  double tau;
  /**
   * Time per solver iteration, seconds.
   */
  double tau_c;
  /**
   * Window length in samples.
   */
  size_t horizon;
  /**
   * Arrival-cost weight.
   */
  double rho;
  /**
   * Positive cost floor.
   */
  double floor_c;
  double box_lower[3];
  double box_upper[3];
  size_t q_init;
  size_t q_min;
  size_t q_max;
  /**
   * Budget increment; ignored unless `adaptive`.
   */
  size_t delta;
  bool adaptive;
  /**
   * First backtracking step of the solver.
   */
  double initial_step;
} MhoVdpObserverConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *mho_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *mho_version(void);

/**
 * Samples per updating interval, `int(q tau_c / tau) + 1`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MhoStatus mho_ell(size_t q, double tau, double tau_c, size_t *out);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MhoStatus mho_contraction_terms(double j_star,
                                     double j_best,
                                     double j_prev,
                                     struct MhoContractionTerms *out);

/**
 * `(J_star / J_prev - 1) / q`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MhoStatus mho_alpha_estimate(double j_star, double j_prev, size_t q, double *out);

/**
 * `(J_best - J_penultimate) / J_star`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MhoStatus mho_efficiency_gradient(double j_best,
                                       double j_penultimate,
                                       double j_star,
                                       double *out);

/**
 * `E dD/dq + D dE/dq`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MhoStatus mho_gain_gradient(double e, double d, double de_dq, double dd_dq, double *out);

/**
 * Derivative of `q / |ln K|`. Fails with `INVALID_ARGUMENT` when `K` is
 * within `1e-9` of 1 or not positive.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MhoStatus mho_response_time_gradient(double k, size_t q, double dk_dq, double *out);

/**
 * # Safety
 * `out` must be null or valid for writes. The handle is released with
 * [`mho_rate_adapter_free`].
 */
enum MhoStatus mho_rate_adapter_new(size_t q_init,
                                    size_t q_min,
                                    size_t q_max,
                                    size_t delta,
                                    struct MhoRateAdapter **out);

/**
 * Feeds the costs of one solve (initial guess, best, best after `q - 1`
 * iterations, previous delivered best) and writes the next budget.
 *
 * # Safety
 * `adapter` must come from [`mho_rate_adapter_new`]; `q_next` must be null
 * or valid for writes.
 */
enum MhoStatus mho_rate_adapter_update(struct MhoRateAdapter *adapter,
                                       double j_star,
                                       double j_best,
                                       double j_penultimate,
                                       double j_prev,
                                       size_t *q_next);

/**
 * # Safety
 * `adapter` must come from [`mho_rate_adapter_new`]; `out` must be null or
 * valid for writes.
 */
enum MhoStatus mho_rate_adapter_q(const struct MhoRateAdapter *adapter, size_t *out);

/**
 * Gain `K` measured at the last update (1 before any update).
 *
 * # Safety
 * As [`mho_rate_adapter_q`].
 */
enum MhoStatus mho_rate_adapter_last_gain(const struct MhoRateAdapter *adapter, double *out);

/**
 * Releases the handle; null is ignored.
 *
 * # Safety
 * `adapter` must come from [`mho_rate_adapter_new`] and not be used again.
 */
void mho_rate_adapter_free(struct MhoRateAdapter *adapter);

/**
 * Writes the reference benchmark settings into `out`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MhoStatus mho_vdp_observer_config_default(struct MhoVdpObserverConfig *out);

/**
 * # Safety
 * `config` must be null or point to a valid config, `x_hat0` to 3 doubles,
 * `out` be valid for writes. Release with [`mho_vdp_observer_free`].
 */
enum MhoStatus mho_vdp_observer_new(const struct MhoVdpObserverConfig *config,
                                    const double *x_hat0,
                                    struct MhoVdpObserver **out);

/**
 * Appends one sample (measured `y`, applied `u`), runs the cycle due at
 * that sample if any, and writes the state estimate for the sample into
 * `estimate` (3 doubles) unless it is null.
 *
 * # Safety
 * `observer` must come from [`mho_vdp_observer_new`]; `estimate` must be
 * null or valid for 3 writes.
 */
enum MhoStatus mho_vdp_observer_push(struct MhoVdpObserver *observer,
                                     double y,
                                     double u,
                                     double *estimate);

/**
 * Estimate at the latest sample.
 *
 * # Safety
 * As [`mho_vdp_observer_push`]; `out` must be valid for 3 writes.
 */
enum MhoStatus mho_vdp_observer_estimate(const struct MhoVdpObserver *observer, double *out);

/**
 * Current iteration budget.
 *
 * # Safety
 * As [`mho_vdp_observer_estimate`].
 */
enum MhoStatus mho_vdp_observer_q(const struct MhoVdpObserver *observer, size_t *out);

/**
 * Cost held at the latest sample; `WINDOW_UNDERFLOW` before the first cycle.
 *
 * # Safety
 * As [`mho_vdp_observer_estimate`].
 */
enum MhoStatus mho_vdp_observer_cost(const struct MhoVdpObserver *observer, double *out);

/**
 * Releases the handle; null is ignored.
 *
 * # Safety
 * `observer` must come from [`mho_vdp_observer_new`] and not be used again.
 */
void mho_vdp_observer_free(struct MhoVdpObserver *observer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MHO_H */
