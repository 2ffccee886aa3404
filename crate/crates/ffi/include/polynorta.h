#ifndef POLYNORTA_H
#define POLYNORTA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible calls.
 */
typedef enum PnStatus {
  PN_OK = 0,
  /**
   * Invalid argument, numerical failure or any other error.
   */
  PN_ERROR = 1,
  /**
   * A requested correlation lies outside the attainable range.
   */
  PN_INFEASIBLE = 2,
  /**
   * Ill-conditioned, singular or not positive definite matrix.
   */
  PN_CONDITIONING = 3,
  /**
   * Malformed input text such as a distribution string.
   */
  PN_SCHEMA = 4,
} PnStatus;

/**
 * Opaque fitted polynomial model.
 */
typedef struct PnModel PnModel;

/**
 * Opaque correlated vector model.
 */
typedef struct PnVectorModel PnVectorModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL terminated,
 * truncated to `cap`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t pn_last_error_message(char *buf, size_t cap);

/**
 * Builds a model from `len` coefficients a₀…a_n.
 *
 * # Safety
 * `coeffs` must point to `len` doubles; `out` must be writable.
 */
enum PnStatus pn_model_from_coeffs(const double *coeffs, size_t len, struct PnModel **out);

/**
 * PWM fit of a distribution given as `family:p1,p2`, e.g. `beta:2,2`.
 *
 * # Safety
 * `dist` must be a NUL-terminated string; `out` must be writable.
 */
enum PnStatus pn_fit_pwm(const char *dist,
                         size_t degree,
                         bool allow_high_degree,
                         struct PnModel **out);

/**
 * PWM fit of an observed sample.
 *
 * # Safety
 * `x` must point to `len` doubles; `out` must be writable.
 */
enum PnStatus pn_fit_pwm_sample(const double *x,
                                size_t len,
                                size_t degree,
                                bool allow_high_degree,
                                struct PnModel **out);

/**
 * Percentile fit with the default three-block node plan at tail
 * probability `alpha` (pass 0 for the default).
 *
 * # Safety
 * `dist` must be a NUL-terminated string; `out` must be writable.
 */
enum PnStatus pn_fit_percentile(const char *dist,
                                size_t degree,
                                double alpha,
                                struct PnModel **out);

/**
 * Polynomial degree, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live model handle.
 */
size_t pn_model_degree(const struct PnModel *m);

/**
 * Writes the degree + 1 coefficients into `out`, which holds `cap` doubles.
 *
 * # Safety
 * `m` must be a live model handle and `out` must hold `cap` doubles.
 */
enum PnStatus pn_model_coeffs(const struct PnModel *m, double *out, size_t cap);

/**
 * Evaluates Σ a_k z^k; NaN for a null handle.
 *
 * # Safety
 * `m` must be null or a live model handle.
 */
double pn_model_evaluate(const struct PnModel *m, double z);

/**
 * Maps `n` normal values `z` to `x`.
 *
 * # Safety
 * `z` and `x` must each hold `n` doubles.
 */
enum PnStatus pn_model_transform(const struct PnModel *m, const double *z, double *x, size_t n);

/**
 * # Safety
 * `m` must be null or a handle not freed before.
 */
void pn_model_free(struct PnModel *m);

/**
 * Attainable correlation range of a model pair.
 *
 * # Safety
 * Handles must be live; `lower` and `upper` must be writable.
 */
enum PnStatus pn_rho_bounds(const struct PnModel *m1,
                            const struct PnModel *m2,
                            double *lower,
                            double *upper);

/**
 * Normal-space correlation producing `rho_x` between the two models.
 *
 * # Safety
 * Handles must be live; `rho_z` must be writable.
 */
enum PnStatus pn_rho_solve(const struct PnModel *m1,
                           const struct PnModel *m2,
                           double rho_x,
                           double *rho_z);

/**
 * Builds a vector model from `dim` marginal models and a row-major target
 * correlation matrix. The models are copied; the caller keeps ownership.
 *
 * # Safety
 * `models` must hold `dim` live handles and `rx` must hold `dim * dim` doubles.
 */
enum PnStatus pn_vector_model_new(const struct PnModel *const *models,
                                  size_t dim,
                                  const double *rx,
                                  bool nearest_pd,
                                  struct PnVectorModel **out);

/**
 * Dimension of a vector model, or 0 for a null handle.
 *
 * # Safety
 * `vm` must be null or a live handle.
 */
size_t pn_vector_model_dimension(const struct PnVectorModel *vm);

/**
 * Writes the solved normal-space correlation matrix (row-major).
 *
 * # Safety
 * `vm` must be a live handle and `out` must hold `cap` doubles.
 */
enum PnStatus pn_vector_model_normal_correlation(const struct PnVectorModel *vm,
                                                 double *out,
                                                 size_t cap);

/**
 * Generates `count` vectors into `out` (row-major, `count * dim` doubles).
 * Output is determined by `seed` and `stream` alone.
 *
 * # Safety
 * `vm` must be a live handle and `out` must hold `cap` doubles.
 */
enum PnStatus pn_generate(const struct PnVectorModel *vm,
                          size_t count,
                          uint64_t seed,
                          uint64_t stream,
                          double *out,
                          size_t cap);

/**
 * # Safety
 * `vm` must be null or a handle not freed before.
 */
void pn_vector_model_free(struct PnVectorModel *vm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYNORTA_H */
