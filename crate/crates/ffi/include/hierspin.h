#ifndef HIERSPIN_H
#define HIERSPIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_DOMAIN = 2,
  HS_STATUS_CAPACITY = 3,
  HS_STATUS_DIVERGENCE = 4,
  HS_STATUS_BRACKET = 5,
  HS_STATUS_CRITICAL = 6,
  HS_STATUS_BLOW_UP = 7,
  HS_STATUS_CLASSIFICATION = 8,
  HS_STATUS_INTEGRITY = 9,
  HS_STATUS_NUMERIC = 10,
  HS_STATUS_PANIC = 11,
} HsStatus;

/**
 * Opaque completed Monte Carlo run.
 */
typedef struct HsMcRun HsMcRun;

/**
 * Opaque spectral measure.
 */
typedef struct HsSpectralModel HsSpectralModel;

/**
 * Saddle point of the spherical model.
 */
typedef struct HsSphericalSolution {
  double beta;
  double mu;
  double rho0;
  /**
   * `INFINITY` when the inverse moment diverges.
   */
  double beta_c;
  /**
   * 1 above the critical point.
   */
  int32_t condensed;
} HsSphericalSolution;

/**
 * Monte Carlo estimate with batch-means error.
 */
typedef struct HsEstimate {
  double mean;
  double std_error;
  double tau_int;
  size_t n_samples;
  /**
   * 1 when the error bar rests on too few batches.
   */
  int32_t precision_warning;
} HsEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *hs_last_error_message(void);

/**
 * Clears the last error on this thread.
 */
void hs_clear_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hs_version(void);

/**
 * Finite hierarchical lattice with side `l`, dimension `d` and `k` levels.
 *
 * # Safety
 * `out_model` must be a valid pointer.
 */
enum HsStatus hs_model_finite(size_t l, size_t d, size_t k, struct HsSpectralModel **out_model);

/**
 * Infinite-volume hierarchical measure.
 *
 * # Safety
 * `out_model` must be a valid pointer.
 */
enum HsStatus hs_model_infinite_k(double l, double d, struct HsSpectralModel **out_model);

/**
 * Continuum measure; pass `INFINITY` for an unbounded cutoff.
 *
 * # Safety
 * `out_model` must be a valid pointer.
 */
enum HsStatus hs_model_continuum(double d, double cutoff, struct HsSpectralModel **out_model);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from one of the `hs_model_*` constructors and not be
 * used afterwards.
 */
void hs_model_free(struct HsSpectralModel *model);

/**
 * `E (−Δ − mu)^{-1}` for `mu < 0`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_resolvent(const struct HsSpectralModel *model, double mu, double *out_value);

/**
 * `λ_k` and its multiplicity on a finite lattice.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_eigenvalue(size_t l,
                            size_t d,
                            size_t k_levels,
                            size_t k,
                            double *out_lambda,
                            size_t *out_multiplicity);

/**
 * `y = −Δ x` on a finite lattice; `len` must equal `L^{dK}`.
 *
 * # Safety
 * `x` and `y` must point to `len` doubles.
 */
enum HsStatus hs_laplacian_apply(size_t l,
                                 size_t d,
                                 size_t k,
                                 const double *x,
                                 double *y,
                                 size_t len);

/**
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_beta_c(const struct HsSpectralModel *model, double *out_beta_c);

/**
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_solve_mu(double beta,
                          const struct HsSpectralModel *model,
                          struct HsSphericalSolution *out_solution);

/**
 * Closed-form `μ(β)` of the `d = 4`, `C = ∞` continuum model.
 *
 * # Safety
 * `out_mu` must be valid.
 */
enum HsStatus hs_solve_mu_d4(double beta, double *out_mu);

/**
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_free_energy(double beta, const struct HsSpectralModel *model, double *out_value);

/**
 * Limiting moment generating function `exp(−z²/(2μ))`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_mgf(double beta, double z, const struct HsSpectralModel *model, double *out_value);

/**
 * Finite-volume `ln Θ_n(β, z)`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_log_mgf_finite_n(double beta,
                                  double z,
                                  double n,
                                  const struct HsSpectralModel *model,
                                  double *out_value);

/**
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_clt_variance(double beta, const struct HsSpectralModel *model, double *out_value);

/**
 * Taylor coefficients `c_1..c_order` of the sphere-measure potential.
 * `n_components = INFINITY` selects the infinite-component limit.
 *
 * # Safety
 * `out_coeffs` must point to `order` doubles.
 */
enum HsStatus hs_initial_potential(double beta,
                                   double n_components,
                                   size_t order,
                                   double *out_coeffs);

/**
 * Runs the local-potential flow for time `t_final`, overwriting `coeffs`
 * with the final coefficients. `out_blowup_time` receives the blow-up
 * time, or NaN if the flow stayed bounded.
 *
 * # Safety
 * `coeffs` must point to `order` doubles; `out_blowup_time` must be valid.
 */
enum HsStatus hs_lpa_flow(double *coeffs,
                          size_t order,
                          double n_components,
                          double d,
                          double t_final,
                          double *out_blowup_time);

/**
 * One discrete renormalization step with block factor `l`, in place.
 *
 * # Safety
 * `coeffs` must point to `order` doubles.
 */
enum HsStatus hs_rg_step(double *coeffs, size_t order, double n_components, double d, double l);

/**
 * Runs `chains` Metropolis chains of `sweeps` measurement sweeps each.
 *
 * # Safety
 * `out_run` must be valid.
 */
enum HsStatus hs_mc_run(size_t l,
                        size_t d,
                        size_t k,
                        size_t n_components,
                        double beta,
                        size_t sweeps,
                        size_t chains,
                        uint64_t seed,
                        struct HsMcRun **out_run);

/**
 * Estimate of `Θ_n(β, z)` from a completed run.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_mc_estimate_mgf(const struct HsMcRun *run,
                                 double z,
                                 struct HsEstimate *out_estimate);

/**
 * Mean acceptance rate of a completed run.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HsStatus hs_mc_acceptance(const struct HsMcRun *run, double *out_rate);

/**
 * Releases a run. NULL is ignored.
 *
 * # Safety
 * `run` must come from [`hs_mc_run`] and not be used afterwards.
 */
void hs_mc_run_free(struct HsMcRun *run);

/**
 * Exact `N = 1` moment generating function by enumeration (`n <= 20`).
 *
 * # Safety
 * `out_theta` must be valid.
 */
enum HsStatus hs_exact_mgf_ising(size_t l,
                                 size_t d,
                                 size_t k,
                                 double beta,
                                 double z,
                                 double *out_theta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIERSPIN_H */
