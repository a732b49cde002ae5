/* C interface for the sfr sphere-regression library. */

#ifndef SFR_H
#define SFR_H

/* Auto-generated by cbindgen from the sfr-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Link operator selector for fits and predictions.
 */
typedef enum {
  /**
   * Identity link: the regression acts directly on the observed fields.
   */
  SFR_LINK_IDENTITY = 0,
  /**
   * Exponential link: the regression is linear in the log of the fields
   * (observations must be strictly positive).
   */
  SFR_LINK_EXPONENTIAL = 1,
} SfrLink;

/**
 * Outcome of an `sfr_*` call.
 */
typedef enum {
  /**
   * The call succeeded and all outputs were written.
   */
  SFR_STATUS_OK = 0,
  /**
   * A required pointer argument was `NULL`.
   */
  SFR_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was structurally invalid (bad length, bad index, value
   * out of the documented domain).
   */
  SFR_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The computation failed numerically (rank deficiency, covariance not
   * positive definite, domain violation under a link, ...).
   */
  SFR_STATUS_NUMERICAL = 3,
  /**
   * A file could not be read, written, or parsed.
   */
  SFR_STATUS_IO = 4,
  /**
   * An internal invariant was violated; the library caught a panic
   * instead of unwinding across the ABI.
   */
  SFR_STATUS_PANIC = 5,
} SfrStatus;

/**
 * Opaque handle to a scalar field sampled on a grid.
 */
typedef struct SfrField SfrField;

/**
 * Opaque handle to a fitted regression (parameters plus estimator
 * covariances).
 */
typedef struct SfrFit SfrFit;

/**
 * Opaque handle to a quadrature grid on the unit sphere.
 */
typedef struct SfrGrid SfrGrid;

/**
 * Opaque handle to a per-degree spectral error model.
 */
typedef struct SfrModel SfrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static, NUL-terminated string. Never freed by the
 * caller.
 */
const char *sfr_version(void);

/**
 * Message describing the most recent failure on the calling thread, as a
 * NUL-terminated string. The pointer stays valid until the next failing
 * `sfr_*` call on the same thread; the caller must not free it. Returns an
 * empty string if no failure has occurred yet.
 */
const char *sfr_last_error_message(void);

/**
 * Create a Gauss–Legendre (colatitude) × uniform (longitude) quadrature
 * grid with `n_polar × n_azimuth` nodes. Transforms on this grid are exact
 * up to degree `min(n_polar − 1, (n_azimuth − 1)/2)`.
 *
 * # Safety
 * `out` must point to a writable `SfrGrid*` slot. On success it receives a
 * handle that must be released with [`sfr_grid_free`].
 */
SfrStatus sfr_grid_gauss_uniform(size_t n_polar, size_t n_azimuth, SfrGrid **out);

/**
 * Create an equiangular `n_polar × n_azimuth` grid (uniform in colatitude
 * and longitude, trapezoidal weights). Suitable for generating fields;
 * its transform is only exact at degree 0.
 *
 * # Safety
 * `out` must point to a writable `SfrGrid*` slot. On success it receives a
 * handle that must be released with [`sfr_grid_free`].
 */
SfrStatus sfr_grid_equiangular(size_t n_polar, size_t n_azimuth, SfrGrid **out);

/**
 * Number of nodes in the grid.
 *
 * # Safety
 * `grid` must be a live grid handle; `out` must point to a writable
 * `size_t`.
 */
SfrStatus sfr_grid_node_count(const SfrGrid *grid, size_t *out);

/**
 * Highest spherical-harmonic degree whose analysis is exact on this grid.
 *
 * # Safety
 * `grid` must be a live grid handle; `out` must point to a writable
 * `size_t`.
 */
SfrStatus sfr_grid_max_exact_degree(const SfrGrid *grid, size_t *out);

/**
 * Release a grid handle. `NULL` is a no-op.
 *
 * # Safety
 * `grid` must be `NULL` or a handle returned by a grid constructor that
 * has not yet been freed; no other handle may still borrow it inside the
 * same call.
 */
void sfr_grid_free(SfrGrid *grid);

/**
 * Create a field from `len` node values (node order of the grid). The
 * values are copied; `len` must equal the grid's node count.
 *
 * # Safety
 * `grid` must be a live grid handle; `values` must point to `len` readable
 * doubles; `out` must point to a writable `SfrField*` slot. On success it
 * receives a handle to free with [`sfr_field_free`].
 */
SfrStatus sfr_field_create(const SfrGrid *grid, const double *values, size_t len, SfrField **out);

/**
 * Number of node values in the field.
 *
 * # Safety
 * `field` must be a live field handle; `out` must point to a writable
 * `size_t`.
 */
SfrStatus sfr_field_node_count(const SfrField *field, size_t *out);

/**
 * Copy the field's node values into `out`; `len` must equal the node
 * count.
 *
 * # Safety
 * `field` must be a live field handle; `out` must point to `len` writable
 * doubles.
 */
SfrStatus sfr_field_values(const SfrField *field, double *out, size_t len);

/**
 * Release a field handle. `NULL` is a no-op.
 *
 * # Safety
 * `field` must be `NULL` or a handle returned by a field-producing call
 * that has not yet been freed.
 */
void sfr_field_free(SfrField *field);

/**
 * Project a field onto the real spherical harmonics up to degree `n_max`,
 * writing the `(n_max+1)²` coefficients (degree-major, zonal first) into
 * `out`; `len` must equal `(n_max+1)²` and `n_max` must not exceed the
 * grid's exact degree.
 *
 * # Safety
 * `field` must be a live field handle; `out` must point to `len` writable
 * doubles.
 */
SfrStatus sfr_analyze(const SfrField *field, size_t n_max, double *out, size_t len);

/**
 * Evaluate the harmonic expansion with the given flat coefficient buffer
 * (degree-major, zonal first) on the grid; `len` must be a perfect square
 * `(n_max+1)²`. Writes a new field handle to `out`.
 *
 * # Safety
 * `grid` must be a live grid handle; `coeffs` must point to `len` readable
 * doubles; `out` must point to a writable `SfrField*` slot. On success it
 * receives a handle to free with [`sfr_field_free`].
 */
SfrStatus sfr_synthesize(const SfrGrid *grid, const double *coeffs, size_t len, SfrField **out);

/**
 * Create a per-degree spectral model from three arrays of length
 * `n_max + 1 = len`: innovation variances (positive), short-range factors
 * (positive), and memory exponents in `[0, 1/2)`.
 *
 * # Safety
 * `innovation_vars`, `srd_factors`, and `alphas` must each point to `len`
 * readable doubles; `out` must point to a writable `SfrModel*` slot. On
 * success it receives a handle to free with [`sfr_model_free`].
 */
SfrStatus sfr_model_new(const double *innovation_vars,
                        const double *srd_factors,
                        const double *alphas,
                        size_t len,
                        SfrModel **out);

/**
 * Create a spectral model from memory exponents alone, using the default
 * geometric innovation variances and flat short-range factors.
 *
 * # Safety
 * `alphas` must point to `len` readable doubles; `out` must point to a
 * writable `SfrModel*` slot. On success it receives a handle to free with
 * [`sfr_model_free`].
 */
SfrStatus sfr_model_with_default_scales(const double *alphas, size_t len, SfrModel **out);

/**
 * Highest degree the model covers.
 *
 * # Safety
 * `model` must be a live model handle; `out` must point to a writable
 * `size_t`.
 */
SfrStatus sfr_model_n_max(const SfrModel *model, size_t *out);

/**
 * Evaluate the degree-`degree` spectral density at angular frequency
 * `omega` (nonzero, in `[−π, π]`).
 *
 * # Safety
 * `model` must be a live model handle; `out` must point to a writable
 * double.
 */
SfrStatus sfr_model_spectral_density(const SfrModel *model,
                                     size_t degree,
                                     double omega,
                                     double *out);

/**
 * Integrate the degree-`degree` spectral density back to autocovariances,
 * writing lags `0..len` into `out` (`len` values, `len ≥ 1`).
 *
 * # Safety
 * `model` must be a live model handle; `out` must point to `len` writable
 * doubles.
 */
SfrStatus sfr_model_autocovariance(const SfrModel *model, size_t degree, double *out, size_t len);

/**
 * Release a model handle. `NULL` is a no-op.
 *
 * # Safety
 * `model` must be `NULL` or a handle returned by a model constructor that
 * has not yet been freed.
 */
void sfr_model_free(SfrModel *model);

/**
 * Draw one long-memory error path of length `t_len` on the grid, writing
 * the sampled fields row-major into `out` (`len = t_len × node_count`
 * doubles; row `t` holds the field at time `t+1`). Identical
 * `(model, grid, t_len, seed)` produce identical output.
 *
 * # Safety
 * `model` and `grid` must be live handles; `out` must point to `len`
 * writable doubles.
 */
SfrStatus sfr_simulate_error(const SfrModel *model,
                             const SfrGrid *grid,
                             size_t t_len,
                             uint64_t seed,
                             double *out,
                             size_t len);

/**
 * Fit the functional regression with a known error model (oracle
 * covariances). The response stack is `t_len` fields row-major in
 * `values` (`values_len = t_len × node_count`); the design matrix is
 * row-major in `x` (`x_len = t_len × n_covariates`, one row per time).
 * The model must cover at least degree `n_max`. Writes a fit handle to
 * `out`.
 *
 * # Safety
 * `grid` and `model` must be live handles; `values` and `x` must point to
 * the stated number of readable doubles; `out` must point to a writable
 * `SfrFit*` slot. On success it receives a handle to free with
 * [`sfr_fit_free`].
 */
SfrStatus sfr_fit_oracle(const SfrGrid *grid,
                         const double *values,
                         size_t values_len,
                         size_t t_len,
                         const double *x,
                         size_t x_len,
                         size_t n_covariates,
                         SfrLink link,
                         const SfrModel *model,
                         size_t n_max,
                         SfrFit **out);

/**
 * Fit the functional regression with plug-in covariances: memory
 * exponents are re-estimated from OLS residuals by minimum contrast over
 * `n_candidates` seeded candidate exponent sequences, holding the model's
 * scale factors fixed. Buffer layout matches [`sfr_fit_oracle`]; the model
 * must cover exactly the degrees `0..=n_max` used by the contrast.
 *
 * # Safety
 * `grid` and `model` must be live handles; `values` and `x` must point to
 * the stated number of readable doubles; `out` must point to a writable
 * `SfrFit*` slot. On success it receives a handle to free with
 * [`sfr_fit_free`].
 */
SfrStatus sfr_fit_plugin(const SfrGrid *grid,
                         const double *values,
                         size_t values_len,
                         size_t t_len,
                         const double *x,
                         size_t x_len,
                         size_t n_covariates,
                         SfrLink link,
                         const SfrModel *model,
                         size_t n_max,
                         size_t n_candidates,
                         uint64_t seed,
                         SfrFit **out);

/**
 * Number of covariates the fit carries.
 *
 * # Safety
 * `fit` must be a live fit handle; `out` must point to a writable
 * `size_t`.
 */
SfrStatus sfr_fit_n_covariates(const SfrFit *fit, size_t *out);

/**
 * Truncation degree of the fitted parameters.
 *
 * # Safety
 * `fit` must be a live fit handle; `out` must point to a writable
 * `size_t`.
 */
SfrStatus sfr_fit_n_max(const SfrFit *fit, size_t *out);

/**
 * Copy the harmonic coefficients of parameter function `covariate`
 * (0-based) into `out`; `len` must equal `(n_max+1)²` for the fit's
 * truncation degree.
 *
 * # Safety
 * `fit` must be a live fit handle; `out` must point to `len` writable
 * doubles.
 */
SfrStatus sfr_fit_beta(const SfrFit *fit, size_t covariate, double *out, size_t len);

/**
 * Total estimator variance: the trace of the coefficient covariance summed
 * over all eigenspaces with multiplicity.
 *
 * # Safety
 * `fit` must be a live fit handle; `out` must point to a writable double.
 */
SfrStatus sfr_fit_total_variance(const SfrFit *fit, double *out);

/**
 * Number of estimated memory exponents the fit carries: `n_max + 1` for a
 * plug-in fit, 0 for an oracle fit.
 *
 * # Safety
 * `fit` must be a live fit handle; `out` must point to a writable
 * `size_t`.
 */
SfrStatus sfr_fit_theta_len(const SfrFit *fit, size_t *out);

/**
 * Copy the plug-in fit's estimated memory exponents into `out`; `len`
 * must equal the value reported by [`sfr_fit_theta_len`]. Fails on an
 * oracle fit.
 *
 * # Safety
 * `fit` must be a live fit handle; `out` must point to `len` writable
 * doubles.
 */
SfrStatus sfr_fit_theta(const SfrFit *fit, double *out, size_t len);

/**
 * Predict response fields for new design rows, writing them row-major
 * into `out`. `x` is row-major `t_new × p` where `p` is the fit's
 * covariate count (`x_len = t_new × p`); `out_len` must equal
 * `t_new × node_count`.
 *
 * # Safety
 * `fit` and `grid` must be live handles; `x` must point to `x_len`
 * readable doubles; `out` must point to `out_len` writable doubles.
 */
SfrStatus sfr_predict(const SfrFit *fit,
                      const double *x,
                      size_t x_len,
                      size_t t_new,
                      SfrLink link,
                      const SfrGrid *grid,
                      double *out,
                      size_t out_len);

/**
 * Save the fit (design dimensions, parameters, exponents, covariances) to
 * a portable model file at `path` (NUL-terminated UTF-8). `t_len` records
 * the training length alongside the model.
 *
 * # Safety
 * `fit` must be a live fit handle; `path` must be a valid NUL-terminated
 * string.
 */
SfrStatus sfr_fit_save(const SfrFit *fit, size_t t_len, const char *path);

/**
 * Load a fit from a model file written by [`sfr_fit_save`], writing the
 * handle to `out` and the recorded training length to `t_len_out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must point to a
 * writable `SfrFit*` slot and `t_len_out` to a writable `size_t`. On
 * success `out` receives a handle to free with [`sfr_fit_free`].
 */
SfrStatus sfr_fit_load(const char *path, SfrFit **out, size_t *t_len_out);

/**
 * Release a fit handle. `NULL` is a no-op.
 *
 * # Safety
 * `fit` must be `NULL` or a handle returned by a fit-producing call that
 * has not yet been freed.
 */
void sfr_fit_free(SfrFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SFR_H */
