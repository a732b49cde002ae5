//! C ABI for the sphere-regression library.
//!
//! The interface follows the usual handle/status-code conventions:
//!
//! - Opaque handles ([`SfrGrid`], [`SfrField`], [`SfrModel`], [`SfrFit`])
//!   are created by `sfr_*` constructors, passed behind pointers, and
//!   released with the matching `sfr_*_free` function. Handles are not
//!   reference-counted across the boundary; freeing one twice is undefined
//!   behavior, freeing `NULL` is a no-op.
//! - Every fallible call returns an [`SfrStatus`]; outputs are written
//!   through caller-supplied pointers only on `SFR_STATUS_OK`.
//! - On failure, a thread-local message describing the error is available
//!   via [`sfr_last_error_message`] until the next failing call on the same
//!   thread.
//! - Arrays cross the boundary as pointer + length pairs of `double`;
//!   lengths are always validated. Field values are ordered by grid node
//!   (colatitude-major, as the grid was constructed); harmonic coefficient
//!   buffers are flat degree-major with the zonal entry first, `(n_max+1)²`
//!   values; time-stacked buffers are row-major with one field per row.
//!
//! The generated header lives at `include/sfr.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use sfr_core::cli::CliError;
use sfr_core::lrd_spectral::{
    invert_to_autocov, CandidateSet, ContrastWeight, FrequencyGrid, LrdSpectralModel,
    REFINEMENT_POINTS,
};
use sfr_core::regression::{
    fit, predict, CovarianceSource, DesignMatrix, GLSFit, LinkOperator,
};
use sfr_core::simulation::simulate_lrd_error;
use sfr_core::sphere_basis::{
    analyze, indices_up_to, synthesize, GriddedField, HarmonicCoefficients, SphereGrid,
};

/// Outcome of an `sfr_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfrStatus {
    /// The call succeeded and all outputs were written.
    Ok = 0,
    /// A required pointer argument was `NULL`.
    NullArgument = 1,
    /// An argument was structurally invalid (bad length, bad index, value
    /// out of the documented domain).
    InvalidArgument = 2,
    /// The computation failed numerically (rank deficiency, covariance not
    /// positive definite, domain violation under a link, ...).
    Numerical = 3,
    /// A file could not be read, written, or parsed.
    Io = 4,
    /// An internal invariant was violated; the library caught a panic
    /// instead of unwinding across the ABI.
    Panic = 5,
}

/// Link operator selector for fits and predictions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfrLink {
    /// Identity link: the regression acts directly on the observed fields.
    Identity = 0,
    /// Exponential link: the regression is linear in the log of the fields
    /// (observations must be strictly positive).
    Exponential = 1,
}

impl SfrLink {
    fn to_core(self) -> LinkOperator {
        match self {
            SfrLink::Identity => LinkOperator::Identity,
            SfrLink::Exponential => LinkOperator::Exponential,
        }
    }
}

/// Opaque handle to a quadrature grid on the unit sphere.
pub struct SfrGrid {
    inner: Arc<SphereGrid>,
}

/// Opaque handle to a scalar field sampled on a grid.
pub struct SfrField {
    inner: GriddedField,
}

/// Opaque handle to a per-degree spectral error model.
pub struct SfrModel {
    inner: LrdSpectralModel,
}

/// Opaque handle to a fitted regression (parameters plus estimator
/// covariances).
pub struct SfrFit {
    inner: GLSFit,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default());
}

fn fail(status: SfrStatus, msg: &str) -> SfrStatus {
    set_error(msg);
    status
}

fn null_arg(name: &str) -> SfrStatus {
    fail(SfrStatus::NullArgument, &format!("argument `{name}` is NULL"))
}

/// Map a library error onto a status code, recording its message.
fn status_of(e: impl Into<CliError>) -> SfrStatus {
    match e.into() {
        CliError::Config(msg) => fail(SfrStatus::InvalidArgument, &msg),
        CliError::Numerical(msg) => fail(SfrStatus::Numerical, &msg),
        CliError::Io(msg) => fail(SfrStatus::Io, &msg),
    }
}

/// Run a call body, converting any panic into `SFR_STATUS_PANIC` instead of
/// unwinding across the C boundary.
fn guard(f: impl FnOnce() -> SfrStatus) -> SfrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(SfrStatus::Panic, "internal panic"),
    }
}

/// Library version as a static, NUL-terminated string. Never freed by the
/// caller.
#[no_mangle]
pub extern "C" fn sfr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on the calling thread, as a
/// NUL-terminated string. The pointer stays valid until the next failing
/// `sfr_*` call on the same thread; the caller must not free it. Returns an
/// empty string if no failure has occurred yet.
#[no_mangle]
pub extern "C" fn sfr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Create a Gauss–Legendre (colatitude) × uniform (longitude) quadrature
/// grid with `n_polar × n_azimuth` nodes. Transforms on this grid are exact
/// up to degree `min(n_polar − 1, (n_azimuth − 1)/2)`.
///
/// # Safety
/// `out` must point to a writable `SfrGrid*` slot. On success it receives a
/// handle that must be released with [`sfr_grid_free`].
#[no_mangle]
pub unsafe extern "C" fn sfr_grid_gauss_uniform(
    n_polar: usize,
    n_azimuth: usize,
    out: *mut *mut SfrGrid,
) -> SfrStatus {
    guard(|| {
        let Some(out) = out.as_mut() else {
            return null_arg("out");
        };
        match SphereGrid::gauss_uniform(n_polar, n_azimuth) {
            Ok(grid) => {
                *out = Box::into_raw(Box::new(SfrGrid { inner: Arc::new(grid) }));
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

/// Create an equiangular `n_polar × n_azimuth` grid (uniform in colatitude
/// and longitude, trapezoidal weights). Suitable for generating fields;
/// its transform is only exact at degree 0.
///
/// # Safety
/// `out` must point to a writable `SfrGrid*` slot. On success it receives a
/// handle that must be released with [`sfr_grid_free`].
#[no_mangle]
pub unsafe extern "C" fn sfr_grid_equiangular(
    n_polar: usize,
    n_azimuth: usize,
    out: *mut *mut SfrGrid,
) -> SfrStatus {
    guard(|| {
        let Some(out) = out.as_mut() else {
            return null_arg("out");
        };
        match SphereGrid::equiangular(n_polar, n_azimuth) {
            Ok(grid) => {
                *out = Box::into_raw(Box::new(SfrGrid { inner: Arc::new(grid) }));
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

/// Number of nodes in the grid.
///
/// # Safety
/// `grid` must be a live grid handle; `out` must point to a writable
/// `size_t`.
#[no_mangle]
pub unsafe extern "C" fn sfr_grid_node_count(
    grid: *const SfrGrid,
    out: *mut usize,
) -> SfrStatus {
    guard(|| {
        let (Some(grid), Some(out)) = (grid.as_ref(), out.as_mut()) else {
            return null_arg("grid/out");
        };
        *out = grid.inner.node_count();
        SfrStatus::Ok
    })
}

/// Highest spherical-harmonic degree whose analysis is exact on this grid.
///
/// # Safety
/// `grid` must be a live grid handle; `out` must point to a writable
/// `size_t`.
#[no_mangle]
pub unsafe extern "C" fn sfr_grid_max_exact_degree(
    grid: *const SfrGrid,
    out: *mut usize,
) -> SfrStatus {
    guard(|| {
        let (Some(grid), Some(out)) = (grid.as_ref(), out.as_mut()) else {
            return null_arg("grid/out");
        };
        *out = grid.inner.max_exact_degree();
        SfrStatus::Ok
    })
}

/// Release a grid handle. `NULL` is a no-op.
///
/// # Safety
/// `grid` must be `NULL` or a handle returned by a grid constructor that
/// has not yet been freed; no other handle may still borrow it inside the
/// same call.
#[no_mangle]
pub unsafe extern "C" fn sfr_grid_free(grid: *mut SfrGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// Create a field from `len` node values (node order of the grid). The
/// values are copied; `len` must equal the grid's node count.
///
/// # Safety
/// `grid` must be a live grid handle; `values` must point to `len` readable
/// doubles; `out` must point to a writable `SfrField*` slot. On success it
/// receives a handle to free with [`sfr_field_free`].
#[no_mangle]
pub unsafe extern "C" fn sfr_field_create(
    grid: *const SfrGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut SfrField,
) -> SfrStatus {
    guard(|| {
        let (Some(grid), Some(out)) = (grid.as_ref(), out.as_mut()) else {
            return null_arg("grid/out");
        };
        if values.is_null() {
            return null_arg("values");
        }
        let values = std::slice::from_raw_parts(values, len);
        match GriddedField::new(Arc::clone(&grid.inner), values.to_vec()) {
            Ok(field) => {
                *out = Box::into_raw(Box::new(SfrField { inner: field }));
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

/// Number of node values in the field.
///
/// # Safety
/// `field` must be a live field handle; `out` must point to a writable
/// `size_t`.
#[no_mangle]
pub unsafe extern "C" fn sfr_field_node_count(
    field: *const SfrField,
    out: *mut usize,
) -> SfrStatus {
    guard(|| {
        let (Some(field), Some(out)) = (field.as_ref(), out.as_mut()) else {
            return null_arg("field/out");
        };
        *out = field.inner.values().len();
        SfrStatus::Ok
    })
}

/// Copy the field's node values into `out`; `len` must equal the node
/// count.
///
/// # Safety
/// `field` must be a live field handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn sfr_field_values(
    field: *const SfrField,
    out: *mut f64,
    len: usize,
) -> SfrStatus {
    guard(|| {
        let Some(field) = field.as_ref() else {
            return null_arg("field");
        };
        if out.is_null() {
            return null_arg("out");
        }
        let values = field.inner.values();
        if len != values.len() {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("buffer holds {len} values but the field has {}", values.len()),
            );
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(values);
        SfrStatus::Ok
    })
}

/// Release a field handle. `NULL` is a no-op.
///
/// # Safety
/// `field` must be `NULL` or a handle returned by a field-producing call
/// that has not yet been freed.
#[no_mangle]
pub unsafe extern "C" fn sfr_field_free(field: *mut SfrField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Project a field onto the real spherical harmonics up to degree `n_max`,
/// writing the `(n_max+1)²` coefficients (degree-major, zonal first) into
/// `out`; `len` must equal `(n_max+1)²` and `n_max` must not exceed the
/// grid's exact degree.
///
/// # Safety
/// `field` must be a live field handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn sfr_analyze(
    field: *const SfrField,
    n_max: usize,
    out: *mut f64,
    len: usize,
) -> SfrStatus {
    guard(|| {
        let Some(field) = field.as_ref() else {
            return null_arg("field");
        };
        if out.is_null() {
            return null_arg("out");
        }
        let expected = (n_max + 1) * (n_max + 1);
        if len != expected {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("buffer holds {len} values but degree {n_max} needs {expected}"),
            );
        }
        match analyze(&field.inner, n_max) {
            Ok(coeffs) => {
                std::slice::from_raw_parts_mut(out, len).copy_from_slice(coeffs.entries());
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

/// Evaluate the harmonic expansion with the given flat coefficient buffer
/// (degree-major, zonal first) on the grid; `len` must be a perfect square
/// `(n_max+1)²`. Writes a new field handle to `out`.
///
/// # Safety
/// `grid` must be a live grid handle; `coeffs` must point to `len` readable
/// doubles; `out` must point to a writable `SfrField*` slot. On success it
/// receives a handle to free with [`sfr_field_free`].
#[no_mangle]
pub unsafe extern "C" fn sfr_synthesize(
    grid: *const SfrGrid,
    coeffs: *const f64,
    len: usize,
    out: *mut *mut SfrField,
) -> SfrStatus {
    guard(|| {
        let (Some(grid), Some(out)) = (grid.as_ref(), out.as_mut()) else {
            return null_arg("grid/out");
        };
        if coeffs.is_null() {
            return null_arg("coeffs");
        }
        let side = (len as f64).sqrt().round() as usize;
        if len == 0 || side * side != len {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("coefficient count {len} is not a perfect square"),
            );
        }
        let n_max = side - 1;
        let values = std::slice::from_raw_parts(coeffs, len);
        let mut harmonic = HarmonicCoefficients::zeros(n_max);
        for (idx, &v) in indices_up_to(n_max).zip(values) {
            harmonic.set_entry(idx, v);
        }
        let field = synthesize(&harmonic, &grid.inner);
        *out = Box::into_raw(Box::new(SfrField { inner: field }));
        SfrStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Spectral error models
// ---------------------------------------------------------------------------

/// Create a per-degree spectral model from three arrays of length
/// `n_max + 1 = len`: innovation variances (positive), short-range factors
/// (positive), and memory exponents in `[0, 1/2)`.
///
/// # Safety
/// `innovation_vars`, `srd_factors`, and `alphas` must each point to `len`
/// readable doubles; `out` must point to a writable `SfrModel*` slot. On
/// success it receives a handle to free with [`sfr_model_free`].
#[no_mangle]
pub unsafe extern "C" fn sfr_model_new(
    innovation_vars: *const f64,
    srd_factors: *const f64,
    alphas: *const f64,
    len: usize,
    out: *mut *mut SfrModel,
) -> SfrStatus {
    guard(|| {
        let Some(out) = out.as_mut() else {
            return null_arg("out");
        };
        if innovation_vars.is_null() || srd_factors.is_null() || alphas.is_null() {
            return null_arg("innovation_vars/srd_factors/alphas");
        }
        if len == 0 {
            return fail(SfrStatus::InvalidArgument, "model needs at least degree 0");
        }
        let innovation = std::slice::from_raw_parts(innovation_vars, len).to_vec();
        let srd = std::slice::from_raw_parts(srd_factors, len).to_vec();
        let alpha = std::slice::from_raw_parts(alphas, len).to_vec();
        match LrdSpectralModel::new(innovation, srd, alpha) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SfrModel { inner: model }));
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

/// Create a spectral model from memory exponents alone, using the default
/// geometric innovation variances and flat short-range factors.
///
/// # Safety
/// `alphas` must point to `len` readable doubles; `out` must point to a
/// writable `SfrModel*` slot. On success it receives a handle to free with
/// [`sfr_model_free`].
#[no_mangle]
pub unsafe extern "C" fn sfr_model_with_default_scales(
    alphas: *const f64,
    len: usize,
    out: *mut *mut SfrModel,
) -> SfrStatus {
    guard(|| {
        let Some(out) = out.as_mut() else {
            return null_arg("out");
        };
        if alphas.is_null() {
            return null_arg("alphas");
        }
        if len == 0 {
            return fail(SfrStatus::InvalidArgument, "model needs at least degree 0");
        }
        let alpha = std::slice::from_raw_parts(alphas, len).to_vec();
        match LrdSpectralModel::with_default_scales(alpha) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SfrModel { inner: model }));
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

/// Highest degree the model covers.
///
/// # Safety
/// `model` must be a live model handle; `out` must point to a writable
/// `size_t`.
#[no_mangle]
pub unsafe extern "C" fn sfr_model_n_max(
    model: *const SfrModel,
    out: *mut usize,
) -> SfrStatus {
    guard(|| {
        let (Some(model), Some(out)) = (model.as_ref(), out.as_mut()) else {
            return null_arg("model/out");
        };
        *out = model.inner.n_max();
        SfrStatus::Ok
    })
}

/// Evaluate the degree-`degree` spectral density at angular frequency
/// `omega` (nonzero, in `[−π, π]`).
///
/// # Safety
/// `model` must be a live model handle; `out` must point to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn sfr_model_spectral_density(
    model: *const SfrModel,
    degree: usize,
    omega: f64,
    out: *mut f64,
) -> SfrStatus {
    guard(|| {
        let (Some(model), Some(out)) = (model.as_ref(), out.as_mut()) else {
            return null_arg("model/out");
        };
        match model.inner.spectral_density(degree, omega) {
            Ok(value) => {
                *out = value;
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

/// Integrate the degree-`degree` spectral density back to autocovariances,
/// writing lags `0..len` into `out` (`len` values, `len ≥ 1`).
///
/// # Safety
/// `model` must be a live model handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn sfr_model_autocovariance(
    model: *const SfrModel,
    degree: usize,
    out: *mut f64,
    len: usize,
) -> SfrStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return null_arg("model");
        };
        if out.is_null() {
            return null_arg("out");
        }
        if len == 0 {
            return fail(SfrStatus::InvalidArgument, "need at least lag 0");
        }
        if degree > model.inner.n_max() {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("degree {degree} exceeds the model's degree {}", model.inner.n_max()),
            );
        }
        let grid = match FrequencyGrid::refinement(REFINEMENT_POINTS) {
            Ok(g) => g,
            Err(e) => return status_of(e),
        };
        let row = invert_to_autocov(&model.inner, degree, len - 1, &grid);
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&row);
        SfrStatus::Ok
    })
}

/// Release a model handle. `NULL` is a no-op.
///
/// # Safety
/// `model` must be `NULL` or a handle returned by a model constructor that
/// has not yet been freed.
#[no_mangle]
pub unsafe extern "C" fn sfr_model_free(model: *mut SfrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Draw one long-memory error path of length `t_len` on the grid, writing
/// the sampled fields row-major into `out` (`len = t_len × node_count`
/// doubles; row `t` holds the field at time `t+1`). Identical
/// `(model, grid, t_len, seed)` produce identical output.
///
/// # Safety
/// `model` and `grid` must be live handles; `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sfr_simulate_error(
    model: *const SfrModel,
    grid: *const SfrGrid,
    t_len: usize,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> SfrStatus {
    guard(|| {
        let (Some(model), Some(grid)) = (model.as_ref(), grid.as_ref()) else {
            return null_arg("model/grid");
        };
        if out.is_null() {
            return null_arg("out");
        }
        let nodes = grid.inner.node_count();
        if len != t_len * nodes {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("buffer holds {len} values but {t_len} fields need {}", t_len * nodes),
            );
        }
        match simulate_lrd_error(&model.inner, t_len, &grid.inner, seed) {
            Ok((_, fields)) => {
                let out = std::slice::from_raw_parts_mut(out, len);
                for (t, field) in fields.iter().enumerate() {
                    out[t * nodes..(t + 1) * nodes].copy_from_slice(field.values());
                }
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Regression
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
unsafe fn fit_from_raw(
    grid: &SfrGrid,
    values: *const f64,
    values_len: usize,
    t_len: usize,
    x: *const f64,
    x_len: usize,
    n_covariates: usize,
    link: SfrLink,
    source: CovarianceSource<'_>,
    n_max: usize,
    out: &mut *mut SfrFit,
) -> SfrStatus {
    if values.is_null() || x.is_null() {
        return null_arg("values/x");
    }
    let nodes = grid.inner.node_count();
    if t_len == 0 || values_len != t_len * nodes {
        return fail(
            SfrStatus::InvalidArgument,
            &format!("response buffer holds {values_len} values but {t_len} fields need {}", t_len * nodes),
        );
    }
    if n_covariates == 0 || x_len != t_len * n_covariates {
        return fail(
            SfrStatus::InvalidArgument,
            &format!(
                "design buffer holds {x_len} values but {t_len}×{n_covariates} needs {}",
                t_len * n_covariates
            ),
        );
    }
    let values = std::slice::from_raw_parts(values, values_len);
    let x = std::slice::from_raw_parts(x, x_len);

    let mut stack = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let row = values[t * nodes..(t + 1) * nodes].to_vec();
        match GriddedField::new(Arc::clone(&grid.inner), row) {
            Ok(field) => stack.push(field),
            Err(e) => return status_of(e),
        }
    }
    let columns: Vec<Vec<f64>> = (0..n_covariates)
        .map(|h| (0..t_len).map(|t| x[t * n_covariates + h]).collect())
        .collect();
    let design = match DesignMatrix::from_columns(&columns) {
        Ok(d) => d,
        Err(e) => return status_of(e),
    };
    match fit(&stack, &design, link.to_core(), source, n_max) {
        Ok(fitted) => {
            *out = Box::into_raw(Box::new(SfrFit { inner: fitted }));
            SfrStatus::Ok
        }
        Err(e) => status_of(e),
    }
}

/// Fit the functional regression with a known error model (oracle
/// covariances). The response stack is `t_len` fields row-major in
/// `values` (`values_len = t_len × node_count`); the design matrix is
/// row-major in `x` (`x_len = t_len × n_covariates`, one row per time).
/// The model must cover at least degree `n_max`. Writes a fit handle to
/// `out`.
///
/// # Safety
/// `grid` and `model` must be live handles; `values` and `x` must point to
/// the stated number of readable doubles; `out` must point to a writable
/// `SfrFit*` slot. On success it receives a handle to free with
/// [`sfr_fit_free`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sfr_fit_oracle(
    grid: *const SfrGrid,
    values: *const f64,
    values_len: usize,
    t_len: usize,
    x: *const f64,
    x_len: usize,
    n_covariates: usize,
    link: SfrLink,
    model: *const SfrModel,
    n_max: usize,
    out: *mut *mut SfrFit,
) -> SfrStatus {
    guard(|| {
        let (Some(grid), Some(model), Some(out)) = (grid.as_ref(), model.as_ref(), out.as_mut())
        else {
            return null_arg("grid/model/out");
        };
        fit_from_raw(
            grid,
            values,
            values_len,
            t_len,
            x,
            x_len,
            n_covariates,
            link,
            CovarianceSource::Known(&model.inner),
            n_max,
            out,
        )
    })
}

/// Fit the functional regression with plug-in covariances: memory
/// exponents are re-estimated from OLS residuals by minimum contrast over
/// `n_candidates` seeded candidate exponent sequences, holding the model's
/// scale factors fixed. Buffer layout matches [`sfr_fit_oracle`]; the model
/// must cover exactly the degrees `0..=n_max` used by the contrast.
///
/// # Safety
/// `grid` and `model` must be live handles; `values` and `x` must point to
/// the stated number of readable doubles; `out` must point to a writable
/// `SfrFit*` slot. On success it receives a handle to free with
/// [`sfr_fit_free`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sfr_fit_plugin(
    grid: *const SfrGrid,
    values: *const f64,
    values_len: usize,
    t_len: usize,
    x: *const f64,
    x_len: usize,
    n_covariates: usize,
    link: SfrLink,
    model: *const SfrModel,
    n_max: usize,
    n_candidates: usize,
    seed: u64,
    out: *mut *mut SfrFit,
) -> SfrStatus {
    guard(|| {
        let (Some(grid), Some(model), Some(out)) = (grid.as_ref(), model.as_ref(), out.as_mut())
        else {
            return null_arg("grid/model/out");
        };
        if n_candidates == 0 {
            return fail(SfrStatus::InvalidArgument, "need at least one candidate");
        }
        let candidates = CandidateSet::generate(n_max, n_candidates, seed);
        let weight = ContrastWeight::uniform(n_max);
        fit_from_raw(
            grid,
            values,
            values_len,
            t_len,
            x,
            x_len,
            n_covariates,
            link,
            CovarianceSource::PlugIn {
                base: &model.inner,
                candidates: &candidates,
                weight: &weight,
            },
            n_max,
            out,
        )
    })
}

/// Number of covariates the fit carries.
///
/// # Safety
/// `fit` must be a live fit handle; `out` must point to a writable
/// `size_t`.
#[no_mangle]
pub unsafe extern "C" fn sfr_fit_n_covariates(
    fit: *const SfrFit,
    out: *mut usize,
) -> SfrStatus {
    guard(|| {
        let (Some(fit), Some(out)) = (fit.as_ref(), out.as_mut()) else {
            return null_arg("fit/out");
        };
        *out = fit.inner.beta().n_covariates();
        SfrStatus::Ok
    })
}

/// Truncation degree of the fitted parameters.
///
/// # Safety
/// `fit` must be a live fit handle; `out` must point to a writable
/// `size_t`.
#[no_mangle]
pub unsafe extern "C" fn sfr_fit_n_max(fit: *const SfrFit, out: *mut usize) -> SfrStatus {
    guard(|| {
        let (Some(fit), Some(out)) = (fit.as_ref(), out.as_mut()) else {
            return null_arg("fit/out");
        };
        *out = fit.inner.beta().n_max();
        SfrStatus::Ok
    })
}

/// Copy the harmonic coefficients of parameter function `covariate`
/// (0-based) into `out`; `len` must equal `(n_max+1)²` for the fit's
/// truncation degree.
///
/// # Safety
/// `fit` must be a live fit handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn sfr_fit_beta(
    fit: *const SfrFit,
    covariate: usize,
    out: *mut f64,
    len: usize,
) -> SfrStatus {
    guard(|| {
        let Some(fit) = fit.as_ref() else {
            return null_arg("fit");
        };
        if out.is_null() {
            return null_arg("out");
        }
        let params = fit.inner.beta();
        if covariate >= params.n_covariates() {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("covariate {covariate} out of range (fit has {})", params.n_covariates()),
            );
        }
        let entries = params.param(covariate).entries();
        if len != entries.len() {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("buffer holds {len} values but the parameter has {}", entries.len()),
            );
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(entries);
        SfrStatus::Ok
    })
}

/// Total estimator variance: the trace of the coefficient covariance summed
/// over all eigenspaces with multiplicity.
///
/// # Safety
/// `fit` must be a live fit handle; `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn sfr_fit_total_variance(
    fit: *const SfrFit,
    out: *mut f64,
) -> SfrStatus {
    guard(|| {
        let (Some(fit), Some(out)) = (fit.as_ref(), out.as_mut()) else {
            return null_arg("fit/out");
        };
        *out = fit.inner.total_variance();
        SfrStatus::Ok
    })
}

/// Number of estimated memory exponents the fit carries: `n_max + 1` for a
/// plug-in fit, 0 for an oracle fit.
///
/// # Safety
/// `fit` must be a live fit handle; `out` must point to a writable
/// `size_t`.
#[no_mangle]
pub unsafe extern "C" fn sfr_fit_theta_len(
    fit: *const SfrFit,
    out: *mut usize,
) -> SfrStatus {
    guard(|| {
        let (Some(fit), Some(out)) = (fit.as_ref(), out.as_mut()) else {
            return null_arg("fit/out");
        };
        *out = fit.inner.theta_used().map_or(0, <[f64]>::len);
        SfrStatus::Ok
    })
}

/// Copy the plug-in fit's estimated memory exponents into `out`; `len`
/// must equal the value reported by [`sfr_fit_theta_len`]. Fails on an
/// oracle fit.
///
/// # Safety
/// `fit` must be a live fit handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn sfr_fit_theta(
    fit: *const SfrFit,
    out: *mut f64,
    len: usize,
) -> SfrStatus {
    guard(|| {
        let Some(fit) = fit.as_ref() else {
            return null_arg("fit");
        };
        if out.is_null() {
            return null_arg("out");
        }
        let Some(theta) = fit.inner.theta_used() else {
            return fail(SfrStatus::InvalidArgument, "fit carries no estimated exponents");
        };
        if len != theta.len() {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("buffer holds {len} values but theta has {}", theta.len()),
            );
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(theta);
        SfrStatus::Ok
    })
}

/// Predict response fields for new design rows, writing them row-major
/// into `out`. `x` is row-major `t_new × p` where `p` is the fit's
/// covariate count (`x_len = t_new × p`); `out_len` must equal
/// `t_new × node_count`.
///
/// # Safety
/// `fit` and `grid` must be live handles; `x` must point to `x_len`
/// readable doubles; `out` must point to `out_len` writable doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sfr_predict(
    fit: *const SfrFit,
    x: *const f64,
    x_len: usize,
    t_new: usize,
    link: SfrLink,
    grid: *const SfrGrid,
    out: *mut f64,
    out_len: usize,
) -> SfrStatus {
    guard(|| {
        let (Some(fit), Some(grid)) = (fit.as_ref(), grid.as_ref()) else {
            return null_arg("fit/grid");
        };
        if x.is_null() || out.is_null() {
            return null_arg("x/out");
        }
        let p = fit.inner.beta().n_covariates();
        if t_new == 0 || x_len != t_new * p {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("design buffer holds {x_len} values but {t_new}×{p} needs {}", t_new * p),
            );
        }
        let nodes = grid.inner.node_count();
        if out_len != t_new * nodes {
            return fail(
                SfrStatus::InvalidArgument,
                &format!("output buffer holds {out_len} values but {t_new} fields need {}", t_new * nodes),
            );
        }
        let x = std::slice::from_raw_parts(x, x_len);
        let columns: Vec<Vec<f64>> = (0..p)
            .map(|h| (0..t_new).map(|t| x[t * p + h]).collect())
            .collect();
        let design = match DesignMatrix::from_columns(&columns) {
            Ok(d) => d,
            Err(e) => return status_of(e),
        };
        match predict(&fit.inner, &design, link.to_core(), &grid.inner) {
            Ok(fields) => {
                let out = std::slice::from_raw_parts_mut(out, out_len);
                for (t, field) in fields.iter().enumerate() {
                    out[t * nodes..(t + 1) * nodes].copy_from_slice(field.values());
                }
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

/// Save the fit (design dimensions, parameters, exponents, covariances) to
/// a portable model file at `path` (NUL-terminated UTF-8). `t_len` records
/// the training length alongside the model.
///
/// # Safety
/// `fit` must be a live fit handle; `path` must be a valid NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn sfr_fit_save(
    fit: *const SfrFit,
    t_len: usize,
    path: *const c_char,
) -> SfrStatus {
    guard(|| {
        let Some(fit) = fit.as_ref() else {
            return null_arg("fit");
        };
        if path.is_null() {
            return null_arg("path");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(SfrStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match fit.inner.write_model_file_path(t_len, Path::new(path)) {
            Ok(()) => SfrStatus::Ok,
            Err(e) => status_of(e),
        }
    })
}

/// Load a fit from a model file written by [`sfr_fit_save`], writing the
/// handle to `out` and the recorded training length to `t_len_out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must point to a
/// writable `SfrFit*` slot and `t_len_out` to a writable `size_t`. On
/// success `out` receives a handle to free with [`sfr_fit_free`].
#[no_mangle]
pub unsafe extern "C" fn sfr_fit_load(
    path: *const c_char,
    out: *mut *mut SfrFit,
    t_len_out: *mut usize,
) -> SfrStatus {
    guard(|| {
        let (Some(out), Some(t_len_out)) = (out.as_mut(), t_len_out.as_mut()) else {
            return null_arg("out/t_len_out");
        };
        if path.is_null() {
            return null_arg("path");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(SfrStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match GLSFit::read_model_file_path(Path::new(path)) {
            Ok((fitted, t_len)) => {
                *out = Box::into_raw(Box::new(SfrFit { inner: fitted }));
                *t_len_out = t_len;
                SfrStatus::Ok
            }
            Err(e) => status_of(e),
        }
    })
}

/// Release a fit handle. `NULL` is a no-op.
///
/// # Safety
/// `fit` must be `NULL` or a handle returned by a fit-producing call that
/// has not yet been freed.
#[no_mangle]
pub unsafe extern "C" fn sfr_fit_free(fit: *mut SfrFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
