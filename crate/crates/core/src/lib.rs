//! Nonlinear multiple functional regression for sphere-supported time series
//! with long-range-dependent errors.
//!
//! The crate is organized bottom-up:
//!
//! - [`sphere_basis`]: real spherical harmonics, quadrature grids, and
//!   analysis/synthesis between gridded fields and harmonic coefficients.
//! - [`functional_ts`]: functional discrete Fourier transform, periodograms,
//!   and empirical autocovariances of coefficient time series.
//! - [`lrd_spectral`]: the semiparametric long-memory spectral family,
//!   minimum-contrast estimation, and spectral-to-covariance inversion.
//! - [`regression`]: generalized least squares per harmonic eigenspace with
//!   identity or exponential link, plus the plug-in pipeline.
//! - [`simulation`]: fractional Brownian motion, stationary long-memory error
//!   synthesis, and the Monte Carlo prediction study.
//! - [`climate_synth`]: physically parameterized surface radiation/pressure
//!   dataset generation.
//! - [`cli`]: configuration parsing, cross-validation, and the command
//!   drivers behind the `sfr` binary.

pub mod sphere_basis;

pub mod functional_ts;

pub mod lrd_spectral;

pub mod regression;

pub mod simulation;

pub mod climate_synth;

pub mod cli;
