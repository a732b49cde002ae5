//! Monte Carlo machinery: exact Gaussian sampling of stationary sequences,
//! fractional Brownian covariate paths, long-memory error synthesis on the
//! sphere, and the repeated-fit prediction study.
//!
//! Sampling is exact rather than approximate: stationary sequences come from
//! circulant embedding (the covariance row is wrapped into a circulant whose
//! eigenvalues are computed by FFT; Gaussian weights on the eigenbasis give a
//! path with exactly the requested covariance), with a dense Cholesky
//! fallback for rows whose embedding has negative eigenvalues. Fractional
//! Brownian motion is built by cumulating exactly sampled fractional Gaussian
//! noise.
//!
//! The prediction study repeatedly simulates covariates and errors, fits the
//! regression, and accumulates mean absolute prediction errors against the
//! noiseless response surface on a fixed set of snapshot times. All
//! randomness is derived from a single seed through per-repetition
//! sub-seeds, so results are reproducible and independent of thread count.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::functional_ts::{CoefficientSeries, FunctionalTsError};
use crate::lrd_spectral::{
    invert_to_autocov, CandidateSet, ContrastWeight, FrequencyGrid, LrdSpectralError,
    LrdSpectralModel, ToeplitzCovariance, REFINEMENT_POINTS,
};
use crate::regression::{
    fit_projected, fit_with_covariances, invert_link, model_covariances, predict,
    project_response, CovarianceSource, DesignMatrix, LinkOperator, RegressionError,
};
use crate::sphere_basis::{
    eigenspace_dim, indices_up_to, synthesize, GriddedField, HarmonicCoefficients, HarmonicIndex,
    SphereBasisError, SphereGrid,
};

/// Default spherical truncation for the study: degrees `0..=7`, i.e. eight
/// eigenspaces.
pub const DEFAULT_TRUNCATION: usize = 7;

/// Default number of memory-exponent candidates scanned by the plug-in fit.
pub const DEFAULT_CANDIDATE_COUNT: usize = 100;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("hurst exponent must lie strictly inside (0, 1), got {hurst}")]
    InvalidHurst { hurst: f64 },
    #[error("path length must be at least 1, got {t_len}")]
    PathTooShort { t_len: usize },
    #[error("covariance row covers {row_len} lags but the path needs {t_len}")]
    RowTooShort { row_len: usize, t_len: usize },
    #[error("covariance row is not positive definite and admits no nonnegative circulant embedding")]
    CovarianceNotSamplable,
    #[error("the study design defines exactly two covariates, got {p}")]
    UnsupportedCovariateCount { p: usize },
    #[error("error amplitude must be finite and nonnegative, got {value}")]
    InvalidAmplitude { value: f64 },
    #[error("study needs at least one repetition")]
    NoRepetitions,
    #[error("series length {t_len} is too short for the study (need at least 4)")]
    StudyTooShort { t_len: usize },
    #[error("plug-in variant needs a nonempty candidate set")]
    NoCandidates,
    #[error("quadrature grid integrates exactly only to degree {max_exact}, below the truncation {n_max}")]
    GridTooCoarse { max_exact: usize, n_max: usize },
    #[error("designated parameter harmonic has degree {needed}, above the truncation {n_max}")]
    TruncationTooLow { needed: usize, n_max: usize },
    #[error("repetition {rep}: {source}")]
    Repetition {
        rep: usize,
        source: Box<SimulationError>,
    },
    #[error(transparent)]
    Sphere(#[from] SphereBasisError),
    #[error(transparent)]
    Ts(#[from] FunctionalTsError),
    #[error(transparent)]
    Spectral(#[from] LrdSpectralError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimulationError>;

// ---------------------------------------------------------------------------
// Exact stationary Gaussian sampling
// ---------------------------------------------------------------------------

/// Autocovariance of fractional Gaussian noise (unit-spaced increments of
/// fractional Brownian motion with Hurst exponent `hurst`):
/// `γ(k) = ½(|k−1|^{2H} − 2|k|^{2H} + |k+1|^{2H})` for lags `0..=max_lag`.
pub fn fgn_autocovariance(hurst: f64, max_lag: usize) -> Vec<f64> {
    let two_h = 2.0 * hurst;
    (0..=max_lag)
        .map(|k| {
            let k = k as f64;
            0.5 * ((k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h) + (k + 1.0).powf(two_h))
        })
        .collect()
}

enum SamplerMode {
    /// Circulant of size `size` built from the covariance row; `sqrt_eigs`
    /// holds the square roots of its (nonnegative) FFT eigenvalues.
    Circulant {
        size: usize,
        sqrt_eigs: Vec<f64>,
        fft: Arc<dyn rustfft::Fft<f64>>,
    },
    /// Lower Cholesky factor of the dense `t_len × t_len` Toeplitz block.
    Cholesky { factor: DMatrix<f64> },
}

/// Exact sampler for a zero-mean stationary Gaussian sequence with a given
/// autocovariance row.
///
/// The row may extend past the requested path length; longer rows give the
/// circulant embedding more room, which keeps its eigenvalues positive for
/// slowly decaying covariances. Embedding uses the full row; the Cholesky
/// fallback only needs the leading `t_len` lags.
pub struct StationarySampler {
    t_len: usize,
    mode: SamplerMode,
}

impl std::fmt::Debug for StationarySampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match self.mode {
            SamplerMode::Circulant { size, .. } => format!("circulant(size={size})"),
            SamplerMode::Cholesky { .. } => "cholesky".to_string(),
        };
        write!(f, "StationarySampler {{ t_len: {}, mode: {} }}", self.t_len, mode)
    }
}

impl StationarySampler {
    /// Build a sampler from autocovariances at lags `0..row.len()`, for paths
    /// of length `t_len ≤ row.len()`.
    ///
    /// The symmetric circulant `c_j = row[min(j, m−j)]` of size
    /// `m = 2(row.len()−1)` is diagonalized by FFT; if every eigenvalue is
    /// nonnegative (up to a relative tolerance), sampling goes through the
    /// spectral route. Otherwise the dense Toeplitz block is Cholesky
    /// factored; if that fails too the row is not a valid covariance and the
    /// build errors.
    pub fn from_extended_row(row: &[f64], t_len: usize) -> Result<Self> {
        if t_len == 0 {
            return Err(SimulationError::PathTooShort { t_len });
        }
        if row.len() < t_len {
            return Err(SimulationError::RowTooShort {
                row_len: row.len(),
                t_len,
            });
        }
        if !(row[0] > 0.0) || row.iter().any(|v| !v.is_finite()) {
            return Err(SimulationError::CovarianceNotSamplable);
        }
        if row.len() >= 2 {
            let m = 2 * (row.len() - 1);
            let mut c: Vec<Complex64> = (0..m)
                .map(|j| Complex64::new(row[j.min(m - j)], 0.0))
                .collect();
            let fft = FftPlanner::new().plan_fft_forward(m);
            fft.process(&mut c);
            let eigs: Vec<f64> = c.iter().map(|z| z.re).collect();
            let max_eig = eigs.iter().fold(0.0_f64, |a, &b| a.max(b));
            let min_eig = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            if min_eig >= -1e-9 * max_eig {
                let sqrt_eigs = eigs.iter().map(|&l| l.max(0.0).sqrt()).collect();
                return Ok(Self {
                    t_len,
                    mode: SamplerMode::Circulant {
                        size: m,
                        sqrt_eigs,
                        fft,
                    },
                });
            }
        }
        let dense = DMatrix::from_fn(t_len, t_len, |s, t| row[s.abs_diff(t)]);
        let chol =
            nalgebra::Cholesky::new(dense).ok_or(SimulationError::CovarianceNotSamplable)?;
        Ok(Self {
            t_len,
            mode: SamplerMode::Cholesky {
                factor: chol.unpack(),
            },
        })
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    /// Whether sampling runs through the circulant embedding (exact and
    /// O(m log m)) rather than the dense fallback.
    pub fn uses_circulant(&self) -> bool {
        matches!(self.mode, SamplerMode::Circulant { .. })
    }

    /// Draw two independent paths.
    ///
    /// On the circulant route, load every frequency slot with an independent
    /// complex standard Gaussian `ξ_k = U_k + iV_k` weighted by `√λ_k` and
    /// transform. Because the eigenvalues are symmetric (`λ_k = λ_{m−k}`),
    /// the real and imaginary parts of `m^{-1/2} Σ_k √λ_k ξ_k e^{-2πikt/m}`
    /// are independent and each carries exactly the covariance `c_{|s−t|}`.
    pub fn draw_pair(&self, rng: &mut ChaCha20Rng) -> (Vec<f64>, Vec<f64>) {
        match &self.mode {
            SamplerMode::Circulant {
                size,
                sqrt_eigs,
                fft,
            } => {
                let m = *size;
                let mut b = Vec::with_capacity(m);
                for &w in sqrt_eigs {
                    let u: f64 = rng.sample(StandardNormal);
                    let v: f64 = rng.sample(StandardNormal);
                    b.push(Complex64::new(w * u, w * v));
                }
                fft.process(&mut b);
                let scale = 1.0 / (m as f64).sqrt();
                let first = b[..self.t_len].iter().map(|z| z.re * scale).collect();
                let second = b[..self.t_len].iter().map(|z| z.im * scale).collect();
                (first, second)
            }
            SamplerMode::Cholesky { factor } => {
                let mut draw = || {
                    let z =
                        DVector::from_fn(self.t_len, |_, _| rng.sample::<f64, _>(StandardNormal));
                    (factor * z).iter().copied().collect::<Vec<f64>>()
                };
                let a = draw();
                let b = draw();
                (a, b)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Fractional Brownian motion
// ---------------------------------------------------------------------------

/// Specification of one fractional Brownian path on the unit-spaced grid
/// `t = 0, 1, …, t_len−1`, with `Cov(B_s, B_t) = ½(s^{2H} + t^{2H} − |s−t|^{2H})`
/// and `B_0 = 0`.
#[derive(Debug, Clone, Copy)]
pub struct FbmSpec {
    hurst: f64,
    t_len: usize,
    seed: u64,
}

impl FbmSpec {
    pub fn new(hurst: f64, t_len: usize, seed: u64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(SimulationError::InvalidHurst { hurst });
        }
        if t_len == 0 {
            return Err(SimulationError::PathTooShort { t_len });
        }
        Ok(Self {
            hurst,
            t_len,
            seed,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Sample one fractional Brownian path: exactly sampled fractional Gaussian
/// noise (circulant embedding), cumulated from a zero start.
pub fn fbm(spec: &FbmSpec) -> Result<Vec<f64>> {
    let mut path = Vec::with_capacity(spec.t_len);
    path.push(0.0);
    if spec.t_len == 1 {
        return Ok(path);
    }
    let n = spec.t_len - 1;
    let row = fgn_autocovariance(spec.hurst, n.saturating_sub(1));
    let sampler = StationarySampler::from_extended_row(&row, n)?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let (increments, _) = sampler.draw_pair(&mut rng);
    let mut level = 0.0;
    for dx in increments {
        level += dx;
        path.push(level);
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Long-memory error synthesis on the sphere
// ---------------------------------------------------------------------------

/// Per-degree exact samplers for the coefficient error processes of a
/// spectral model. Building one is the expensive step (spectral inversion
/// plus embedding per degree); draws are cheap and reusable across
/// repetitions.
#[derive(Debug)]
pub struct ErrorSampler {
    n_max: usize,
    t_len: usize,
    samplers: Vec<StationarySampler>,
    lag_zero: Vec<f64>,
}

impl ErrorSampler {
    /// Invert each degree's spectral density to autocovariances out to
    /// `max(2·t_len, 256)` lags (the extra lags stabilize the circulant
    /// embedding) and prepare one sampler per degree.
    pub fn new(model: &LrdSpectralModel, t_len: usize) -> Result<Self> {
        if t_len == 0 {
            return Err(SimulationError::PathTooShort { t_len });
        }
        let grid = FrequencyGrid::refinement(REFINEMENT_POINTS)?;
        let extended = (2 * t_len).max(256);
        let mut samplers = Vec::with_capacity(model.n_max() + 1);
        let mut lag_zero = Vec::with_capacity(model.n_max() + 1);
        for n in 0..=model.n_max() {
            let row = invert_to_autocov(model, n, extended, &grid);
            lag_zero.push(row[0]);
            samplers.push(StationarySampler::from_extended_row(&row, t_len)?);
        }
        Ok(Self {
            n_max: model.n_max(),
            t_len,
            samplers,
            lag_zero,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    /// Lag-zero autocovariance (process variance) at one degree, as realized
    /// by the spectral inversion the sampler is built on.
    pub fn lag_zero(&self, degree: usize) -> f64 {
        self.lag_zero[degree]
    }

    /// Draw a full coefficient error series: independent stationary paths
    /// for every order within each degree, sharing that degree's covariance.
    /// A fixed traversal (degrees ascending, orders paired) makes the output
    /// a pure function of the seed.
    pub fn draw(&self, seed: u64) -> CoefficientSeries {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut out = CoefficientSeries::zeros(self.n_max, self.t_len);
        for n in 0..=self.n_max {
            let dim = eigenspace_dim(n);
            let mut j = 1;
            while j <= dim {
                let (a, b) = self.samplers[n].draw_pair(&mut rng);
                let idx = HarmonicIndex::new(n, j).expect("order within eigenspace");
                out.series_mut(idx).copy_from_slice(&a);
                if j + 1 <= dim {
                    let idx2 = HarmonicIndex::new(n, j + 1).expect("order within eigenspace");
                    out.series_mut(idx2).copy_from_slice(&b);
                }
                j += 2;
            }
        }
        out
    }
}

/// Simulate the stationary error process of a spectral model: the coefficient
/// series plus the synthesized fields at every time step on `grid`.
pub fn simulate_lrd_error(
    model: &LrdSpectralModel,
    t_len: usize,
    grid: &Arc<SphereGrid>,
    seed: u64,
) -> Result<(CoefficientSeries, Vec<GriddedField>)> {
    let sampler = ErrorSampler::new(model, t_len)?;
    let series = sampler.draw(seed);
    let mut stack = Vec::with_capacity(t_len);
    for t in 1..=t_len {
        stack.push(synthesize(&series.snapshot(t)?, grid));
    }
    Ok((series, stack))
}

// ---------------------------------------------------------------------------
// Study configuration
// ---------------------------------------------------------------------------

/// Which memory-exponent profile the error model carries across degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrdRegime {
    /// Exponents grow with the degree: low-degree (large-scale) components
    /// have short memory, high-degree components long memory.
    Increasing,
    /// Exponents shrink with the degree: the strongest memory sits in the
    /// large-scale components.
    Decreasing,
}

impl std::fmt::Display for LrdRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LrdRegime::Increasing => "increasing",
            LrdRegime::Decreasing => "decreasing",
        })
    }
}

impl std::str::FromStr for LrdRegime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "increasing" => Ok(LrdRegime::Increasing),
            "decreasing" => Ok(LrdRegime::Decreasing),
            other => Err(format!("unknown regime `{other}` (increasing|decreasing)")),
        }
    }
}

impl LrdRegime {
    /// Memory exponents per degree `0..=n_max`, linearly spaced across
    /// `[0.1, 0.4]` (well inside the admissible `[0, 1/2)` band and inside
    /// the candidate generator's range).
    pub fn alphas(self, n_max: usize) -> Vec<f64> {
        const LO: f64 = 0.1;
        const HI: f64 = 0.4;
        if n_max == 0 {
            return vec![0.5 * (LO + HI)];
        }
        (0..=n_max)
            .map(|n| {
                let frac = n as f64 / n_max as f64;
                match self {
                    LrdRegime::Increasing => LO + (HI - LO) * frac,
                    LrdRegime::Decreasing => HI - (HI - LO) * frac,
                }
            })
            .collect()
    }
}

/// What the two covariate paths look like and where the true parameters sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateDesign {
    /// Strongly dependent smooth paths: column `k` is fractional Brownian
    /// motion with Hurst exponent `1/(2(k+1))` (so `H = 1/2, 1/4`), and the
    /// unit parameter coefficients sit on the degree-one harmonics `(1,1)`
    /// and `(1,2)`.
    SmoothPair,
    /// Nearly uncorrelated rough paths: both columns use `H = 0.001`, with
    /// unit parameter coefficients on `(1,1)` and `(2,1)`.
    RoughPair,
}

impl std::fmt::Display for CovariateDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovariateDesign::SmoothPair => "smooth",
            CovariateDesign::RoughPair => "rough",
        })
    }
}

impl std::str::FromStr for CovariateDesign {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "smooth" => Ok(CovariateDesign::SmoothPair),
            "rough" => Ok(CovariateDesign::RoughPair),
            other => Err(format!("unknown covariate design `{other}` (smooth|rough)")),
        }
    }
}

impl CovariateDesign {
    /// Hurst exponent of covariate column `column` (0-based).
    pub fn hurst(self, column: usize) -> f64 {
        match self {
            CovariateDesign::SmoothPair => 0.5 / (column as f64 + 1.0),
            CovariateDesign::RoughPair => 0.001,
        }
    }

    /// The two harmonics carrying unit true coefficients.
    pub fn designated_harmonics(self) -> [HarmonicIndex; 2] {
        let pair = |a: (usize, usize), b: (usize, usize)| {
            [
                HarmonicIndex::new(a.0, a.1).expect("valid designated harmonic"),
                HarmonicIndex::new(b.0, b.1).expect("valid designated harmonic"),
            ]
        };
        match self {
            CovariateDesign::SmoothPair => pair((1, 1), (1, 2)),
            CovariateDesign::RoughPair => pair((1, 1), (2, 1)),
        }
    }
}

/// Which covariance enters the GLS solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitVariant {
    /// The generating spectral model is handed to the fit.
    Oracle,
    /// The memory exponents are estimated from OLS residuals by minimum
    /// contrast over a seeded candidate set before the GLS solve.
    PlugIn,
}

impl std::fmt::Display for FitVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitVariant::Oracle => "oracle",
            FitVariant::PlugIn => "plugin",
        })
    }
}

impl std::str::FromStr for FitVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "oracle" => Ok(FitVariant::Oracle),
            "plugin" => Ok(FitVariant::PlugIn),
            other => Err(format!("unknown variant `{other}` (oracle|plugin)")),
        }
    }
}

/// Full description of one Monte Carlo prediction study.
#[derive(Debug, Clone)]
pub struct SimStudyConfig {
    /// Series length per repetition.
    pub t_len: usize,
    /// Number of repetitions.
    pub repetitions: usize,
    /// Spherical truncation degree.
    pub n_max: usize,
    /// Memory-exponent profile of the generating error model.
    pub regime: LrdRegime,
    /// Response link.
    pub link: LinkOperator,
    /// Number of covariates; the designs define exactly two.
    pub n_covariates: usize,
    /// Covariate path roughness and parameter placement.
    pub design: CovariateDesign,
    /// Oracle or plug-in covariance during fitting.
    pub variant: FitVariant,
    /// Scale multiplier applied to the error coefficient series.
    pub error_amplitude: f64,
    /// Candidate-set size for the plug-in variant.
    pub n_candidates: usize,
    /// Polar resolution of the quadrature grid.
    pub n_polar: usize,
    /// Azimuthal resolution of the quadrature grid.
    pub n_azimuth: usize,
    /// Master seed; everything else is derived from it.
    pub seed: u64,
}

impl SimStudyConfig {
    /// A study at the default truncation (degree 7) on the smallest grid
    /// that integrates products at that truncation exactly, with smooth
    /// covariates, oracle fitting, and unit error amplitude.
    pub fn new(t_len: usize, repetitions: usize, regime: LrdRegime, link: LinkOperator, seed: u64) -> Self {
        Self {
            t_len,
            repetitions,
            n_max: DEFAULT_TRUNCATION,
            regime,
            link,
            n_covariates: 2,
            design: CovariateDesign::SmoothPair,
            variant: FitVariant::Oracle,
            error_amplitude: 1.0,
            n_candidates: DEFAULT_CANDIDATE_COUNT,
            n_polar: DEFAULT_TRUNCATION + 1,
            n_azimuth: 2 * DEFAULT_TRUNCATION + 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_len < 4 {
            return Err(SimulationError::StudyTooShort { t_len: self.t_len });
        }
        if self.repetitions == 0 {
            return Err(SimulationError::NoRepetitions);
        }
        if self.n_covariates != 2 {
            return Err(SimulationError::UnsupportedCovariateCount {
                p: self.n_covariates,
            });
        }
        if !self.error_amplitude.is_finite() || self.error_amplitude < 0.0 {
            return Err(SimulationError::InvalidAmplitude {
                value: self.error_amplitude,
            });
        }
        if matches!(self.variant, FitVariant::PlugIn) && self.n_candidates == 0 {
            return Err(SimulationError::NoCandidates);
        }
        let needed = self
            .design
            .designated_harmonics()
            .iter()
            .map(|idx| idx.degree())
            .max()
            .unwrap_or(0);
        if needed > self.n_max {
            return Err(SimulationError::TruncationTooLow {
                needed,
                n_max: self.n_max,
            });
        }
        Ok(())
    }
}

/// Times (1-based) at which prediction errors are recorded: every tenth step
/// `9, 19, …, 99` once the series is long enough, otherwise evenly spaced
/// deciles of `1..=t_len`.
pub fn snapshot_times(t_len: usize) -> Vec<usize> {
    if t_len >= 99 {
        return (0..10).map(|i| 10 * i + 9).collect();
    }
    let mut out: Vec<usize> = Vec::new();
    for i in 1..=10_usize {
        let t = (((i * t_len) as f64) / 10.0).round() as usize;
        let t = t.clamp(1, t_len);
        if out.last() != Some(&t) {
            out.push(t);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// The study itself
// ---------------------------------------------------------------------------

/// Outcome of a prediction study: per-snapshot mean-absolute-error maps and
/// their overall average.
#[derive(Debug)]
pub struct StudyResult {
    config: SimStudyConfig,
    snapshot_times: Vec<usize>,
    mae_fields: Vec<GriddedField>,
    grid_mean_mae: f64,
}

impl StudyResult {
    pub fn config(&self) -> &SimStudyConfig {
        &self.config
    }

    /// 1-based times the error maps refer to.
    pub fn snapshot_times(&self) -> &[usize] {
        &self.snapshot_times
    }

    /// One mean-absolute-error map per snapshot time, averaged over
    /// repetitions.
    pub fn mae_fields(&self) -> &[GriddedField] {
        &self.mae_fields
    }

    /// Plain average of the error maps over all nodes and snapshots.
    pub fn grid_mean_mae(&self) -> f64 {
        self.grid_mean_mae
    }

    /// Write one CSV per snapshot (`mae_t_<t>.csv`: `colat_rad,lon_rad,mae`)
    /// plus `summary.csv` (`T,R,regime,link,grid_mean_mae`) into `dir`,
    /// creating it if needed.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (field, &t) in self.mae_fields.iter().zip(&self.snapshot_times) {
            let mut out = String::from("colat_rad,lon_rad,mae\n");
            for (node, &v) in field.grid().nodes().iter().zip(field.values()) {
                out.push_str(&format!(
                    "{},{},{}\n",
                    node.colatitude(),
                    node.longitude(),
                    v
                ));
            }
            std::fs::write(dir.join(format!("mae_t_{t}.csv")), out)?;
        }
        let summary = format!(
            "T,R,regime,link,grid_mean_mae\n{},{},{},{},{}\n",
            self.config.t_len,
            self.config.repetitions,
            self.config.regime,
            self.config.link,
            self.grid_mean_mae
        );
        std::fs::write(dir.join("summary.csv"), summary)?;
        Ok(())
    }
}

struct StudyContext<'a> {
    config: &'a SimStudyConfig,
    grid: &'a Arc<SphereGrid>,
    model: &'a LrdSpectralModel,
    error_sampler: &'a ErrorSampler,
    oracle_covs: Option<&'a [ToeplitzCovariance]>,
    candidates: &'a CandidateSet,
    weight: &'a ContrastWeight,
    beta_fields: &'a [GriddedField],
    snapshot_rows: &'a [usize],
}

/// Divide a path by its sample standard deviation (about the sample mean,
/// `n−1` denominator) so every covariate enters the design at unit sample
/// variance. The mean is left in place.
fn standardize(mut path: Vec<f64>) -> Vec<f64> {
    let n = path.len();
    if n < 2 {
        return path;
    }
    let mean = path.iter().sum::<f64>() / n as f64;
    let var = path.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var > 0.0 {
        let s = var.sqrt();
        for v in &mut path {
            *v /= s;
        }
    }
    path
}

fn run_repetition(ctx: &StudyContext, rep_seed: u64) -> Result<Vec<Vec<f64>>> {
    let config = ctx.config;
    let t_len = config.t_len;
    let mut rng = ChaCha20Rng::seed_from_u64(rep_seed);
    let cov_seeds: Vec<u64> = (0..config.n_covariates).map(|_| rng.gen()).collect();
    let err_seed: u64 = rng.gen();

    let mut columns = Vec::with_capacity(config.n_covariates);
    for (h, &s) in cov_seeds.iter().enumerate() {
        let spec = FbmSpec::new(config.design.hurst(h), t_len, s)?;
        columns.push(standardize(fbm(&spec)?));
    }
    let x = DesignMatrix::from_columns(&columns)?;
    x.verify_full_rank()?;

    let mut eps = ctx.error_sampler.draw(err_seed);
    if config.error_amplitude != 1.0 {
        for idx in indices_up_to(config.n_max) {
            for v in eps.series_mut(idx) {
                *v *= config.error_amplitude;
            }
        }
    }

    let n_nodes = ctx.grid.node_count();
    let mut stack = Vec::with_capacity(t_len);
    for t in 1..=t_len {
        let noise = synthesize(&eps.snapshot(t)?, ctx.grid);
        let mut values = noise.values().to_vec();
        for (h, field) in ctx.beta_fields.iter().enumerate() {
            let w = x.value(t - 1, h);
            for (v, &b) in values.iter_mut().zip(field.values()) {
                *v += w * b;
            }
        }
        for v in &mut values {
            *v = config.link.apply_scalar(*v);
        }
        stack.push(GriddedField::new(ctx.grid.clone(), values)?);
    }

    let latent = invert_link(config.link, &stack)?;
    let series = project_response(&latent, config.n_max)?;
    let fit = match config.variant {
        FitVariant::Oracle => fit_with_covariances(
            &series,
            &x,
            ctx.oracle_covs.expect("oracle covariances prebuilt"),
            None,
        )?,
        FitVariant::PlugIn => fit_projected(
            &series,
            &x,
            CovarianceSource::PlugIn {
                base: ctx.model,
                candidates: ctx.candidates,
                weight: ctx.weight,
            },
        )?,
    };

    let x_snap = x.subset_rows(ctx.snapshot_rows);
    let preds = predict(&fit, &x_snap, config.link, ctx.grid)?;

    let mut out = Vec::with_capacity(ctx.snapshot_rows.len());
    for (si, &t0) in ctx.snapshot_rows.iter().enumerate() {
        let mut truth = vec![0.0; n_nodes];
        for (h, field) in ctx.beta_fields.iter().enumerate() {
            let w = x.value(t0, h);
            for (v, &b) in truth.iter_mut().zip(field.values()) {
                *v += w * b;
            }
        }
        let row: Vec<f64> = preds[si]
            .values()
            .iter()
            .zip(&truth)
            .map(|(&p, &m)| (p - config.link.apply_scalar(m)).abs())
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Run the full Monte Carlo prediction study.
///
/// Per repetition: simulate the two covariate paths and the error
/// coefficient series, synthesize the response fields through the link, fit
/// (oracle or plug-in covariance), predict at the snapshot times, and record
/// absolute deviations from the noiseless response surface `H(Σ_h X_{t,h} β_h)`
/// at every node. Repetitions run in parallel; per-repetition seeds are
/// derived up front and accumulation happens in repetition order, so the
/// result is a pure function of the configuration.
pub fn simulate_study(config: &SimStudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let grid = Arc::new(SphereGrid::gauss_uniform(config.n_polar, config.n_azimuth)?);
    if grid.max_exact_degree() < config.n_max {
        return Err(SimulationError::GridTooCoarse {
            max_exact: grid.max_exact_degree(),
            n_max: config.n_max,
        });
    }
    let model = LrdSpectralModel::with_default_scales(config.regime.alphas(config.n_max))?;
    let error_sampler = ErrorSampler::new(&model, config.t_len)?;
    let oracle_covs = match config.variant {
        FitVariant::Oracle => Some(model_covariances(&model, config.n_max, config.t_len)?),
        FitVariant::PlugIn => None,
    };

    // One seed stream: candidate-set seed first, then one seed per
    // repetition, so repetition k sees the same randomness in every variant.
    let mut seeder = ChaCha20Rng::seed_from_u64(config.seed);
    let candidate_seed: u64 = seeder.gen();
    let rep_seeds: Vec<u64> = (0..config.repetitions).map(|_| seeder.gen()).collect();
    let candidates = CandidateSet::generate(config.n_max, config.n_candidates.max(1), candidate_seed);
    let weight = ContrastWeight::uniform(config.n_max);

    let beta_fields: Vec<GriddedField> = config
        .design
        .designated_harmonics()
        .iter()
        .map(|&idx| {
            let mut c = HarmonicCoefficients::zeros(config.n_max);
            c.set_entry(idx, 1.0);
            synthesize(&c, &grid)
        })
        .collect();

    let times = snapshot_times(config.t_len);
    let snapshot_rows: Vec<usize> = times.iter().map(|&t| t - 1).collect();

    let ctx = StudyContext {
        config,
        grid: &grid,
        model: &model,
        error_sampler: &error_sampler,
        oracle_covs: oracle_covs.as_deref(),
        candidates: &candidates,
        weight: &weight,
        beta_fields: &beta_fields,
        snapshot_rows: &snapshot_rows,
    };

    let per_rep: Vec<Vec<Vec<f64>>> = rep_seeds
        .par_iter()
        .enumerate()
        .map(|(rep, &s)| {
            run_repetition(&ctx, s).map_err(|e| SimulationError::Repetition {
                rep,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let n_nodes = grid.node_count();
    let mut sums = vec![vec![0.0; n_nodes]; times.len()];
    for rep in &per_rep {
        for (acc, row) in sums.iter_mut().zip(rep) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    let r = config.repetitions as f64;
    let mut total = 0.0;
    let mae_fields: Vec<GriddedField> = sums
        .into_iter()
        .map(|mut row| {
            for v in &mut row {
                *v /= r;
                total += *v;
            }
            GriddedField::new(grid.clone(), row).expect("map length matches grid")
        })
        .collect();
    let grid_mean_mae = total / (times.len() as f64 * n_nodes as f64);

    Ok(StudyResult {
        config: config.clone(),
        snapshot_times: times,
        mae_fields,
        grid_mean_mae,
    })
}
