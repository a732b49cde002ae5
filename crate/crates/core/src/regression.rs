//! Functional regression on the sphere: link operators, per-eigenspace
//! generalized least squares against Toeplitz error covariances, estimator
//! moments, and oracle / plug-in prediction.
//!
//! The model is `Y_t = H(Σ_h X_{t,h}·β_h + ε_t)` with scalar covariates
//! `X_{t,h}`, sphere-supported parameter functions `β_h`, a componentwise
//! link `H`, and stationary errors whose harmonic coefficients are
//! independent across `(n, j)` with per-degree Toeplitz covariance `Λ_n`.
//! Estimation works coefficient-by-coefficient: project the linearized
//! response onto the harmonic basis, then solve the GLS normal equations
//! `(XᵀΛ_n⁻¹X)·β̂ = XᵀΛ_n⁻¹·ỹ_{n,j}` within each eigenspace.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::functional_ts::CoefficientSeries;
use crate::lrd_spectral::{
    estimate_theta, invert_to_autocov, CandidateSet, ContrastWeight, FrequencyGrid,
    LrdSpectralError, LrdSpectralModel, ToeplitzCovariance, REFINEMENT_POINTS,
};
use crate::sphere_basis::{
    analyze, indices_up_to, synthesize, GriddedField, HarmonicCoefficients, SphereBasisError,
    SphereGrid,
};

/// X is full rank iff its smallest singular value exceeds this times the
/// largest.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("design matrix is rank deficient (sigma_min {smallest} vs sigma_max {largest})")]
    RankDeficient { smallest: f64, largest: f64 },
    #[error("design entry at time {t}, covariate {h} is not finite")]
    NonFiniteDesign { t: usize, h: usize },
    #[error("{what}: got {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("empty field stack")]
    EmptyStack,
    #[error("field at time {t} is on a different grid than the first field")]
    GridMismatch { t: usize },
    #[error(
        "exponential link cannot invert non-positive value {value} at time {t}, node {node}"
    )]
    NonPositiveUnderLog { t: usize, node: usize, value: f64 },
    #[error("normal-equation matrix X'inv(Lambda)X is singular")]
    SingularNormalEquations,
    #[error("covariance for degree {degree} is not symmetric positive definite")]
    CovarianceNotPd { degree: usize },
    #[error("model covers degrees 0..={available} but the fit needs 0..={requested}")]
    ModelTooCoarse {
        requested: usize,
        available: usize,
    },
    #[error("model file line {line}: {message}")]
    MalformedModelFile { line: usize, message: String },
    #[error(transparent)]
    Sphere(#[from] SphereBasisError),
    #[error(transparent)]
    Ts(#[from] crate::functional_ts::FunctionalTsError),
    #[error(transparent)]
    Spectral(#[from] LrdSpectralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, RegressionError>;

/// T×p matrix of time-varying scalar covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    m: DMatrix<f64>,
}

impl DesignMatrix {
    /// Build from covariate columns (all of length T).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        if p == 0 {
            return Err(RegressionError::DimensionMismatch {
                what: "covariate count",
                got: 0,
                expected: 1,
            });
        }
        let t_len = columns[0].len();
        for (h, col) in columns.iter().enumerate() {
            if col.len() != t_len {
                return Err(RegressionError::DimensionMismatch {
                    what: "covariate column length",
                    got: col.len(),
                    expected: t_len,
                });
            }
            if let Some(t) = col.iter().position(|v| !v.is_finite()) {
                return Err(RegressionError::NonFiniteDesign { t, h });
            }
        }
        let m = DMatrix::from_fn(t_len, p, |t, h| columns[h][t]);
        Ok(Self { m })
    }

    /// Build from row-major data (`data[t*p + h]`).
    pub fn from_row_major(t_len: usize, p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != t_len * p {
            return Err(RegressionError::DimensionMismatch {
                what: "design buffer length",
                got: data.len(),
                expected: t_len * p,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(RegressionError::NonFiniteDesign { t: i / p, h: i % p });
        }
        Ok(Self {
            m: DMatrix::from_row_slice(t_len, p, data),
        })
    }

    pub fn t_len(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.m.ncols()
    }

    /// Entry `X_{t,h}` with 0-based time `t` and covariate `h`.
    pub fn value(&self, t: usize, h: usize) -> f64 {
        self.m[(t, h)]
    }

    pub fn column(&self, h: usize) -> Vec<f64> {
        self.m.column(h).iter().cloned().collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Keep the rows listed in `rows` (for cross-validation splits).
    pub fn subset_rows(&self, rows: &[usize]) -> Self {
        Self {
            m: self.m.select_rows(rows.iter()),
        }
    }

    /// Error unless the smallest singular value exceeds
    /// [`RANK_TOLERANCE`] times the largest.
    pub fn verify_full_rank(&self) -> Result<()> {
        let sv = self.m.clone().singular_values();
        let largest = sv.max();
        let smallest = sv.min();
        if !(smallest > RANK_TOLERANCE * largest) {
            return Err(RegressionError::RankDeficient { smallest, largest });
        }
        Ok(())
    }
}

/// The p sphere-supported parameter functions, one set of harmonic
/// coefficients each, sharing a common truncation degree.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalParams {
    params: Vec<HarmonicCoefficients>,
}

impl FunctionalParams {
    pub fn new(params: Vec<HarmonicCoefficients>) -> Result<Self> {
        let n_max = match params.first() {
            Some(p) => p.n_max(),
            None => {
                return Err(RegressionError::DimensionMismatch {
                    what: "parameter function count",
                    got: 0,
                    expected: 1,
                })
            }
        };
        for p in &params {
            if p.n_max() != n_max {
                return Err(RegressionError::DimensionMismatch {
                    what: "parameter truncation degree",
                    got: p.n_max(),
                    expected: n_max,
                });
            }
        }
        Ok(Self { params })
    }

    pub fn zeros(p: usize, n_max: usize) -> Self {
        Self {
            params: (0..p).map(|_| HarmonicCoefficients::zeros(n_max)).collect(),
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.params.len()
    }

    pub fn n_max(&self) -> usize {
        self.params[0].n_max()
    }

    /// Parameter function for covariate `h` (0-based).
    pub fn param(&self, h: usize) -> &HarmonicCoefficients {
        &self.params[h]
    }

    pub fn param_mut(&mut self, h: usize) -> &mut HarmonicCoefficients {
        &mut self.params[h]
    }

    pub fn params(&self) -> &[HarmonicCoefficients] {
        &self.params
    }
}

/// Componentwise response link, pointwise in space and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkOperator {
    Identity,
    /// `H(x) = exp(x)`; inversion requires strictly positive values.
    Exponential,
}

impl std::fmt::Display for LinkOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkOperator::Identity => "identity",
            LinkOperator::Exponential => "exponential",
        })
    }
}

impl std::str::FromStr for LinkOperator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "identity" => Ok(LinkOperator::Identity),
            "exponential" => Ok(LinkOperator::Exponential),
            other => Err(format!("unknown link `{other}` (identity|exponential)")),
        }
    }
}

impl LinkOperator {
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            LinkOperator::Identity => x,
            LinkOperator::Exponential => x.exp(),
        }
    }

    fn invert_scalar(self, y: f64) -> Option<f64> {
        match self {
            LinkOperator::Identity => Some(y),
            LinkOperator::Exponential => (y > 0.0).then(|| y.ln()),
        }
    }
}

/// Apply the link componentwise over a stack of fields.
pub fn apply_link(link: LinkOperator, stack: &[GriddedField]) -> Vec<GriddedField> {
    stack
        .iter()
        .map(|field| {
            let mut out = field.clone();
            for v in out.values_mut() {
                *v = link.apply_scalar(*v);
            }
            out
        })
        .collect()
}

/// Invert the link componentwise; under the exponential link every value
/// must be strictly positive, and violations report the time (1-based) and
/// node index.
pub fn invert_link(link: LinkOperator, stack: &[GriddedField]) -> Result<Vec<GriddedField>> {
    stack
        .iter()
        .enumerate()
        .map(|(i, field)| {
            let mut out = field.clone();
            for (node, v) in out.values_mut().iter_mut().enumerate() {
                *v = link.invert_scalar(*v).ok_or(RegressionError::NonPositiveUnderLog {
                    t: i + 1,
                    node,
                    value: *v,
                })?;
            }
            Ok(out)
        })
        .collect()
}

/// Project a stack of T fields onto the harmonic basis: the result holds the
/// response coefficient series `ỹ_{n,j}(t)`.
pub fn project_response(stack: &[GriddedField], n_max: usize) -> Result<CoefficientSeries> {
    let first = stack.first().ok_or(RegressionError::EmptyStack)?;
    let layout = first.grid().layout();
    let mut snapshots = Vec::with_capacity(stack.len());
    for (i, field) in stack.iter().enumerate() {
        if field.grid().layout() != layout {
            return Err(RegressionError::GridMismatch { t: i + 1 });
        }
        snapshots.push(analyze(field, n_max)?);
    }
    Ok(CoefficientSeries::from_snapshots(&snapshots)?)
}

/// Shared GLS solver for one eigenspace: factors `XᵀΛ⁻¹X` once and serves
/// every order `j` of the degree. Λ is only ever touched through linear
/// solves; no T×T inverse is formed.
pub struct EigenspaceGls {
    z: DMatrix<f64>,
    normal: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl EigenspaceGls {
    /// Solver against a Toeplitz covariance (Levinson recursion above the
    /// dimension threshold, dense Cholesky below).
    pub fn new_toeplitz(x: &DesignMatrix, cov: &ToeplitzCovariance) -> Result<Self> {
        if cov.t_len() != x.t_len() {
            return Err(RegressionError::DimensionMismatch {
                what: "covariance dimension",
                got: cov.t_len(),
                expected: x.t_len(),
            });
        }
        let t_len = x.t_len();
        let p = x.n_covariates();
        let mut z = DMatrix::zeros(t_len, p);
        for h in 0..p {
            let col = x.column(h);
            let solved = cov.solve(&col)?;
            z.column_mut(h).copy_from_slice(&solved);
        }
        Self::from_z(x, z)
    }

    /// Solver against an arbitrary dense SPD covariance (used on
    /// cross-validation row subsets, where Toeplitz structure is lost).
    pub fn new_dense(x: &DesignMatrix, lambda: &DMatrix<f64>, degree: usize) -> Result<Self> {
        if lambda.nrows() != x.t_len() || lambda.ncols() != x.t_len() {
            return Err(RegressionError::DimensionMismatch {
                what: "covariance dimension",
                got: lambda.nrows(),
                expected: x.t_len(),
            });
        }
        let chol = Cholesky::new(lambda.clone())
            .ok_or(RegressionError::CovarianceNotPd { degree })?;
        let z = chol.solve(x.matrix());
        Self::from_z(x, z)
    }

    /// Solver with Λ = I: ordinary least squares via the normal equations.
    pub fn new_ols(x: &DesignMatrix) -> Result<Self> {
        Self::from_z(x, x.matrix().clone())
    }

    fn from_z(x: &DesignMatrix, z: DMatrix<f64>) -> Result<Self> {
        let normal = x.matrix().transpose() * &z;
        // Symmetrize away the last-bit asymmetry of the product.
        let normal = (&normal + normal.transpose()) * 0.5;
        let chol =
            Cholesky::new(normal.clone()).ok_or(RegressionError::SingularNormalEquations)?;
        Ok(Self { z, normal, chol })
    }

    /// `β̂ = (XᵀΛ⁻¹X)⁻¹XᵀΛ⁻¹y`.
    pub fn beta(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.z.nrows() {
            return Err(RegressionError::DimensionMismatch {
                what: "response length",
                got: y.len(),
                expected: self.z.nrows(),
            });
        }
        let rhs = self.z.transpose() * DVector::from_column_slice(y);
        Ok(self.chol.solve(&rhs).as_slice().to_vec())
    }

    /// `Var[β̂] = (XᵀΛ⁻¹X)⁻¹`.
    pub fn variance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// The normal-equation matrix `XᵀΛ⁻¹X` itself.
    pub fn normal_matrix(&self) -> &DMatrix<f64> {
        &self.normal
    }

    /// `XᵀΛ⁻¹r` for a residual vector `r`; zero (to solver accuracy) at the
    /// GLS minimizer.
    pub fn weighted_score(&self, r: &[f64]) -> Vec<f64> {
        let v = self.z.transpose() * DVector::from_column_slice(r);
        v.as_slice().to_vec()
    }
}

/// One-eigenspace GLS estimate `β̂_{n,j} ∈ ℝᵖ`.
pub fn gls_fit_eigenspace(
    x: &DesignMatrix,
    cov: &ToeplitzCovariance,
    y: &[f64],
) -> Result<Vec<f64>> {
    x.verify_full_rank()?;
    EigenspaceGls::new_toeplitz(x, cov)?.beta(y)
}

/// `(XᵀΛ_n⁻¹X)⁻¹`, the exact covariance of `β̂_{n,j}`.
pub fn estimator_variance(x: &DesignMatrix, cov: &ToeplitzCovariance) -> Result<DMatrix<f64>> {
    x.verify_full_rank()?;
    Ok(EigenspaceGls::new_toeplitz(x, cov)?.variance())
}

/// Where the error covariances come from during a fit.
pub enum CovarianceSource<'a> {
    /// Fully specified spectral model (the oracle route).
    Known(&'a LrdSpectralModel),
    /// Feasible-GLS route: estimate the memory exponents from OLS residual
    /// coefficient series by minimum contrast, then build Λ from the
    /// selected candidate.
    PlugIn {
        base: &'a LrdSpectralModel,
        candidates: &'a CandidateSet,
        weight: &'a ContrastWeight,
    },
}

/// A fitted model: parameter functions, exact per-degree covariance of the
/// estimates, the aggregate variance diagnostic `Σ_n (2n+1)·tr(XᵀΛ_n⁻¹X)⁻¹`,
/// and the memory exponents used (when they were estimated).
#[derive(Debug, Clone)]
pub struct GLSFit {
    beta_hat: FunctionalParams,
    per_degree_covariance: Vec<DMatrix<f64>>,
    total_variance: f64,
    theta_used: Option<Vec<f64>>,
}

impl GLSFit {
    /// Assemble a fit, verifying each covariance block is symmetric PD.
    pub fn from_parts(
        beta_hat: FunctionalParams,
        per_degree_covariance: Vec<DMatrix<f64>>,
        theta_used: Option<Vec<f64>>,
    ) -> Result<Self> {
        if per_degree_covariance.len() != beta_hat.n_max() + 1 {
            return Err(RegressionError::DimensionMismatch {
                what: "covariance block count",
                got: per_degree_covariance.len(),
                expected: beta_hat.n_max() + 1,
            });
        }
        let p = beta_hat.n_covariates();
        for (degree, cov) in per_degree_covariance.iter().enumerate() {
            let bad = cov.nrows() != p
                || cov.ncols() != p
                || (cov - cov.transpose()).amax() > 1e-8 * (1.0 + cov.amax())
                || Cholesky::new(cov.clone()).is_none();
            if bad {
                return Err(RegressionError::CovarianceNotPd { degree });
            }
        }
        let total_variance = per_degree_covariance
            .iter()
            .enumerate()
            .map(|(n, cov)| crate::sphere_basis::eigenspace_dim(n) as f64 * cov.trace())
            .sum();
        Ok(Self {
            beta_hat,
            per_degree_covariance,
            total_variance,
            theta_used,
        })
    }

    pub fn beta(&self) -> &FunctionalParams {
        &self.beta_hat
    }

    pub fn covariance(&self, degree: usize) -> &DMatrix<f64> {
        &self.per_degree_covariance[degree]
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.per_degree_covariance
    }

    /// `Σ_n (2n+1)·tr((XᵀΛ_n⁻¹X)⁻¹)` at this truncation; reported as a
    /// summability diagnostic, with no pass/fail rule attached.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn theta_used(&self) -> Option<&[f64]> {
        self.theta_used.as_deref()
    }

    /// Serialize as the fitted-model text format: sections `[design]`,
    /// `[beta]`, `[theta]`, `[variance]`, each with a column-header row.
    pub fn write_model_file<W: Write>(&self, t_len: usize, mut out: W) -> Result<()> {
        let mut buf = String::new();
        let p = self.beta_hat.n_covariates();
        buf.push_str("[design]\nT,p\n");
        writeln!(buf, "{t_len},{p}").expect("writing to a String cannot fail");
        buf.push_str("[beta]\nh,n,j,value\n");
        for (h0, coeffs) in self.beta_hat.params().iter().enumerate() {
            let h = h0 + 1;
            for (idx, value) in coeffs.iter_indexed() {
                writeln!(buf, "{h},{},{},{value}", idx.degree(), idx.order())
                    .expect("writing to a String cannot fail");
            }
        }
        buf.push_str("[theta]\nn,alpha\n");
        if let Some(theta) = &self.theta_used {
            for (n, a) in theta.iter().enumerate() {
                writeln!(buf, "{n},{a}").expect("writing to a String cannot fail");
            }
        }
        buf.push_str("[variance]\nn,row,col,value\n");
        for (n, cov) in self.per_degree_covariance.iter().enumerate() {
            for row in 0..cov.nrows() {
                for col in 0..cov.ncols() {
                    writeln!(buf, "{n},{row},{col},{}", cov[(row, col)])
                        .expect("writing to a String cannot fail");
                }
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Read a fitted model written by [`write_model_file`]; returns the fit
    /// and the training length recorded in `[design]`.
    pub fn read_model_file<R: std::io::Read>(input: R) -> Result<(Self, usize)> {
        let reader = BufReader::new(input);
        let mut section = String::new();
        let mut expect_header = false;
        let mut design: Option<(usize, usize)> = None;
        let mut beta_rows: Vec<(usize, usize, usize, f64)> = Vec::new();
        let mut theta_rows: Vec<(usize, f64)> = Vec::new();
        let mut var_rows: Vec<(usize, usize, usize, f64)> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| RegressionError::MalformedModelFile {
                line: line_no,
                message,
            };
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.to_string();
                expect_header = true;
                continue;
            }
            if expect_header {
                // Column-header row; validated loosely by shape.
                expect_header = false;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match section.as_str() {
                "design" => {
                    if fields.len() != 2 {
                        return Err(bad(format!("expected T,p got {line:?}")));
                    }
                    let t = fields[0].parse().map_err(|e| bad(format!("bad T: {e}")))?;
                    let p = fields[1].parse().map_err(|e| bad(format!("bad p: {e}")))?;
                    design = Some((t, p));
                }
                "beta" => {
                    if fields.len() != 4 {
                        return Err(bad(format!("expected h,n,j,value got {line:?}")));
                    }
                    let h = fields[0].parse().map_err(|e| bad(format!("bad h: {e}")))?;
                    let n = fields[1].parse().map_err(|e| bad(format!("bad n: {e}")))?;
                    let j = fields[2].parse().map_err(|e| bad(format!("bad j: {e}")))?;
                    let v = fields[3]
                        .parse()
                        .map_err(|e| bad(format!("bad value: {e}")))?;
                    beta_rows.push((h, n, j, v));
                }
                "theta" => {
                    if fields.len() != 2 {
                        return Err(bad(format!("expected n,alpha got {line:?}")));
                    }
                    let n = fields[0].parse().map_err(|e| bad(format!("bad n: {e}")))?;
                    let a = fields[1]
                        .parse()
                        .map_err(|e| bad(format!("bad alpha: {e}")))?;
                    theta_rows.push((n, a));
                }
                "variance" => {
                    if fields.len() != 4 {
                        return Err(bad(format!("expected n,row,col,value got {line:?}")));
                    }
                    let n = fields[0].parse().map_err(|e| bad(format!("bad n: {e}")))?;
                    let r = fields[1].parse().map_err(|e| bad(format!("bad row: {e}")))?;
                    let c = fields[2].parse().map_err(|e| bad(format!("bad col: {e}")))?;
                    let v = fields[3]
                        .parse()
                        .map_err(|e| bad(format!("bad value: {e}")))?;
                    var_rows.push((n, r, c, v));
                }
                other => return Err(bad(format!("unknown section {other:?}"))),
            }
        }
        let (t_len, p) = design.ok_or(RegressionError::MalformedModelFile {
            line: 0,
            message: "missing [design] section".into(),
        })?;
        let n_max = beta_rows.iter().map(|&(_, n, _, _)| n).max().ok_or(
            RegressionError::MalformedModelFile {
                line: 0,
                message: "missing [beta] section".into(),
            },
        )?;
        let mut params = FunctionalParams::zeros(p, n_max);
        for (h, n, j, v) in beta_rows {
            if h == 0 || h > p {
                return Err(RegressionError::MalformedModelFile {
                    line: 0,
                    message: format!("covariate index {h} outside 1..={p}"),
                });
            }
            let idx = crate::sphere_basis::HarmonicIndex::new(n, j)?;
            params.param_mut(h - 1).set_entry(idx, v);
        }
        let theta = if theta_rows.is_empty() {
            None
        } else {
            theta_rows.sort_by_key(|&(n, _)| n);
            Some(theta_rows.into_iter().map(|(_, a)| a).collect())
        };
        let mut covs = vec![DMatrix::zeros(p, p); n_max + 1];
        for (n, r, c, v) in var_rows {
            if n > n_max || r >= p || c >= p {
                return Err(RegressionError::MalformedModelFile {
                    line: 0,
                    message: format!("variance entry ({n},{r},{c}) out of range"),
                });
            }
            covs[n][(r, c)] = v;
        }
        let fit = Self::from_parts(params, covs, theta)?;
        Ok((fit, t_len))
    }

    pub fn write_model_file_path(&self, t_len: usize, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_model_file(t_len, std::io::BufWriter::new(file))
    }

    pub fn read_model_file_path(path: &Path) -> Result<(Self, usize)> {
        let file = std::fs::File::open(path)?;
        Self::read_model_file(file)
    }
}

/// Build the per-degree Toeplitz covariances of a spectral model at length
/// `t_len`, for degrees `0..=n_max`.
pub fn model_covariances(
    model: &LrdSpectralModel,
    n_max: usize,
    t_len: usize,
) -> Result<Vec<ToeplitzCovariance>> {
    if model.n_max() < n_max {
        return Err(RegressionError::ModelTooCoarse {
            requested: n_max,
            available: model.n_max(),
        });
    }
    let grid = FrequencyGrid::refinement(REFINEMENT_POINTS)?;
    let max_lag = t_len.saturating_sub(1);
    (0..=n_max)
        .map(|n| {
            let row = invert_to_autocov(model, n, max_lag, &grid);
            Ok(ToeplitzCovariance::build(n, &row, t_len)?)
        })
        .collect()
}

/// Fit the functional regression model.
///
/// Pipeline: invert the link, project the responses onto the harmonic basis,
/// resolve the error covariances (known model, or plug-in: OLS pre-fit →
/// minimum-contrast exponent estimation on the residual coefficient series →
/// rebuild Λ), then solve the GLS normal equations per eigenspace.
pub fn fit(
    stack: &[GriddedField],
    x: &DesignMatrix,
    link: LinkOperator,
    source: CovarianceSource,
    n_max: usize,
) -> Result<GLSFit> {
    if stack.len() != x.t_len() {
        return Err(RegressionError::DimensionMismatch {
            what: "stack length",
            got: stack.len(),
            expected: x.t_len(),
        });
    }
    x.verify_full_rank()?;
    let latent = invert_link(link, stack)?;
    let series = project_response(&latent, n_max)?;
    fit_projected(&series, x, source)
}

/// Fit directly from already-projected response coefficient series.
pub fn fit_projected(
    series: &CoefficientSeries,
    x: &DesignMatrix,
    source: CovarianceSource,
) -> Result<GLSFit> {
    let n_max = series.n_max();
    let t_len = series.t_len();
    if t_len != x.t_len() {
        return Err(RegressionError::DimensionMismatch {
            what: "series length",
            got: t_len,
            expected: x.t_len(),
        });
    }

    let (model, theta_used) = match source {
        CovarianceSource::Known(model) => {
            if model.n_max() < n_max {
                return Err(RegressionError::ModelTooCoarse {
                    requested: n_max,
                    available: model.n_max(),
                });
            }
            (model.clone(), None)
        }
        CovarianceSource::PlugIn {
            base,
            candidates,
            weight,
        } => {
            if base.n_max() != n_max {
                return Err(RegressionError::ModelTooCoarse {
                    requested: n_max,
                    available: base.n_max(),
                });
            }
            // OLS pre-fit, shared factorization across all (n, j).
            let ols = EigenspaceGls::new_ols(x)?;
            let mut residuals = CoefficientSeries::zeros(n_max, t_len);
            for idx in indices_up_to(n_max) {
                let y = series.series(idx);
                let beta = ols.beta(y)?;
                let fitted = x.matrix() * DVector::from_column_slice(&beta);
                let out = residuals.series_mut(idx);
                for t in 0..t_len {
                    out[t] = y[t] - fitted[t];
                }
            }
            let (_, theta) = estimate_theta(&residuals, candidates, weight, base)?;
            (base.with_alpha(theta.clone())?, Some(theta))
        }
    };

    let covariances = model_covariances(&model, n_max, t_len)?;
    fit_with_covariances(series, x, &covariances, theta_used)
}

/// Solve the per-eigenspace GLS normal equations against already-built
/// Toeplitz covariances (`covariances[n]` weights degree `n`). Useful when
/// the same error model is reused across many fits: the covariance build and
/// positive-definiteness check amortize over calls.
pub fn fit_with_covariances(
    series: &CoefficientSeries,
    x: &DesignMatrix,
    covariances: &[ToeplitzCovariance],
    theta_used: Option<Vec<f64>>,
) -> Result<GLSFit> {
    let n_max = series.n_max();
    let t_len = series.t_len();
    if t_len != x.t_len() {
        return Err(RegressionError::DimensionMismatch {
            what: "series length",
            got: t_len,
            expected: x.t_len(),
        });
    }
    if covariances.len() < n_max + 1 {
        return Err(RegressionError::ModelTooCoarse {
            requested: n_max,
            available: covariances.len().saturating_sub(1),
        });
    }
    let p = x.n_covariates();
    let mut params = FunctionalParams::zeros(p, n_max);
    let mut per_degree = Vec::with_capacity(n_max + 1);
    for (n, cov) in covariances.iter().enumerate().take(n_max + 1) {
        if cov.t_len() != t_len {
            return Err(RegressionError::DimensionMismatch {
                what: "covariance length",
                got: cov.t_len(),
                expected: t_len,
            });
        }
        let solver = EigenspaceGls::new_toeplitz(x, cov)?;
        for j in 1..=crate::sphere_basis::eigenspace_dim(n) {
            let idx = crate::sphere_basis::HarmonicIndex::new(n, j)?;
            let beta = solver.beta(series.series(idx))?;
            for (h, &b) in beta.iter().enumerate() {
                params.param_mut(h).set_entry(idx, b);
            }
        }
        per_degree.push(solver.variance());
    }
    GLSFit::from_parts(params, per_degree, theta_used)
}

/// Predict responses at new covariate values:
/// `Ŷ_t = H(Σ_h X_{t,h}·synthesize(β̂_h))`.
pub fn predict(
    fit: &GLSFit,
    x_new: &DesignMatrix,
    link: LinkOperator,
    grid: &Arc<SphereGrid>,
) -> Result<Vec<GriddedField>> {
    let p = fit.beta().n_covariates();
    if x_new.n_covariates() != p {
        return Err(RegressionError::DimensionMismatch {
            what: "covariate count",
            got: x_new.n_covariates(),
            expected: p,
        });
    }
    let param_fields: Vec<GriddedField> = fit
        .beta()
        .params()
        .iter()
        .map(|coeffs| synthesize(coeffs, grid))
        .collect();
    let n_nodes = grid.node_count();
    let mut out = Vec::with_capacity(x_new.t_len());
    for t in 0..x_new.t_len() {
        let mut values = vec![0.0; n_nodes];
        for (h, field) in param_fields.iter().enumerate() {
            let w = x_new.value(t, h);
            for (v, &b) in values.iter_mut().zip(field.values()) {
                *v += w * b;
            }
        }
        for v in &mut values {
            *v = link.apply_scalar(*v);
        }
        out.push(GriddedField::new(Arc::clone(grid), values)?);
    }
    Ok(out)
}
