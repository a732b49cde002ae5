//! Command drivers behind the `sfr` binary: configuration parsing, k-fold
//! cross-validation, and artifact plumbing.
//!
//! Five commands share one shape — read a `[section]` + `key = value` config
//! file, run a pipeline, write CSV artifacts plus a `manifest.txt` into the
//! output directory:
//!
//! - `simulate`: Monte Carlo prediction study → snapshot MAE maps + summary.
//! - `climate-gen`: synthetic radiation/pressure bundle.
//! - `fit`: regression fit on a bundle → portable model file.
//! - `predict`: predictions (and residual summary) from a saved model file.
//! - `crossval`: k-fold cross-validation, oracle and/or plug-in covariances.
//!
//! Failures are categorized for scripting: exit 2 for configuration errors,
//! 3 for numerical failures, 4 for I/O failures. The manifest records the
//! seed, an FNV-1a hash of the config file, the crate version, and how many
//! minimum-contrast estimations ran — all stable across reruns, so identical
//! configurations produce byte-identical artifacts.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::climate_synth::{
    generate_datasets, pressure_covariates, read_bundle, write_bundle, ClimateScenario,
    ClimateSynthError, Season,
};
use crate::functional_ts::{CoefficientSeries, FunctionalTsError};
use crate::lrd_spectral::{
    estimate_theta, estimation_call_count, invert_to_autocov, CandidateSet, ContrastWeight,
    FrequencyGrid, LrdSpectralError, LrdSpectralModel, REFINEMENT_POINTS,
};
use crate::regression::{
    fit, invert_link, predict, project_response, CovarianceSource, DesignMatrix, EigenspaceGls,
    FunctionalParams, GLSFit, LinkOperator, RegressionError,
};
use crate::simulation::{
    simulate_study, CovariateDesign, FitVariant, LrdRegime, SimStudyConfig, SimulationError,
};
use crate::sphere_basis::{
    eigenspace_dim, indices_up_to, GriddedField, HarmonicCoefficients, HarmonicIndex,
    SphereBasisError, SphereGrid,
};

/// Driver failure, categorized by exit code: configuration (2), numerical
/// (3), I/O (4).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "i/o",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SphereBasisError> for CliError {
    fn from(e: SphereBasisError) -> Self {
        use SphereBasisError as E;
        match &e {
            E::Io(_) | E::MalformedCsv { .. } | E::NodeMismatch { .. } => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FunctionalTsError> for CliError {
    fn from(e: FunctionalTsError) -> Self {
        use FunctionalTsError as E;
        match &e {
            E::Io(_) | E::MalformedCsv { .. } => CliError::Io(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<LrdSpectralError> for CliError {
    fn from(e: LrdSpectralError) -> Self {
        use LrdSpectralError as E;
        match &e {
            E::Io(_) | E::MalformedCsv { .. } | E::MalformedModelFile { .. } => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<RegressionError> for CliError {
    fn from(e: RegressionError) -> Self {
        use RegressionError as E;
        match e {
            E::Io(inner) => CliError::Io(inner.to_string()),
            E::Sphere(inner) => inner.into(),
            E::Ts(inner) => inner.into(),
            E::Spectral(inner) => inner.into(),
            other @ E::MalformedModelFile { .. } => CliError::Io(other.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        use SimulationError as E;
        match e {
            E::Io(inner) => CliError::Io(inner.to_string()),
            E::Sphere(inner) => inner.into(),
            E::Ts(inner) => inner.into(),
            E::Spectral(inner) => inner.into(),
            E::Regression(inner) => inner.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<ClimateSynthError> for CliError {
    fn from(e: ClimateSynthError) -> Self {
        use ClimateSynthError as E;
        match e {
            E::Io(inner) => CliError::Io(inner.to_string()),
            E::Sphere(inner) => inner.into(),
            E::Spectral(inner) => inner.into(),
            E::Simulation(inner) => inner.into(),
            E::Regression(inner) => inner.into(),
            other @ (E::MalformedScenarioFile { .. } | E::MissingKey { .. }) => {
                CliError::Io(other.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

// ---------------------------------------------------------------------------
// Run configuration and config-file grammar
// ---------------------------------------------------------------------------

/// The pipeline a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    ClimateGen,
    Fit,
    Predict,
    Crossval,
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::ClimateGen => "climate-gen",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::Crossval => "crossval",
        })
    }
}

/// Everything a single invocation depends on. Flags override config-file
/// values: `seed` beats the file's `seed` key, `variant`/`k` beat the file's
/// `[fit]`/`[cv]` entries.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub variant: Option<FitVariant>,
    pub k: Option<usize>,
}

/// Flat `[section]` + `key = value` configuration text. Full-line comments
/// start with `#`; duplicate keys take the last value; every key must sit
/// under a section header.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: HashMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    CliError::Config(format!("config line {}: unterminated section header", i + 1))
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(CliError::Config(format!(
                        "config line {}: empty section name",
                        i + 1
                    )));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "config line {}: expected `key = value` or `[section]`",
                    i + 1
                ))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Config(format!("config line {}: empty key", i + 1)));
            }
            if section.is_empty() {
                return Err(CliError::Config(format!(
                    "config line {}: key `{key}` appears before any [section]",
                    i + 1
                )));
            }
            entries.insert(format!("{section}.{key}"), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries.get(&format!("{section}.{key}")).map(String::as_str)
    }

    pub fn req(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key).ok_or_else(|| {
            CliError::Config(format!("config is missing required key `{section}.{key}`"))
        })
    }

    /// Typed lookup; absent keys yield `None`, unparseable values error.
    pub fn get_parsed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                CliError::Config(format!("config key `{section}.{key}`: {e}"))
            }),
        }
    }

    pub fn req_parsed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.req(section, key)?.parse().map_err(|e: T::Err| {
            CliError::Config(format!("config key `{section}.{key}`: {e}"))
        })
    }

    pub fn get_or<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get_parsed(section, key)?.unwrap_or(default))
    }
}

/// Day-list grammar: comma-separated entries, each either a single day or an
/// inclusive range `a..b` (e.g. `1..171` or `1..10,20,30..40`).
pub fn parse_days(text: &str) -> Result<Vec<u32>> {
    let mut days = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let bad = |what: &str| CliError::Config(format!("day entry `{part}`: {what}"));
        if part.is_empty() {
            return Err(bad("empty entry"));
        }
        if let Some((a, b)) = part.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|_| bad("bad range start"))?;
            let b: u32 = b.trim().parse().map_err(|_| bad("bad range end"))?;
            if a > b {
                return Err(bad("range start exceeds end"));
            }
            days.extend(a..=b);
        } else {
            days.push(part.parse().map_err(|_| bad("not an integer"))?);
        }
    }
    Ok(days)
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{what}: bad entry `{}`", s.trim())))
        })
        .collect()
}

/// FNV-1a 64-bit hash; fingerprints the config file in the manifest.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

// ---------------------------------------------------------------------------
// k-fold cross-validation
// ---------------------------------------------------------------------------

/// Shuffle time indices `0..t_len` with a seeded generator and cut balanced
/// folds: sizes differ by at most one, every index lands in exactly one
/// fold. Depends only on `(t_len, k, seed)`.
pub fn fold_assignment(t_len: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(CliError::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > t_len {
        return Err(CliError::Config(format!(
            "cannot cut {k} folds from {t_len} time points"
        )));
    }
    let mut indices: Vec<usize> = (0..t_len).collect();
    indices.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let base = t_len / k;
    let rem = t_len % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < rem);
        let mut fold: Vec<usize> = indices[at..at + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        at += size;
    }
    Ok(folds)
}

/// Shared inputs of a cross-validation run: the error model (the oracle
/// truth, and the plug-in family's scale factors), the candidate exponents
/// and contrast weight for plug-in refits, and the fit truncation degree.
#[derive(Debug)]
pub struct CvSetup<'a> {
    pub model: &'a LrdSpectralModel,
    pub candidates: &'a CandidateSet,
    pub weight: &'a ContrastWeight,
    pub n_max: usize,
}

/// Cross-validation outcome: one held-out MAE map and scalar per fold, plus
/// aggregate statistics over folds.
#[derive(Debug)]
pub struct CVReport {
    k: usize,
    variant: FitVariant,
    fold_sizes: Vec<usize>,
    mae_fields: Vec<GriddedField>,
    fold_mae: Vec<f64>,
    mean_mae: f64,
    std_mae: f64,
}

impl CVReport {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn variant(&self) -> FitVariant {
        self.variant
    }

    pub fn fold_sizes(&self) -> &[usize] {
        &self.fold_sizes
    }

    /// Per-fold MAE maps: node-wise mean of `|Ŷ − Y|` over the fold's
    /// held-out times.
    pub fn mae_fields(&self) -> &[GriddedField] {
        &self.mae_fields
    }

    pub fn fold_mae(&self) -> &[f64] {
        &self.fold_mae
    }

    pub fn mean_mae(&self) -> f64 {
        self.mean_mae
    }

    pub fn std_mae(&self) -> f64 {
        self.std_mae
    }

    /// Write `cv_<variant>_fold_<f>.csv` maps, a `cv_<variant>_summary.csv`
    /// fold table, and a one-row `cv_<variant>_aggregate.csv`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (f, field) in self.mae_fields.iter().enumerate() {
            field.write_csv_path(&dir.join(format!("cv_{}_fold_{}.csv", self.variant, f + 1)))?;
        }
        let mut summary = String::from("fold,size,mae\n");
        for f in 0..self.k {
            summary.push_str(&format!("{},{},{}\n", f + 1, self.fold_sizes[f], self.fold_mae[f]));
        }
        std::fs::write(dir.join(format!("cv_{}_summary.csv", self.variant)), summary)?;
        let aggregate = format!(
            "k,variant,mean_mae,std_mae\n{},{},{},{}\n",
            self.k, self.variant, self.mean_mae, self.std_mae
        );
        std::fs::write(dir.join(format!("cv_{}_aggregate.csv", self.variant)), aggregate)?;
        Ok(())
    }
}

/// k-fold cross-validation over time indices: shuffle times with the seed,
/// hold out each fold in turn, fit the regression on the complement, predict
/// the held-out maps, and record `|Ŷ − Y|`.
///
/// Fits weight each eigenspace by the error covariance evaluated at the
/// actual time gaps of the training subset (a dense submatrix of the
/// Toeplitz covariance). The oracle variant uses `setup.model` as given; the
/// plug-in variant re-estimates the memory exponents per fold from OLS
/// residuals of the training subset (compacted in time order), never touching
/// the held-out data.
pub fn kfold_cv(
    stack: &[GriddedField],
    x: &DesignMatrix,
    link: LinkOperator,
    k: usize,
    variant: FitVariant,
    seed: u64,
    setup: &CvSetup,
) -> Result<CVReport> {
    let t_len = stack.len();
    if t_len == 0 {
        return Err(CliError::Config("response stack is empty".into()));
    }
    if x.t_len() != t_len {
        return Err(CliError::Config(format!(
            "design matrix has {} rows but the stack has {t_len}",
            x.t_len()
        )));
    }
    if setup.model.n_max() < setup.n_max {
        return Err(CliError::Config(format!(
            "fit truncation {} exceeds the error model's degree {}",
            setup.n_max,
            setup.model.n_max()
        )));
    }
    let folds = fold_assignment(t_len, k, seed)?;
    let grid = Arc::clone(stack[0].grid());

    // Analyze the full stack once; folds reuse the per-time snapshots.
    let latent = invert_link(link, stack)?;
    let full_series = project_response(&latent, setup.n_max)?;
    let snapshots: Vec<HarmonicCoefficients> = (1..=t_len)
        .map(|t| full_series.snapshot(t))
        .collect::<std::result::Result<_, _>>()
        .map_err(CliError::from)?;

    let freq = FrequencyGrid::refinement(REFINEMENT_POINTS)?;
    let oracle_rows: Vec<Vec<f64>> = match variant {
        FitVariant::Oracle => (0..=setup.n_max)
            .map(|n| invert_to_autocov(setup.model, n, t_len - 1, &freq))
            .collect(),
        FitVariant::PlugIn => Vec::new(),
    };

    let p = x.n_covariates();
    let mut fold_sizes = Vec::with_capacity(k);
    let mut mae_fields = Vec::with_capacity(k);
    let mut fold_mae = Vec::with_capacity(k);
    for (f, test_idx) in folds.iter().enumerate() {
        let fold_err =
            |e: CliError| CliError::Numerical(format!("fold {}: {}", f + 1, e));
        let mut in_test = vec![false; t_len];
        for &t in test_idx {
            in_test[t] = true;
        }
        let train: Vec<usize> = (0..t_len).filter(|&t| !in_test[t]).collect();

        let train_x = x.subset_rows(&train);
        train_x
            .verify_full_rank()
            .map_err(|e| fold_err(e.into()))?;
        let train_snapshots: Vec<HarmonicCoefficients> =
            train.iter().map(|&t| snapshots[t].clone()).collect();
        let train_series = CoefficientSeries::from_snapshots(&train_snapshots)
            .map_err(|e| fold_err(e.into()))?;

        let (rows, theta_used): (Vec<Vec<f64>>, Option<Vec<f64>>) = match variant {
            FitVariant::Oracle => (oracle_rows.clone(), None),
            FitVariant::PlugIn => {
                let ols = EigenspaceGls::new_ols(&train_x).map_err(|e| fold_err(e.into()))?;
                let mut residuals = CoefficientSeries::zeros(setup.n_max, train.len());
                for idx in indices_up_to(setup.n_max) {
                    let y = train_series.series(idx);
                    let beta = ols.beta(y).map_err(|e| fold_err(e.into()))?;
                    let fitted = train_x.matrix() * DVector::from_column_slice(&beta);
                    let out = residuals.series_mut(idx);
                    for t in 0..train.len() {
                        out[t] = y[t] - fitted[t];
                    }
                }
                let base = truncate_model(setup.model, setup.n_max)?;
                let (_, theta) = estimate_theta(&residuals, setup.candidates, setup.weight, &base)
                    .map_err(|e| fold_err(e.into()))?;
                let refit = base.with_alpha(theta.clone()).map_err(|e| fold_err(e.into()))?;
                let rows = (0..=setup.n_max)
                    .map(|n| invert_to_autocov(&refit, n, t_len - 1, &freq))
                    .collect();
                (rows, Some(theta))
            }
        };

        // Per-eigenspace GLS against the covariance at the actual time gaps.
        let mut params = FunctionalParams::zeros(p, setup.n_max);
        let mut per_degree = Vec::with_capacity(setup.n_max + 1);
        for (n, row) in rows.iter().enumerate() {
            let lambda = DMatrix::from_fn(train.len(), train.len(), |i, j| {
                row[train[i].abs_diff(train[j])]
            });
            let solver =
                EigenspaceGls::new_dense(&train_x, &lambda, n).map_err(|e| fold_err(e.into()))?;
            for j in 1..=eigenspace_dim(n) {
                let idx = HarmonicIndex::new(n, j).map_err(|e| fold_err(e.into()))?;
                let beta = solver
                    .beta(train_series.series(idx))
                    .map_err(|e| fold_err(e.into()))?;
                for (h, &b) in beta.iter().enumerate() {
                    params.param_mut(h).set_entry(idx, b);
                }
            }
            per_degree.push(solver.variance());
        }
        let fitted = GLSFit::from_parts(params, per_degree, theta_used)
            .map_err(|e| fold_err(e.into()))?;

        let test_x = x.subset_rows(test_idx);
        let preds = predict(&fitted, &test_x, link, &grid).map_err(|e| fold_err(e.into()))?;
        let mut node_acc = vec![0.0; grid.node_count()];
        for (pred, &t) in preds.iter().zip(test_idx) {
            for (node, (&a, &b)) in pred.values().iter().zip(stack[t].values()).enumerate() {
                node_acc[node] += (a - b).abs();
            }
        }
        for v in &mut node_acc {
            *v /= test_idx.len() as f64;
        }
        let scalar = node_acc.iter().sum::<f64>() / node_acc.len() as f64;
        mae_fields.push(GriddedField::new(Arc::clone(&grid), node_acc).map_err(|e| fold_err(e.into()))?);
        fold_mae.push(scalar);
        fold_sizes.push(test_idx.len());
    }

    let kf = k as f64;
    let mean_mae = fold_mae.iter().sum::<f64>() / kf;
    let std_mae = (fold_mae.iter().map(|m| (m - mean_mae).powi(2)).sum::<f64>() / (kf - 1.0)).sqrt();
    Ok(CVReport {
        k,
        variant,
        fold_sizes,
        mae_fields,
        fold_mae,
        mean_mae,
        std_mae,
    })
}

/// Restrict a spectral model to degrees `0..=n_max`.
fn truncate_model(model: &LrdSpectralModel, n_max: usize) -> Result<LrdSpectralModel> {
    if model.n_max() < n_max {
        return Err(CliError::Config(format!(
            "requested truncation {} exceeds the error model's degree {}",
            n_max,
            model.n_max()
        )));
    }
    Ok(LrdSpectralModel::new(
        model.innovation_vars()[..=n_max].to_vec(),
        model.srd_factors()[..=n_max].to_vec(),
        model.alphas()[..=n_max].to_vec(),
    )?)
}

// ---------------------------------------------------------------------------
// The run driver
// ---------------------------------------------------------------------------

/// Ordered `key = value` manifest; written last so counters cover the whole
/// run. No timestamps: reruns of the same configuration are byte-identical.
struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    fn new() -> Self {
        Self { lines: Vec::new() }
    }

    fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut text = String::new();
        for (key, value) in &self.lines {
            text.push_str(&format!("{key} = {value}\n"));
        }
        std::fs::write(dir.join("manifest.txt"), text)?;
        Ok(())
    }
}

/// Execute the configured pipeline: parse the config file, run the command,
/// write its artifacts and `manifest.txt` into the output directory.
pub fn run(config: &RunConfig) -> Result<()> {
    let bytes = std::fs::read(&config.config_path).map_err(|e| {
        CliError::Config(format!(
            "cannot read config file {}: {e}",
            config.config_path.display()
        ))
    })?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config("config file is not valid UTF-8".into()))?;
    let cfg = ConfigFile::parse(&text)?;

    if let Some(n) = config.threads {
        if n == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        // First build wins; later runs in the same process keep the existing
        // pool (results do not depend on the worker count).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    std::fs::create_dir_all(&config.output_dir)?;

    let mut manifest = Manifest::new();
    manifest.push("command", config.command);
    manifest.push("version", env!("CARGO_PKG_VERSION"));
    manifest.push("config_hash", format!("{:016x}", fnv1a64(&bytes)));
    manifest.push(
        "threads",
        match config.threads {
            Some(n) => n.to_string(),
            None => "auto".to_string(),
        },
    );

    let calls_before = estimation_call_count();
    match config.command {
        Command::Simulate => exec_simulate(&cfg, config, &mut manifest)?,
        Command::ClimateGen => exec_climate_gen(&cfg, config, &mut manifest)?,
        Command::Fit => exec_fit(&cfg, config, &mut manifest)?,
        Command::Predict => exec_predict(&cfg, config, &mut manifest)?,
        Command::Crossval => exec_crossval(&cfg, config, &mut manifest)?,
    }
    manifest.push("estimation_calls", estimation_call_count() - calls_before);
    manifest.write(&config.output_dir)
}

fn resolve_seed(run: &RunConfig, cfg: &ConfigFile, section: &str) -> Result<u64> {
    match run.seed {
        Some(s) => Ok(s),
        None => cfg.get_or(section, "seed", 0),
    }
}

fn exec_simulate(cfg: &ConfigFile, run: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let seed = resolve_seed(run, cfg, "study")?;
    let t_len = cfg.req_parsed("study", "t_len")?;
    let repetitions = cfg.req_parsed("study", "repetitions")?;
    let regime: LrdRegime = cfg.req_parsed("study", "regime")?;
    let link: LinkOperator = cfg.req_parsed("study", "link")?;

    let mut study = SimStudyConfig::new(t_len, repetitions, regime, link, seed);
    if let Some(n_max) = cfg.get_parsed("study", "n_max")? {
        study.n_max = n_max;
    }
    if let Some(p) = cfg.get_parsed("study", "n_covariates")? {
        study.n_covariates = p;
    }
    if let Some(design) = cfg.get_parsed::<CovariateDesign>("study", "design")? {
        study.design = design;
    }
    match run.variant {
        Some(v) => study.variant = v,
        None => {
            if let Some(v) = cfg.get_parsed::<FitVariant>("study", "variant")? {
                study.variant = v;
            }
        }
    }
    if let Some(a) = cfg.get_parsed("study", "error_amplitude")? {
        study.error_amplitude = a;
    }
    if let Some(c) = cfg.get_parsed("study", "n_candidates")? {
        study.n_candidates = c;
    }
    if let Some(n) = cfg.get_parsed("study", "n_polar")? {
        study.n_polar = n;
    }
    if let Some(n) = cfg.get_parsed("study", "n_azimuth")? {
        study.n_azimuth = n;
    }

    let result = simulate_study(&study)?;
    result.write_outputs(&run.output_dir)?;

    manifest.push("seed", seed);
    manifest.push("t_len", study.t_len);
    manifest.push("repetitions", study.repetitions);
    manifest.push("regime", study.regime);
    manifest.push("link", study.link);
    manifest.push("design", study.design);
    manifest.push("variant", study.variant);
    manifest.push("grid_mean_mae", result.grid_mean_mae());
    Ok(())
}

fn exec_climate_gen(cfg: &ConfigFile, run: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let seed = resolve_seed(run, cfg, "scenario")?;
    let season: Season = cfg.req("scenario", "season")?.parse().map_err(config_err)?;
    let days = parse_days(cfg.req("scenario", "days")?)?;

    let model = if let Some(list) = cfg.get("error_model", "alphas") {
        let alphas = parse_f64_list(list, "config key `error_model.alphas`")?;
        LrdSpectralModel::with_default_scales(alphas).map_err(config_err)?
    } else {
        let regime: LrdRegime = cfg.req_parsed("error_model", "regime")?;
        let n_max: usize = cfg.req_parsed("error_model", "n_max")?;
        LrdSpectralModel::with_default_scales(regime.alphas(n_max)).map_err(config_err)?
    };

    let mut scenario =
        ClimateScenario::new(season, days, model, seed).map_err(config_err)?;
    if let Some(a) = cfg.get_parsed("scenario", "error_amplitude")? {
        scenario.error_amplitude = a;
    }
    if let Some(a) = cfg.get_parsed("scenario", "pressure_wave_amplitude")? {
        scenario.pressure_wave_amplitude = a;
    }
    if let Some(s) = cfg.get_parsed("scenario", "radiation_error_scale")? {
        scenario.radiation_error_scale = s;
    }
    if let Some(s) = cfg.get_parsed("scenario", "pressure_error_scale")? {
        scenario.pressure_error_scale = s;
    }
    for (key, slot) in [
        ("earth_radius", &mut scenario.constants.earth_radius),
        ("solar_constant", &mut scenario.constants.solar_constant),
        ("clear_sky_index", &mut scenario.constants.clear_sky_index),
        ("sea_level_pressure", &mut scenario.constants.sea_level_pressure),
        ("molar_mass", &mut scenario.constants.molar_mass),
        ("gravity", &mut scenario.constants.gravity),
        ("gas_constant", &mut scenario.constants.gas_constant),
        ("temperature", &mut scenario.constants.temperature),
        ("height_min", &mut scenario.constants.height_range.0),
        ("height_max", &mut scenario.constants.height_range.1),
    ] {
        if let Some(v) = cfg.get_parsed("constants", key)? {
            *slot = v;
        }
    }
    scenario.validate().map_err(config_err)?;

    let kind = cfg.get("grid", "kind").unwrap_or("gauss_uniform");
    let n_polar: usize = cfg.req_parsed("grid", "n_polar")?;
    let n_azimuth: usize = cfg.req_parsed("grid", "n_azimuth")?;
    let grid = match kind {
        "gauss_uniform" => SphereGrid::gauss_uniform(n_polar, n_azimuth),
        "equiangular" => SphereGrid::equiangular(n_polar, n_azimuth),
        other => {
            return Err(CliError::Config(format!(
                "config key `grid.kind`: unknown grid `{other}` (gauss_uniform|equiangular)"
            )))
        }
    }
    .map_err(config_err)?;
    let grid = Arc::new(grid);

    let (radiation, pressure) = generate_datasets(&scenario, &grid)?;
    write_bundle(&scenario, &radiation, &pressure, &run.output_dir)?;

    manifest.push("seed", seed);
    manifest.push("season", scenario.season);
    manifest.push("t_len", scenario.days.len());
    manifest.push("grid", kind);
    manifest.push("n_polar", n_polar);
    manifest.push("n_azimuth", n_azimuth);
    Ok(())
}

/// Shared [input]/[fit]-style resolution for the bundle-driven commands.
struct BundleFitSpec {
    bundle: crate::climate_synth::ClimateBundle,
    x: DesignMatrix,
    link: LinkOperator,
    n_max: usize,
    n_covariates: usize,
    n_candidates: usize,
}

fn load_bundle_inputs(cfg: &ConfigFile, section: &str) -> Result<BundleFitSpec> {
    let path = PathBuf::from(cfg.req("input", "bundle")?);
    let bundle = read_bundle(&path)?;
    let n_covariates = cfg.get_or(section, "n_covariates", 2)?;
    let n_max = cfg.get_or(section, "n_max", 5)?;
    let link: LinkOperator = match cfg.get(section, "link") {
        Some(raw) => raw
            .parse()
            .map_err(|e| CliError::Config(format!("config key `{section}.link`: {e}")))?,
        None => LinkOperator::Identity,
    };
    let n_candidates = cfg.get_or(section, "n_candidates", 100)?;
    let x = pressure_covariates(&bundle.pressure, n_covariates)?;
    Ok(BundleFitSpec {
        bundle,
        x,
        link,
        n_max,
        n_covariates,
        n_candidates,
    })
}

fn exec_fit(cfg: &ConfigFile, run: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let seed = resolve_seed(run, cfg, "fit")?;
    let spec = load_bundle_inputs(cfg, "fit")?;
    let variant = match run.variant {
        Some(v) => v,
        None => match cfg.get_parsed::<FitVariant>("fit", "variant")? {
            Some(v) => v,
            None => FitVariant::Oracle,
        },
    };
    let model = truncate_model(&spec.bundle.scenario.error_model, spec.n_max)?;

    let fitted = match variant {
        FitVariant::Oracle => fit(
            &spec.bundle.radiation,
            &spec.x,
            spec.link,
            CovarianceSource::Known(&model),
            spec.n_max,
        )?,
        FitVariant::PlugIn => {
            let candidates = CandidateSet::generate(spec.n_max, spec.n_candidates, seed);
            let weight = ContrastWeight::uniform(spec.n_max);
            fit(
                &spec.bundle.radiation,
                &spec.x,
                spec.link,
                CovarianceSource::PlugIn {
                    base: &model,
                    candidates: &candidates,
                    weight: &weight,
                },
                spec.n_max,
            )?
        }
    };
    fitted.write_model_file_path(spec.x.t_len(), &run.output_dir.join("model.csv"))?;

    manifest.push("seed", seed);
    manifest.push("variant", variant);
    manifest.push("link", spec.link);
    manifest.push("n_max", spec.n_max);
    manifest.push("n_covariates", spec.n_covariates);
    manifest.push("total_variance", fitted.total_variance());
    if let Some(theta) = fitted.theta_used() {
        let joined: Vec<String> = theta.iter().map(f64::to_string).collect();
        manifest.push("theta", joined.join(","));
    }
    Ok(())
}

fn exec_predict(cfg: &ConfigFile, run: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let bundle_path = PathBuf::from(cfg.req("input", "bundle")?);
    let model_path = PathBuf::from(cfg.req("input", "model")?);
    let bundle = read_bundle(&bundle_path)?;
    let (fitted, _train_len) = GLSFit::read_model_file_path(&model_path)?;
    let link: LinkOperator = match cfg.get("predict", "link") {
        Some(raw) => raw
            .parse()
            .map_err(|e| CliError::Config(format!("config key `predict.link`: {e}")))?,
        None => LinkOperator::Identity,
    };

    let p = fitted.beta().n_covariates();
    let x = pressure_covariates(&bundle.pressure, p)?;
    let preds = predict(&fitted, &x, link, &bundle.grid)?;

    let mut table = String::from("day,mae\n");
    let mut total = 0.0;
    for ((&day, pred), obs) in bundle
        .scenario
        .days
        .iter()
        .zip(&preds)
        .zip(&bundle.radiation)
    {
        pred.write_csv_path(&run.output_dir.join(format!("pred_t_{day}.csv")))?;
        let mae = pred
            .values()
            .iter()
            .zip(obs.values())
            .map(|(&a, &b)| (a - b).abs())
            .sum::<f64>()
            / pred.values().len() as f64;
        table.push_str(&format!("{day},{mae}\n"));
        total += mae;
    }
    std::fs::write(run.output_dir.join("residual_mae.csv"), table)?;

    manifest.push("link", link);
    manifest.push("n_covariates", p);
    manifest.push("t_len", preds.len());
    manifest.push("mean_mae", total / preds.len() as f64);
    Ok(())
}

fn exec_crossval(cfg: &ConfigFile, run: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    let seed = resolve_seed(run, cfg, "cv")?;
    let spec = load_bundle_inputs(cfg, "cv")?;
    let k = match run.k {
        Some(k) => k,
        None => cfg.get_or("cv", "k", 5)?,
    };
    let variants: Vec<FitVariant> = match run.variant {
        Some(v) => vec![v],
        None => match cfg.get_parsed::<FitVariant>("cv", "variant")? {
            Some(v) => vec![v],
            None => vec![FitVariant::Oracle, FitVariant::PlugIn],
        },
    };

    let model = truncate_model(&spec.bundle.scenario.error_model, spec.n_max)?;
    let candidates = CandidateSet::generate(spec.n_max, spec.n_candidates, seed);
    let weight = ContrastWeight::uniform(spec.n_max);
    let setup = CvSetup {
        model: &model,
        candidates: &candidates,
        weight: &weight,
        n_max: spec.n_max,
    };

    manifest.push("seed", seed);
    manifest.push("k", k);
    manifest.push(
        "variant",
        if variants.len() == 2 {
            "both".to_string()
        } else {
            variants[0].to_string()
        },
    );
    manifest.push("link", spec.link);
    manifest.push("n_max", spec.n_max);
    manifest.push("n_covariates", spec.n_covariates);
    for variant in variants {
        let report = kfold_cv(
            &spec.bundle.radiation,
            &spec.x,
            spec.link,
            k,
            variant,
            seed,
            &setup,
        )?;
        report.write_outputs(&run.output_dir)?;
        manifest.push(&format!("mean_mae_{variant}"), report.mean_mae());
        manifest.push(&format!("std_mae_{variant}"), report.std_mae());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_basis::synthesize;

    fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    fn run_config(command: Command, config_path: PathBuf, out: PathBuf) -> RunConfig {
        RunConfig {
            command,
            config_path,
            output_dir: out,
            seed: None,
            threads: None,
            variant: None,
            k: None,
        }
    }

    #[test]
    fn config_grammar_round_trips_values() {
        let cfg = ConfigFile::parse(
            "# comment\n\n[study]\n  t_len = 110 \nregime = increasing\n[grid]\nn_polar = 8\nt_len = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.get("study", "t_len"), Some("110"));
        assert_eq!(cfg.get("grid", "t_len"), Some("9"));
        assert_eq!(cfg.get("study", "missing"), None);
        assert_eq!(cfg.get_or("study", "t_len", 0usize).unwrap(), 110);
        assert_eq!(cfg.get_or("study", "absent", 7usize).unwrap(), 7);
        let err = cfg.req("study", "absent").unwrap_err();
        assert!(err.to_string().contains("study.absent"), "{err}");
        assert_eq!(err.exit_code(), 2);

        // Last duplicate wins.
        let cfg = ConfigFile::parse("[a]\nx = 1\nx = 2\n").unwrap();
        assert_eq!(cfg.get("a", "x"), Some("2"));

        assert!(ConfigFile::parse("x = 1\n").is_err(), "key before section");
        assert!(ConfigFile::parse("[a\nx = 1\n").is_err(), "unterminated header");
        assert!(ConfigFile::parse("[a]\njunk line\n").is_err(), "no equals");
    }

    #[test]
    fn day_grammar_handles_ranges_and_lists() {
        assert_eq!(parse_days("1..5,9,12..13").unwrap(), vec![1, 2, 3, 4, 5, 9, 12, 13]);
        assert_eq!(parse_days("171").unwrap(), vec![171]);
        assert!(parse_days("5..2").is_err());
        assert!(parse_days("x").is_err());
        assert!(parse_days("1,,3").is_err());
    }

    #[test]
    fn fnv_hash_matches_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn fold_assignment_partitions_evenly_and_reproducibly() {
        let folds = fold_assignment(23, 5, 7).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![4, 4, 5, 5, 5]);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());

        assert_eq!(fold_assignment(23, 5, 7).unwrap(), folds);
        assert_ne!(fold_assignment(23, 5, 8).unwrap(), folds);

        // Leave-one-out: singletons.
        let loo = fold_assignment(6, 6, 1).unwrap();
        assert!(loo.iter().all(|f| f.len() == 1));

        assert_eq!(fold_assignment(5, 6, 0).unwrap_err().exit_code(), 2);
        assert_eq!(fold_assignment(5, 1, 0).unwrap_err().exit_code(), 2);
    }

    /// Exact data `Y = H(Xβ)` on a small grid, white-noise error model.
    fn noiseless_setup(
        link: LinkOperator,
    ) -> (Vec<GriddedField>, DesignMatrix, LrdSpectralModel, Arc<SphereGrid>) {
        let grid = Arc::new(SphereGrid::gauss_uniform(4, 9).unwrap());
        let t_len = 20;
        let columns = vec![
            (1..=t_len).map(|t| 1.0 + 0.05 * t as f64).collect::<Vec<f64>>(),
            (1..=t_len).map(|t| (t as f64).sin() * 0.4).collect(),
        ];
        let x = DesignMatrix::from_columns(&columns).unwrap();

        let mut params = FunctionalParams::zeros(2, 2);
        params
            .param_mut(0)
            .set_entry(HarmonicIndex::new(0, 1).unwrap(), 0.2);
        params
            .param_mut(0)
            .set_entry(HarmonicIndex::new(1, 1).unwrap(), 0.8);
        params
            .param_mut(1)
            .set_entry(HarmonicIndex::new(1, 2).unwrap(), -0.5);
        params
            .param_mut(1)
            .set_entry(HarmonicIndex::new(2, 1).unwrap(), 0.3);
        let beta_fields: Vec<GriddedField> =
            (0..2).map(|h| synthesize(params.param(h), &grid)).collect();

        let stack: Vec<GriddedField> = (0..t_len)
            .map(|t| {
                let values: Vec<f64> = (0..grid.node_count())
                    .map(|node| {
                        let linear: f64 = (0..2)
                            .map(|h| columns[h][t] * beta_fields[h].values()[node])
                            .sum();
                        link.apply_scalar(linear)
                    })
                    .collect();
                GriddedField::new(Arc::clone(&grid), values).unwrap()
            })
            .collect();

        let model = LrdSpectralModel::with_default_scales(vec![0.0, 0.0, 0.0]).unwrap();
        (stack, x, model, grid)
    }

    #[test]
    fn noiseless_cv_is_exact_for_both_variants_and_links() {
        for link in [LinkOperator::Identity, LinkOperator::Exponential] {
            let (stack, x, model, _grid) = noiseless_setup(link);
            let candidates = CandidateSet::generate(2, 6, 3);
            let weight = ContrastWeight::uniform(2);
            let setup = CvSetup {
                model: &model,
                candidates: &candidates,
                weight: &weight,
                n_max: 2,
            };
            for variant in [FitVariant::Oracle, FitVariant::PlugIn] {
                let report = kfold_cv(&stack, &x, link, 4, variant, 11, &setup).unwrap();
                assert_eq!(report.k(), 4);
                assert_eq!(report.fold_sizes(), &[5, 5, 5, 5]);
                for (f, &mae) in report.fold_mae().iter().enumerate() {
                    assert!(
                        mae <= 1e-8,
                        "{link}/{variant} fold {f}: mae {mae}"
                    );
                }
            }
        }
    }

    #[test]
    fn leave_one_out_cv_runs_with_singleton_folds() {
        let (stack, x, model, _grid) = noiseless_setup(LinkOperator::Identity);
        let stack = stack[..8].to_vec();
        let x = x.subset_rows(&(0..8).collect::<Vec<_>>());
        let candidates = CandidateSet::generate(2, 4, 1);
        let weight = ContrastWeight::uniform(2);
        let setup = CvSetup {
            model: &model,
            candidates: &candidates,
            weight: &weight,
            n_max: 2,
        };
        let report = kfold_cv(
            &stack,
            &x,
            LinkOperator::Identity,
            8,
            FitVariant::Oracle,
            2,
            &setup,
        )
        .unwrap();
        assert_eq!(report.k(), 8);
        assert!(report.fold_sizes().iter().all(|&s| s == 1));
        assert!(report.fold_mae().iter().all(|&m| m <= 1e-8));

        // k beyond T is a configuration error.
        let err = kfold_cv(
            &stack,
            &x,
            LinkOperator::Identity,
            9,
            FitVariant::Oracle,
            2,
            &setup,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn cv_report_aggregates_and_writes_artifacts() {
        let (mut stack, x, model, grid) = noiseless_setup(LinkOperator::Identity);
        // Perturb the data so fold MAEs are nonzero and distinct.
        for (t, field) in stack.iter_mut().enumerate() {
            for (node, v) in field.values_mut().iter_mut().enumerate() {
                *v += ((t * 31 + node * 7) % 13) as f64 * 0.01;
            }
        }
        let candidates = CandidateSet::generate(2, 4, 1);
        let weight = ContrastWeight::uniform(2);
        let setup = CvSetup {
            model: &model,
            candidates: &candidates,
            weight: &weight,
            n_max: 2,
        };
        let report = kfold_cv(
            &stack,
            &x,
            LinkOperator::Identity,
            5,
            FitVariant::Oracle,
            3,
            &setup,
        )
        .unwrap();
        assert_eq!(report.mae_fields().len(), 5);
        assert_eq!(report.mae_fields()[0].values().len(), grid.node_count());
        let mean = report.fold_mae().iter().sum::<f64>() / 5.0;
        assert!((report.mean_mae() - mean).abs() < 1e-12);
        let var = report
            .fold_mae()
            .iter()
            .map(|m| (m - mean).powi(2))
            .sum::<f64>()
            / 4.0;
        assert!((report.std_mae() - var.sqrt()).abs() < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        report.write_outputs(dir.path()).unwrap();
        for f in 1..=5 {
            assert!(dir.path().join(format!("cv_oracle_fold_{f}.csv")).exists());
        }
        let summary =
            std::fs::read_to_string(dir.path().join("cv_oracle_summary.csv")).unwrap();
        assert!(summary.starts_with("fold,size,mae\n"));
        assert_eq!(summary.lines().count(), 6);
        let aggregate =
            std::fs::read_to_string(dir.path().join("cv_oracle_aggregate.csv")).unwrap();
        assert!(aggregate.starts_with("k,variant,mean_mae,std_mae\n"));
        assert!(aggregate.contains("5,oracle,"));
    }

    #[test]
    fn error_classification_sets_exit_codes() {
        let numerical: CliError = RegressionError::SingularNormalEquations.into();
        assert_eq!(numerical.exit_code(), 3);
        let io: CliError = std::io::Error::new(std::io::ErrorKind::NotFound, "gone").into();
        assert_eq!(io.exit_code(), 4);
        // I/O nested inside a transparent wrapper stays I/O.
        let nested: CliError = RegressionError::Spectral(LrdSpectralError::Io(
            std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        ))
        .into();
        assert_eq!(nested.exit_code(), 4);
        let config = CliError::Config("bad".into());
        assert_eq!(config.exit_code(), 2);
        assert_eq!(config.category(), "config");
    }

    #[test]
    fn run_simulate_writes_deterministic_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = write_config(
            dir.path(),
            "sim.cfg",
            "[study]\nt_len = 16\nrepetitions = 2\nregime = increasing\nlink = identity\nn_max = 2\nn_polar = 4\nn_azimuth = 9\nseed = 5\n",
        );

        let out1 = dir.path().join("out1");
        run(&run_config(Command::Simulate, config_path.clone(), out1.clone())).unwrap();
        assert!(out1.join("summary.csv").exists());
        let manifest = std::fs::read_to_string(out1.join("manifest.txt")).unwrap();
        assert!(manifest.contains("command = simulate"), "{manifest}");
        assert!(manifest.contains("seed = 5"), "{manifest}");
        assert!(
            manifest.contains(&format!("version = {}", env!("CARGO_PKG_VERSION"))),
            "{manifest}"
        );
        assert!(manifest.contains("config_hash = "), "{manifest}");
        assert!(manifest.contains("estimation_calls = 0"), "{manifest}");

        let out2 = dir.path().join("out2");
        run(&run_config(Command::Simulate, config_path, out2.clone())).unwrap();
        assert_eq!(
            std::fs::read(out1.join("summary.csv")).unwrap(),
            std::fs::read(out2.join("summary.csv")).unwrap()
        );
        assert_eq!(
            std::fs::read(out1.join("manifest.txt")).unwrap(),
            std::fs::read(out2.join("manifest.txt")).unwrap()
        );
    }

    /// Config text for a small climate bundle generation.
    const SMALL_BUNDLE_CFG: &str = "[scenario]\nseason = autumn_winter\ndays = 1..12\nseed = 3\n[grid]\nn_polar = 4\nn_azimuth = 9\n[error_model]\nalphas = 0.1,0.2,0.3\n";

    #[test]
    fn run_climate_gen_then_fit_then_predict() {
        let dir = tempfile::tempdir().unwrap();
        let gen_cfg = write_config(dir.path(), "gen.cfg", SMALL_BUNDLE_CFG);
        let bundle_dir = dir.path().join("bundle");
        run(&run_config(Command::ClimateGen, gen_cfg, bundle_dir.clone())).unwrap();
        assert!(bundle_dir.join("scenario.txt").exists());
        assert!(bundle_dir.join("radiation").join("t_1.csv").exists());
        assert!(bundle_dir.join("pressure").join("t_12.csv").exists());
        let bundle = read_bundle(&bundle_dir).unwrap();
        assert_eq!(bundle.scenario.days.len(), 12);

        let fit_cfg = write_config(
            dir.path(),
            "fit.cfg",
            &format!("[input]\nbundle = {}\n[fit]\nn_max = 2\n", bundle_dir.display()),
        );
        let fit_out = dir.path().join("fit_out");
        run(&run_config(Command::Fit, fit_cfg, fit_out.clone())).unwrap();
        assert!(fit_out.join("model.csv").exists());
        let manifest = std::fs::read_to_string(fit_out.join("manifest.txt")).unwrap();
        assert!(manifest.contains("variant = oracle"), "{manifest}");
        assert!(manifest.contains("total_variance = "), "{manifest}");

        let pred_cfg = write_config(
            dir.path(),
            "pred.cfg",
            &format!(
                "[input]\nbundle = {}\nmodel = {}\n",
                bundle_dir.display(),
                fit_out.join("model.csv").display()
            ),
        );
        let pred_out = dir.path().join("pred_out");
        run(&run_config(Command::Predict, pred_cfg, pred_out.clone())).unwrap();
        assert!(pred_out.join("pred_t_1.csv").exists());
        assert!(pred_out.join("pred_t_12.csv").exists());
        let table = std::fs::read_to_string(pred_out.join("residual_mae.csv")).unwrap();
        assert!(table.starts_with("day,mae\n"));
        assert_eq!(table.lines().count(), 13);
        let manifest = std::fs::read_to_string(pred_out.join("manifest.txt")).unwrap();
        assert!(manifest.contains("mean_mae = "), "{manifest}");

        // Reading the model back reproduces the in-memory predictions.
        let (fitted, t_len) = GLSFit::read_model_file_path(&fit_out.join("model.csv")).unwrap();
        assert_eq!(t_len, 12);
        let field = synthesize(fitted.beta().param(0), &bundle.grid);
        assert_eq!(field.values().len(), bundle.grid.node_count());
    }

    #[test]
    fn run_crossval_reports_both_variants_and_counts_estimations() {
        let dir = tempfile::tempdir().unwrap();
        let gen_cfg = write_config(dir.path(), "gen.cfg", SMALL_BUNDLE_CFG);
        let bundle_dir = dir.path().join("bundle");
        run(&run_config(Command::ClimateGen, gen_cfg, bundle_dir.clone())).unwrap();

        let cv_cfg = write_config(
            dir.path(),
            "cv.cfg",
            &format!(
                "[input]\nbundle = {}\n[cv]\nk = 3\nn_max = 2\nn_candidates = 8\nseed = 2\n",
                bundle_dir.display()
            ),
        );

        // Default: both variants in one run.
        let both_out = dir.path().join("cv_both");
        run(&run_config(Command::Crossval, cv_cfg.clone(), both_out.clone())).unwrap();
        for variant in ["oracle", "plugin"] {
            assert!(both_out.join(format!("cv_{variant}_summary.csv")).exists());
            assert!(both_out.join(format!("cv_{variant}_aggregate.csv")).exists());
            for f in 1..=3 {
                assert!(both_out.join(format!("cv_{variant}_fold_{f}.csv")).exists());
            }
        }
        let manifest = std::fs::read_to_string(both_out.join("manifest.txt")).unwrap();
        assert!(manifest.contains("variant = both"), "{manifest}");
        assert!(manifest.contains("mean_mae_oracle = "), "{manifest}");
        assert!(manifest.contains("mean_mae_plugin = "), "{manifest}");
        // One contrast estimation per fold, plug-in variant only.
        assert!(manifest.contains("estimation_calls = 3"), "{manifest}");

        // Oracle-only run performs no contrast estimation at all.
        let oracle_out = dir.path().join("cv_oracle");
        let mut config = run_config(Command::Crossval, cv_cfg, oracle_out.clone());
        config.variant = Some(FitVariant::Oracle);
        run(&config).unwrap();
        let manifest = std::fs::read_to_string(oracle_out.join("manifest.txt")).unwrap();
        assert!(manifest.contains("variant = oracle"), "{manifest}");
        assert!(manifest.contains("estimation_calls = 0"), "{manifest}");
        assert!(!oracle_out.join("cv_plugin_summary.csv").exists());
    }

    #[test]
    fn run_surfaces_categorized_failures() {
        let dir = tempfile::tempdir().unwrap();

        // Missing config file → configuration error.
        let missing = run(&run_config(
            Command::Simulate,
            dir.path().join("nope.cfg"),
            dir.path().join("out"),
        ))
        .unwrap_err();
        assert_eq!(missing.exit_code(), 2);

        // Malformed config text → configuration error.
        let bad_cfg = write_config(dir.path(), "bad.cfg", "t_len = 4\n");
        let err = run(&run_config(Command::Simulate, bad_cfg, dir.path().join("out"))).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        // Bundle directory that does not exist → I/O error.
        let cv_cfg = write_config(
            dir.path(),
            "cv.cfg",
            "[input]\nbundle = /definitely/not/here\n[cv]\nk = 3\n",
        );
        let err = run(&run_config(Command::Crossval, cv_cfg, dir.path().join("out"))).unwrap_err();
        assert_eq!(err.exit_code(), 4);

        // k exceeding T on a real bundle → configuration error.
        let gen_cfg = write_config(dir.path(), "gen.cfg", SMALL_BUNDLE_CFG);
        let bundle_dir = dir.path().join("bundle");
        run(&run_config(Command::ClimateGen, gen_cfg, bundle_dir.clone())).unwrap();
        let cv_cfg = write_config(
            dir.path(),
            "cv40.cfg",
            &format!(
                "[input]\nbundle = {}\n[cv]\nk = 40\nn_max = 2\n",
                bundle_dir.display()
            ),
        );
        let err = run(&run_config(Command::Crossval, cv_cfg, dir.path().join("out"))).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        // Truncation beyond the bundle's error model → configuration error.
        let fit_cfg = write_config(
            dir.path(),
            "fit9.cfg",
            &format!(
                "[input]\nbundle = {}\n[fit]\nn_max = 9\n",
                bundle_dir.display()
            ),
        );
        let err = run(&run_config(Command::Fit, fit_cfg, dir.path().join("out"))).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn seed_flag_overrides_config_seed() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = write_config(
            dir.path(),
            "sim.cfg",
            "[study]\nt_len = 16\nrepetitions = 2\nregime = increasing\nlink = identity\nn_max = 2\nn_polar = 4\nn_azimuth = 9\nseed = 5\n",
        );
        let out = dir.path().join("out");
        let mut config = run_config(Command::Simulate, config_path, out.clone());
        config.seed = Some(99);
        run(&config).unwrap();
        let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
        assert!(manifest.contains("seed = 99"), "{manifest}");
    }
}
