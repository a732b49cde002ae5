//! Time-series machinery on harmonic coefficient sequences: the functional
//! discrete Fourier transform, the (diagonal) periodogram, biased empirical
//! autocovariances averaged per eigenspace, and the Fejér kernel.
//!
//! Frequency convention: Fourier frequencies `ω_k = 2πk/T` for
//! `k = 1..⌊T/2⌋`. Frequency zero is always excluded — the long-memory
//! spectral densities downstream diverge there — and negative frequencies are
//! implied by conjugate symmetry of the transform of real data.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rustfft::FftPlanner;
use thiserror::Error;

use crate::sphere_basis::{eigenspace_dim, HarmonicCoefficients, HarmonicIndex};

pub use rustfft::num_complex::Complex64;

#[derive(Debug, Error)]
pub enum FunctionalTsError {
    #[error("series length {t_len} is too short; need at least 2 time steps")]
    SeriesTooShort { t_len: usize },
    #[error("lag {lag} must be smaller than the series length {t_len}")]
    LagTooLarge { lag: usize, t_len: usize },
    #[error("time index {t} outside 1..={t_len}")]
    TimeOutOfRange { t: usize, t_len: usize },
    #[error("snapshot {index} has truncation degree {got}, expected {expected}")]
    MixedTruncation {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("empty snapshot stack")]
    EmptyStack,
    #[error("covariance row for degree {degree} is empty")]
    EmptyCovarianceRow { degree: usize },
    #[error(
        "covariance row for degree {degree} has |B({lag})| = {magnitude} exceeding B(0) = {at_zero}"
    )]
    CovarianceNotDominated {
        degree: usize,
        lag: usize,
        magnitude: f64,
        at_zero: f64,
    },
    #[error("CSV row {row}: {message}")]
    MalformedCsv { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, FunctionalTsError>;

/// Real coefficient time series `V_{n,j}(t)`, complete over all harmonic
/// indices with degree ≤ `n_max` and times `t = 1..T`.
#[derive(Debug, Clone)]
pub struct CoefficientSeries {
    n_max: usize,
    t_len: usize,
    /// Layout: `values[flat(n,j)·T + (t-1)]` with `flat(n,j) = n² + j - 1`.
    values: Vec<f64>,
}

impl CoefficientSeries {
    pub fn zeros(n_max: usize, t_len: usize) -> Self {
        Self {
            n_max,
            t_len,
            values: vec![0.0; (n_max + 1) * (n_max + 1) * t_len],
        }
    }

    /// Stack per-time coefficient snapshots (all sharing one truncation) into
    /// a series; snapshot `i` becomes time `t = i+1`.
    pub fn from_snapshots(snapshots: &[HarmonicCoefficients]) -> Result<Self> {
        let first = snapshots.first().ok_or(FunctionalTsError::EmptyStack)?;
        let n_max = first.n_max();
        let t_len = snapshots.len();
        let mut series = Self::zeros(n_max, t_len);
        for (i, snap) in snapshots.iter().enumerate() {
            if snap.n_max() != n_max {
                return Err(FunctionalTsError::MixedTruncation {
                    index: i,
                    got: snap.n_max(),
                    expected: n_max,
                });
            }
            for (k, &c) in snap.entries().iter().enumerate() {
                series.values[k * t_len + i] = c;
            }
        }
        Ok(series)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    fn flat(idx: HarmonicIndex) -> usize {
        idx.degree() * idx.degree() + idx.order() - 1
    }

    /// Full time path of one coefficient, indexed `t-1`.
    pub fn series(&self, idx: HarmonicIndex) -> &[f64] {
        let k = Self::flat(idx);
        &self.values[k * self.t_len..(k + 1) * self.t_len]
    }

    pub fn series_mut(&mut self, idx: HarmonicIndex) -> &mut [f64] {
        let k = Self::flat(idx);
        &mut self.values[k * self.t_len..(k + 1) * self.t_len]
    }

    /// Value at 1-based time `t`.
    pub fn value(&self, idx: HarmonicIndex, t: usize) -> Result<f64> {
        if t == 0 || t > self.t_len {
            return Err(FunctionalTsError::TimeOutOfRange {
                t,
                t_len: self.t_len,
            });
        }
        Ok(self.series(idx)[t - 1])
    }

    pub fn set_value(&mut self, idx: HarmonicIndex, t: usize, value: f64) -> Result<()> {
        if t == 0 || t > self.t_len {
            return Err(FunctionalTsError::TimeOutOfRange {
                t,
                t_len: self.t_len,
            });
        }
        let t_len = self.t_len;
        self.series_mut(idx)[t - 1] = value;
        debug_assert_eq!(t_len, self.t_len);
        Ok(())
    }

    /// The coefficient snapshot at 1-based time `t`.
    pub fn snapshot(&self, t: usize) -> Result<HarmonicCoefficients> {
        if t == 0 || t > self.t_len {
            return Err(FunctionalTsError::TimeOutOfRange {
                t,
                t_len: self.t_len,
            });
        }
        let mut out = HarmonicCoefficients::zeros(self.n_max);
        for idx in crate::sphere_basis::indices_up_to(self.n_max) {
            out.set_entry(idx, self.series(idx)[t - 1]);
        }
        Ok(out)
    }

    /// Serialize as CSV with header `n,j,t,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        buf.push_str("n,j,t,value\n");
        for idx in crate::sphere_basis::indices_up_to(self.n_max) {
            for (i, v) in self.series(idx).iter().enumerate() {
                writeln!(buf, "{},{},{},{}", idx.degree(), idx.order(), i + 1, v)
                    .expect("writing to a String cannot fail");
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Read a CSV produced by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: std::io::Read>(n_max: usize, t_len: usize, input: R) -> Result<Self> {
        let mut series = Self::zeros(n_max, t_len);
        let reader = BufReader::new(input);
        let mut lines = reader.lines().enumerate();
        match lines.next() {
            Some((_, header)) => {
                let header = header?;
                if header.trim() != "n,j,t,value" {
                    return Err(FunctionalTsError::MalformedCsv {
                        row: 1,
                        message: format!("unexpected header {header:?}"),
                    });
                }
            }
            None => {
                return Err(FunctionalTsError::MalformedCsv {
                    row: 1,
                    message: "empty file".into(),
                })
            }
        }
        for (i, line) in lines {
            let row = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(FunctionalTsError::MalformedCsv {
                    row,
                    message: format!("expected 4 columns, got {}", parts.len()),
                });
            }
            let bad = |message: String| FunctionalTsError::MalformedCsv { row, message };
            let n: usize = parts[0].trim().parse().map_err(|e| bad(format!("bad n: {e}")))?;
            let j: usize = parts[1].trim().parse().map_err(|e| bad(format!("bad j: {e}")))?;
            let t: usize = parts[2].trim().parse().map_err(|e| bad(format!("bad t: {e}")))?;
            let v: f64 = parts[3]
                .trim()
                .parse()
                .map_err(|e| bad(format!("bad value: {e}")))?;
            let idx = HarmonicIndex::new(n, j)
                .map_err(|e| bad(format!("bad harmonic index: {e}")))?;
            if n > n_max {
                return Err(bad(format!("degree {n} exceeds truncation {n_max}")));
            }
            series.set_value(idx, t, v)?;
        }
        Ok(series)
    }
}

/// Fourier frequencies `2πk/T`, `k = 1..⌊T/2⌋`.
pub fn fourier_frequencies(t_len: usize) -> Vec<f64> {
    (1..=t_len / 2)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / t_len as f64)
        .collect()
}

/// Complex fDFT values per harmonic index at the positive Fourier
/// frequencies.
#[derive(Debug, Clone)]
pub struct SpectralCoefficients {
    n_max: usize,
    t_len: usize,
    frequencies: Vec<f64>,
    /// Layout: `values[flat(n,j)·K + (k-1)]`, `K = ⌊T/2⌋`.
    values: Vec<Complex64>,
}

impl SpectralCoefficients {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Value at the `k`-th positive Fourier frequency (1-based `k`).
    pub fn value(&self, idx: HarmonicIndex, k: usize) -> Complex64 {
        let flat = CoefficientSeries::flat(idx);
        self.values[flat * self.frequencies.len() + (k - 1)]
    }

    pub fn row(&self, idx: HarmonicIndex) -> &[Complex64] {
        let flat = CoefficientSeries::flat(idx);
        let len = self.frequencies.len();
        &self.values[flat * len..(flat + 1) * len]
    }
}

/// Diagonal of the periodogram operator in the harmonic basis.
#[derive(Debug, Clone)]
pub struct PeriodogramDiag {
    n_max: usize,
    t_len: usize,
    frequencies: Vec<f64>,
    values: Vec<f64>,
}

impl PeriodogramDiag {
    /// Assemble from raw parts (flat layout: one row of `frequencies.len()`
    /// values per harmonic index, degree-major). Lets synthetic
    /// population-level "periodograms" drive contrast computations directly.
    pub fn from_parts(
        n_max: usize,
        t_len: usize,
        frequencies: Vec<f64>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(
            values.len(),
            (n_max + 1) * (n_max + 1) * frequencies.len(),
            "value buffer does not match index count times frequency count"
        );
        Self {
            n_max,
            t_len,
            frequencies,
            values,
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn value(&self, idx: HarmonicIndex, k: usize) -> f64 {
        let flat = CoefficientSeries::flat(idx);
        self.values[flat * self.frequencies.len() + (k - 1)]
    }

    pub fn row(&self, idx: HarmonicIndex) -> &[f64] {
        let flat = CoefficientSeries::flat(idx);
        let len = self.frequencies.len();
        &self.values[flat * len..(flat + 1) * len]
    }

    /// Eigenspace average `Σ_j p(n,j,·)/(2n+1)` at each frequency.
    pub fn degree_average(&self, degree: usize) -> Vec<f64> {
        let dim = eigenspace_dim(degree);
        let len = self.frequencies.len();
        let mut avg = vec![0.0; len];
        for j in 1..=dim {
            let idx = HarmonicIndex::new(degree, j).expect("order within eigenspace");
            for (a, v) in avg.iter_mut().zip(self.row(idx)) {
                *a += v;
            }
        }
        for a in &mut avg {
            *a /= dim as f64;
        }
        avg
    }

    /// Serialize as CSV with header `n,j,omega,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        buf.push_str("n,j,omega,value\n");
        for idx in crate::sphere_basis::indices_up_to(self.n_max) {
            for (omega, v) in self.frequencies.iter().zip(self.row(idx)) {
                writeln!(buf, "{},{},{},{}", idx.degree(), idx.order(), omega, v)
                    .expect("writing to a String cannot fail");
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Functional DFT: `(2πT)^{-1/2} Σ_{t=1}^{T} V_{n,j}(t)·exp(-iωt)` at the
/// positive Fourier frequencies.
///
/// Composite lengths go through an FFT; prime lengths fall back to
/// [`fdft_direct`], the straight-summation reference the FFT path is tested
/// against.
pub fn fdft(series: &CoefficientSeries) -> Result<SpectralCoefficients> {
    if series.t_len < 2 {
        return Err(FunctionalTsError::SeriesTooShort {
            t_len: series.t_len,
        });
    }
    if is_prime(series.t_len) {
        return fdft_direct(series);
    }
    let t_len = series.t_len;
    let n_freq = t_len / 2;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * t_len as f64).sqrt();
    let fft = FftPlanner::new().plan_fft_forward(t_len);
    let n_coeffs = (series.n_max + 1) * (series.n_max + 1);
    let mut values = Vec::with_capacity(n_coeffs * n_freq);
    // The FFT is zero-based: X_k = Σ_{s=0}^{T-1} x_s e^{-2πiks/T} with
    // x_s = V(s+1), so the 1-based transform needs one extra phase rotation
    // e^{-2πik/T} per frequency.
    let phases: Vec<Complex64> = (1..=n_freq)
        .map(|k| {
            let a = -2.0 * std::f64::consts::PI * k as f64 / t_len as f64;
            Complex64::new(a.cos(), a.sin())
        })
        .collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); t_len];
    for flat in 0..n_coeffs {
        let row = &series.values[flat * t_len..(flat + 1) * t_len];
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for k in 1..=n_freq {
            values.push(buf[k] * phases[k - 1] * norm);
        }
    }
    Ok(SpectralCoefficients {
        n_max: series.n_max,
        t_len,
        frequencies: fourier_frequencies(t_len),
        values,
    })
}

/// Straight-summation fDFT, identical in contract to [`fdft`]; kept public as
/// the reference route for the transform-equivalence tests.
pub fn fdft_direct(series: &CoefficientSeries) -> Result<SpectralCoefficients> {
    if series.t_len < 2 {
        return Err(FunctionalTsError::SeriesTooShort {
            t_len: series.t_len,
        });
    }
    let t_len = series.t_len;
    let n_freq = t_len / 2;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * t_len as f64).sqrt();
    let frequencies = fourier_frequencies(t_len);
    let n_coeffs = (series.n_max + 1) * (series.n_max + 1);
    let mut values = Vec::with_capacity(n_coeffs * n_freq);
    for flat in 0..n_coeffs {
        let row = &series.values[flat * t_len..(flat + 1) * t_len];
        for &omega in &frequencies {
            let mut acc = Complex64::new(0.0, 0.0);
            for (s, &v) in row.iter().enumerate() {
                let a = -omega * (s + 1) as f64;
                acc += Complex64::new(a.cos(), a.sin()) * v;
            }
            values.push(acc * norm);
        }
    }
    Ok(SpectralCoefficients {
        n_max: series.n_max,
        t_len,
        frequencies,
        values,
    })
}

/// Periodogram diagonal: squared moduli of the fDFT values.
pub fn periodogram(series: &CoefficientSeries) -> Result<PeriodogramDiag> {
    let spectral = fdft(series)?;
    let values = spectral.values.iter().map(|c| c.norm_sqr()).collect();
    Ok(PeriodogramDiag {
        n_max: spectral.n_max,
        t_len: spectral.t_len,
        frequencies: spectral.frequencies,
        values,
    })
}

/// Per-degree autocovariance sequences `B_n(τ)`, `τ = 0..max_lag`.
#[derive(Debug, Clone)]
pub struct CovarianceSequence {
    n_max: usize,
    max_lag: usize,
    /// Layout: `values[n·(max_lag+1) + τ]`.
    values: Vec<f64>,
}

impl CovarianceSequence {
    /// Build from per-degree rows, enforcing `B_n(0) ≥ 0` and
    /// `|B_n(τ)| ≤ B_n(0)` (up to roundoff slack).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_max = rows.len().saturating_sub(1);
        let max_lag = match rows.first() {
            Some(first) if !first.is_empty() => first.len() - 1,
            _ => return Err(FunctionalTsError::EmptyCovarianceRow { degree: 0 }),
        };
        let mut values = Vec::with_capacity(rows.len() * (max_lag + 1));
        for (degree, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(FunctionalTsError::EmptyCovarianceRow { degree });
            }
            let at_zero = row[0];
            let slack = 1e-12 * at_zero.abs().max(1.0);
            for (lag, &v) in row.iter().enumerate() {
                if v.abs() > at_zero + slack {
                    return Err(FunctionalTsError::CovarianceNotDominated {
                        degree,
                        lag,
                        magnitude: v.abs(),
                        at_zero,
                    });
                }
            }
            values.extend(row.iter().copied());
            values.resize((degree + 1) * (max_lag + 1), 0.0);
        }
        Ok(Self {
            n_max,
            max_lag,
            values,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn value(&self, degree: usize, lag: usize) -> f64 {
        self.values[degree * (self.max_lag + 1) + lag]
    }

    pub fn row(&self, degree: usize) -> &[f64] {
        &self.values[degree * (self.max_lag + 1)..(degree + 1) * (self.max_lag + 1)]
    }
}

/// Biased empirical autocovariance averaged over each eigenspace:
/// `B̂_n(τ) = (1/((2n+1)·T)) Σ_j Σ_{t=1}^{T-τ} V_{n,j}(t+τ)·V_{n,j}(t)`.
pub fn empirical_autocov(series: &CoefficientSeries, max_lag: usize) -> Result<CovarianceSequence> {
    if max_lag >= series.t_len {
        return Err(FunctionalTsError::LagTooLarge {
            lag: max_lag,
            t_len: series.t_len,
        });
    }
    let t_len = series.t_len;
    let mut rows = Vec::with_capacity(series.n_max + 1);
    for n in 0..=series.n_max {
        let dim = eigenspace_dim(n);
        let mut row = vec![0.0; max_lag + 1];
        for j in 1..=dim {
            let idx = HarmonicIndex::new(n, j).expect("order within eigenspace");
            let v = series.series(idx);
            for (tau, slot) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for t in 0..t_len - tau {
                    acc += v[t + tau] * v[t];
                }
                *slot += acc;
            }
        }
        let scale = 1.0 / (dim as f64 * t_len as f64);
        for slot in &mut row {
            *slot *= scale;
        }
        rows.push(row);
    }
    CovarianceSequence::from_rows(rows)
}

/// Fejér kernel `F_T(ω) = |Σ_{t=1}^{T} e^{-itω}|²/T`.
pub fn fejer_kernel(t_len: usize, omega: f64) -> f64 {
    assert!(t_len >= 1, "Fejér kernel needs T >= 1");
    let half = omega / 2.0;
    let s = half.sin();
    if s.abs() < 1e-12 {
        // ω ≡ 0 (mod 2π): the sum is T unimodular terms in phase.
        return t_len as f64;
    }
    let num = (t_len as f64 * half).sin();
    num * num / (t_len as f64 * s * s)
}
