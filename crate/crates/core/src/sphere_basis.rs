//! Real spherical harmonics on the unit 2-sphere, zonal (Legendre) kernels,
//! quadrature grids, and the forward/backward transforms between gridded
//! fields and harmonic coefficients.
//!
//! Conventions fixed here and relied on everywhere else in the crate:
//!
//! - The sphere carries the raw surface measure with total mass 4π, and the
//!   harmonics are orthonormal with respect to it. In particular
//!   `Y_{0,1} = 1/√(4π)` and `Σ_j Y_{n,j}(x)·Y_{n,j}(y) = ((2n+1)/(4π))·P_n(x·y)`.
//! - Harmonics are real, ordered zonal-first within each degree, then
//!   cosine/sine pairs of increasing azimuthal order `m`: for degree `n`,
//!   order `j = 1` is zonal, `j = 2m` carries `cos(mφ)`, `j = 2m+1` carries
//!   `sin(mφ)`. The degree-`n` eigenspace has dimension `2n+1`.
//! - Associated Legendre functions are evaluated through ascending-degree
//!   recurrences on fully normalized values (no Condon–Shortley phase), which
//!   stay bounded and accurate through degree 100.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

/// Total surface measure of the unit 2-sphere.
pub const SPHERE_AREA: f64 = 4.0 * PI;

/// Slack admitted when validating arguments that must lie in `[-1, 1]`.
const UNIT_INTERVAL_SLACK: f64 = 1e-12;

/// Tolerance used when matching node coordinates while reading CSV fields.
const NODE_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SphereBasisError {
    #[error("argument {value} lies outside [-1, 1]")]
    OutsideUnitInterval { value: f64 },
    #[error("colatitude {value} lies outside [0, pi]")]
    ColatitudeOutOfRange { value: f64 },
    #[error("coordinate is not finite")]
    NonFiniteCoordinate,
    #[error("harmonic order {order} outside 1..={dim} for degree {degree}")]
    OrderOutOfRange {
        degree: usize,
        order: usize,
        dim: usize,
    },
    #[error("grid must have at least 2 nodes per direction, got {n_polar}x{n_azimuth}")]
    GridTooSmall { n_polar: usize, n_azimuth: usize },
    #[error("truncation degree {requested} exceeds the grid's max exact degree {available}")]
    TruncationExceedsGrid { requested: usize, available: usize },
    #[error("field has {values} values but the grid has {nodes} nodes")]
    LengthMismatch { values: usize, nodes: usize },
    #[error("CSV row {row}: {message}")]
    MalformedCsv { row: usize, message: String },
    #[error("CSV row {row}: node ({colat}, {lon}) does not match the grid node at that position")]
    NodeMismatch { row: usize, colat: f64, lon: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, SphereBasisError>;

/// A point on the unit 2-sphere in (colatitude, longitude) coordinates.
///
/// Colatitude is measured from the north pole in `[0, π]`; longitude is
/// reduced modulo 2π into `[0, 2π)` at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    colatitude: f64,
    longitude: f64,
}

impl SpherePoint {
    pub fn new(colatitude: f64, longitude: f64) -> Result<Self> {
        if !colatitude.is_finite() || !longitude.is_finite() {
            return Err(SphereBasisError::NonFiniteCoordinate);
        }
        if !(0.0..=PI).contains(&colatitude) {
            return Err(SphereBasisError::ColatitudeOutOfRange { value: colatitude });
        }
        let mut longitude = longitude.rem_euclid(2.0 * PI);
        // rem_euclid can return exactly 2π when the input is a tiny negative
        // number; fold that case back to 0.
        if longitude >= 2.0 * PI {
            longitude = 0.0;
        }
        Ok(Self {
            colatitude,
            longitude,
        })
    }

    pub fn colatitude(&self) -> f64 {
        self.colatitude
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }

    /// Geographic latitude in radians, `π/2 - colatitude`.
    pub fn latitude(&self) -> f64 {
        PI / 2.0 - self.colatitude
    }

    /// Cosine of the angular separation between two points.
    pub fn cos_angle(&self, other: &SpherePoint) -> f64 {
        let c = self.colatitude.cos() * other.colatitude.cos()
            + self.colatitude.sin()
                * other.colatitude.sin()
                * (self.longitude - other.longitude).cos();
        c.clamp(-1.0, 1.0)
    }
}

/// Dimension of the degree-`n` eigenspace of the sphere Laplacian: `2n+1`.
pub fn eigenspace_dim(degree: usize) -> usize {
    2 * degree + 1
}

/// Index `(n, j)` of a real spherical harmonic, with `1 ≤ j ≤ 2n+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    degree: usize,
    order: usize,
}

impl HarmonicIndex {
    pub fn new(degree: usize, order: usize) -> Result<Self> {
        let dim = eigenspace_dim(degree);
        if order == 0 || order > dim {
            return Err(SphereBasisError::OrderOutOfRange { degree, order, dim });
        }
        Ok(Self { degree, order })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Azimuthal order `m` and the kind of angular factor this index carries.
    fn azimuthal(&self) -> (usize, AngularKind) {
        if self.order == 1 {
            (0, AngularKind::Zonal)
        } else if self.order % 2 == 0 {
            (self.order / 2, AngularKind::Cosine)
        } else {
            (self.order / 2, AngularKind::Sine)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AngularKind {
    Zonal,
    Cosine,
    Sine,
}

/// All harmonic indices with degree ≤ `n_max`, in flat storage order:
/// degree-major, zonal first, then cosine/sine pairs.
pub fn indices_up_to(n_max: usize) -> impl Iterator<Item = HarmonicIndex> {
    (0..=n_max).flat_map(|n| (1..=eigenspace_dim(n)).map(move |j| HarmonicIndex::new(n, j).unwrap()))
}

/// Legendre polynomial `P_n(x)` by the three-term recurrence, with
/// `P_n(1) = 1` for every degree.
pub fn legendre(n: usize, x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > 1.0 + UNIT_INTERVAL_SLACK {
        return Err(SphereBasisError::OutsideUnitInterval { value: x });
    }
    let x = x.clamp(-1.0, 1.0);
    if n == 0 {
        return Ok(1.0);
    }
    let mut prev = 1.0;
    let mut cur = x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Zonal reproducing kernel of the degree-`n` eigenspace:
/// `((2n+1)/(4π))·P_n(cos_angle)`, which equals `Σ_j Y_{n,j}(x)·Y_{n,j}(y)`
/// for any two points whose angular separation has that cosine.
pub fn zonal_kernel(n: usize, cos_angle: f64) -> Result<f64> {
    let p = legendre(n, cos_angle)?;
    Ok(eigenspace_dim(n) as f64 / SPHERE_AREA * p)
}

/// Fully normalized associated Legendre value `Q_n^m(θ)` such that
/// `Y_{n,1} = Q_n^0` and `Y_{n,2m}, Y_{n,2m+1} = √2·Q_n^m·{cos,sin}(mφ)`.
///
/// Computed by climbing the diagonal to `Q_m^m` and then ascending in degree,
/// entirely on normalized values so nothing overflows at large degrees.
fn normalized_assoc_legendre(n: usize, m: usize, cos_theta: f64, sin_theta: f64) -> f64 {
    debug_assert!(m <= n);
    // Diagonal climb: Q_m^m = sqrt((2m+1)/(2m)) * sinθ * Q_{m-1}^{m-1}.
    let mut qmm = 1.0 / SPHERE_AREA.sqrt();
    for k in 1..=m {
        let k = k as f64;
        qmm *= ((2.0 * k + 1.0) / (2.0 * k)).sqrt() * sin_theta;
    }
    if n == m {
        return qmm;
    }
    // First off-diagonal step: Q_{m+1}^m = sqrt(2m+3) * cosθ * Q_m^m.
    let mut prev = qmm;
    let mut cur = ((2 * m + 3) as f64).sqrt() * cos_theta * qmm;
    // Ascending-degree recurrence on normalized values.
    for l in (m + 2)..=n {
        let lf = l as f64;
        let mf = m as f64;
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
            .sqrt();
        let next = a * (cos_theta * cur - b * prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// Real orthonormal spherical harmonic `Y_{n,j}` at a point.
pub fn eval_harmonic(idx: HarmonicIndex, p: &SpherePoint) -> f64 {
    let (m, kind) = idx.azimuthal();
    let q = normalized_assoc_legendre(idx.degree, m, p.colatitude.cos(), p.colatitude.sin());
    match kind {
        AngularKind::Zonal => q,
        AngularKind::Cosine => std::f64::consts::SQRT_2 * q * (m as f64 * p.longitude).cos(),
        AngularKind::Sine => std::f64::consts::SQRT_2 * q * (m as f64 * p.longitude).sin(),
    }
}

/// All `Y_{n,j}(p)` for `n ≤ n_max` written into `out` in flat storage order.
///
/// Shares the Legendre recurrences across degrees, so filling the whole table
/// costs `O((n_max+1)²)` rather than one chain per entry.
fn eval_all_harmonics(n_max: usize, p: &SpherePoint, out: &mut [f64]) {
    debug_assert_eq!(out.len(), (n_max + 1) * (n_max + 1));
    let ct = p.colatitude.cos();
    let st = p.colatitude.sin();
    // cos(mφ), sin(mφ) for m = 0..=n_max.
    let mut cos_m = vec![0.0; n_max + 1];
    let mut sin_m = vec![0.0; n_max + 1];
    for m in 0..=n_max {
        let a = m as f64 * p.longitude;
        cos_m[m] = a.cos();
        sin_m[m] = a.sin();
    }
    // Column-by-column in m: climb the diagonal once, then ascend in degree.
    let mut qmm = 1.0 / SPHERE_AREA.sqrt();
    for m in 0..=n_max {
        if m > 0 {
            let k = m as f64;
            qmm *= ((2.0 * k + 1.0) / (2.0 * k)).sqrt() * st;
        }
        let mut prev = 0.0;
        let mut cur = qmm;
        for n in m..=n_max {
            if n > m {
                let nf = n as f64;
                let mf = m as f64;
                let next = if n == m + 1 {
                    ((2 * m + 3) as f64).sqrt() * ct * cur
                } else {
                    let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
                    let b = (((nf - 1.0) * (nf - 1.0) - mf * mf)
                        / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0))
                        .sqrt();
                    a * (ct * cur - b * prev)
                };
                prev = cur;
                cur = next;
            }
            let base = n * n;
            if m == 0 {
                out[base] = cur;
            } else {
                let v = std::f64::consts::SQRT_2 * cur;
                out[base + 2 * m - 1] = v * cos_m[m];
                out[base + 2 * m] = v * sin_m[m];
            }
        }
    }
}

/// A quadrature grid on the sphere: nodes, positive steradian weights, and
/// the largest degree whose harmonic products the rule integrates exactly.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    nodes: Vec<SpherePoint>,
    weights: Vec<f64>,
    max_exact_degree: usize,
    layout: GridLayout,
}

/// How the grid was constructed; recorded so datasets written to disk can be
/// reopened against an identically rebuilt grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLayout {
    /// Gauss–Legendre nodes in cos(colatitude) × uniform longitudes.
    GaussUniform { n_polar: usize, n_azimuth: usize },
    /// Equiangular midpoints in colatitude × uniform longitudes, weighted by
    /// sin(colatitude) and rescaled to total mass 4π. Faithful to naive
    /// lat/lon sampling but only degree-0 exact; intended for field
    /// generation, not for harmonic analysis.
    Equiangular { n_polar: usize, n_azimuth: usize },
}

impl SphereGrid {
    /// Gauss–Legendre × uniform-azimuth grid. Exactly integrates products of
    /// harmonics up to degree `min(n_polar - 1, (n_azimuth - 1) / 2)`.
    ///
    /// Nodes are ordered colatitude-major (north to south), longitude
    /// ascending within each ring.
    pub fn gauss_uniform(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar < 2 || n_azimuth < 2 {
            return Err(SphereBasisError::GridTooSmall { n_polar, n_azimuth });
        }
        let rule = gauss_quad::GaussLegendre::new(
            NonZeroUsize::new(n_polar).expect("n_polar >= 2"),
        );
        let mut nodes = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        let azimuth_weight = 2.0 * PI / n_azimuth as f64;
        // Gauss nodes come sorted ascending in x = cos(colatitude); reverse so
        // colatitude increases from the north pole.
        for &(x, w) in rule.as_node_weight_pairs().iter().rev() {
            let colat = x.clamp(-1.0, 1.0).acos();
            for k in 0..n_azimuth {
                let lon = 2.0 * PI * k as f64 / n_azimuth as f64;
                nodes.push(SpherePoint::new(colat, lon)?);
                weights.push(w * azimuth_weight);
            }
        }
        Ok(Self {
            nodes,
            weights,
            max_exact_degree: (n_polar - 1).min((n_azimuth - 1) / 2),
            layout: GridLayout::GaussUniform { n_polar, n_azimuth },
        })
    }

    /// Equiangular grid with colatitudes at cell midpoints and sin-colatitude
    /// weights, rescaled so the weights sum to exactly 4π. Only degree-0
    /// exact; see [`GridLayout::Equiangular`].
    pub fn equiangular(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar < 2 || n_azimuth < 2 {
            return Err(SphereBasisError::GridTooSmall { n_polar, n_azimuth });
        }
        let mut nodes = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        for i in 0..n_polar {
            let colat = PI * (i as f64 + 0.5) / n_polar as f64;
            let w = colat.sin() * (PI / n_polar as f64) * (2.0 * PI / n_azimuth as f64);
            for k in 0..n_azimuth {
                let lon = 2.0 * PI * k as f64 / n_azimuth as f64;
                nodes.push(SpherePoint::new(colat, lon)?);
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        let scale = SPHERE_AREA / total;
        for w in &mut weights {
            *w *= scale;
        }
        Ok(Self {
            nodes,
            weights,
            max_exact_degree: 0,
            layout: GridLayout::Equiangular { n_polar, n_azimuth },
        })
    }

    /// Rebuild a grid from its recorded layout.
    pub fn from_layout(layout: GridLayout) -> Result<Self> {
        match layout {
            GridLayout::GaussUniform { n_polar, n_azimuth } => {
                Self::gauss_uniform(n_polar, n_azimuth)
            }
            GridLayout::Equiangular { n_polar, n_azimuth } => {
                Self::equiangular(n_polar, n_azimuth)
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[SpherePoint] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max_exact_degree(&self) -> usize {
        self.max_exact_degree
    }

    pub fn layout(&self) -> GridLayout {
        self.layout
    }

    /// Quadrature inner product of two node-sampled functions.
    pub fn inner_product(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.nodes.len());
        debug_assert_eq!(g.len(), self.nodes.len());
        let mut acc = 0.0;
        for i in 0..self.nodes.len() {
            acc += self.weights[i] * f[i] * g[i];
        }
        acc
    }
}

/// Real values sampled at every node of a grid, in node order.
#[derive(Debug, Clone)]
pub struct GriddedField {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
}

impl GriddedField {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(SphereBasisError::LengthMismatch {
                values: values.len(),
                nodes: grid.node_count(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Sample a function of the node position over the whole grid.
    pub fn from_fn(grid: Arc<SphereGrid>, mut f: impl FnMut(&SpherePoint) -> f64) -> Self {
        let values = grid.nodes().iter().map(&mut f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Serialize as CSV with header `colat_rad,lon_rad,value`, one row per
    /// node in grid construction order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(self.values.len() * 32);
        buf.push_str("colat_rad,lon_rad,value\n");
        for (node, v) in self.grid.nodes().iter().zip(&self.values) {
            writeln!(buf, "{},{},{}", node.colatitude(), node.longitude(), v)
                .expect("writing to a String cannot fail");
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Read a CSV produced by [`write_csv`](Self::write_csv), checking each
    /// row's coordinates against the expected grid's node order.
    pub fn read_csv<R: std::io::Read>(grid: Arc<SphereGrid>, input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut lines = reader.lines();
        match lines.next() {
            Some(header) => {
                let header = header?;
                if header.trim() != "colat_rad,lon_rad,value" {
                    return Err(SphereBasisError::MalformedCsv {
                        row: 1,
                        message: format!("unexpected header {header:?}"),
                    });
                }
            }
            None => {
                return Err(SphereBasisError::MalformedCsv {
                    row: 1,
                    message: "empty file".into(),
                })
            }
        }
        let mut values = Vec::with_capacity(grid.node_count());
        for (i, line) in lines.enumerate() {
            let row = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut field = |name: &str| -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| SphereBasisError::MalformedCsv {
                        row,
                        message: format!("missing column {name}"),
                    })?
                    .trim()
                    .parse()
                    .map_err(|e| SphereBasisError::MalformedCsv {
                        row,
                        message: format!("bad {name}: {e}"),
                    })
            };
            let colat = field("colat_rad")?;
            let lon = field("lon_rad")?;
            let value = field("value")?;
            let idx = values.len();
            let node = grid.nodes().get(idx).ok_or(SphereBasisError::LengthMismatch {
                values: idx + 1,
                nodes: grid.node_count(),
            })?;
            if (node.colatitude() - colat).abs() > NODE_MATCH_TOL
                || (node.longitude() - lon).abs() > NODE_MATCH_TOL
            {
                return Err(SphereBasisError::NodeMismatch { row, colat, lon });
            }
            values.push(value);
        }
        Self::new(grid, values)
    }

    pub fn read_csv_path(grid: Arc<SphereGrid>, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(grid, file)
    }
}

/// Harmonic coefficients of a field truncated at degree `n_max`, stored flat
/// in degree-major order; `(n_max+1)²` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoefficients {
    n_max: usize,
    entries: Vec<f64>,
}

impl HarmonicCoefficients {
    pub fn zeros(n_max: usize) -> Self {
        Self {
            n_max,
            entries: vec![0.0; (n_max + 1) * (n_max + 1)],
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn flat(&self, idx: HarmonicIndex) -> usize {
        debug_assert!(idx.degree <= self.n_max);
        idx.degree * idx.degree + (idx.order - 1)
    }

    pub fn entry(&self, idx: HarmonicIndex) -> f64 {
        self.entries[self.flat(idx)]
    }

    pub fn set_entry(&mut self, idx: HarmonicIndex, value: f64) {
        let at = self.flat(idx);
        self.entries[at] = value;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn iter_indexed(&self) -> impl Iterator<Item = (HarmonicIndex, f64)> + '_ {
        indices_up_to(self.n_max).zip(self.entries.iter().copied())
    }
}

/// Quadrature analysis: coefficients `Σ_nodes weight·value·Y_{n,j}(node)` for
/// all degrees ≤ `n_max`, the discrete version of `∫ X·Y_{n,j} dν`.
pub fn analyze(field: &GriddedField, n_max: usize) -> Result<HarmonicCoefficients> {
    let grid = field.grid();
    if n_max > grid.max_exact_degree() {
        return Err(SphereBasisError::TruncationExceedsGrid {
            requested: n_max,
            available: grid.max_exact_degree(),
        });
    }
    let dim = (n_max + 1) * (n_max + 1);
    let mut acc = vec![0.0; dim];
    let mut basis = vec![0.0; dim];
    for (i, node) in grid.nodes().iter().enumerate() {
        let scale = grid.weights()[i] * field.values()[i];
        if scale == 0.0 {
            continue;
        }
        eval_all_harmonics(n_max, node, &mut basis);
        for (a, b) in acc.iter_mut().zip(&basis) {
            *a += scale * b;
        }
    }
    Ok(HarmonicCoefficients {
        n_max,
        entries: acc,
    })
}

/// Pointwise synthesis `Σ_{n,j} coeff(n,j)·Y_{n,j}(node)` over a grid.
pub fn synthesize(coeffs: &HarmonicCoefficients, grid: &Arc<SphereGrid>) -> GriddedField {
    let dim = coeffs.entries.len();
    let mut basis = vec![0.0; dim];
    let values = grid
        .nodes()
        .iter()
        .map(|node| {
            eval_all_harmonics(coeffs.n_max, node, &mut basis);
            basis
                .iter()
                .zip(&coeffs.entries)
                .map(|(b, c)| b * c)
                .sum()
        })
        .collect();
    GriddedField {
        grid: Arc::clone(grid),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn random_point(rng: &mut impl Rng) -> SpherePoint {
        // Uniform on the sphere via inverse-CDF in cos(colatitude).
        let u: f64 = rng.gen_range(-1.0..1.0);
        let colat = u.acos();
        let lon = rng.gen_range(0.0..2.0 * PI);
        SpherePoint::new(colat, lon).unwrap()
    }

    #[test]
    fn legendre_low_degrees() {
        assert_eq!(legendre(0, 0.3).unwrap(), 1.0);
        assert_eq!(legendre(1, 0.5).unwrap(), 0.5);
        assert_eq!(legendre(4, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn legendre_matches_explicit_polynomials() {
        for i in 0..=20 {
            let x = -1.0 + 0.1 * i as f64;
            let p2 = 0.5 * (3.0 * x * x - 1.0);
            let p3 = 0.5 * (5.0 * x * x * x - 3.0 * x);
            let p4 = 0.125 * (35.0 * x.powi(4) - 30.0 * x * x + 3.0);
            assert_abs_diff_eq!(legendre(2, x).unwrap(), p2, epsilon = 1e-12);
            assert_abs_diff_eq!(legendre(3, x).unwrap(), p3, epsilon = 1e-12);
            assert_abs_diff_eq!(legendre(4, x).unwrap(), p4, epsilon = 1e-12);
        }
    }

    #[test]
    fn legendre_is_one_at_one_for_all_degrees() {
        for n in 0..=10 {
            assert_abs_diff_eq!(legendre(n, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn legendre_rejects_out_of_range() {
        assert!(legendre(3, 1.1).is_err());
        assert!(legendre(3, -1.0 - 1e-9).is_err());
        // Values within the admitted slack are clamped, not rejected.
        assert!(legendre(3, 1.0 + 5e-13).is_ok());
    }

    #[test]
    fn constant_harmonic_value() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let idx = HarmonicIndex::new(0, 1).unwrap();
        for _ in 0..10 {
            let p = random_point(&mut rng);
            assert_abs_diff_eq!(eval_harmonic(idx, &p), 1.0 / SPHERE_AREA.sqrt(), epsilon = 1e-14);
        }
        assert_abs_diff_eq!(1.0 / SPHERE_AREA.sqrt(), 0.2820948, epsilon = 1e-7);
    }

    #[test]
    fn zonal_degree_one_at_pole() {
        let pole = SpherePoint::new(0.0, 0.0).unwrap();
        let idx = HarmonicIndex::new(1, 1).unwrap();
        let expected = (3.0 / SPHERE_AREA).sqrt();
        assert_abs_diff_eq!(eval_harmonic(idx, &pole), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 0.4886025, epsilon = 1e-7);
    }

    #[test]
    fn degree_one_squared_sum_is_constant() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let expected = 3.0 / SPHERE_AREA;
        for _ in 0..50 {
            let p = random_point(&mut rng);
            let sum: f64 = (1..=3)
                .map(|j| eval_harmonic(HarmonicIndex::new(1, j).unwrap(), &p).powi(2))
                .sum();
            assert_abs_diff_eq!(sum, expected, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(expected, 0.2387324, epsilon = 1e-7);
    }

    #[test]
    fn zonal_kernel_values() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..5 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            assert_abs_diff_eq!(zonal_kernel(0, x).unwrap(), 1.0 / SPHERE_AREA, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(zonal_kernel(2, 1.0).unwrap(), 5.0 / SPHERE_AREA, epsilon = 1e-14);
        assert_abs_diff_eq!(5.0 / SPHERE_AREA, 0.3978874, epsilon = 1e-7);
        assert_abs_diff_eq!(zonal_kernel(1, 0.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zonal_kernel_matches_direct_harmonic_sum() {
        // Same-point sum of squares must equal the kernel at separation 0.
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for n in [0usize, 1, 2, 5] {
            let p = random_point(&mut rng);
            let sum: f64 = (1..=eigenspace_dim(n))
                .map(|j| eval_harmonic(HarmonicIndex::new(n, j).unwrap(), &p).powi(2))
                .sum();
            assert_relative_eq!(sum, zonal_kernel(n, 1.0).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn addition_theorem_holds_to_1e10() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = random_point(&mut rng);
            let y = random_point(&mut rng);
            let c = x.cos_angle(&y);
            for n in 0..=10 {
                let sum: f64 = (1..=eigenspace_dim(n))
                    .map(|j| {
                        let idx = HarmonicIndex::new(n, j).unwrap();
                        eval_harmonic(idx, &x) * eval_harmonic(idx, &y)
                    })
                    .sum();
                worst = worst.max((sum - zonal_kernel(n, c).unwrap()).abs());
            }
        }
        assert!(worst <= 1e-10, "addition theorem error {worst}");
    }

    #[test]
    fn gauss_grid_smallest_case() {
        let grid = SphereGrid::gauss_uniform(2, 4).unwrap();
        assert_eq!(grid.node_count(), 8);
        let total: f64 = grid.weights().iter().sum();
        assert_relative_eq!(total, SPHERE_AREA, max_relative = 1e-10);
        assert_eq!(grid.max_exact_degree(), 1);
    }

    #[test]
    fn gauss_grid_exactness_rule() {
        let grid = SphereGrid::gauss_uniform(16, 33).unwrap();
        assert_eq!(grid.max_exact_degree(), 15);
        assert_eq!(grid.node_count(), 16 * 33);
    }

    #[test]
    fn paper_scale_grid_node_count() {
        let grid = SphereGrid::equiangular(180, 180).unwrap();
        assert_eq!(grid.node_count(), 32400);
        let total: f64 = grid.weights().iter().sum();
        assert_relative_eq!(total, SPHERE_AREA, max_relative = 1e-10);
        let gauss = SphereGrid::gauss_uniform(180, 180).unwrap();
        assert_eq!(gauss.node_count(), 32400);
    }

    #[test]
    fn grid_rejects_degenerate_sizes() {
        assert!(SphereGrid::gauss_uniform(1, 4).is_err());
        assert!(SphereGrid::gauss_uniform(4, 1).is_err());
        assert!(SphereGrid::equiangular(0, 8).is_err());
    }

    #[test]
    fn quadrature_orthonormality_up_to_max_exact_degree() {
        let grid = Arc::new(SphereGrid::gauss_uniform(16, 33).unwrap());
        let n_max = grid.max_exact_degree();
        let dim = (n_max + 1) * (n_max + 1);
        // Sample every basis function once, then test all pairs.
        let mut table = vec![vec![0.0; grid.node_count()]; dim];
        let mut basis = vec![0.0; dim];
        for (i, node) in grid.nodes().iter().enumerate() {
            eval_all_harmonics(n_max, node, &mut basis);
            for (f, b) in table.iter_mut().zip(&basis) {
                f[i] = *b;
            }
        }
        let mut worst: f64 = 0.0;
        for a in 0..dim {
            for b in a..dim {
                let ip = grid.inner_product(&table[a], &table[b]);
                let expected = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((ip - expected).abs());
            }
        }
        assert!(worst <= 1e-8, "orthonormality error {worst}");
    }

    #[test]
    fn recurrence_stable_at_degree_one_hundred() {
        let grid = Arc::new(SphereGrid::gauss_uniform(110, 221).unwrap());
        assert!(grid.max_exact_degree() >= 100);
        for (n, j, m, l, expected) in [
            (100, 1, 100, 1, 1.0),
            (100, 200, 100, 200, 1.0),
            (100, 201, 100, 201, 1.0),
            (100, 1, 98, 1, 0.0),
            (100, 57, 100, 58, 0.0),
        ] {
            let f = GriddedField::from_fn(Arc::clone(&grid), |p| {
                eval_harmonic(HarmonicIndex::new(n, j).unwrap(), p)
            });
            let g = GriddedField::from_fn(Arc::clone(&grid), |p| {
                eval_harmonic(HarmonicIndex::new(m, l).unwrap(), p)
            });
            let ip = grid.inner_product(f.values(), g.values());
            assert_abs_diff_eq!(ip, expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn analyze_picks_out_sampled_harmonic() {
        let grid = Arc::new(SphereGrid::gauss_uniform(8, 17).unwrap());
        let target = HarmonicIndex::new(2, 1).unwrap();
        let field = GriddedField::from_fn(Arc::clone(&grid), |p| eval_harmonic(target, p));
        let coeffs = analyze(&field, grid.max_exact_degree()).unwrap();
        for (idx, value) in coeffs.iter_indexed() {
            let expected = if idx == target { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(value, expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn analyze_zero_field_and_linearity() {
        let grid = Arc::new(SphereGrid::gauss_uniform(8, 17).unwrap());
        let zero = GriddedField::new(Arc::clone(&grid), vec![0.0; grid.node_count()]).unwrap();
        let coeffs = analyze(&zero, 5).unwrap();
        assert!(coeffs.entries().iter().all(|&c| c == 0.0));

        let i01 = HarmonicIndex::new(0, 1).unwrap();
        let i12 = HarmonicIndex::new(1, 2).unwrap();
        let field = GriddedField::from_fn(Arc::clone(&grid), |p| {
            3.0 * eval_harmonic(i01, p) + 2.0 * eval_harmonic(i12, p)
        });
        let coeffs = analyze(&field, 5).unwrap();
        assert_abs_diff_eq!(coeffs.entry(i01), 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(coeffs.entry(i12), 2.0, epsilon = 1e-10);
        for (idx, value) in coeffs.iter_indexed() {
            if idx != i01 && idx != i12 {
                assert_abs_diff_eq!(value, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn analyze_rejects_truncation_beyond_grid() {
        let grid = Arc::new(SphereGrid::gauss_uniform(4, 9).unwrap());
        let field = GriddedField::new(Arc::clone(&grid), vec![1.0; grid.node_count()]).unwrap();
        let err = analyze(&field, grid.max_exact_degree() + 1).unwrap_err();
        assert!(matches!(err, SphereBasisError::TruncationExceedsGrid { .. }));
    }

    #[test]
    fn synthesize_zero_and_single_entry() {
        let grid = Arc::new(SphereGrid::gauss_uniform(6, 13).unwrap());
        let zero = synthesize(&HarmonicCoefficients::zeros(3), &grid);
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let idx = HarmonicIndex::new(1, 1).unwrap();
        let mut coeffs = HarmonicCoefficients::zeros(3);
        coeffs.set_entry(idx, 1.0);
        let field = synthesize(&coeffs, &grid);
        for (node, v) in grid.nodes().iter().zip(field.values()) {
            assert_abs_diff_eq!(*v, eval_harmonic(idx, node), epsilon = 1e-13);
        }
    }

    #[test]
    fn band_limited_round_trip() {
        let grid = Arc::new(SphereGrid::gauss_uniform(16, 33).unwrap());
        let n_max = grid.max_exact_degree();
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let mut coeffs = HarmonicCoefficients::zeros(n_max);
        for idx in indices_up_to(n_max) {
            coeffs.set_entry(idx, rng.gen_range(-1.0..1.0));
        }
        // Coefficient space round trip.
        let field = synthesize(&coeffs, &grid);
        let back = analyze(&field, n_max).unwrap();
        for (idx, value) in back.iter_indexed() {
            assert_abs_diff_eq!(value, coeffs.entry(idx), epsilon = 1e-10);
        }
        // Field space round trip.
        let resynth = synthesize(&back, &grid);
        let sup = field
            .values()
            .iter()
            .zip(resynth.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(sup <= 1e-8, "round-trip sup error {sup}");
    }

    #[test]
    fn csv_round_trip_preserves_values_and_order() {
        let grid = Arc::new(SphereGrid::gauss_uniform(4, 9).unwrap());
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let field = GriddedField::from_fn(Arc::clone(&grid), |_| rng.gen_range(-5.0..5.0));
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("colat_rad,lon_rad,value\n"));
        let back = GriddedField::read_csv(Arc::clone(&grid), buf.as_slice()).unwrap();
        assert_eq!(back.values(), field.values());
    }

    #[test]
    fn csv_read_rejects_wrong_grid() {
        let grid = Arc::new(SphereGrid::gauss_uniform(4, 9).unwrap());
        let other = Arc::new(SphereGrid::gauss_uniform(5, 9).unwrap());
        let field = GriddedField::from_fn(Arc::clone(&grid), |p| p.colatitude());
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let err = GriddedField::read_csv(other, buf.as_slice()).unwrap_err();
        assert!(matches!(err, SphereBasisError::NodeMismatch { .. }));
    }

    #[test]
    fn harmonic_index_bounds() {
        assert!(HarmonicIndex::new(2, 5).is_ok());
        assert!(HarmonicIndex::new(2, 0).is_err());
        assert!(HarmonicIndex::new(2, 6).is_err());
        assert_eq!(indices_up_to(3).count(), 16);
    }

    #[test]
    fn sphere_point_invariants() {
        assert!(SpherePoint::new(-0.1, 0.0).is_err());
        assert!(SpherePoint::new(PI + 0.1, 0.0).is_err());
        assert!(SpherePoint::new(f64::NAN, 0.0).is_err());
        let p = SpherePoint::new(1.0, -0.5).unwrap();
        assert!((0.0..2.0 * PI).contains(&p.longitude()));
        assert_abs_diff_eq!(p.longitude(), 2.0 * PI - 0.5, epsilon = 1e-12);
    }

    mod properties {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn longitude_always_reduced(colat in 0.0..PI, lon in -100.0f64..100.0) {
                let p = SpherePoint::new(colat, lon).unwrap();
                prop_assert!((0.0..2.0 * PI).contains(&p.longitude()));
                // Reduction preserves the angle modulo 2π.
                let diff = (p.longitude() - lon).rem_euclid(2.0 * PI);
                prop_assert!(diff < 1e-9 || (2.0 * PI - diff) < 1e-9);
            }

            #[test]
            fn addition_theorem_random_points(
                n in 0usize..=8,
                a in 0.0..PI, b in 0.0f64..6.28, c in 0.0..PI, d in 0.0f64..6.28,
            ) {
                let x = SpherePoint::new(a, b).unwrap();
                let y = SpherePoint::new(c, d).unwrap();
                let sum: f64 = (1..=eigenspace_dim(n))
                    .map(|j| {
                        let idx = HarmonicIndex::new(n, j).unwrap();
                        eval_harmonic(idx, &x) * eval_harmonic(idx, &y)
                    })
                    .sum();
                let kernel = zonal_kernel(n, x.cos_angle(&y)).unwrap();
                prop_assert!((sum - kernel).abs() <= 1e-10);
            }
        }
    }
}
