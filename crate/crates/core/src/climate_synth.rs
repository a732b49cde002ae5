//! Physically parameterized synthetic climate datasets: clear-sky solar
//! irradiance as the response surface, barometric pressure as the covariate
//! surface, and long-memory spherical noise injected at calibrated scales.
//!
//! The deterministic skeleton is elementary solar geometry — a sinusoidal
//! declination, a solar-noon zenith angle clamped at the horizon, the
//! irradiance law `SI = G₀·CSI·cos(ZA)/π` — plus the isothermal barometric
//! law `pp = P₀·exp(−M·g·h/(R·T))` and a latitude/annual-cycle pressure
//! wave. Stochastic structure comes from a spherical long-memory error
//! process, normalized to unit grid standard deviation and rescaled to the
//! calibrated radiation/pressure standard deviations.
//!
//! Datasets round-trip through a bundle directory (`radiation/t_<day>.csv`,
//! `pressure/t_<day>.csv`, `scenario.txt`) holding everything needed to
//! rebuild the grid and the error model.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::lrd_spectral::{LrdSpectralError, LrdSpectralModel};
use crate::regression::{DesignMatrix, RegressionError};
use crate::simulation::{simulate_lrd_error, SimulationError};
use crate::sphere_basis::{
    analyze, indices_up_to, GridLayout, GriddedField, SphereBasisError, SphereGrid,
};

#[derive(Debug, Error)]
pub enum ClimateSynthError {
    #[error("day of year must lie in 1..=365, got {day}")]
    DayOutOfRange { day: u32 },
    #[error("latitude must lie in [-π/2, π/2], got {latitude}")]
    LatitudeOutOfRange { latitude: f64 },
    #[error("height must be nonnegative, got {height}")]
    NegativeHeight { height: f64 },
    #[error("physical constant out of range: {what}")]
    InvalidConstants { what: &'static str },
    #[error("scenario needs at least one day")]
    EmptyDays,
    #[error("{what} must be finite and nonnegative, got {value}")]
    InvalidScale { what: &'static str, value: f64 },
    #[error("field stack holds {got} fields but the scenario lists {expected} days")]
    StackLengthMismatch { got: usize, expected: usize },
    #[error("covariate extraction needs at least one field and one coefficient")]
    EmptyCovariateRequest,
    #[error("scenario file line {line}: {message}")]
    MalformedScenarioFile { line: usize, message: String },
    #[error("scenario file is missing key `{key}`")]
    MissingKey { key: String },
    #[error(transparent)]
    Sphere(#[from] SphereBasisError),
    #[error(transparent)]
    Spectral(#[from] LrdSpectralError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ClimateSynthError>;

// ---------------------------------------------------------------------------
// Constants and scenario
// ---------------------------------------------------------------------------

/// The physical inputs of the deterministic fields. `earth_radius` is kept
/// for completeness even though no formula here consumes it.
#[derive(Debug, Clone, Copy)]
pub struct PhysicalConstants {
    /// Earth radius in meters.
    pub earth_radius: f64,
    /// Solar constant G₀ in W/m².
    pub solar_constant: f64,
    /// Clear-sky index (dimensionless attenuation factor).
    pub clear_sky_index: f64,
    /// Sea-level pressure P₀ in hPa.
    pub sea_level_pressure: f64,
    /// Molar mass of air in kg/mol.
    pub molar_mass: f64,
    /// Gravitational acceleration in m/s².
    pub gravity: f64,
    /// Universal gas constant in J/(mol·K).
    pub gas_constant: f64,
    /// Reference temperature in K.
    pub temperature: f64,
    /// Height band (min, max) in meters whose midpoint anchors the mean
    /// pressure surface.
    pub height_range: (f64, f64),
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            earth_radius: 6_371_000.0,
            solar_constant: 1361.0,
            clear_sky_index: 0.8,
            sea_level_pressure: 1013.25,
            molar_mass: 0.029,
            gravity: 9.81,
            gas_constant: 8.314,
            temperature: 288.0,
            height_range: (6000.0, 12000.0),
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            (self.earth_radius, "earth_radius"),
            (self.solar_constant, "solar_constant"),
            (self.clear_sky_index, "clear_sky_index"),
            (self.sea_level_pressure, "sea_level_pressure"),
            (self.molar_mass, "molar_mass"),
            (self.gravity, "gravity"),
            (self.gas_constant, "gas_constant"),
            (self.temperature, "temperature"),
            (self.height_range.0, "height_range lower end"),
        ];
        for (value, what) in positives {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ClimateSynthError::InvalidConstants { what });
            }
        }
        if !(self.height_range.1 > self.height_range.0) {
            return Err(ClimateSynthError::InvalidConstants {
                what: "height_range must be increasing",
            });
        }
        Ok(())
    }

    /// Midpoint of the height band; the mean pressure surface is evaluated
    /// here.
    pub fn reference_height(&self) -> f64 {
        0.5 * (self.height_range.0 + self.height_range.1)
    }
}

/// Seasonal window; fixes the phase of the annual pressure wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Season {
    AutumnWinter,
    SpringSummer,
}

impl Season {
    /// Phase of `cos(2π·day/365 + φ)`: 0 in spring–summer, π in
    /// autumn–winter.
    pub fn phase(self) -> f64 {
        match self {
            Season::SpringSummer => 0.0,
            Season::AutumnWinter => PI,
        }
    }
}

impl std::fmt::Display for Season {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Season::AutumnWinter => "autumn_winter",
            Season::SpringSummer => "spring_summer",
        })
    }
}

impl std::str::FromStr for Season {
    type Err = ClimateSynthError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autumn_winter" => Ok(Season::AutumnWinter),
            "spring_summer" => Ok(Season::SpringSummer),
            other => Err(ClimateSynthError::MalformedScenarioFile {
                line: 0,
                message: format!("unknown season `{other}`"),
            }),
        }
    }
}

/// Calibrated standard deviation of the radiation error process, in W/m².
pub const RADIATION_ERROR_SCALE: f64 = 160.2262;

/// Calibrated standard deviation of the pressure error process, in hPa.
pub const PRESSURE_ERROR_SCALE: f64 = 49.6453;

/// Default amplitude of the latitude/annual-cycle pressure wave, in hPa.
pub const DEFAULT_PRESSURE_WAVE_AMPLITUDE: f64 = 30.0;

/// Everything a dataset generation run depends on.
#[derive(Debug, Clone)]
pub struct ClimateScenario {
    pub constants: PhysicalConstants,
    pub season: Season,
    /// Days of year, each in `1..=365`, in output order.
    pub days: Vec<u32>,
    /// Standard deviation given to the radiation error field.
    pub radiation_error_scale: f64,
    /// Standard deviation given to the pressure error field.
    pub pressure_error_scale: f64,
    /// Amplitude of the `cos(2·lat)` pressure wave, in hPa.
    pub pressure_wave_amplitude: f64,
    /// Extra multiplier on both error fields; 0 yields the deterministic
    /// means.
    pub error_amplitude: f64,
    /// Spectral model of both (independent) error processes.
    pub error_model: LrdSpectralModel,
    pub seed: u64,
}

impl ClimateScenario {
    /// Scenario with the calibrated error scales, the default pressure-wave
    /// amplitude, and unit error amplitude.
    pub fn new(
        season: Season,
        days: Vec<u32>,
        error_model: LrdSpectralModel,
        seed: u64,
    ) -> Result<Self> {
        let scenario = Self {
            constants: PhysicalConstants::default(),
            season,
            days,
            radiation_error_scale: RADIATION_ERROR_SCALE,
            pressure_error_scale: PRESSURE_ERROR_SCALE,
            pressure_wave_amplitude: DEFAULT_PRESSURE_WAVE_AMPLITUDE,
            error_amplitude: 1.0,
            error_model,
            seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if self.days.is_empty() {
            return Err(ClimateSynthError::EmptyDays);
        }
        for &day in &self.days {
            if day == 0 || day > 365 {
                return Err(ClimateSynthError::DayOutOfRange { day });
            }
        }
        let scales = [
            (self.radiation_error_scale, "radiation_error_scale"),
            (self.pressure_error_scale, "pressure_error_scale"),
            (self.pressure_wave_amplitude, "pressure_wave_amplitude"),
            (self.error_amplitude, "error_amplitude"),
        ];
        for (value, what) in scales {
            if !value.is_finite() || value < 0.0 {
                return Err(ClimateSynthError::InvalidScale { what, value });
            }
        }
        if !(self.radiation_error_scale > 0.0) || !(self.pressure_error_scale > 0.0) {
            return Err(ClimateSynthError::InvalidScale {
                what: "error scales must be strictly positive",
                value: self.radiation_error_scale.min(self.pressure_error_scale),
            });
        }
        Ok(())
    }

    /// Mean pressure surface at one latitude and day:
    /// `barometric(h̄) + A·cos(2·lat)·cos(2π·day/365 + φ_season)`.
    ///
    /// Defined for any day so the annual cycle can be continued past 365;
    /// scenario day lists stay within one year.
    pub fn pressure_mean(&self, latitude: f64, day: u32) -> Result<f64> {
        if latitude.abs() > PI / 2.0 + 1e-12 {
            return Err(ClimateSynthError::LatitudeOutOfRange { latitude });
        }
        let base = barometric_pressure(self.constants.reference_height(), &self.constants)?;
        let wave = (2.0 * PI * day as f64 / 365.0 + self.season.phase()).cos();
        Ok(base + self.pressure_wave_amplitude * (2.0 * latitude).cos() * wave)
    }
}

// ---------------------------------------------------------------------------
// Solar geometry and the barometric law
// ---------------------------------------------------------------------------

/// Solar declination in radians: `δ = −23.44°·cos(2π(day+10)/365)`, the
/// standard sinusoidal approximation with solstices near days 172 and 355.
pub fn declination(day: u32) -> Result<f64> {
    if day == 0 || day > 365 {
        return Err(ClimateSynthError::DayOutOfRange { day });
    }
    let amplitude = 23.44_f64.to_radians();
    Ok(-amplitude * (2.0 * PI * (day as f64 + 10.0) / 365.0).cos())
}

/// Cosine of the solar-noon zenith angle, clamped to `[0, 1]`: the clamp at
/// zero pins the sun to the horizon through polar night.
fn cos_zenith_angle(latitude: f64, declination: f64) -> Result<f64> {
    if latitude.abs() > PI / 2.0 + 1e-12 {
        return Err(ClimateSynthError::LatitudeOutOfRange { latitude });
    }
    Ok((latitude.sin() * declination.sin() + latitude.cos() * declination.cos()).clamp(0.0, 1.0))
}

/// Solar-noon zenith angle for a given declination:
/// `ZA = arccos(clamp(sin(lat)·sin(δ) + cos(lat)·cos(δ), 0, 1))`.
pub fn zenith_angle_at_declination(latitude: f64, declination: f64) -> Result<f64> {
    Ok(cos_zenith_angle(latitude, declination)?.acos())
}

/// Solar-noon zenith angle on a given day of year.
pub fn zenith_angle(latitude: f64, day: u32) -> Result<f64> {
    zenith_angle_at_declination(latitude, declination(day)?)
}

/// Clear-sky solar irradiance for a given declination:
/// `SI = G₀·CSI·cos(ZA)/π ≥ 0`.
pub fn solar_irradiance_at_declination(
    latitude: f64,
    declination: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let cos_za = cos_zenith_angle(latitude, declination)?;
    Ok(constants.solar_constant * constants.clear_sky_index * cos_za / PI)
}

/// Clear-sky solar irradiance on a given day of year.
pub fn solar_irradiance(latitude: f64, day: u32, constants: &PhysicalConstants) -> Result<f64> {
    solar_irradiance_at_declination(latitude, declination(day)?, constants)
}

/// Isothermal barometric law: `pp = P₀·exp(−M·g·h/(R·T))` in hPa.
pub fn barometric_pressure(height: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(height >= 0.0) {
        return Err(ClimateSynthError::NegativeHeight { height });
    }
    let exponent = -constants.molar_mass * constants.gravity * height
        / (constants.gas_constant * constants.temperature);
    Ok(constants.sea_level_pressure * exponent.exp())
}

// ---------------------------------------------------------------------------
// Mean fields and dataset generation
// ---------------------------------------------------------------------------

fn latitude_of(colatitude: f64) -> f64 {
    PI / 2.0 - colatitude
}

/// Deterministic radiation surface per scenario day: solar irradiance at
/// every node.
pub fn radiation_mean_field(
    scenario: &ClimateScenario,
    grid: &Arc<SphereGrid>,
) -> Result<Vec<GriddedField>> {
    scenario.validate()?;
    scenario
        .days
        .iter()
        .map(|&day| {
            let delta = declination(day)?;
            let values = grid
                .nodes()
                .iter()
                .map(|node| {
                    solar_irradiance_at_declination(
                        latitude_of(node.colatitude()),
                        delta,
                        &scenario.constants,
                    )
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(GriddedField::new(Arc::clone(grid), values)?)
        })
        .collect()
}

/// Deterministic pressure surface per scenario day.
pub fn pressure_mean_field(
    scenario: &ClimateScenario,
    grid: &Arc<SphereGrid>,
) -> Result<Vec<GriddedField>> {
    scenario.validate()?;
    scenario
        .days
        .iter()
        .map(|&day| {
            let values = grid
                .nodes()
                .iter()
                .map(|node| scenario.pressure_mean(latitude_of(node.colatitude()), day))
                .collect::<Result<Vec<f64>>>()?;
            Ok(GriddedField::new(Arc::clone(grid), values)?)
        })
        .collect()
}

/// Divide every value by the grand sample standard deviation (about the
/// grand mean, all nodes and days pooled), so the stack leaves with unit
/// sample standard deviation.
fn normalize_stack(stack: &mut [GriddedField]) {
    let count: usize = stack.iter().map(|f| f.values().len()).sum();
    if count < 2 {
        return;
    }
    let sum: f64 = stack.iter().flat_map(|f| f.values()).sum();
    let mean = sum / count as f64;
    let ss: f64 = stack
        .iter()
        .flat_map(|f| f.values())
        .map(|v| (v - mean).powi(2))
        .sum();
    let std = (ss / (count as f64 - 1.0)).sqrt();
    if std > 0.0 {
        for field in stack.iter_mut() {
            for v in field.values_mut() {
                *v /= std;
            }
        }
    }
}

/// Generate the paired datasets: `radiation = SI mean + s_rad·ε₁` and
/// `pressure = pressure mean + s_p·ε₂`, where `ε₁, ε₂` are independent
/// long-memory error stacks normalized to unit grid standard deviation and
/// `s` are the scenario's error scales (times the error amplitude).
pub fn generate_datasets(
    scenario: &ClimateScenario,
    grid: &Arc<SphereGrid>,
) -> Result<(Vec<GriddedField>, Vec<GriddedField>)> {
    scenario.validate()?;
    let t_len = scenario.days.len();
    let mut rng = ChaCha20Rng::seed_from_u64(scenario.seed);
    let radiation_seed: u64 = rng.gen();
    let pressure_seed: u64 = rng.gen();

    let mut radiation = radiation_mean_field(scenario, grid)?;
    let mut pressure = pressure_mean_field(scenario, grid)?;

    let (_, mut rad_err) = simulate_lrd_error(&scenario.error_model, t_len, grid, radiation_seed)?;
    let (_, mut p_err) = simulate_lrd_error(&scenario.error_model, t_len, grid, pressure_seed)?;
    normalize_stack(&mut rad_err);
    normalize_stack(&mut p_err);

    let rad_scale = scenario.error_amplitude * scenario.radiation_error_scale;
    let p_scale = scenario.error_amplitude * scenario.pressure_error_scale;
    for (field, err) in radiation.iter_mut().zip(&rad_err) {
        for (v, &e) in field.values_mut().iter_mut().zip(err.values()) {
            *v += rad_scale * e;
        }
    }
    for (field, err) in pressure.iter_mut().zip(&p_err) {
        for (v, &e) in field.values_mut().iter_mut().zip(err.values()) {
            *v += p_scale * e;
        }
    }
    Ok((radiation, pressure))
}

/// Design matrix for regression on a generated dataset: column `h` is the
/// time path of the `h`-th harmonic coefficient (flat ordering: degree, then
/// order) of the daily pressure maps. The analysis truncation is the
/// smallest degree covering the first `p` coefficients.
pub fn pressure_covariates(pressure: &[GriddedField], p: usize) -> Result<DesignMatrix> {
    if pressure.is_empty() || p == 0 {
        return Err(ClimateSynthError::EmptyCovariateRequest);
    }
    // Smallest n with (n+1)² ≥ p.
    let mut n_analysis = 0usize;
    while (n_analysis + 1) * (n_analysis + 1) < p {
        n_analysis += 1;
    }
    let indices: Vec<_> = indices_up_to(n_analysis).take(p).collect();
    let mut columns = vec![Vec::with_capacity(pressure.len()); p];
    for field in pressure {
        let coeffs = analyze(field, n_analysis)?;
        for (h, &idx) in indices.iter().enumerate() {
            columns[h].push(coeffs.entry(idx));
        }
    }
    Ok(DesignMatrix::from_columns(&columns)?)
}

// ---------------------------------------------------------------------------
// Bundle I/O
// ---------------------------------------------------------------------------

/// A dataset bundle read back from disk.
#[derive(Debug)]
pub struct ClimateBundle {
    pub scenario: ClimateScenario,
    pub grid: Arc<SphereGrid>,
    pub radiation: Vec<GriddedField>,
    pub pressure: Vec<GriddedField>,
}

/// Write a bundle directory: `radiation/t_<day>.csv`, `pressure/t_<day>.csv`
/// (one per scenario day, field CSV schema), and `scenario.txt` with every
/// constant, the grid layout, and the error model, so the bundle is
/// self-describing.
pub fn write_bundle(
    scenario: &ClimateScenario,
    radiation: &[GriddedField],
    pressure: &[GriddedField],
    dir: &Path,
) -> Result<()> {
    scenario.validate()?;
    let t_len = scenario.days.len();
    if radiation.len() != t_len {
        return Err(ClimateSynthError::StackLengthMismatch {
            got: radiation.len(),
            expected: t_len,
        });
    }
    if pressure.len() != t_len {
        return Err(ClimateSynthError::StackLengthMismatch {
            got: pressure.len(),
            expected: t_len,
        });
    }
    let rad_dir = dir.join("radiation");
    let p_dir = dir.join("pressure");
    std::fs::create_dir_all(&rad_dir)?;
    std::fs::create_dir_all(&p_dir)?;
    for ((&day, rad), p) in scenario.days.iter().zip(radiation).zip(pressure) {
        rad.write_csv_path(&rad_dir.join(format!("t_{day}.csv")))?;
        p.write_csv_path(&p_dir.join(format!("t_{day}.csv")))?;
    }

    let layout = radiation[0].grid().layout();
    let (grid_kind, n_polar, n_azimuth) = match layout {
        GridLayout::GaussUniform { n_polar, n_azimuth } => ("gauss_uniform", n_polar, n_azimuth),
        GridLayout::Equiangular { n_polar, n_azimuth } => ("equiangular", n_polar, n_azimuth),
    };
    let c = &scenario.constants;
    let mut text = String::new();
    text.push_str(&format!("season = {}\n", scenario.season));
    let days: Vec<String> = scenario.days.iter().map(|d| d.to_string()).collect();
    text.push_str(&format!("days = {}\n", days.join(",")));
    text.push_str(&format!("seed = {}\n", scenario.seed));
    text.push_str(&format!(
        "radiation_error_scale = {}\n",
        scenario.radiation_error_scale
    ));
    text.push_str(&format!(
        "pressure_error_scale = {}\n",
        scenario.pressure_error_scale
    ));
    text.push_str(&format!(
        "pressure_wave_amplitude = {}\n",
        scenario.pressure_wave_amplitude
    ));
    text.push_str(&format!("error_amplitude = {}\n", scenario.error_amplitude));
    text.push_str(&format!("earth_radius = {}\n", c.earth_radius));
    text.push_str(&format!("solar_constant = {}\n", c.solar_constant));
    text.push_str(&format!("clear_sky_index = {}\n", c.clear_sky_index));
    text.push_str(&format!("sea_level_pressure = {}\n", c.sea_level_pressure));
    text.push_str(&format!("molar_mass = {}\n", c.molar_mass));
    text.push_str(&format!("gravity = {}\n", c.gravity));
    text.push_str(&format!("gas_constant = {}\n", c.gas_constant));
    text.push_str(&format!("temperature = {}\n", c.temperature));
    text.push_str(&format!("height_min = {}\n", c.height_range.0));
    text.push_str(&format!("height_max = {}\n", c.height_range.1));
    text.push_str(&format!("grid = {grid_kind}\n"));
    text.push_str(&format!("n_polar = {n_polar}\n"));
    text.push_str(&format!("n_azimuth = {n_azimuth}\n"));
    let model = &scenario.error_model;
    text.push_str(&format!("error_n_max = {}\n", model.n_max()));
    for n in 0..=model.n_max() {
        text.push_str(&format!("alpha_{n} = {}\n", model.alpha(n)));
        text.push_str(&format!("innovation_var_{n} = {}\n", model.innovation_var(n)));
        text.push_str(&format!("srd_factor_{n} = {}\n", model.srd_factor(n)));
    }
    std::fs::write(dir.join("scenario.txt"), text)?;
    Ok(())
}

fn parse_value<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<T> {
    let raw = map.get(key).ok_or_else(|| ClimateSynthError::MissingKey {
        key: key.to_string(),
    })?;
    raw.parse().map_err(|_| ClimateSynthError::MalformedScenarioFile {
        line: 0,
        message: format!("cannot parse `{raw}` for key `{key}`"),
    })
}

/// Read a bundle directory written by [`write_bundle`], rebuilding the grid
/// from its recorded layout and checking every field against it.
pub fn read_bundle(dir: &Path) -> Result<ClimateBundle> {
    let text = std::fs::read_to_string(dir.join("scenario.txt"))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ClimateSynthError::MalformedScenarioFile {
                line: i + 1,
                message: "expected `key = value`".to_string(),
            })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }

    let season: Season = parse_value::<String>(&map, "season")?.parse()?;
    let days_raw: String = parse_value(&map, "days")?;
    let days = days_raw
        .split(',')
        .map(|d| {
            d.trim()
                .parse::<u32>()
                .map_err(|_| ClimateSynthError::MalformedScenarioFile {
                    line: 0,
                    message: format!("bad day entry `{d}`"),
                })
        })
        .collect::<Result<Vec<u32>>>()?;

    let constants = PhysicalConstants {
        earth_radius: parse_value(&map, "earth_radius")?,
        solar_constant: parse_value(&map, "solar_constant")?,
        clear_sky_index: parse_value(&map, "clear_sky_index")?,
        sea_level_pressure: parse_value(&map, "sea_level_pressure")?,
        molar_mass: parse_value(&map, "molar_mass")?,
        gravity: parse_value(&map, "gravity")?,
        gas_constant: parse_value(&map, "gas_constant")?,
        temperature: parse_value(&map, "temperature")?,
        height_range: (
            parse_value(&map, "height_min")?,
            parse_value(&map, "height_max")?,
        ),
    };

    let n_max: usize = parse_value(&map, "error_n_max")?;
    let mut alphas = Vec::with_capacity(n_max + 1);
    let mut innovation = Vec::with_capacity(n_max + 1);
    let mut srd = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        alphas.push(parse_value(&map, &format!("alpha_{n}"))?);
        innovation.push(parse_value(&map, &format!("innovation_var_{n}"))?);
        srd.push(parse_value(&map, &format!("srd_factor_{n}"))?);
    }
    let error_model = LrdSpectralModel::new(innovation, srd, alphas)?;

    let scenario = ClimateScenario {
        constants,
        season,
        days,
        radiation_error_scale: parse_value(&map, "radiation_error_scale")?,
        pressure_error_scale: parse_value(&map, "pressure_error_scale")?,
        pressure_wave_amplitude: parse_value(&map, "pressure_wave_amplitude")?,
        error_amplitude: parse_value(&map, "error_amplitude")?,
        error_model,
        seed: parse_value(&map, "seed")?,
    };
    scenario.validate()?;

    let grid_kind: String = parse_value(&map, "grid")?;
    let n_polar: usize = parse_value(&map, "n_polar")?;
    let n_azimuth: usize = parse_value(&map, "n_azimuth")?;
    let layout = match grid_kind.as_str() {
        "gauss_uniform" => GridLayout::GaussUniform { n_polar, n_azimuth },
        "equiangular" => GridLayout::Equiangular { n_polar, n_azimuth },
        other => {
            return Err(ClimateSynthError::MalformedScenarioFile {
                line: 0,
                message: format!("unknown grid kind `{other}`"),
            })
        }
    };
    let grid = Arc::new(SphereGrid::from_layout(layout)?);

    let mut radiation = Vec::with_capacity(scenario.days.len());
    let mut pressure = Vec::with_capacity(scenario.days.len());
    for &day in &scenario.days {
        radiation.push(GriddedField::read_csv_path(
            Arc::clone(&grid),
            &dir.join("radiation").join(format!("t_{day}.csv")),
        )?);
        pressure.push(GriddedField::read_csv_path(
            Arc::clone(&grid),
            &dir.join("pressure").join(format!("t_{day}.csv")),
        )?);
    }
    Ok(ClimateBundle {
        scenario,
        grid,
        radiation,
        pressure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrd_spectral::LrdSpectralModel;
    use crate::regression::{
        fit, predict, CovarianceSource, LinkOperator,
    };
    use approx::assert_abs_diff_eq;

    fn small_model() -> LrdSpectralModel {
        LrdSpectralModel::with_default_scales(vec![0.1, 0.2, 0.3, 0.35]).unwrap()
    }

    fn small_scenario(days: Vec<u32>, seed: u64) -> ClimateScenario {
        ClimateScenario::new(Season::AutumnWinter, days, small_model(), seed).unwrap()
    }

    #[test]
    fn declination_hits_the_solstices() {
        let summer = declination(172).unwrap().to_degrees();
        assert!((summer - 23.42).abs() < 0.05, "day 172: {summer}°");
        let winter = declination(355).unwrap().to_degrees();
        assert_abs_diff_eq!(winter, -23.44, epsilon = 1e-9);
        let bound = 23.44_f64.to_radians() + 1e-12;
        for day in 1..=365 {
            assert!(declination(day).unwrap().abs() <= bound);
        }
        assert!(matches!(
            declination(0),
            Err(ClimateSynthError::DayOutOfRange { day: 0 })
        ));
        assert!(matches!(
            declination(366),
            Err(ClimateSynthError::DayOutOfRange { day: 366 })
        ));
    }

    #[test]
    fn zenith_angle_covers_overhead_horizon_and_polar_night() {
        let delta = declination(172).unwrap();
        assert_abs_diff_eq!(zenith_angle(delta, 172).unwrap(), 0.0, epsilon = 1e-12);

        // δ(355) ≈ −23.44°, so δ + 90° is a valid latitude where the noon
        // sun sits exactly on the horizon.
        let delta = declination(355).unwrap();
        let za = zenith_angle(delta + PI / 2.0, 355).unwrap();
        assert_abs_diff_eq!(za, PI / 2.0, epsilon = 1e-12);

        // Deep southern winter: cos would be negative, the clamp pins the
        // zenith angle to the horizon.
        let za = zenith_angle((-80.0_f64).to_radians(), 172).unwrap();
        assert_abs_diff_eq!(za, PI / 2.0, epsilon = 1e-12);

        assert!(matches!(
            zenith_angle(2.0, 172),
            Err(ClimateSynthError::LatitudeOutOfRange { .. })
        ));
    }

    #[test]
    fn irradiance_peak_value_and_structure() {
        let constants = PhysicalConstants::default();
        // Sun overhead: SI = G₀·CSI/π.
        let delta = declination(172).unwrap();
        let peak = solar_irradiance(delta, 172, &constants).unwrap();
        assert_abs_diff_eq!(peak, 1361.0 * 0.8 / PI, epsilon = 1e-12);
        assert_abs_diff_eq!(peak, 346.5758, epsilon = 1e-3);

        // Horizon sun (and everything poleward) gives exactly zero.
        let night = solar_irradiance((-80.0_f64).to_radians(), 172, &constants).unwrap();
        assert_eq!(night, 0.0);

        // Linear in the clear-sky index.
        let mut dimmer = constants;
        dimmer.clear_sky_index = 0.4;
        let half = solar_irradiance(delta, 172, &dimmer).unwrap();
        assert_abs_diff_eq!(half, peak / 2.0, epsilon = 1e-12);

        // Nonnegative everywhere on a lat × day sweep.
        for day in (1..=365).step_by(13) {
            for k in -6..=6 {
                let lat = k as f64 * PI / 12.0;
                assert!(solar_irradiance(lat, day, &constants).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn barometric_pressure_reference_values() {
        let constants = PhysicalConstants::default();
        assert_eq!(barometric_pressure(0.0, &constants).unwrap(), 1013.25);
        assert_abs_diff_eq!(
            barometric_pressure(6000.0, &constants).unwrap(),
            496.7,
            epsilon = 0.5
        );
        assert_abs_diff_eq!(
            barometric_pressure(12000.0, &constants).unwrap(),
            243.5,
            epsilon = 0.5
        );
        assert!(matches!(
            barometric_pressure(-1.0, &constants),
            Err(ClimateSynthError::NegativeHeight { .. })
        ));
    }

    #[test]
    fn barometric_pressure_is_strictly_decreasing() {
        let constants = PhysicalConstants::default();
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.0..20000.0);
            let b: f64 = rng.gen_range(0.0..20000.0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if hi - lo < 1e-9 {
                continue;
            }
            assert!(
                barometric_pressure(lo, &constants).unwrap()
                    > barometric_pressure(hi, &constants).unwrap()
            );
        }
    }

    #[test]
    fn pressure_mean_wave_structure() {
        let mut scenario = small_scenario(vec![100, 135, 171], 3);

        // Zero wave amplitude → spatially constant surface.
        scenario.pressure_wave_amplitude = 0.0;
        let base = barometric_pressure(9000.0, &scenario.constants).unwrap();
        for lat in [-1.2, -0.3, 0.0, 0.7, 1.5] {
            assert_abs_diff_eq!(
                scenario.pressure_mean(lat, 135).unwrap(),
                base,
                epsilon = 1e-12
            );
        }

        // Annual periodicity of the continued formula.
        scenario.pressure_wave_amplitude = 30.0;
        for day in [5, 135, 300] {
            assert_abs_diff_eq!(
                scenario.pressure_mean(0.4, day).unwrap(),
                scenario.pressure_mean(0.4, day + 365).unwrap(),
                epsilon = 1e-12
            );
        }

        // Late in the autumn–winter window the wave is positive at the
        // equator and negative at high latitudes: equatorial pressure higher.
        for day in [100, 135, 171] {
            let equator = scenario.pressure_mean(0.0, day).unwrap();
            let high = scenario.pressure_mean(PI / 3.0, day).unwrap();
            assert!(
                equator > high,
                "day {day}: equator {equator} vs 60° {high}"
            );
        }
    }

    #[test]
    fn irradiance_is_hemispherically_symmetric_at_equinox() {
        let constants = PhysicalConstants::default();
        for k in 0..=8 {
            let lat = k as f64 * PI / 18.0;
            let north = solar_irradiance_at_declination(lat, 0.0, &constants).unwrap();
            let south = solar_irradiance_at_declination(-lat, 0.0, &constants).unwrap();
            assert_abs_diff_eq!(north, south, epsilon = 1e-10);
        }
    }

    #[test]
    fn generated_errors_carry_the_calibrated_scales() {
        let scenario = small_scenario((1..=120).collect(), 11);
        let grid = Arc::new(SphereGrid::gauss_uniform(6, 13).unwrap());
        let (radiation, pressure) = generate_datasets(&scenario, &grid).unwrap();
        let rad_mean = radiation_mean_field(&scenario, &grid).unwrap();
        let p_mean = pressure_mean_field(&scenario, &grid).unwrap();

        let std_of = |stack: &[GriddedField], mean: &[GriddedField]| {
            let resid: Vec<f64> = stack
                .iter()
                .zip(mean)
                .flat_map(|(f, m)| {
                    f.values()
                        .iter()
                        .zip(m.values())
                        .map(|(&a, &b)| a - b)
                        .collect::<Vec<f64>>()
                })
                .collect();
            let n = resid.len() as f64;
            let mu = resid.iter().sum::<f64>() / n;
            (resid.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };

        let rad_std = std_of(&radiation, &rad_mean);
        assert!(
            (rad_std / RADIATION_ERROR_SCALE - 1.0).abs() < 0.15,
            "radiation error std {rad_std}"
        );
        let p_std = std_of(&pressure, &p_mean);
        assert!(
            (p_std / PRESSURE_ERROR_SCALE - 1.0).abs() < 0.15,
            "pressure error std {p_std}"
        );

        // The two error stacks are independent draws, not copies.
        let r0 = radiation[0].values()[0] - rad_mean[0].values()[0];
        let p0 = pressure[0].values()[0] - p_mean[0].values()[0];
        assert_ne!(
            r0 / RADIATION_ERROR_SCALE,
            p0 / PRESSURE_ERROR_SCALE
        );
    }

    #[test]
    fn zero_error_amplitude_gives_the_deterministic_means() {
        let mut scenario = small_scenario((1..=20).collect(), 5);
        scenario.error_amplitude = 0.0;
        let grid = Arc::new(SphereGrid::gauss_uniform(4, 9).unwrap());
        let (radiation, pressure) = generate_datasets(&scenario, &grid).unwrap();
        let rad_mean = radiation_mean_field(&scenario, &grid).unwrap();
        let p_mean = pressure_mean_field(&scenario, &grid).unwrap();
        for (a, b) in radiation.iter().zip(&rad_mean) {
            assert_eq!(a.values(), b.values());
        }
        for (a, b) in pressure.iter().zip(&p_mean) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn datasets_are_seed_deterministic() {
        let scenario = small_scenario((1..=15).collect(), 21);
        let grid = Arc::new(SphereGrid::gauss_uniform(4, 9).unwrap());
        let (r1, p1) = generate_datasets(&scenario, &grid).unwrap();
        let (r2, p2) = generate_datasets(&scenario, &grid).unwrap();
        assert_eq!(r1[3].values(), r2[3].values());
        assert_eq!(p1[7].values(), p2[7].values());

        let mut other = scenario.clone();
        other.seed = 22;
        let (r3, _) = generate_datasets(&other, &grid).unwrap();
        assert_ne!(r1[3].values(), r3[3].values());
    }

    #[test]
    fn scenario_validation_rejects_bad_inputs() {
        assert!(matches!(
            ClimateScenario::new(Season::AutumnWinter, vec![], small_model(), 0),
            Err(ClimateSynthError::EmptyDays)
        ));
        assert!(matches!(
            ClimateScenario::new(Season::AutumnWinter, vec![1, 366], small_model(), 0),
            Err(ClimateSynthError::DayOutOfRange { day: 366 })
        ));
        let mut scenario = small_scenario(vec![1, 2], 0);
        scenario.radiation_error_scale = -1.0;
        assert!(matches!(
            scenario.validate(),
            Err(ClimateSynthError::InvalidScale { .. })
        ));
        let mut scenario = small_scenario(vec![1, 2], 0);
        scenario.constants.height_range = (12000.0, 6000.0);
        assert!(matches!(
            scenario.validate(),
            Err(ClimateSynthError::InvalidConstants { .. })
        ));
    }

    #[test]
    fn bundle_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = small_scenario(vec![3, 9, 15, 40], 77);
        let grid = Arc::new(SphereGrid::gauss_uniform(4, 9).unwrap());
        let (radiation, pressure) = generate_datasets(&scenario, &grid).unwrap();
        write_bundle(&scenario, &radiation, &pressure, dir.path()).unwrap();

        let bundle = read_bundle(dir.path()).unwrap();
        assert_eq!(bundle.scenario.days, scenario.days);
        assert_eq!(bundle.scenario.season, scenario.season);
        assert_eq!(bundle.scenario.seed, scenario.seed);
        assert_eq!(
            bundle.scenario.error_model.alphas(),
            scenario.error_model.alphas()
        );
        assert_eq!(bundle.grid.layout(), grid.layout());
        for (a, b) in bundle.radiation.iter().zip(&radiation) {
            assert_eq!(a.values(), b.values());
        }
        for (a, b) in bundle.pressure.iter().zip(&pressure) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn regression_on_generated_data_beats_the_error_scale() {
        // Pressure-derived covariates, radiation response, oracle GLS: the
        // train-set grid-mean MAE must land below one radiation error
        // standard deviation.
        let scenario = small_scenario((1..=100).collect(), 31);
        let grid = Arc::new(SphereGrid::gauss_uniform(8, 17).unwrap());
        let (radiation, pressure) = generate_datasets(&scenario, &grid).unwrap();
        let x = pressure_covariates(&pressure, 2).unwrap();
        let n_max = scenario.error_model.n_max();
        let fitted = fit(
            &radiation,
            &x,
            LinkOperator::Identity,
            CovarianceSource::Known(&scenario.error_model),
            n_max,
        )
        .unwrap();
        let preds = predict(&fitted, &x, LinkOperator::Identity, &grid).unwrap();
        let mut mae = 0.0;
        let mut count = 0usize;
        for (pred, obs) in preds.iter().zip(&radiation) {
            for (&a, &b) in pred.values().iter().zip(obs.values()) {
                mae += (a - b).abs();
                count += 1;
            }
        }
        mae /= count as f64;
        assert!(
            mae < RADIATION_ERROR_SCALE,
            "train MAE {mae} not below {RADIATION_ERROR_SCALE}"
        );
    }
}
