//! Scenarios, seed ensembles, parameter sweeps and the Einstein-relation
//! transport mapping.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::disorder::{sample_impurities, ImpurityShape, RenderBackend, VelocityModel};
use crate::error::{Error, Result};
use crate::grid::{make_grid, Grid};
use crate::observables::{
    ensemble_mean, fit_diffusion, linear_fit, windowed_diffusion, DiffusionEstimate, FitWindow,
    MsdSeries, WindowedPoint, DEFAULT_BOUNDARY_THRESHOLD, DIM,
};
use crate::propagator::{choose_timestep, nyquist_energy, Propagator, PropagatorConfig};
use crate::units::{K_B, M_E};
use crate::wave::gaussian_packet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    /// Box side, nm.
    pub length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n: 256,
            length: 128.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketSpec {
    /// Initial width, nm.
    pub sigma0: f64,
    /// Mean wavevector, nm⁻¹.
    pub k0: [f64; 2],
    /// Launch point, nm; the box center when absent.
    pub center: Option<[f64; 2]>,
}

impl Default for PacketSpec {
    fn default() -> Self {
        Self {
            sigma0: 10.0,
            k0: [0.0, 0.0],
            center: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Static,
    #[default]
    FixedSpeed,
    Maxwell,
}

/// Impurity shape, density and velocity model in configuration form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisorderSpec {
    /// Bump peak height, eV.
    pub v0: f64,
    pub r_core: f64,
    pub lambda: f64,
    /// Truncation radius, nm; derived from the envelope when absent.
    pub r_cut: Option<f64>,
    /// Impurities per nm².
    pub density: f64,
    pub model: ModelKind,
    /// nm/fs, for `fixed_speed`.
    pub speed: f64,
    pub moving_fraction: f64,
    /// K, for `maxwell`.
    pub temperature: f64,
    /// Multiples of m_e, for `maxwell`.
    pub impurity_mass: f64,
    pub backend: RenderBackend,
}

impl Default for DisorderSpec {
    fn default() -> Self {
        Self {
            v0: 2.0,
            r_core: 1.0,
            lambda: 10.0,
            r_cut: None,
            density: 0.4,
            model: ModelKind::FixedSpeed,
            speed: 0.002,
            moving_fraction: 1.0,
            temperature: 100.0,
            impurity_mass: 100.0,
            backend: RenderBackend::Spectral,
        }
    }
}

impl DisorderSpec {
    pub fn velocity_model(&self) -> VelocityModel {
        match self.model {
            ModelKind::Static => VelocityModel::Static,
            ModelKind::FixedSpeed => VelocityModel::FixedSpeed {
                speed: self.speed,
                moving_fraction: self.moving_fraction,
            },
            ModelKind::Maxwell => VelocityModel::Maxwell {
                temperature: self.temperature,
                mass: self.impurity_mass,
            },
        }
    }

    pub fn shape(&self, grid: &Grid) -> Result<ImpurityShape> {
        match self.r_cut {
            Some(cut) => ImpurityShape::new(self.v0, self.r_core, self.lambda, cut),
            None => ImpurityShape::with_default_cut(
                self.v0,
                self.r_core,
                self.lambda,
                0.5 * grid.length(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSpec {
    /// Carrier mass in multiples of m_e.
    pub mass: f64,
    pub theta: f64,
    /// Fixed timestep, fs; otherwise chosen from `theta`.
    pub dt: Option<f64>,
    /// Motion start, fs.
    pub t_on: f64,
    pub t_end: f64,
    pub observe_every: f64,
    pub boundary_margin: f64,
    pub boundary_threshold: f64,
}

impl Default for DynamicsSpec {
    fn default() -> Self {
        Self {
            mass: 1.0,
            theta: 0.25,
            dt: None,
            t_on: 0.0,
            t_end: 15_000.0,
            observe_every: 10.0,
            boundary_margin: 8.0,
            boundary_threshold: DEFAULT_BOUNDARY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub seeds: Vec<u64>,
    /// Trailing fraction of clean samples used by the diffusion fit.
    pub fit_fraction: f64,
    /// Explicit fit window `[start, end]`, fs; overrides `fit_fraction`.
    pub fit_window: Option<[f64; 2]>,
    /// Width of the sliding window for D(t), fs.
    pub window_width: f64,
    /// Time excluded after motion starts before post-activation fits, fs.
    pub settle: f64,
    /// Warn when seeds × steps × cells exceeds this.
    pub cost_budget: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            seeds: (1..=8).collect(),
            fit_fraction: 0.5,
            fit_window: None,
            window_width: 1000.0,
            settle: 1000.0,
            cost_budget: 5e12,
        }
    }
}

impl RunSpec {
    pub fn fit(&self) -> FitWindow {
        match self.fit_window {
            Some([start, end]) => FitWindow::Span { start, end },
            None => FitWindow::LastFraction(self.fit_fraction),
        }
    }
}

/// A complete, self-describing simulation setup.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub grid: GridSpec,
    pub packet: PacketSpec,
    pub disorder: DisorderSpec,
    pub dynamics: DynamicsSpec,
    pub run: RunSpec,
}

impl Scenario {
    pub fn carrier_mass(&self) -> f64 {
        self.dynamics.mass * M_E
    }

    pub fn make_grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(make_grid(self.grid.n, self.grid.length)?))
    }

    pub fn propagator_config(&self) -> PropagatorConfig {
        PropagatorConfig {
            mass: self.carrier_mass(),
            theta: self.dynamics.theta,
            dt: self.dynamics.dt,
            t_end: self.dynamics.t_end,
            t_on: self.dynamics.t_on,
            observe_every: self.dynamics.observe_every,
            boundary_margin: self.dynamics.boundary_margin,
            boundary_threshold: self.dynamics.boundary_threshold,
            backend: self.disorder.backend,
        }
    }

    /// Checks every component; errors name the offending configuration key.
    pub fn validate(&self) -> Result<()> {
        let grid = self.make_grid()?;
        self.disorder.shape(&grid)?;
        self.disorder.velocity_model().validate()?;
        if !(self.disorder.density.is_finite() && self.disorder.density > 0.0) {
            return Err(Error::config("disorder.density", "must be > 0"));
        }
        if !(self.dynamics.mass.is_finite() && self.dynamics.mass > 0.0) {
            return Err(Error::config("dynamics.mass", "must be > 0"));
        }
        self.propagator_config().validate(&grid)?;
        if self.run.seeds.is_empty() {
            return Err(Error::config("run.seeds", "ensemble needs at least one seed"));
        }
        if !(self.run.fit_fraction > 0.0 && self.run.fit_fraction <= 1.0) {
            return Err(Error::config("run.fit_fraction", "must lie in (0, 1]"));
        }
        if self.run.window_width.is_nan() || self.run.window_width <= 0.0 {
            return Err(Error::config("run.window_width", "must be > 0"));
        }
        let center = self.packet_center();
        gaussian_packet(grid, center, self.packet.sigma0, self.packet.k0)?;
        Ok(())
    }

    pub fn packet_center(&self) -> [f64; 2] {
        self.packet
            .center
            .unwrap_or([0.5 * self.grid.length, 0.5 * self.grid.length])
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Rough work estimate in cell-steps, using the peak height as the
    /// potential scale.
    pub fn estimated_cost(&self) -> f64 {
        let Ok(grid) = self.make_grid() else {
            return 0.0;
        };
        let dt = self.dynamics.dt.unwrap_or_else(|| {
            choose_timestep(self.disorder.v0, &grid, self.carrier_mass(), self.dynamics.theta)
        });
        let cells = grid.len() as f64;
        self.run.seeds.len() as f64 * (self.dynamics.t_end / dt) * cells * (cells.log2().max(1.0))
    }
}

/// Runs one member of the ensemble.
pub fn run_seed(s: &Scenario, seed: u64) -> Result<MsdSeries> {
    let grid = s.make_grid()?;
    let shape = s.disorder.shape(&grid)?;
    let psi = gaussian_packet(grid.clone(), s.packet_center(), s.packet.sigma0, s.packet.k0)?;
    let impurities = sample_impurities(s.disorder.density, &grid, &s.disorder.velocity_model(), seed)?;
    let (mut prop, mut state) = Propagator::new(psi, impurities, shape, s.propagator_config())?;
    log::debug!(
        "seed {seed}: dt = {:.5} fs, potential half-span {:.3} eV, refresh every {:?} steps",
        prop.dt(),
        prop.potential_scale(),
        prop.refresh_every()
    );
    let mut series = prop.evolve(&mut state)?;
    series.manifest.config = serde_json::to_value(s).expect("scenario serializes");
    series.manifest.config_hash = s.config_hash();
    series.manifest.code_version = env!("CARGO_PKG_VERSION").to_string();
    series.manifest.notes.push(format!(
        "potential gauge half-span {:.6} eV",
        prop.potential_scale()
    ));
    let e_nyq = nyquist_energy(&grid, s.carrier_mass());
    if e_nyq < prop.potential_scale() {
        log::warn!(
            "seed {seed}: Nyquist kinetic energy {e_nyq:.3} eV is below the potential half-span {:.3} eV; refine the grid",
            prop.potential_scale()
        );
        series.manifest.underresolved = true;
    }
    Ok(series)
}

/// Everything a scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    /// One series per seed, in seed-list order.
    pub series: Vec<MsdSeries>,
    pub ensemble: MsdSeries,
    pub estimate: Result<DiffusionEstimate, String>,
    /// Time-resolved D of the ensemble mean; empty when the span is too short.
    pub windowed: Vec<WindowedPoint>,
    pub flags: Vec<String>,
}

impl ScenarioOutcome {
    pub fn windowed_alpha(&self) -> Vec<(f64, f64)> {
        let m = self.scenario.carrier_mass();
        self.windowed
            .iter()
            .map(|p| (p.time, p.d * m / crate::units::HBAR))
            .collect()
    }
}

/// Runs every seed, averages the MSD series, and fits D on the ensemble mean.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioOutcome> {
    s.validate()?;
    let cost = s.estimated_cost();
    if cost > s.run.cost_budget {
        log::warn!(
            "estimated cost {cost:.2e} cell-steps exceeds the budget {:.2e}",
            s.run.cost_budget
        );
    }
    let series: Vec<MsdSeries> = s
        .run
        .seeds
        .par_iter()
        .map(|&seed| run_seed(s, seed))
        .collect::<Result<_>>()?;
    let ensemble = ensemble_mean(&series)?;
    let mut flags = vec![];
    let contaminated = series
        .iter()
        .filter(|x| x.manifest.boundary_contaminated)
        .count();
    if contaminated > 0 {
        flags.push(format!("boundary_contaminated:{contaminated}/{}", series.len()));
    }
    let coarse = series.iter().filter(|x| x.manifest.underresolved).count();
    if coarse > 0 {
        flags.push(format!("underresolved:{coarse}/{}", series.len()));
    }
    let mass = s.carrier_mass();
    let estimate = fit_diffusion(&ensemble, s.run.fit(), DIM, mass).map_err(|e| {
        format!(
            "{e}; ensemble has {} clean samples up to {:?} fs",
            ensemble.len(),
            ensemble.times.last()
        )
    });
    if estimate.is_err() {
        flags.push("estimation_failed".into());
    }
    let windowed = windowed_diffusion(&ensemble, s.run.window_width, DIM).unwrap_or_default();
    Ok(ScenarioOutcome {
        scenario: s.clone(),
        series,
        ensemble,
        estimate,
        windowed,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    ImpuritySpeed,
    PotentialHeight,
    MovingFraction,
    Temperature,
    ImpurityMass,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::ImpuritySpeed => "impurity_speed",
            SweepParameter::PotentialHeight => "potential_height",
            SweepParameter::MovingFraction => "moving_fraction",
            SweepParameter::Temperature => "temperature",
            SweepParameter::ImpurityMass => "impurity_mass",
        }
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "impurity_speed" => SweepParameter::ImpuritySpeed,
            "potential_height" => SweepParameter::PotentialHeight,
            "moving_fraction" => SweepParameter::MovingFraction,
            "temperature" => SweepParameter::Temperature,
            "impurity_mass" => SweepParameter::ImpurityMass,
            other => {
                return Err(Error::config(
                    "sweep.parameter",
                    format!("unknown parameter `{other}`"),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Hold `v0 · density` fixed along potential-height sweeps.
    #[serde(default)]
    pub cross_section_locked: bool,
}

impl SweepAxis {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep.values", "no values to sweep"));
        }
        for &v in &self.values {
            let ok = v.is_finite()
                && match self.parameter {
                    SweepParameter::ImpuritySpeed => v >= 0.0,
                    SweepParameter::MovingFraction => (0.0..=1.0).contains(&v),
                    _ => v > 0.0,
                };
            if !ok {
                return Err(Error::config(
                    "sweep.values",
                    format!("{v} is out of range for {}", self.parameter.name()),
                ));
            }
        }
        Ok(())
    }
}

/// The base scenario with one parameter replaced.
pub fn apply_axis_value(base: &Scenario, axis: &SweepAxis, value: f64) -> Scenario {
    let mut s = base.clone();
    let d = &mut s.disorder;
    match axis.parameter {
        SweepParameter::ImpuritySpeed => {
            if d.model != ModelKind::FixedSpeed {
                d.model = ModelKind::FixedSpeed;
                d.moving_fraction = 1.0;
            }
            d.speed = value;
        }
        SweepParameter::MovingFraction => {
            d.model = ModelKind::FixedSpeed;
            d.moving_fraction = value;
        }
        SweepParameter::PotentialHeight => {
            if axis.cross_section_locked {
                d.density = base.disorder.v0 * base.disorder.density / value;
            }
            d.v0 = value;
        }
        SweepParameter::Temperature => {
            d.model = ModelKind::Maxwell;
            d.temperature = value;
        }
        SweepParameter::ImpurityMass => {
            d.model = ModelKind::Maxwell;
            d.impurity_mass = value;
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub scenario: Scenario,
    pub estimate: Option<DiffusionEstimate>,
    pub n_seeds: usize,
    pub flags: Vec<String>,
    pub outcome: Option<ScenarioOutcome>,
}

/// One ensemble run per axis value. The base scenario must be valid; point
/// failures are recorded in the row flags and do not stop the sweep.
pub fn sweep(base: &Scenario, axis: &SweepAxis) -> Result<Vec<SweepRow>> {
    axis.validate()?;
    base.validate()?;
    let rows = axis
        .values
        .par_iter()
        .map(|&value| {
            let scenario = apply_axis_value(base, axis, value);
            let n_seeds = scenario.run.seeds.len();
            match run_scenario(&scenario) {
                Ok(outcome) => SweepRow {
                    value,
                    estimate: outcome.estimate.clone().ok(),
                    n_seeds,
                    flags: outcome.flags.clone(),
                    scenario,
                    outcome: Some(outcome),
                },
                Err(e) => SweepRow {
                    value,
                    scenario,
                    estimate: None,
                    n_seeds,
                    flags: vec![format!("failed: {e}")],
                    outcome: None,
                },
            }
        })
        .collect();
    Ok(rows)
}

/// Drude rate `1/τ = k_B·T/(m·D)` from the Einstein relation, fs⁻¹.
pub fn einstein_rate(d: f64, temperature: f64, mass: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::estimation(format!(
            "no scattering rate for D = {d}: a localized carrier has no Drude time"
        )));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::estimation(format!("temperature must be > 0, got {temperature}")));
    }
    Ok(K_B * temperature / (mass * d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EinsteinResult {
    pub temperatures: Vec<f64>,
    /// fs⁻¹.
    pub inv_tau: Vec<f64>,
    /// nm²/fs.
    pub d_used: Vec<f64>,
    /// Coefficient of determination of a straight-line fit of 1/τ against T.
    pub r_squared: f64,
}

/// Maps a temperature sweep of diffusion constants to scattering rates.
pub fn resistivity_table(rows: &[(f64, DiffusionEstimate)], mass: f64) -> Result<EinsteinResult> {
    if rows.is_empty() {
        return Err(Error::estimation("resistivity table needs at least one temperature"));
    }
    let mut out = EinsteinResult {
        temperatures: vec![],
        inv_tau: vec![],
        d_used: vec![],
        r_squared: 1.0,
    };
    for (t, est) in rows {
        out.inv_tau.push(einstein_rate(est.d, *t, mass)?);
        out.temperatures.push(*t);
        out.d_used.push(est.d);
    }
    if rows.len() >= 2 {
        out.r_squared = linear_fit(&out.temperatures, &out.inv_tau)?.r_squared;
    }
    Ok(out)
}
