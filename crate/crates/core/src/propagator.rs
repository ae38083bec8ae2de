//! Strang-split spectral time stepping of the carrier through the medium.
//!
//! One step applies `exp(−iVdt/2ħ)`, the exact kinetic phase
//! `exp(−iħk²dt/2m)` in k-space, then `exp(−iVdt/2ħ)` again. The potential
//! is held fixed between refreshes, which happen whenever the fastest
//! impurity may have moved a quarter cell since the last render.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::disorder::{
    refresh_interval, ImpuritySet, ImpurityShape, PotentialField, PotentialRenderer, RenderBackend,
};
use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::grid::Grid;
use crate::observables::{MsdSeries, DEFAULT_BOUNDARY_THRESHOLD};
use crate::units::{HBAR, M_E};
use crate::wave::WaveField;

/// Largest step keeping both the potential and the kinetic phase per step
/// below `theta` radians.
pub fn choose_timestep(v_max: f64, grid: &Grid, mass: f64, theta: f64) -> f64 {
    let kmax = grid.k_max();
    let potential_bound = if v_max > 0.0 { HBAR / v_max } else { f64::INFINITY };
    let kinetic_bound = 2.0 * mass / (HBAR * kmax * kmax);
    theta * potential_bound.min(kinetic_bound)
}

/// Largest kinetic energy the grid represents, `ħ²k_max²/2m`, eV.
pub fn nyquist_energy(grid: &Grid, mass: f64) -> f64 {
    let k = grid.k_max();
    HBAR * HBAR * k * k / (2.0 * mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    /// Carrier mass, eV·fs²/nm².
    pub mass: f64,
    /// Phase tolerance per step, radians.
    pub theta: f64,
    /// Fixed step, fs. When absent the step follows from `theta`.
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Time at which the impurities start moving, fs.
    pub t_on: f64,
    pub observe_every: f64,
    /// Width of the seam band watched by the boundary monitor, nm.
    pub boundary_margin: f64,
    pub boundary_threshold: f64,
    pub backend: RenderBackend,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            mass: M_E,
            theta: 0.25,
            dt: None,
            t_end: 15_000.0,
            t_on: 0.0,
            observe_every: 10.0,
            boundary_margin: 8.0,
            boundary_threshold: DEFAULT_BOUNDARY_THRESHOLD,
            backend: RenderBackend::Spectral,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::config("dynamics.mass", "must be > 0"));
        }
        if !(self.theta > 0.0 && self.theta <= 0.5) {
            return Err(Error::config(
                "dynamics.theta",
                format!("must lie in (0, 0.5], got {}", self.theta),
            ));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::config("dynamics.t_end", "must be ≥ 0"));
        }
        if self.t_on.is_nan() || self.t_on < 0.0 {
            return Err(Error::config("dynamics.t_on", "must be ≥ 0 (or inf)"));
        }
        if !(self.observe_every.is_finite() && self.observe_every > 0.0) {
            return Err(Error::config("dynamics.observe_every", "must be > 0"));
        }
        if !(self.boundary_margin > 0.0 && self.boundary_margin < 0.25 * grid.length()) {
            return Err(Error::config(
                "dynamics.boundary_margin",
                format!("must lie in (0, L/4 = {})", 0.25 * grid.length()),
            ));
        }
        if !(self.boundary_threshold > 0.0 && self.boundary_threshold < 1.0) {
            return Err(Error::config("dynamics.boundary_threshold", "must lie in (0, 1)"));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::config("dynamics.dt", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Everything that evolves during a run.
#[derive(Debug, Clone)]
pub struct RunState {
    pub psi: WaveField,
    pub impurities: ImpuritySet,
    pub potential: PotentialField,
    /// fs.
    pub time: f64,
    pub steps: u64,
}

/// Time-stepping machinery for one grid, medium shape and configuration.
pub struct Propagator {
    cfg: PropagatorConfig,
    dt: f64,
    steps_per_observation: usize,
    renderer: PotentialRenderer,
    fft: Fft2d,
    kinetic: Vec<Complex64>,
    half_kick: Vec<Complex64>,
    full_kick: Vec<Complex64>,
    /// Constant offset removed from V before exponentiation (a global phase).
    v_ref: f64,
    v_scale: f64,
    refresh_every: usize,
    motion_steps: u64,
    steps_since_render: usize,
}

impl Propagator {
    /// Renders the initial medium, fixes the timestep, and returns the
    /// propagator with a ready-to-run state.
    pub fn new(
        psi: WaveField,
        impurities: ImpuritySet,
        shape: ImpurityShape,
        cfg: PropagatorConfig,
    ) -> Result<(Self, RunState)> {
        let grid = psi.grid.clone();
        cfg.validate(&grid)?;
        if (impurities.length() - grid.length()).abs() > 1e-12 * grid.length() {
            return Err(Error::config("grid.length", "impurity box differs from the grid"));
        }
        let mut renderer = PotentialRenderer::new(grid.clone(), shape)?;
        let potential = renderer.render(&impurities, cfg.backend, psi.time);
        let (lo, hi) = potential.range();
        let v_ref = 0.5 * (lo + hi);
        let v_scale = 0.5 * (hi - lo);

        let dt_max = choose_timestep(v_scale, &grid, cfg.mass, cfg.theta);
        let (dt, steps_per_observation) = match cfg.dt {
            Some(dt) => {
                if dt > dt_max * (1.0 + 1e-12) {
                    return Err(Error::config(
                        "dynamics.dt",
                        format!("{dt} fs exceeds the phase-tolerance bound {dt_max:.5} fs"),
                    ));
                }
                (dt, ((cfg.observe_every / dt).round() as usize).max(1))
            }
            None => {
                let k = (cfg.observe_every / dt_max).ceil().max(1.0) as usize;
                (cfg.observe_every / k as f64, k)
            }
        };
        let refresh_every = refresh_interval(grid.dx(), impurities.max_speed(), dt);

        let n = grid.n();
        let mut kinetic = Vec::with_capacity(n * n);
        // Transposed layout ([kx][ky]); k² is symmetric so the order is moot.
        // The inverse transform's 1/n² rides along here.
        let scale = 1.0 / (n * n) as f64;
        for &ka in grid.k_axis() {
            for &kb in grid.k_axis() {
                let phase = -HBAR * (ka * ka + kb * kb) * dt / (2.0 * cfg.mass);
                kinetic.push(Complex64::from_polar(scale, phase));
            }
        }
        let mut prop = Self {
            fft: Fft2d::new(n),
            half_kick: vec![],
            full_kick: vec![],
            cfg,
            dt,
            steps_per_observation,
            renderer,
            kinetic,
            v_ref,
            v_scale,
            refresh_every,
            motion_steps: 0,
            steps_since_render: 0,
        };
        prop.update_kick(&potential);
        let time = psi.time;
        Ok((
            prop,
            RunState {
                psi,
                impurities,
                potential,
                time,
                steps: 0,
            },
        ))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_per_observation(&self) -> usize {
        self.steps_per_observation
    }

    pub fn refresh_every(&self) -> Option<usize> {
        (self.refresh_every != usize::MAX).then_some(self.refresh_every)
    }

    /// Half-span of the initial potential after removing its midpoint, eV.
    pub fn potential_scale(&self) -> f64 {
        self.v_scale
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.cfg
    }

    fn update_kick(&mut self, potential: &PotentialField) {
        let c = -0.5 * self.dt / HBAR;
        let v_ref = self.v_ref;
        self.half_kick.clear();
        self.half_kick.extend(
            potential
                .values
                .iter()
                .map(|&v| Complex64::from_polar(1.0, c * (v - v_ref))),
        );
        self.full_kick.clear();
        self.full_kick.extend(
            potential
                .values
                .iter()
                .map(|&v| Complex64::from_polar(1.0, 2.0 * c * (v - v_ref))),
        );
    }

    /// Reverses the direction of time: subsequent steps run with `−dt`.
    /// Only meaningful for a frozen medium.
    pub fn reverse_time(&mut self) {
        self.dt = -self.dt;
        for z in self
            .kinetic
            .iter_mut()
            .chain(self.half_kick.iter_mut())
            .chain(self.full_kick.iter_mut())
        {
            *z = z.conj();
        }
    }

    /// One Strang step, followed by impurity motion and, when due, a
    /// re-render of the potential.
    pub fn step(&mut self, state: &mut RunState) -> Result<()> {
        let psi = &mut state.psi.amplitudes;
        for (z, k) in psi.iter_mut().zip(&self.half_kick) {
            *z *= k;
        }
        self.fft.forward_t(psi);
        for (z, k) in psi.iter_mut().zip(&self.kinetic) {
            *z *= k;
        }
        self.fft.inverse_t_unscaled(psi);
        let mut total = 0.0;
        for (z, k) in psi.iter_mut().zip(&self.half_kick) {
            *z *= k;
            total += z.norm_sqr();
        }
        self.finish_step(state);
        if !total.is_finite() {
            return Err(Error::Numerical {
                time: state.time,
                reason: "non-finite amplitude in the wavefunction".into(),
            });
        }
        Ok(())
    }

    /// Clock, impurity motion and re-rendering after the wave update.
    /// Returns whether the potential changed.
    fn finish_step(&mut self, state: &mut RunState) -> bool {
        let started = state.time;
        state.steps += 1;
        state.time = state.psi.time + self.dt;
        state.psi.time = state.time;
        // motion covers steps that start at or after t_on
        if self.refresh_every != usize::MAX && started >= self.cfg.t_on - 1e-9 * self.dt.abs() {
            self.motion_steps += 1;
            self.steps_since_render += 1;
            if self.steps_since_render >= self.refresh_every {
                self.refresh(state);
                return true;
            }
        }
        false
    }

    /// `count` steps with adjacent half kicks merged into full kicks.
    /// Equivalent to calling [`Self::step`] `count` times up to rounding.
    pub fn advance(&mut self, state: &mut RunState, count: usize) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        let mul = |psi: &mut [Complex64], k: &[Complex64]| {
            for (z, k) in psi.iter_mut().zip(k) {
                *z *= k;
            }
        };
        mul(&mut state.psi.amplitudes, &self.half_kick);
        for i in 0..count {
            let psi = &mut state.psi.amplitudes;
            self.fft.forward_t(psi);
            mul(psi, &self.kinetic);
            self.fft.inverse_t_unscaled(psi);
            let last = i + 1 == count;
            let will_refresh = self.refresh_every != usize::MAX
                && self.steps_since_render + 1 >= self.refresh_every
                && state.time >= self.cfg.t_on - 1e-9 * self.dt.abs();
            if last || will_refresh {
                mul(psi, &self.half_kick);
                self.finish_step(state);
                if !last {
                    mul(&mut state.psi.amplitudes, &self.half_kick);
                }
            } else {
                mul(psi, &self.full_kick);
                self.finish_step(state);
            }
        }
        let total: f64 = state.psi.amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if !total.is_finite() {
            return Err(Error::Numerical {
                time: state.time,
                reason: "non-finite amplitude in the wavefunction".into(),
            });
        }
        Ok(())
    }

    fn refresh(&mut self, state: &mut RunState) {
        state
            .impurities
            .set_elapsed(self.motion_steps as f64 * self.dt);
        state.potential = self
            .renderer
            .render(&state.impurities, self.cfg.backend, state.time);
        let pot = std::mem::take(&mut state.potential);
        self.update_kick(&pot);
        state.potential = pot;
        self.steps_since_render = 0;
    }

    /// Runs to `t_end`, sampling observables every `observe_every` fs.
    ///
    /// A sample whose boundary mass exceeds the threshold ends the run; the
    /// series keeps only the clean samples before it and the manifest is
    /// flagged.
    pub fn evolve(&mut self, state: &mut RunState) -> Result<MsdSeries> {
        let margin = self.cfg.boundary_margin;
        let threshold = self.cfg.boundary_threshold;
        let n_obs = (self.cfg.t_end / self.cfg.observe_every).round() as usize;
        let mut series = MsdSeries::default();
        series.manifest.dt_fs = self.dt;
        series.manifest.steps_per_observation = self.steps_per_observation;
        series.manifest.refresh_interval_steps = self.refresh_every();
        series.manifest.seed = state.impurities.seed();

        let t0 = state.time;
        for obs in 0..=n_obs {
            if obs > 0 {
                self.advance(state, self.steps_per_observation)?;
                // pin the clock to the schedule to avoid summation drift
                let t = t0 + (obs * self.steps_per_observation) as f64 * self.dt;
                state.time = t;
                state.psi.time = t;
            }
            series.push(state.time, &state.psi, margin);
            let last = series.len() - 1;
            if !series.norm[last].is_finite() || !series.msd[last].is_finite() {
                return Err(Error::Numerical {
                    time: state.time,
                    reason: "non-finite observable".into(),
                });
            }
            let edge = series.boundary_mass[last];
            if edge > threshold {
                series.truncate(last);
                series.manifest.boundary_contaminated = true;
                series.manifest.truncated_at_fs = Some(state.time);
                log::info!(
                    "seed {}: boundary mass {:.2e} at t = {} fs, run truncated",
                    state.impurities.seed(),
                    edge,
                    state.time
                );
                break;
            }
        }
        Ok(series)
    }
}

impl Default for PotentialField {
    fn default() -> Self {
        PotentialField {
            values: vec![],
            time: 0.0,
        }
    }
}
