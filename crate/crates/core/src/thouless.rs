//! Chamber model: weakly coupled chaotic boxes of area `A` with one escape
//! channel each. Level broadening by one level spacing gives the dwell time
//! `τ = ħρ`, and hopping between chambers is a 2D random walk of step `√A`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{DiffusionEstimate, DIM};
use crate::units::{HBAR, M_E};

pub const MIN_WALKERS: usize = 100;
pub const MIN_HOPS: usize = 100;

/// 2D density of states of a chamber, eV⁻¹.
pub fn dos_2d(mass: f64, area: f64) -> f64 {
    mass * area / (2.0 * std::f64::consts::PI * HBAR * HBAR)
}

/// Escape time `ħρ`, fs.
pub fn dwell_time(mass: f64, area: f64) -> f64 {
    mass * area / (2.0 * std::f64::consts::PI * HBAR)
}

/// `d²/(4τ)` with `d = √A`.
pub fn chamber_diffusion(mass: f64, area: f64) -> f64 {
    area / (4.0 * dwell_time(mass, area))
}

/// `(π/2)·ħ/m`; the area cancels.
pub fn analytic_diffusion(mass: f64) -> f64 {
    0.5 * std::f64::consts::PI * HBAR / mass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThoulessConfig {
    /// Chamber area, nm².
    pub area: f64,
    /// Multiples of m_e.
    pub mass: f64,
    pub n_walkers: usize,
    /// Mean hops per walker; the walk is read at `n_hops · τ`.
    pub n_hops: usize,
    pub seed: u64,
}

impl Default for ThoulessConfig {
    fn default() -> Self {
        Self {
            area: 100.0,
            mass: 1.0,
            n_walkers: 10_000,
            n_hops: 1000,
            seed: 1,
        }
    }
}

impl ThoulessConfig {
    pub fn carrier_mass(&self) -> f64 {
        self.mass * M_E
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area.is_finite() && self.area > 0.0) {
            return Err(Error::config("thouless.areas", "areas must be > 0"));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::config("thouless.mass", "must be > 0"));
        }
        if self.n_walkers < MIN_WALKERS {
            return Err(Error::config(
                "thouless.n_walkers",
                format!("need at least {MIN_WALKERS}, got {}", self.n_walkers),
            ));
        }
        if self.n_hops < MIN_HOPS {
            return Err(Error::config(
                "thouless.n_hops",
                format!("need at least {MIN_HOPS}, got {}", self.n_hops),
            ));
        }
        Ok(())
    }
}

/// Walker streams depend on the master seed and the area, so different
/// areas give independent estimates.
fn walker_rng(seed: u64, area: f64, walker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ area.to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(walker as u64);
    rng
}

/// Squared lattice displacement (in units of the pitch) of one walker at
/// time `horizon`, with exponential dwell times of mean `tau`.
fn walk(rng: &mut ChaCha8Rng, tau: f64, horizon: f64) -> f64 {
    let exp = Exp::new(1.0 / tau).expect("positive dwell time");
    let (mut x, mut y) = (0i64, 0i64);
    let mut t = exp.sample(rng);
    while t <= horizon {
        match rng.gen_range(0..4) {
            0 => x += 1,
            1 => x -= 1,
            2 => y += 1,
            _ => y -= 1,
        }
        t += exp.sample(rng);
    }
    (x * x + y * y) as f64
}

/// Monte Carlo estimate of the chamber-walk diffusion constant,
/// `⟨|r(T) − r(0)|²⟩/(4T)` at `T = n_hops·τ`, with its standard error over
/// walkers.
pub fn simulate_walk(cfg: &ThoulessConfig) -> Result<DiffusionEstimate> {
    if !(cfg.area > 0.0 && cfg.mass > 0.0) || cfg.n_walkers == 0 {
        return Err(Error::config("thouless", "area, mass and n_walkers must be positive"));
    }
    let mass = cfg.carrier_mass();
    let tau = dwell_time(mass, cfg.area);
    let horizon = cfg.n_hops as f64 * tau;
    let window = (0.0, horizon);
    if cfg.n_hops == 0 {
        return Ok(DiffusionEstimate {
            d: 0.0,
            alpha: 0.0,
            window,
            stderr: 0.0,
            dim: DIM,
            n_samples: cfg.n_walkers,
            mass,
        });
    }
    let r2: Vec<f64> = (0..cfg.n_walkers)
        .into_par_iter()
        .map(|w| walk(&mut walker_rng(cfg.seed, cfg.area, w), tau, horizon) * cfg.area)
        .collect();
    let n = r2.len() as f64;
    let scale = 1.0 / (2.0 * DIM as f64 * horizon);
    let mean = r2.iter().sum::<f64>() / n;
    let var = if r2.len() > 1 {
        r2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let d = mean * scale;
    Ok(DiffusionEstimate {
        d,
        alpha: d * mass / HBAR,
        window,
        stderr: (var / n).sqrt() * scale,
        dim: DIM,
        n_samples: cfg.n_walkers,
        mass,
    })
}

/// Dwell times as drawn by the walkers, for diagnostics.
pub fn sample_dwell_times(cfg: &ThoulessConfig, count: usize) -> Vec<f64> {
    let tau = dwell_time(cfg.carrier_mass(), cfg.area);
    let exp = Exp::new(1.0 / tau).expect("positive dwell time");
    let mut rng = walker_rng(cfg.seed, cfg.area, 0);
    (0..count).map(|_| exp.sample(&mut rng)).collect()
}

/// One row of the analytic-versus-empirical table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoulessRow {
    pub area: f64,
    pub d_analytic: f64,
    pub d_empirical: f64,
    pub stderr: f64,
    pub n_walkers: usize,
}

pub fn thouless_table(base: &ThoulessConfig, areas: &[f64]) -> Result<Vec<ThoulessRow>> {
    if areas.is_empty() {
        return Err(Error::config("thouless.areas", "no areas given"));
    }
    areas
        .iter()
        .map(|&area| {
            let cfg = ThoulessConfig {
                area,
                ..base.clone()
            };
            cfg.validate()?;
            let est = simulate_walk(&cfg)?;
            Ok(ThoulessRow {
                area,
                d_analytic: chamber_diffusion(cfg.carrier_mass(), area),
                d_empirical: est.d,
                stderr: est.stderr,
                n_walkers: cfg.n_walkers,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_forms() {
        assert!((dos_2d(M_E, 100.0) - 208.9).abs() < 0.05);
        assert_eq!(dos_2d(M_E, 200.0), 2.0 * dos_2d(M_E, 100.0));
        assert!((dos_2d(2.0 * M_E, 100.0) - 417.8).abs() < 0.1);
        assert!((dwell_time(M_E, 100.0) - 137.5).abs() < 0.05);
        assert!((dwell_time(M_E, 25.0) - 34.37).abs() < 0.01);
        assert!((analytic_diffusion(M_E) - 0.18185).abs() < 1e-5);
        assert!((analytic_diffusion(M_E) * M_E / HBAR - PI / 2.0).abs() < 1e-15);
        assert!((analytic_diffusion(10.0 * M_E) - 0.018185).abs() < 1e-6);
    }

    #[test]
    fn identity_chain_over_five_decades() {
        let d = analytic_diffusion(M_E);
        for e in -1..=4 {
            let a = 2.5 * 10f64.powi(e);
            let rho = dos_2d(M_E, a);
            let tau = dwell_time(M_E, a);
            assert!((rho * HBAR - tau).abs() <= 1e-13 * tau);
            assert!((chamber_diffusion(M_E, a) - d).abs() <= 1e-14 * d);
        }
        assert_eq!(chamber_diffusion(M_E, 25.0), chamber_diffusion(M_E, 2500.0));
    }

    #[test]
    fn walk_reproduces_analytic() {
        let cfg = ThoulessConfig::default();
        let est = simulate_walk(&cfg).unwrap();
        let want = analytic_diffusion(M_E);
        assert!((est.d - want).abs() < 0.03 * want, "{} vs {want}", est.d);
        assert!((est.d - want).abs() < 4.0 * est.stderr);
    }

    #[test]
    fn area_independence() {
        let run = |area| {
            simulate_walk(&ThoulessConfig {
                area,
                n_walkers: 4000,
                n_hops: 400,
                ..Default::default()
            })
            .unwrap()
        };
        let (a, b) = (run(25.0), run(2500.0));
        let combined = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.d - b.d).abs() < 3.0 * combined, "{} {} ± {combined}", a.d, b.d);
    }

    #[test]
    fn zero_hops() {
        let est = simulate_walk(&ThoulessConfig {
            n_hops: 0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(est.d, 0.0);
        assert_eq!(est.alpha, 0.0);
    }

    #[test]
    fn error_shrinks_as_inverse_sqrt() {
        let want = analytic_diffusion(M_E);
        let ns = [100usize, 400, 1600, 6400];
        let mut log_n = vec![];
        let mut log_err = vec![];
        for &n in &ns {
            let mut sq = 0.0;
            let reps = 24;
            for seed in 0..reps {
                let est = simulate_walk(&ThoulessConfig {
                    n_walkers: n,
                    n_hops: 100,
                    seed: 1000 + seed,
                    ..Default::default()
                })
                .unwrap();
                sq += (est.d - want).powi(2);
            }
            log_n.push((n as f64).ln());
            log_err.push((sq / reps as f64).sqrt().ln());
        }
        let fit = crate::observables::linear_fit(&log_n, &log_err).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.15, "slope {}", fit.slope);
    }

    #[test]
    fn exponential_dwell_moments() {
        let cfg = ThoulessConfig::default();
        let tau = dwell_time(M_E, 100.0);
        let n = 100_000;
        let xs = sample_dwell_times(&cfg, n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // exponential: sd(mean) = τ/√n, sd(var) = √(8τ⁴/n) for large n
        assert!((mean - tau).abs() < 3.0 * tau / (n as f64).sqrt());
        let var_se = (8.0f64).sqrt() * tau * tau / (n as f64).sqrt();
        assert!((var - tau * tau).abs() < 3.0 * var_se);
    }

    #[test]
    fn deterministic_replay_and_validation() {
        let cfg = ThoulessConfig {
            n_walkers: 200,
            n_hops: 100,
            ..Default::default()
        };
        assert_eq!(simulate_walk(&cfg).unwrap(), simulate_walk(&cfg).unwrap());
        let low = ThoulessConfig {
            n_walkers: 50,
            ..cfg.clone()
        };
        match low.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "thouless.n_walkers"),
            other => panic!("{other:?}"),
        }
        let table = thouless_table(&cfg, &[25.0, 100.0]).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].d_analytic, analytic_diffusion(M_E));
    }
}
