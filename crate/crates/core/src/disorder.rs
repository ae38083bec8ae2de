//! The dynamic impurity medium: bump shape, sampling, classical motion and
//! rendering of the potential onto the grid.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::grid::Grid;
use crate::special::{bessel_j0, J0_FIRST_ZERO};
use crate::units::{K_B, M_E};

/// Absolute envelope level (eV) that sets the default truncation radius.
pub const DEFAULT_CUT_LEVEL: f64 = 1e-3;

/// Radial profile `V0·J0(j01·r/r_core)·exp(−r/λ)`, truncated at `r_cut`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpurityShape {
    /// Peak height, eV.
    pub v0: f64,
    /// First zero of the radial profile, nm.
    pub r_core: f64,
    /// Tail decay length, nm.
    pub lambda: f64,
    /// Truncation radius, nm.
    pub r_cut: f64,
}

impl ImpurityShape {
    pub fn new(v0: f64, r_core: f64, lambda: f64, r_cut: f64) -> Result<Self> {
        let shape = Self {
            v0,
            r_core,
            lambda,
            r_cut,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Truncates where the envelope `V0·exp(−r/λ)` drops below 1 meV, but
    /// never beyond `max_cut` (normally half the box).
    pub fn with_default_cut(v0: f64, r_core: f64, lambda: f64, max_cut: f64) -> Result<Self> {
        let natural = if v0 > DEFAULT_CUT_LEVEL {
            lambda * (v0 / DEFAULT_CUT_LEVEL).ln()
        } else {
            lambda
        };
        Self::new(v0, r_core, lambda, natural.min(max_cut).max(lambda))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.v0) {
            return Err(Error::config("disorder.v0", format!("must be > 0, got {}", self.v0)));
        }
        if !positive(self.r_core) {
            return Err(Error::config(
                "disorder.r_core",
                format!("must be > 0, got {}", self.r_core),
            ));
        }
        if !positive(self.lambda) {
            return Err(Error::config(
                "disorder.lambda",
                format!("must be > 0, got {}", self.lambda),
            ));
        }
        if !(self.r_cut.is_finite() && self.r_cut >= self.lambda) {
            return Err(Error::config(
                "disorder.r_cut",
                format!("must be ≥ lambda = {}, got {}", self.lambda, self.r_cut),
            ));
        }
        let edge = self.untruncated(self.r_cut).abs();
        if edge > 1e-3 * self.v0 {
            return Err(Error::config(
                "disorder.r_cut",
                format!("profile is still {edge:.3e} eV at the cut; extend r_cut"),
            ));
        }
        Ok(())
    }

    fn untruncated(&self, r: f64) -> f64 {
        self.v0 * bessel_j0(J0_FIRST_ZERO * r / self.r_core) * (-r / self.lambda).exp()
    }
}

pub fn bump_profile(shape: &ImpurityShape, r: f64) -> f64 {
    if r < shape.r_cut {
        shape.untruncated(r)
    } else {
        0.0
    }
}

/// How impurity velocities are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityModel {
    Static,
    /// A fraction `moving_fraction` moves at `speed` (nm/fs) in random directions.
    FixedSpeed { speed: f64, moving_fraction: f64 },
    /// Every impurity moves; 2D Maxwell–Boltzmann at `temperature` (K) for
    /// impurities of mass `mass` (multiples of `m_e`).
    Maxwell { temperature: f64, mass: f64 },
}

impl VelocityModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            VelocityModel::Static => Ok(()),
            VelocityModel::FixedSpeed {
                speed,
                moving_fraction,
            } => {
                if !(speed.is_finite() && speed >= 0.0) {
                    return Err(Error::config("disorder.speed", format!("must be ≥ 0, got {speed}")));
                }
                if !(0.0..=1.0).contains(&moving_fraction) {
                    return Err(Error::config(
                        "disorder.moving_fraction",
                        format!("must lie in [0, 1], got {moving_fraction}"),
                    ));
                }
                Ok(())
            }
            VelocityModel::Maxwell { temperature, mass } => {
                if !(temperature.is_finite() && temperature > 0.0) {
                    return Err(Error::config(
                        "disorder.temperature",
                        format!("must be > 0, got {temperature}"),
                    ));
                }
                if !(mass.is_finite() && mass > 0.0) {
                    return Err(Error::config(
                        "disorder.impurity_mass",
                        format!("must be > 0, got {mass}"),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Point-like classical scatterers in a periodic box.
///
/// Current positions are `wrap(origin + v·elapsed)`, so advancing twice by
/// `dt` lands on exactly the same positions as advancing once by `2·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpuritySet {
    origins: Vec<[f64; 2]>,
    positions: Vec<[f64; 2]>,
    velocities: Vec<[f64; 2]>,
    mobile: Vec<bool>,
    elapsed: f64,
    length: f64,
    seed: u64,
}

impl ImpuritySet {
    /// Builds a set from explicit data. Positions are wrapped into the box;
    /// immobile entries get zero velocity.
    pub fn from_parts(
        positions: Vec<[f64; 2]>,
        velocities: Vec<[f64; 2]>,
        mobile: Vec<bool>,
        length: f64,
        seed: u64,
    ) -> Result<Self> {
        if positions.len() != velocities.len() || positions.len() != mobile.len() {
            return Err(Error::config("impurities", "column lengths differ"));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::config("grid.length", "box length must be positive"));
        }
        let wrap = |x: f64| {
            let w = x.rem_euclid(length);
            if w >= length {
                0.0
            } else {
                w
            }
        };
        let positions: Vec<[f64; 2]> = positions.iter().map(|p| [wrap(p[0]), wrap(p[1])]).collect();
        let velocities = velocities
            .iter()
            .zip(&mobile)
            .map(|(v, &m)| if m { *v } else { [0.0, 0.0] })
            .collect();
        Ok(Self {
            origins: positions.clone(),
            positions,
            velocities,
            mobile,
            elapsed: 0.0,
            length,
            seed,
        })
    }

    pub fn empty(length: f64) -> Self {
        Self {
            origins: vec![],
            positions: vec![],
            velocities: vec![],
            mobile: vec![],
            elapsed: 0.0,
            length,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn velocities(&self) -> &[[f64; 2]] {
        &self.velocities
    }

    pub fn mobile(&self) -> &[bool] {
        &self.mobile
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Time over which the set has been advanced, fs.
    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    /// Concatenates two sets in the same box.
    pub fn union(&self, other: &ImpuritySet) -> Result<ImpuritySet> {
        if self.length != other.length {
            return Err(Error::config("impurities", "sets live in different boxes"));
        }
        let mut out = self.clone();
        out.positions.extend_from_slice(&other.positions);
        out.velocities.extend_from_slice(&other.velocities);
        out.mobile.extend_from_slice(&other.mobile);
        // re-anchor so the union's clock starts now
        out.origins = out.positions.clone();
        out.elapsed = 0.0;
        Ok(out)
    }

    /// Moves every impurity by `v·dt` with periodic wrapping.
    pub fn advance(&mut self, dt: f64) {
        self.set_elapsed(self.elapsed + dt);
    }

    /// Places every impurity at `origin + v·t`, wrapped into the box.
    pub fn set_elapsed(&mut self, t: f64) {
        self.elapsed = t;
        let l = self.length;
        for ((p, o), v) in self
            .positions
            .iter_mut()
            .zip(&self.origins)
            .zip(&self.velocities)
        {
            for a in 0..2 {
                let w = (o[a] + v[a] * t).rem_euclid(l);
                p[a] = if w >= l { 0.0 } else { w };
            }
        }
    }

    /// Writes the set as comma-separated `x,y,vx,vy,mobile` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# length_nm={:e} seed={} elapsed_fs={:e}", self.length, self.seed, self.elapsed);
        s.push_str("x,y,vx,vy,mobile\n");
        for ((p, v), m) in self.positions.iter().zip(&self.velocities).zip(&self.mobile) {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                p[0], p[1], v[0], v[1], *m as u8
            );
        }
        s
    }

    /// Parses the format written by [`Self::to_csv`]. The box length comes
    /// from the `# length_nm=` comment, or from `length` when given.
    pub fn from_csv(text: &str, length: Option<f64>, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut box_len = length;
        let mut seed = 0;
        let mut header_seen = false;
        let (mut pos, mut vel, mut mob) = (vec![], vec![], vec![]);
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    if let Some((k, v)) = kv.split_once('=') {
                        match k {
                            "length_nm" if box_len.is_none() => {
                                box_len = Some(v.parse().map_err(|_| {
                                    parse_err(lineno, format!("bad length `{v}`"))
                                })?)
                            }
                            "seed" => seed = v.parse().unwrap_or(0),
                            _ => {}
                        }
                    }
                }
                continue;
            }
            if !header_seen {
                if line != "x,y,vx,vy,mobile" {
                    return Err(parse_err(lineno, format!("unexpected header `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(parse_err(lineno, format!("expected 5 columns, found {}", cols.len())));
            }
            let mut f = [0.0; 4];
            for (k, c) in cols[..4].iter().enumerate() {
                f[k] = c
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad number `{c}`")))?;
            }
            let m = match cols[4].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(parse_err(lineno, format!("bad mobile flag `{other}`"))),
            };
            pos.push([f[0], f[1]]);
            vel.push([f[2], f[3]]);
            mob.push(m);
        }
        let length = box_len.ok_or_else(|| parse_err(1, "box length unknown".into()))?;
        ImpuritySet::from_parts(pos, vel, mob, length, seed)
    }
}

/// Draws `round(density·L²)` impurities uniformly in the box.
///
/// The random stream is consumed in a fixed order (all positions, then all
/// velocity draws) so that sets with the same seed share positions across
/// velocity models. Under `FixedSpeed` the first `round(p·count)` impurities
/// are the mobile ones; positions are i.i.d., so that is a uniform subset.
pub fn sample_impurities(
    density: f64,
    grid: &Grid,
    model: &VelocityModel,
    seed: u64,
) -> Result<ImpuritySet> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::config("disorder.density", format!("must be > 0, got {density}")));
    }
    model.validate()?;
    let l = grid.length();
    let count = (density * l * l).round() as usize;
    if count == 0 {
        return Err(Error::config(
            "disorder.density",
            format!("density {density} gives no impurities in a {l} nm box"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<[f64; 2]> = (0..count)
        .map(|_| [rng.gen_range(0.0..l), rng.gen_range(0.0..l)])
        .collect();
    let (velocities, mobile) = match *model {
        VelocityModel::Static => (vec![[0.0, 0.0]; count], vec![false; count]),
        VelocityModel::FixedSpeed {
            speed,
            moving_fraction,
        } => {
            let n_mobile = (moving_fraction * count as f64).round() as usize;
            let mut vel = Vec::with_capacity(count);
            let mut mob = Vec::with_capacity(count);
            for i in 0..count {
                let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let moving = i < n_mobile && speed > 0.0;
                vel.push(if moving {
                    [speed * theta.cos(), speed * theta.sin()]
                } else {
                    [0.0, 0.0]
                });
                mob.push(i < n_mobile);
            }
            (vel, mob)
        }
        VelocityModel::Maxwell { temperature, mass } => {
            let sigma = (K_B * temperature / (mass * M_E)).sqrt();
            let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
            let vel = (0..count)
                .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
                .collect();
            (vel, vec![true; count])
        }
    };
    let mut set = ImpuritySet::from_parts(positions, velocities, mobile, l, seed)?;
    set.seed = seed;
    Ok(set)
}

/// Returns a copy of `set` advanced by `dt`.
pub fn advance_impurities(set: &ImpuritySet, dt: f64) -> ImpuritySet {
    let mut out = set.clone();
    out.advance(dt);
    out
}

/// `P(|v| > v0)` for the 2D Maxwell–Boltzmann speed distribution.
pub fn maxwell_tail_fraction(v0: f64, temperature: f64, mass: f64) -> f64 {
    (-mass * M_E * v0 * v0 / (2.0 * K_B * temperature)).exp()
}

/// Steps between potential refreshes so no impurity moves more than a
/// quarter cell between renders. `usize::MAX` when nothing moves.
pub fn refresh_interval(dx: f64, v_max: f64, dt: f64) -> usize {
    if v_max <= 0.0 {
        return usize::MAX;
    }
    ((0.25 * dx / (v_max * dt)).floor() as usize).max(1)
}

/// The medium's potential on the grid at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub values: Vec<f64>,
    pub time: f64,
}

impl PotentialField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderBackend {
    /// Direct stamping of the tabulated bump around every impurity.
    Stamp,
    /// Bilinear deposit on the grid convolved with the bump via FFT.
    #[default]
    Spectral,
}

// Table samples per grid spacing.
const TABLE_PER_CELL: usize = 64;
// Impurities per stamping work unit; fixed so the reduction order does not
// depend on the thread count.
const STAMP_CHUNK: usize = 256;

/// Renders impurity sets for one grid and shape.
pub struct PotentialRenderer {
    grid: Arc<Grid>,
    shape: ImpurityShape,
    table: Vec<f64>,
    table_step: f64,
    kernel_hat: Vec<Complex64>,
    fft: Fft2d,
    work: Vec<Complex64>,
}

impl PotentialRenderer {
    pub fn new(grid: Arc<Grid>, shape: ImpurityShape) -> Result<Self> {
        shape.validate()?;
        if shape.r_cut > 0.5 * grid.length() {
            return Err(Error::config(
                "disorder.r_cut",
                format!(
                    "{} nm exceeds half the box ({} nm)",
                    shape.r_cut,
                    0.5 * grid.length()
                ),
            ));
        }
        let table_step = grid.dx() / TABLE_PER_CELL as f64;
        let entries = (shape.r_cut / table_step).ceil() as usize + 2;
        let table = (0..entries)
            .map(|i| shape.untruncated(i as f64 * table_step))
            .collect();
        let n = grid.n();
        let mut renderer = Self {
            fft: Fft2d::new(n),
            work: vec![Complex64::default(); n * n],
            kernel_hat: vec![],
            grid,
            shape,
            table,
            table_step,
        };
        let mut kernel = vec![Complex64::default(); n * n];
        for iy in 0..n {
            let dy = renderer.grid.min_image(renderer.grid.coord(iy));
            for ix in 0..n {
                let dx = renderer.grid.min_image(renderer.grid.coord(ix));
                kernel[iy * n + ix] = Complex64::new(renderer.lookup(dx.hypot(dy)), 0.0);
            }
        }
        renderer.fft.forward_t(&mut kernel);
        renderer.kernel_hat = kernel;
        Ok(renderer)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn shape(&self) -> &ImpurityShape {
        &self.shape
    }

    /// Tabulated profile with linear interpolation; zero beyond `r_cut`.
    pub fn lookup(&self, r: f64) -> f64 {
        if r >= self.shape.r_cut {
            return 0.0;
        }
        let s = r / self.table_step;
        let i = s as usize;
        let f = s - i as f64;
        self.table[i] + f * (self.table[i + 1] - self.table[i])
    }

    pub fn render(&mut self, set: &ImpuritySet, backend: RenderBackend, time: f64) -> PotentialField {
        let values = match backend {
            RenderBackend::Stamp => self.stamp(set),
            RenderBackend::Spectral => self.spectral(set),
        };
        PotentialField { values, time }
    }

    fn stamp(&self, set: &ImpuritySet) -> Vec<f64> {
        let n = self.grid.n();
        let partials: Vec<Vec<f64>> = set
            .positions()
            .par_chunks(STAMP_CHUNK)
            .map(|chunk| {
                let mut buf = vec![0.0; n * n];
                for p in chunk {
                    self.stamp_one(*p, &mut buf);
                }
                buf
            })
            .collect();
        let mut out = vec![0.0; n * n];
        for part in partials {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
        out
    }

    fn stamp_one(&self, pos: [f64; 2], buf: &mut [f64]) {
        let n = self.grid.n();
        let ni = n as i64;
        let dx = self.grid.dx();
        // Work in cell units so a whole-cell shift of the impurity leaves the
        // fractional offset, and therefore every stamped value, bit-identical.
        let (ux, uy) = (pos[0] / dx, pos[1] / dx);
        let (ix0, iy0) = (ux.floor(), uy.floor());
        let (fx, fy) = (ux - ix0, uy - iy0);
        let (ix0, iy0) = (ix0 as i64, iy0 as i64);
        let reach = (self.shape.r_cut / dx).ceil() as i64 + 1;
        let (lo, hi) = if 2 * reach + 1 >= ni {
            (-(ni / 2), ni / 2 - 1)
        } else {
            (-reach, reach)
        };
        let half = n as f64 / 2.0;
        let min_image = |d: f64| {
            if d < -half {
                d + n as f64
            } else if d >= half {
                d - n as f64
            } else {
                d
            }
        };
        let cut2 = (self.shape.r_cut / dx) * (self.shape.r_cut / dx);
        for oy in lo..=hi {
            let dyc = min_image(oy as f64 - fy);
            let row = (iy0 + oy).rem_euclid(ni) as usize * n;
            for ox in lo..=hi {
                let dxc = min_image(ox as f64 - fx);
                let d2 = dxc * dxc + dyc * dyc;
                if d2 >= cut2 {
                    continue;
                }
                let col = (ix0 + ox).rem_euclid(ni) as usize;
                buf[row + col] += self.lookup(d2.sqrt() * dx);
            }
        }
    }

    fn spectral(&mut self, set: &ImpuritySet) -> Vec<f64> {
        let n = self.grid.n();
        let ni = n as i64;
        let dx = self.grid.dx();
        for z in self.work.iter_mut() {
            *z = Complex64::default();
        }
        for p in set.positions() {
            let (ux, uy) = (p[0] / dx, p[1] / dx);
            let (fx0, fy0) = (ux.floor(), uy.floor());
            let (fx, fy) = (ux - fx0, uy - fy0);
            let ix = (fx0 as i64).rem_euclid(ni) as usize;
            let iy = (fy0 as i64).rem_euclid(ni) as usize;
            let ix1 = (ix + 1) % n;
            let iy1 = (iy + 1) % n;
            self.work[iy * n + ix].re += (1.0 - fx) * (1.0 - fy);
            self.work[iy * n + ix1].re += fx * (1.0 - fy);
            self.work[iy1 * n + ix].re += (1.0 - fx) * fy;
            self.work[iy1 * n + ix1].re += fx * fy;
        }
        self.fft.forward_t(&mut self.work);
        for (w, k) in self.work.iter_mut().zip(&self.kernel_hat) {
            *w *= k;
        }
        self.fft.inverse_t(&mut self.work);
        self.work.iter().map(|z| z.re).collect()
    }
}

/// One-shot rendering; builds a renderer each call.
pub fn render_potential(
    set: &ImpuritySet,
    grid: Arc<Grid>,
    shape: &ImpurityShape,
    backend: RenderBackend,
) -> Result<PotentialField> {
    let mut r = PotentialRenderer::new(grid, *shape)?;
    Ok(r.render(set, backend, set.elapsed()))
}
