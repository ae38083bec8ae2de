//! Measurements on the wavefunction and estimators on MSD time series.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::HBAR;
use crate::wave::WaveField;

/// Spatial dimension of the simulated system.
pub const DIM: usize = 2;

/// Minimum number of samples a diffusion fit accepts.
pub const MIN_FIT_SAMPLES: usize = 10;

/// Default boundary-mass threshold above which a sample is contaminated.
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 1e-3;

/// Periodic-aware first and second moments of `|ψ|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: [f64; 2],
    pub msd: f64,
}

fn marginals(psi: &WaveField) -> (Vec<f64>, Vec<f64>, f64) {
    let n = psi.grid.n();
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    for (iy, row) in psi.amplitudes.chunks_exact(n).enumerate() {
        let mut s = 0.0;
        for (ix, z) in row.iter().enumerate() {
            let p = z.norm_sqr();
            px[ix] += p;
            s += p;
        }
        py[iy] = s;
    }
    let total = py.iter().sum::<f64>();
    (px, py, total)
}

/// Circular mean of a periodic marginal, in `[0, L)`.
fn circular_mean(p: &[f64], length: f64, dx: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (i, &w) in p.iter().enumerate() {
        let th = TAU * i as f64 * dx / length;
        c += w * th.cos();
        s += w * th.sin();
    }
    (s.atan2(c) / TAU * length).rem_euclid(length)
}

/// Mean and variance of one periodic axis about its circular mean.
fn axis_moments(p: &[f64], total: f64, length: f64, dx: f64) -> (f64, f64) {
    let c = circular_mean(p, length, dx);
    let half = 0.5 * length;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (i, &w) in p.iter().enumerate() {
        let d = (i as f64 * dx - c + half).rem_euclid(length) - half;
        m1 += w * d;
        m2 += w * d * d;
    }
    m1 /= total;
    m2 /= total;
    ((c + m1).rem_euclid(length), m2 - m1 * m1)
}

pub fn moments(psi: &WaveField) -> Moments {
    let g = &psi.grid;
    let (px, py, total) = marginals(psi);
    let (mx, vx) = axis_moments(&px, total, g.length(), g.dx());
    let (my, vy) = axis_moments(&py, total, g.length(), g.dx());
    Moments {
        mean: [mx, my],
        msd: vx + vy,
    }
}

/// Mean square displacement about the (periodic) mean position, nm².
pub fn msd(psi: &WaveField) -> f64 {
    moments(psi).msd
}

/// Inverse participation ratio `Σ|ψ|⁴·dx²`, nm⁻².
pub fn ipr(psi: &WaveField) -> f64 {
    psi.amplitudes
        .iter()
        .map(|z| z.norm_sqr().powi(2))
        .sum::<f64>()
        * psi.grid.cell_area()
}

/// Probability within `margin` of the seam opposite the packet's mean.
pub fn boundary_mass(psi: &WaveField, margin: f64) -> f64 {
    boundary_mass_about(psi, moments(psi).mean, margin)
}

/// Probability in the cells whose minimum-image offset from `center`
/// exceeds `L/2 − margin` along either axis.
pub fn boundary_mass_about(psi: &WaveField, center: [f64; 2], margin: f64) -> f64 {
    let g = &psi.grid;
    let n = g.n();
    let half = 0.5 * g.length();
    let edge = half - margin;
    let in_band = |i: usize, c: f64| {
        let d = (g.coord(i) - c + half).rem_euclid(g.length()) - half;
        d.abs() > edge
    };
    let bx: Vec<bool> = (0..n).map(|i| in_band(i, center[0])).collect();
    let by: Vec<bool> = (0..n).map(|i| in_band(i, center[1])).collect();
    let mut mass = 0.0;
    for (iy, row) in psi.amplitudes.chunks_exact(n).enumerate() {
        if by[iy] {
            mass += row.iter().map(|z| z.norm_sqr()).sum::<f64>();
        } else {
            mass += row
                .iter()
                .zip(&bx)
                .filter(|(_, &b)| b)
                .map(|(z, _)| z.norm_sqr())
                .sum::<f64>();
        }
    }
    mass * g.cell_area()
}

/// Run metadata carried alongside a series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeriesManifest {
    pub seed: u64,
    /// Full configuration snapshot.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub code_version: String,
    pub dt_fs: f64,
    pub steps_per_observation: usize,
    pub refresh_interval_steps: Option<usize>,
    pub boundary_contaminated: bool,
    /// Time of the first contaminated sample, when the run was truncated.
    pub truncated_at_fs: Option<f64>,
    /// The potential's half-span exceeds the grid's Nyquist kinetic energy,
    /// so carriers accelerated by it alias.
    pub underresolved: bool,
    pub notes: Vec<String>,
}

/// Time series of the observables recorded during one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MsdSeries {
    pub times: Vec<f64>,
    pub msd: Vec<f64>,
    pub mean_pos: Vec<[f64; 2]>,
    pub norm: Vec<f64>,
    pub ipr: Vec<f64>,
    pub boundary_mass: Vec<f64>,
    pub manifest: SeriesManifest,
}

impl MsdSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, time: f64, psi: &WaveField, margin: f64) {
        let m = moments(psi);
        self.times.push(time);
        self.msd.push(m.msd);
        self.mean_pos.push(m.mean);
        self.norm.push(psi.norm());
        self.ipr.push(ipr(psi));
        self.boundary_mass.push(boundary_mass(psi, margin));
    }

    pub fn truncate(&mut self, len: usize) {
        self.times.truncate(len);
        self.msd.truncate(len);
        self.mean_pos.truncate(len);
        self.norm.truncate(len);
        self.ipr.truncate(len);
        self.boundary_mass.truncate(len);
    }

    /// Builds a bare series from `(t, msd)` pairs; other columns are filled
    /// with the values of a clean, normalized sample.
    pub fn from_msd(times: Vec<f64>, msd: Vec<f64>) -> Self {
        let n = times.len();
        Self {
            times,
            msd,
            mean_pos: vec![[0.0, 0.0]; n],
            norm: vec![1.0; n],
            ipr: vec![0.0; n],
            boundary_mass: vec![0.0; n],
            manifest: SeriesManifest::default(),
        }
    }

    /// Median spacing between consecutive samples.
    pub fn sample_interval(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let mut gaps: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        Some(gaps[gaps.len() / 2])
    }
}

/// Averages series sample by sample over their common prefix. Sample times
/// must agree.
pub fn ensemble_mean(series: &[MsdSeries]) -> Result<MsdSeries> {
    let first = series
        .first()
        .ok_or_else(|| Error::estimation("ensemble is empty"))?;
    let len = series.iter().map(|s| s.len()).min().unwrap_or(0);
    for s in series {
        for i in 0..len {
            if (s.times[i] - first.times[i]).abs() > 1e-9 * first.times[i].abs().max(1.0) {
                return Err(Error::estimation(format!(
                    "sample times differ at index {i}: {} vs {}",
                    s.times[i], first.times[i]
                )));
            }
        }
    }
    let k = series.len() as f64;
    let avg = |f: &dyn Fn(&MsdSeries, usize) -> f64, i: usize| {
        series.iter().map(|s| f(s, i)).sum::<f64>() / k
    };
    let mut out = MsdSeries {
        manifest: first.manifest.clone(),
        ..Default::default()
    };
    for i in 0..len {
        out.times.push(first.times[i]);
        out.msd.push(avg(&|s, i| s.msd[i], i));
        out.mean_pos.push([avg(&|s, i| s.mean_pos[i][0], i), avg(&|s, i| s.mean_pos[i][1], i)]);
        out.norm.push(avg(&|s, i| s.norm[i], i));
        out.ipr.push(avg(&|s, i| s.ipr[i], i));
        out.boundary_mass.push(avg(&|s, i| s.boundary_mass[i], i));
    }
    out.manifest.boundary_contaminated = series.iter().any(|s| s.manifest.boundary_contaminated);
    out.manifest.truncated_at_fs = series
        .iter()
        .filter_map(|s| s.manifest.truncated_at_fs)
        .min_by(f64::total_cmp);
    Ok(out)
}

/// Ordinary least squares `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::estimation(format!("need at least two points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        sxy += da * db;
        syy += db * db;
    }
    if sxx <= 0.0 {
        return Err(Error::estimation("abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if n > 2 {
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
    })
}

/// Which samples a diffusion fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWindow {
    /// The trailing fraction of the clean samples.
    LastFraction(f64),
    /// Samples with `start ≤ t ≤ end`, fs.
    Span { start: f64, end: f64 },
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::LastFraction(0.5)
    }
}

/// Fitted diffusion constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEstimate {
    /// nm²/fs.
    pub d: f64,
    /// `D·m/ħ`.
    pub alpha: f64,
    pub window: (f64, f64),
    /// Standard error of `d`, nm²/fs.
    pub stderr: f64,
    pub dim: usize,
    pub n_samples: usize,
    /// Carrier mass the `alpha` refers to, eV·fs²/nm².
    pub mass: f64,
}

impl DiffusionEstimate {
    pub fn from_slope(slope: f64, slope_stderr: f64, dim: usize, mass: f64) -> Self {
        let d = slope / (2.0 * dim as f64);
        Self {
            d,
            alpha: d * mass / HBAR,
            window: (0.0, 0.0),
            stderr: slope_stderr / (2.0 * dim as f64),
            dim,
            n_samples: 0,
            mass,
        }
    }

    pub fn alpha_stderr(&self) -> f64 {
        self.stderr * self.mass / HBAR
    }
}

/// Least-squares `D = slope/(2d)` of MSD against time over `window`.
pub fn fit_diffusion(
    series: &MsdSeries,
    window: FitWindow,
    dim: usize,
    mass: f64,
) -> Result<DiffusionEstimate> {
    let n = series.len();
    let (lo, hi) = match window {
        FitWindow::LastFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::estimation(format!("window fraction {f} outside (0, 1]")));
            }
            let take = ((n as f64) * f).round() as usize;
            (n - take.min(n), n)
        }
        FitWindow::Span { start, end } => {
            if series.manifest.boundary_contaminated {
                if let Some(&last) = series.times.last() {
                    if end > last {
                        return Err(Error::estimation(format!(
                            "window end {end} fs lies past the last clean sample at {last} fs"
                        )));
                    }
                }
            }
            let lo = series.times.partition_point(|&t| t < start);
            let hi = series.times.partition_point(|&t| t <= end);
            (lo, hi.max(lo))
        }
    };
    let count = hi - lo;
    if count < MIN_FIT_SAMPLES {
        return Err(Error::estimation(format!(
            "{count} samples in the fit window, need at least {MIN_FIT_SAMPLES}"
        )));
    }
    let fit = linear_fit(&series.times[lo..hi], &series.msd[lo..hi])?;
    let mut est = DiffusionEstimate::from_slope(fit.slope, fit.slope_stderr, dim, mass);
    est.window = (series.times[lo], series.times[hi - 1]);
    est.n_samples = count;
    Ok(est)
}

/// A point of the time-resolved diffusion curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowedPoint {
    /// Window center, fs.
    pub time: f64,
    pub d: f64,
}

/// Sliding least-squares slope over `width` fs, reported at window centers.
pub fn windowed_diffusion(series: &MsdSeries, width: f64, dim: usize) -> Result<Vec<WindowedPoint>> {
    let dt = series
        .sample_interval()
        .ok_or_else(|| Error::estimation("series has fewer than two samples"))?;
    let span = series.times[series.len() - 1] - series.times[0];
    if width > span + 1e-9 * span.abs() {
        return Err(Error::estimation(format!(
            "window width {width} fs exceeds the series span {span} fs"
        )));
    }
    if width < 5.0 * dt - 1e-9 * dt {
        return Err(Error::estimation(format!(
            "window width {width} fs is under five sample intervals of {dt} fs"
        )));
    }
    let w = (width / dt).round() as usize + 1;
    let scale = 1.0 / (2.0 * dim as f64);
    (0..=series.len() - w)
        .map(|i| {
            let t = &series.times[i..i + w];
            let fit = linear_fit(t, &series.msd[i..i + w])?;
            Ok(WindowedPoint {
                time: 0.5 * (t[0] + t[w - 1]),
                d: fit.slope * scale,
            })
        })
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation, ties ranked by their average position.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::estimation("spearman needs two equal series of ≥ 3 points"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Grid};
    use crate::units::M_E;
    use crate::wave::gaussian_packet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use rustfft::num_complex::Complex64;
    use std::sync::Arc;

    fn grid() -> Arc<Grid> {
        Arc::new(make_grid(256, 128.0).unwrap())
    }

    fn from_density(g: &Arc<Grid>, f: impl Fn(usize, usize) -> f64) -> WaveField {
        let n = g.n();
        let mut psi = WaveField::zeros(g.clone());
        for iy in 0..n {
            for ix in 0..n {
                psi.amplitudes[iy * n + ix] = Complex64::new(f(ix, iy).sqrt(), 0.0);
            }
        }
        psi.normalize().unwrap();
        psi
    }

    #[test]
    fn gaussian_msd_and_ipr() {
        let psi = gaussian_packet(grid(), [64.0, 64.0], 10.0, [0.0, 0.0]).unwrap();
        let m = moments(&psi);
        assert!((m.msd - 200.0).abs() < 200.0 * (-(3.2f64).powi(2)).exp());
        assert!((m.mean[0] - 64.0).abs() < 1e-9 * 64.0 && (m.mean[1] - 64.0).abs() < 1e-9 * 64.0);
        let expect = 1.0 / (4.0 * std::f64::consts::PI * 100.0);
        assert!((ipr(&psi) - expect).abs() / expect < 0.01);
        // ipr times the effective area 4πσ² is of order one
        let area = 4.0 * std::f64::consts::PI * 100.0;
        assert!((ipr(&psi) * area - 1.0).abs() < 1.0);
    }

    #[test]
    fn packet_across_the_seam() {
        let psi = gaussian_packet(grid(), [2.0, 126.0], 10.0, [0.0, 0.0]).unwrap();
        let m = moments(&psi);
        assert!((m.msd - 200.0).abs() < 200.0 * (-(3.2f64).powi(2)).exp());
        assert!((m.mean[0] - 2.0).abs() < 1e-7 && (m.mean[1] - 126.0).abs() < 1e-7);
    }

    #[test]
    fn point_distributions() {
        let g = grid();
        let n = g.n();
        let one = from_density(&g, |ix, iy| if (ix, iy) == (40, 90) { 1.0 } else { 0.0 });
        assert!(msd(&one) < g.cell_area());
        assert!((ipr(&one) - 1.0 / g.cell_area()).abs() < 1e-9);

        // equal masses at x = 40 and x = 60 cells: separation s = 10 nm,
        // variance (s/2)² about the midpoint
        let two = from_density(&g, |ix, iy| {
            if iy == 10 && (ix == 40 || ix == 60) {
                1.0
            } else {
                0.0
            }
        });
        assert!((msd(&two) - 25.0).abs() < 1e-9);

        let uniform = from_density(&g, |_, _| 1.0);
        assert!((ipr(&uniform) - 1.0 / (128.0 * 128.0)).abs() < 1e-15);
        let band = boundary_mass(&uniform, 16.0);
        // (cells beyond the edge) / n along each axis, then the union
        let frac_axis = (0..n)
            .filter(|&i| {
                let c = moments(&uniform).mean[0];
                g.min_image(g.coord(i) - c).abs() > 64.0 - 16.0
            })
            .count() as f64
            / n as f64;
        let expect = 1.0 - (1.0 - frac_axis).powi(2);
        assert!((band - expect).abs() < 1e-9);
        assert!((band - 0.4375).abs() < 0.02);
    }

    #[test]
    fn boundary_monitor() {
        let g = grid();
        let psi = gaussian_packet(g.clone(), [64.0, 64.0], 10.0, [0.0, 0.0]).unwrap();
        // per-axis marginal ∝ exp(−x²/2σ0²); band starts 54 nm out
        let c = moments(&psi).mean[0];
        let q: f64 = {
            let w = |x: f64| (-(x - 64.0 + c).powi(2) / 200.0).exp();
            let all: f64 = (0..256).map(|i| w(g.min_image(g.coord(i) - c))).sum();
            let tail: f64 = (0..256)
                .map(|i| g.min_image(g.coord(i) - c))
                .filter(|d| d.abs() > 54.0)
                .map(w)
                .sum();
            tail / all
        };
        let expect = 1.0 - (1.0 - q).powi(2);
        let got = boundary_mass(&psi, 10.0);
        assert!((got - expect).abs() < 1e-6 * expect, "{got} vs {expect}");
        assert!(got < 1e-6);
        // two cells half a box apart: the mean sits between them, far from
        // both seams
        let split = from_density(&g, |ix, iy| {
            if iy == 0 && (ix == 0 || ix == 128) {
                1.0
            } else {
                0.0
            }
        });
        assert!(boundary_mass(&split, 10.0) < 1e-15);
        // a packet sitting on the seam of a reference point
        let far = gaussian_packet(g.clone(), [0.0, 64.0], 2.0, [0.0, 0.0]).unwrap();
        assert!(boundary_mass_about(&far, [64.0, 64.0], 16.0) > 1.0 - 1e-12);
    }

    #[test]
    fn translation_invariance() {
        let g = grid();
        let n = g.n();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base: Vec<f64> = (0..n * n)
            .map(|i| {
                let (ix, iy) = (i % n, i / n);
                let r2 = g.min_image(g.coord(ix) - 50.0).powi(2) + g.min_image(g.coord(iy) - 70.0).powi(2);
                (-r2 / 400.0).exp() * rng.gen_range(0.5..1.5)
            })
            .collect();
        let a = from_density(&g, |ix, iy| base[iy * n + ix]);
        for (sx, sy) in [(1, 0), (17, 3), (200, 255)] {
            let b = from_density(&g, |ix, iy| base[((iy + n - sy) % n) * n + (ix + n - sx) % n]);
            assert!((msd(&a) - msd(&b)).abs() < 1e-10 * msd(&a));
        }
    }

    fn synthetic(slope: f64, intercept: f64, noise: f64, seed: u64) -> MsdSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let times: Vec<f64> = (0..200).map(|i| 10.0 * i as f64).collect();
        let msd = times
            .iter()
            .map(|&t| intercept + slope * t + if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 })
            .collect();
        MsdSeries::from_msd(times, msd)
    }

    #[test]
    fn planckian_slope_gives_unit_alpha() {
        let slope = 4.0 * HBAR / M_E;
        assert!((slope - 0.46307).abs() < 1e-5);
        let est = fit_diffusion(&synthetic(slope, 0.0, 0.0, 0), FitWindow::default(), DIM, M_E).unwrap();
        assert!((est.d - 0.11577).abs() < 1e-5);
        assert!((est.alpha - 1.0).abs() < 1e-12);
        assert_eq!(est.alpha, est.d * M_E / HBAR);
        assert_eq!(est.n_samples, 100);
        assert_eq!(est.window, (1000.0, 1990.0));
    }

    #[test]
    fn constant_series_has_zero_d() {
        let est = fit_diffusion(&synthetic(0.0, 300.0, 0.0, 0), FitWindow::default(), DIM, M_E).unwrap();
        assert_eq!(est.d, 0.0);
        assert_eq!(est.alpha, 0.0);
    }

    #[test]
    fn noisy_regression_recovers_truth() {
        for seed in 0..20 {
            let s = synthetic(0.3, 150.0, 5.0, seed);
            let est = fit_diffusion(&s, FitWindow::LastFraction(1.0), DIM, M_E).unwrap();
            assert!((est.d - 0.075).abs() < 3.0 * est.stderr, "seed {seed}: {est:?}");
            assert!(est.stderr > 0.0);
        }
    }

    #[test]
    fn affine_equivariance() {
        let s = synthetic(0.3, 150.0, 5.0, 9);
        let base = fit_diffusion(&s, FitWindow::default(), DIM, M_E).unwrap();
        let mut scaled = s.clone();
        scaled.msd.iter_mut().for_each(|v| *v *= 3.5);
        let mut shifted = s.clone();
        shifted.msd.iter_mut().for_each(|v| *v += 1234.0);
        let a = fit_diffusion(&scaled, FitWindow::default(), DIM, M_E).unwrap();
        let b = fit_diffusion(&shifted, FitWindow::default(), DIM, M_E).unwrap();
        assert!((a.d - 3.5 * base.d).abs() < 1e-12 * base.d.abs());
        assert!((b.d - base.d).abs() < 1e-10 * base.d.abs());
    }

    #[test]
    fn fit_errors() {
        let s = synthetic(0.3, 0.0, 0.0, 0);
        assert!(matches!(
            fit_diffusion(&s, FitWindow::Span { start: 0.0, end: 80.0 }, DIM, M_E),
            Err(Error::Estimation(_))
        ));
        let mut trunc = s.clone();
        trunc.truncate(50);
        trunc.manifest.boundary_contaminated = true;
        assert!(fit_diffusion(&trunc, FitWindow::Span { start: 0.0, end: 1000.0 }, DIM, M_E).is_err());
        assert!(fit_diffusion(&trunc, FitWindow::Span { start: 0.0, end: 400.0 }, DIM, M_E).is_ok());
    }

    #[test]
    fn windowed_on_linear_series() {
        let s = synthetic(0.46307, 200.0, 0.0, 0);
        let global = fit_diffusion(&s, FitWindow::LastFraction(1.0), DIM, M_E).unwrap();
        let w = windowed_diffusion(&s, 1000.0, DIM).unwrap();
        assert_eq!(w.len(), 200 - 101 + 1);
        for p in &w {
            assert!((p.d - global.d).abs() < 1e-12);
        }
        assert_eq!(w[0].time, 500.0);
    }

    #[test]
    fn windowed_piecewise_activation() {
        let t_on = 5000.0;
        let times: Vec<f64> = (0..=1500).map(|i| 10.0 * i as f64).collect();
        let msd = times
            .iter()
            .map(|&t| 300.0 + if t > t_on { 0.46307 * (t - t_on) } else { 0.0 })
            .collect();
        let s = MsdSeries::from_msd(times, msd);
        let width = 1000.0;
        let w = windowed_diffusion(&s, width, DIM).unwrap();
        for p in &w {
            if p.time + 0.5 * width <= t_on {
                assert!(p.d.abs() < 1e-12);
            }
            if p.time - 0.5 * width >= t_on {
                assert!((p.d - 0.46307 / 4.0).abs() < 1e-9);
            }
        }
        // the step completes within one window width of activation
        let first_full = w.iter().find(|p| (p.d - 0.1157675).abs() < 1e-6).unwrap();
        assert!(first_full.time - t_on <= width);
    }

    #[test]
    fn windowed_free_packet_is_ballistic() {
        // closed-form free spreading: MSD = 2σ²(1 + (ħt/2mσ²)²)
        let times: Vec<f64> = (0..=400).map(|i| 25.0 * i as f64).collect();
        let msd = times
            .iter()
            .map(|&t| 200.0 * (1.0 + (HBAR * t / (2.0 * M_E * 100.0)).powi(2)))
            .collect();
        let w = windowed_diffusion(&MsdSeries::from_msd(times, msd), 1000.0, DIM).unwrap();
        let late: Vec<&WindowedPoint> = w.iter().filter(|p| p.time > 3000.0).collect();
        let x: Vec<f64> = late.iter().map(|p| p.time).collect();
        let y: Vec<f64> = late.iter().map(|p| p.d).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!(fit.slope > 0.0);
        assert!(fit.r_squared > 0.999_999);
    }

    #[test]
    fn windowed_errors() {
        let s = synthetic(0.3, 0.0, 0.0, 0);
        assert!(windowed_diffusion(&s, 40.0, DIM).is_err());
        assert!(windowed_diffusion(&s, 5000.0, DIM).is_err());
        assert!(windowed_diffusion(&s, 50.0, DIM).is_ok());
    }

    #[test]
    fn spearman_basics() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[1.0, 4.0, 9.0, 16.0, 25.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[1.0, 1.0, 2.0, 2.0, 3.0]).unwrap() - 0.9486832980505138).abs() < 1e-12);
    }

    #[test]
    fn ensemble_mean_of_matching_series() {
        let a = synthetic(0.2, 0.0, 0.0, 0);
        let mut b = synthetic(0.4, 10.0, 0.0, 0);
        b.truncate(150);
        let m = ensemble_mean(&[a, b]).unwrap();
        assert_eq!(m.len(), 150);
        assert!((m.msd[100] - (0.3 * 1000.0 + 5.0)).abs() < 1e-9);
        let mut c = synthetic(0.2, 0.0, 0.0, 0);
        c.times[3] += 1.0;
        assert!(ensemble_mean(&[synthetic(0.2, 0.0, 0.0, 0), c]).is_err());
    }
}
