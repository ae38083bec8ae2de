//! The carrier wavefunction on a periodic grid.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone)]
pub struct WaveField {
    pub amplitudes: Vec<Complex64>,
    pub grid: Arc<Grid>,
    /// Simulation time, fs.
    pub time: f64,
}

impl WaveField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self {
            amplitudes: vec![Complex64::default(); grid.len()],
            grid,
            time: 0.0,
        }
    }

    /// `Σ|ψ|²·dx²`.
    pub fn norm(&self) -> f64 {
        norm(self)
    }

    /// Rescales so that the norm is one. Fails on an all-zero field.
    pub fn normalize(&mut self) -> Result<()> {
        let nrm = self.norm();
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(Error::Numerical {
                time: self.time,
                reason: format!("cannot normalize field with norm {nrm}"),
            });
        }
        let s = 1.0 / nrm.sqrt();
        for z in &mut self.amplitudes {
            *z *= s;
        }
        Ok(())
    }

    /// Probability per cell, `|ψ|²·dx²`.
    pub fn cell_probabilities(&self) -> Vec<f64> {
        let area = self.grid.cell_area();
        self.amplitudes.iter().map(|z| z.norm_sqr() * area).collect()
    }
}

pub fn norm(psi: &WaveField) -> f64 {
    psi.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * psi.grid.cell_area()
}

/// Normalized Gaussian packet `exp(−|r−c|²/(4σ0²))·exp(i k0·(r−c))`.
///
/// Displacements from the center use the minimum image, so the packet is
/// smooth across the periodic seam as long as it fits in the box. The width
/// must be resolved by at least two cells and `4σ0` must stay within half a
/// box of the center.
pub fn gaussian_packet(
    grid: Arc<Grid>,
    center: [f64; 2],
    sigma0: f64,
    k0: [f64; 2],
) -> Result<WaveField> {
    if !(sigma0.is_finite() && sigma0 >= 2.0 * grid.dx()) {
        return Err(Error::config(
            "packet.sigma0",
            format!("width {sigma0} nm is under-resolved on dx = {} nm", grid.dx()),
        ));
    }
    if 4.0 * sigma0 > 0.5 * grid.length() {
        return Err(Error::config(
            "packet.sigma0",
            format!(
                "packet support 4σ0 = {} nm is clipped by a {} nm box",
                4.0 * sigma0,
                grid.length()
            ),
        ));
    }
    if !center.iter().all(|c| c.is_finite()) || !k0.iter().all(|k| k.is_finite()) {
        return Err(Error::config("packet", "center and k0 must be finite"));
    }
    let n = grid.n();
    let inv4s2 = 1.0 / (4.0 * sigma0 * sigma0);
    let dxs: Vec<f64> = (0..n)
        .map(|i| grid.min_image(grid.coord(i) - center[0]))
        .collect();
    let dys: Vec<f64> = (0..n)
        .map(|i| grid.min_image(grid.coord(i) - center[1]))
        .collect();
    let mut amplitudes = Vec::with_capacity(grid.len());
    for &dy in &dys {
        for &dx in &dxs {
            let amp = (-(dx * dx + dy * dy) * inv4s2).exp();
            amplitudes.push(Complex64::from_polar(amp, k0[0] * dx + k0[1] * dy));
        }
    }
    let mut psi = WaveField {
        amplitudes,
        grid,
        time: 0.0,
    };
    psi.normalize()?;
    Ok(psi)
}
