//! Square periodic grids and their wavenumber axes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A periodic `n × n` grid covering a box of side `length` nm.
///
/// Cells are indexed row-major as `iy * n + ix`, with cell `(ix, iy)` at
/// position `(ix·dx, iy·dx)`. Wavenumbers follow the usual FFT ordering:
/// index `j < n/2` carries `2πj/L`, the upper half carries `2π(j − n)/L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    length: f64,
    dx: f64,
    k_axis: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::config(
                "grid.n",
                format!("{n} is not a power of two of at least 16"),
            ));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::config(
                "grid.length",
                format!("box length must be positive, got {length}"),
            ));
        }
        let dx = length / n as f64;
        let k_axis = (0..n)
            .map(|i| {
                let j = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
                2.0 * PI * j / length
            })
            .collect();
        Ok(Self {
            n,
            length,
            dx,
            k_axis,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dx
    }

    pub fn k_axis(&self) -> &[f64] {
        &self.k_axis
    }

    /// Nyquist wavenumber π/dx.
    pub fn k_max(&self) -> f64 {
        PI / self.dx
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    /// Wraps a coordinate into `[0, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let w = x.rem_euclid(self.length);
        // rem_euclid can round up to exactly L for tiny negative inputs
        if w >= self.length {
            0.0
        } else {
            w
        }
    }

    /// Minimum-image form of a displacement, in `[-L/2, L/2)`.
    pub fn min_image(&self, d: f64) -> f64 {
        let half = 0.5 * self.length;
        (d + half).rem_euclid(self.length) - half
    }
}

/// Convenience constructor matching the configuration vocabulary.
pub fn make_grid(n: usize, length: f64) -> Result<Grid> {
    Grid::new(n, length)
}
