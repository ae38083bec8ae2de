//! Two-dimensional complex FFT on square row-major buffers.
//!
//! The transform runs rows, transposes, runs rows again. The kinetic step
//! only needs element-wise multiplication in k-space, so [`Fft2d::forward_t`]
//! leaves the spectrum transposed and [`Fft2d::inverse_t`] takes it back,
//! saving two transposes per propagation step. Any k-space multiplier that is
//! symmetric under `kx ↔ ky` can be applied to the transposed layout as is.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2d {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft2d {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Forward transform; the result is stored transposed (`[kx][ky]`).
    pub fn forward_t(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n * self.n);
        self.forward.process_with_scratch(buf, &mut self.scratch);
        self.transpose(buf);
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }

    /// Inverse of [`Self::forward_t`], including the `1/n²` normalization.
    pub fn inverse_t(&mut self, buf: &mut [Complex64]) {
        self.inverse_t_unscaled(buf);
        let scale = 1.0 / (self.n * self.n) as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// [`Self::inverse_t`] without the `1/n²` factor, for callers that fold
    /// it into a k-space multiplier.
    pub fn inverse_t_unscaled(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n * self.n);
        self.inverse.process_with_scratch(buf, &mut self.scratch);
        self.transpose(buf);
        self.inverse.process_with_scratch(buf, &mut self.scratch);
    }

    /// Forward transform in natural `[ky][kx]` layout.
    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.forward_t(buf);
        self.transpose(buf);
    }

    /// Inverse transform from natural layout, normalized.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.transpose(buf);
        self.inverse_t(buf);
    }

    /// In-place transpose: off-diagonal tiles are swapped pairwise, diagonal
    /// tiles transposed within themselves.
    fn transpose(&self, buf: &mut [Complex64]) {
        let n = self.n;
        const B: usize = 8;
        for ib in (0..n).step_by(B) {
            for i in ib..ib + B {
                for j in i + 1..ib + B {
                    buf.swap(i * n + j, j * n + i);
                }
            }
            for jb in (ib + B..n).step_by(B) {
                for i in ib..ib + B {
                    for j in jb..jb + B {
                        buf.swap(i * n + j, j * n + i);
                    }
                }
            }
        }
    }
}
