//! Quantum wavepackets in moving disordered potentials.
//!
//! A 2D carrier is propagated with the split-operator spectral method
//! through a field of itinerant impurity bumps. The mean-square
//! displacement of the packet gives the diffusion constant `D`, reported
//! alongside the dimensionless `α = D·m/ħ`. Static media localize the
//! packet; moving media restore diffusion with `α` of order one.
//!
//! Modules:
//! - [`units`], [`grid`], [`wave`]: constants, periodic grids, packets
//! - [`disorder`]: impurity sampling, motion and potential rendering
//! - [`propagator`]: Strang-split time stepping
//! - [`observables`]: MSD, IPR, boundary monitor, diffusion fits
//! - [`experiments`]: scenarios, ensembles, sweeps, Einstein relation
//! - [`thouless`]: the chamber random-walk model

pub mod disorder;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod grid;
pub mod observables;
pub mod propagator;
pub mod series_io;
pub mod special;
pub mod thouless;
pub mod units;
pub mod wave;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
