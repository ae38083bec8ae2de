//! Physical constants in the eV / fs / nm unit system.
//!
//! Energies are in eV, times in fs, lengths in nm, and masses in
//! eV·fs²/nm² so that `E = m v² / 2` holds without conversion factors.

use serde::{Deserialize, Serialize};

/// Reduced Planck constant, eV·fs.
pub const HBAR: f64 = 0.658_211_956_9;

/// Boltzmann constant, eV/K.
pub const K_B: f64 = 8.617_333_262e-5;

/// Electron rest mass, eV·fs²/nm² (511 keV divided by c² in nm²/fs²).
pub const M_E: f64 = 5.685_630;

/// Speed conversion: 1 m/s = 1e-6 nm/fs.
pub const NM_PER_FS_PER_M_PER_S: f64 = 1e-6;

/// The constants bundled as a value, for places that record them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub k_b: f64,
    pub m_e: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: HBAR,
            k_b: K_B,
            m_e: M_E,
        }
    }
}

impl PhysicalConstants {
    /// ħ/m_e in nm²/fs, the Planckian diffusion unit for a bare electron.
    pub fn planckian_unit(&self) -> f64 {
        self.hbar / self.m_e
    }
}

/// Converts a carrier or impurity mass given in multiples of `m_e`.
pub fn electron_masses(multiple: f64) -> f64 {
    multiple * M_E
}

/// Converts a diffusion constant from nm²/fs to cm²/s.
pub fn nm2_per_fs_to_cm2_per_s(d: f64) -> f64 {
    // 1 nm² = 1e-14 cm², 1 fs = 1e-15 s
    d * 10.0
}
