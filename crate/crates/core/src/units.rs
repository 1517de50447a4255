//! Physical constants in the working unit system: energies in meV, times in fs,
//! fields in tesla.

use crate::error::{Error, Result};

/// Reduced Planck constant, meV·fs.
pub const HBAR_MEV_FS: f64 = 658.211_956_9;
/// Bohr magneton, meV/T.
pub const MU_B_MEV_PER_T: f64 = 0.057_883_818_06;
/// Planck constant times speed of light, eV·nm.
pub const HC_EV_NM: f64 = 1239.841_984;

/// Bundle of the constants so they can be passed around and reported in manifests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitConstants {
    pub hbar: f64,
    pub mu_b: f64,
    pub hc: f64,
}

impl Default for UnitConstants {
    fn default() -> Self {
        UnitConstants { hbar: HBAR_MEV_FS, mu_b: MU_B_MEV_PER_T, hc: HC_EV_NM }
    }
}

/// Photon energy in eV for a vacuum wavelength in nm.
pub fn wavelength_to_energy(nm: f64) -> Result<f64> {
    if !(nm.is_finite() && nm > 0.0) {
        return Err(Error::Domain(format!("wavelength must be positive and finite, got {nm}")));
    }
    Ok(HC_EV_NM / nm)
}

/// Vacuum wavelength in nm for a photon energy in eV.
pub fn energy_to_wavelength(ev: f64) -> Result<f64> {
    if !(ev.is_finite() && ev > 0.0) {
        return Err(Error::Domain(format!("energy must be positive and finite, got {ev}")));
    }
    Ok(HC_EV_NM / ev)
}

/// Wavelength in nm for an energy in meV, used when writing dual-unit axes.
/// Non-positive energies map to NaN rather than failing, since rotating-frame
/// axes can cross zero.
pub fn mev_to_nm(mev: f64) -> f64 {
    if mev > 0.0 { 1000.0 * HC_EV_NM / mev } else { f64::NAN }
}

/// Angular frequency in rad/fs for a frequency given in THz.
pub fn thz_to_rad_per_fs(f_thz: f64) -> f64 {
    2.0 * std::f64::consts::PI * f_thz * 1e-3
}
