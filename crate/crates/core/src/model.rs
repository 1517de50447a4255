//! The five-level state space and the validated physical parameter set.

use crate::error::{ConfigReport, Result};
use crate::{Mat5, C64};

/// Basis ordering shared by every matrix and every output file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateIndex {
    G = 0,
    S = 1,
    T0 = 2,
    Tplus = 3,
    Tminus = 4,
}

impl StateIndex {
    pub const ALL: [StateIndex; 5] =
        [StateIndex::G, StateIndex::S, StateIndex::T0, StateIndex::Tplus, StateIndex::Tminus];

    pub fn idx(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            StateIndex::G => "g",
            StateIndex::S => "S",
            StateIndex::T0 => "T0",
            StateIndex::Tplus => "T+",
            StateIndex::Tminus => "T-",
        }
    }
}

/// Bare energies in meV; the three triplet sublevels are degenerate at zero field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLevels {
    pub e_singlet: f64,
    pub e_triplet: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandeFactors {
    pub g_e: f64,
    pub g_h: f64,
}

impl LandeFactors {
    pub fn mean(&self) -> f64 {
        0.5 * (self.g_e + self.g_h)
    }
}

/// Gaussian hyperfine energy per carrier, drawn once per trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperfineConfig {
    pub sigma_hf: f64,
    pub n_samples: usize,
}

/// Pure-dephasing rates in 1/fs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingConfig {
    pub gamma_s: f64,
    pub gamma_t: f64,
}

/// Transition dipole between the ground state and the singlet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleOperator {
    pub mu: f64,
}

impl Default for DipoleOperator {
    fn default() -> Self {
        DipoleOperator { mu: 1.0 }
    }
}

impl DipoleOperator {
    /// μ|S⟩⟨g| + h.c. in the five-level basis.
    pub fn matrix(&self) -> Mat5 {
        let mut m = Mat5::zeros();
        let (g, s) = (StateIndex::G.idx(), StateIndex::S.idx());
        m[(g, s)] = C64::new(self.mu, 0.0);
        m[(s, g)] = C64::new(self.mu, 0.0);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub levels: EnergyLevels,
    pub lande: LandeFactors,
    pub hyperfine: HyperfineConfig,
    pub dephasing: DephasingConfig,
    pub dipole: DipoleOperator,
    pub rng_seed: u64,
}

impl SystemConfig {
    /// Reference energy of the response rotating frame.
    pub fn omega_ref(&self) -> f64 {
        0.5 * (self.levels.e_singlet + self.levels.e_triplet)
    }
}

pub(crate) fn check_finite(report: &mut ConfigReport, field: &str, v: f64) -> bool {
    if v.is_finite() {
        true
    } else {
        report.push(field, format!("must be finite, got {v}"));
        false
    }
}

pub(crate) fn check_nonneg(report: &mut ConfigReport, field: &str, v: f64, what: &str) {
    if check_finite(report, field, v) && v < 0.0 {
        report.push(field, format!("negative {what} ({v})"));
    }
}

/// Collect every violated invariant into one report.
pub fn system_diagnostics(cfg: &SystemConfig, report: &mut ConfigReport) {
    check_finite(report, "e_singlet_mev", cfg.levels.e_singlet);
    check_finite(report, "e_triplet_mev", cfg.levels.e_triplet);
    check_finite(report, "g_e", cfg.lande.g_e);
    check_finite(report, "g_h", cfg.lande.g_h);
    check_nonneg(report, "sigma_hf_mev", cfg.hyperfine.sigma_hf, "hyperfine width");
    if cfg.hyperfine.n_samples == 0 {
        report.push("n_hyperfine", "ensemble size must be >= 1");
    }
    check_nonneg(report, "gamma_s_per_fs", cfg.dephasing.gamma_s, "dephasing rate");
    check_nonneg(report, "gamma_t_per_fs", cfg.dephasing.gamma_t, "dephasing rate");
    check_finite(report, "dipole_mu", cfg.dipole.mu);
}

/// Validate a system configuration. Values are already in internal units, so a
/// valid config comes back unchanged and validation is idempotent.
pub fn validate_config(cfg: SystemConfig) -> Result<SystemConfig> {
    let mut report = ConfigReport::default();
    system_diagnostics(&cfg, &mut report);
    report.into_result()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SystemConfig {
        SystemConfig {
            levels: EnergyLevels { e_singlet: 1400.0, e_triplet: 1390.0 },
            lande: LandeFactors { g_e: 2.0, g_h: 2.001 },
            hyperfine: HyperfineConfig { sigma_hf: 1.0, n_samples: 100 },
            dephasing: DephasingConfig { gamma_s: 1.0 / 80.0, gamma_t: 1.0 / 200.0 },
            dipole: DipoleOperator::default(),
            rng_seed: 7,
        }
    }

    #[test]
    fn accepts_reference_levels() {
        assert_eq!(validate_config(base()).unwrap(), base());
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate_config(base()).unwrap();
        assert_eq!(validate_config(once).unwrap(), once);
    }

    #[test]
    fn reports_every_violation() {
        let mut c = base();
        c.dephasing.gamma_s = -0.1;
        c.hyperfine.n_samples = 0;
        c.levels.e_triplet = f64::NAN;
        match validate_config(c) {
            Err(crate::Error::Config(r)) => {
                assert_eq!(r.items.len(), 3);
                assert!(r.items.iter().any(|d| d.message.contains("negative dephasing rate")));
                assert!(r.items.iter().any(|d| d.message.contains("ensemble size must be >= 1")));
                assert!(r.has_field("e_triplet_mev"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn dipole_couples_only_ground_and_singlet() {
        let m = DipoleOperator { mu: 0.7 }.matrix();
        let nonzero: Vec<_> = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|&(i, j)| m[(i, j)] != C64::new(0.0, 0.0))
            .collect();
        assert_eq!(nonzero, vec![(0, 1), (1, 0)]);
        assert_eq!(m[(0, 1)], C64::new(0.7, 0.0));
    }

    #[test]
    fn basis_order_is_fixed() {
        let idx: Vec<usize> = StateIndex::ALL.iter().map(|s| s.idx()).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }
}
