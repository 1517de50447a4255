//! The two-component THz magnetic pulse and the effective couplings it induces
//! on the electron-hole spin pair.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ConfigReport, Result};
use crate::model::{check_finite, check_nonneg, HyperfineConfig, LandeFactors};
use crate::units::MU_B_MEV_PER_T;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseConfig {
    /// Peak field, T.
    pub b0: f64,
    /// Carrier angular frequency, rad/fs.
    pub omega: f64,
    /// Envelope center, fs.
    pub t_center: f64,
    /// Envelope width, fs.
    pub sigma_t: f64,
    /// Global carrier phase, rad, in [0, 2π).
    pub phase: f64,
    /// Mean spin-field coupling in meV/T. `None` means μ_B·g/2 per carrier.
    pub coupling_scale: Option<f64>,
    /// Points of the uniform phase-averaging grid.
    pub n_phase: usize,
}

impl PulseConfig {
    /// Electron and hole couplings in meV/T.
    ///
    /// An explicit scale sets the mean coupling and keeps the g_e : g_h ratio.
    pub fn carrier_couplings(&self, lande: &LandeFactors) -> (f64, f64) {
        match self.coupling_scale {
            Some(s) => {
                let g = lande.mean();
                (s * lande.g_e / g, s * lande.g_h / g)
            }
            None => (0.5 * MU_B_MEV_PER_T * lande.g_e, 0.5 * MU_B_MEV_PER_T * lande.g_h),
        }
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let x = (t - self.t_center) / self.sigma_t;
        (-0.5 * x * x).exp()
    }

    /// Phase points φ_j = φ + 2πj/n. The upper half of an even grid is written
    /// as the lower half with the field negated, which is the same pulse.
    pub fn phase_grid(&self) -> Vec<PhaseSample> {
        let n = self.n_phase.max(1);
        let half = if n % 2 == 0 { n / 2 } else { n };
        (0..n)
            .map(|j| {
                let (k, sign) = if j < half { (j, 1.0) } else { (j - half, -1.0) };
                PhaseSample { phase: wrap_phase(self.phase + 2.0 * PI * k as f64 / n as f64), sign }
            })
            .collect()
    }
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI { 0.0 } else { w }
}

pub(crate) fn pulse_diagnostics(p: &PulseConfig, lande: &LandeFactors, report: &mut ConfigReport) {
    check_nonneg(report, "b0_tesla", p.b0, "field amplitude");
    check_nonneg(report, "omega_thz", p.omega, "frequency");
    check_finite(report, "t_center_fs", p.t_center);
    if check_finite(report, "sigma_t_fs", p.sigma_t) && p.sigma_t <= 0.0 {
        report.push("sigma_t_fs", format!("envelope width must be positive ({})", p.sigma_t));
    }
    if check_finite(report, "phase_rad", p.phase) && !(0.0..2.0 * PI).contains(&p.phase) {
        report.push("phase_rad", "phase must lie in [0, 2pi)");
    }
    if let Some(s) = p.coupling_scale {
        check_finite(report, "coupling_scale_mev_per_tesla", s);
        if lande.mean() == 0.0 {
            report.push("coupling_scale_mev_per_tesla", "needs a nonzero mean Lande factor");
        }
    }
    if p.n_phase == 0 {
        report.push("n_phase_samples", "phase grid must have >= 1 point");
    }
}

pub fn validate_pulse(p: PulseConfig, lande: &LandeFactors) -> Result<PulseConfig> {
    let mut report = ConfigReport::default();
    pulse_diagnostics(&p, lande, &mut report);
    report.into_result()?;
    Ok(p)
}

/// Field in T as (b_x, b_z). The x component lags z by π/2.
pub fn field_components(t: f64, p: &PulseConfig) -> (f64, f64) {
    field_components_signed(t, p, p.phase, 1.0)
}

fn field_components_signed(t: f64, p: &PulseConfig, phase: f64, sign: f64) -> (f64, f64) {
    let amp = sign * p.b0 * p.envelope(t);
    let (s, c) = (p.omega * t + phase).sin_cos();
    (-amp * c, amp * s)
}

/// Static hyperfine energies of one trajectory, meV.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperfineSample {
    pub i_e: f64,
    pub i_h: f64,
}

/// One point of the phase-averaging grid; `sign = -1` means the field is negated.
/// Ensemble members on negated points also negate their hyperfine draw, which
/// makes them exact mirror images (T+ ↔ T−) of the matching positive point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSample {
    pub phase: f64,
    pub sign: f64,
}

/// Couplings entering the spin Hamiltonian, all in meV.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EffectiveFields {
    /// (B_e − B_h)/2, the S–T0 coupling.
    pub delta0: f64,
    /// (B_e + B_h)/2, the T± Zeeman shift.
    pub b_bar: f64,
    /// Transverse coupling from the mean carrier coupling.
    pub b_x: f64,
}

pub fn effective_fields(
    t: f64,
    p: &PulseConfig,
    lande: &LandeFactors,
    hf: &HyperfineSample,
) -> EffectiveFields {
    PulseDrive::new(p, lande, *hf, PhaseSample { phase: p.phase, sign: 1.0 }).fields(t)
}

/// Anything that supplies effective couplings as a function of time.
pub trait FieldSource: Sync {
    fn fields(&self, t: f64) -> EffectiveFields;
    /// Highest rate the couplings oscillate at, rad/fs.
    fn carrier_omega(&self) -> f64;
    /// Componentwise upper bounds on |delta0|, |b_bar| and |b_x| over all times, meV.
    fn coupling_bound(&self) -> EffectiveFields;
}

/// Largest single coupling entering the Hamiltonian, including the √2 on the
/// transverse terms and a static detuning.
pub fn max_coupling(bound: &EffectiveFields, detuning: f64) -> f64 {
    detuning
        .abs()
        .max(bound.delta0.abs())
        .max(bound.b_bar.abs())
        .max(std::f64::consts::SQRT_2 * bound.b_x.abs())
}

/// The pulse of one ensemble member with precomputed carrier couplings.
#[derive(Debug, Clone, Copy)]
pub struct PulseDrive {
    pub pulse: PulseConfig,
    pub phase: PhaseSample,
    pub hf: HyperfineSample,
    pub c_e: f64,
    pub c_h: f64,
}

impl PulseDrive {
    pub fn new(p: &PulseConfig, lande: &LandeFactors, hf: HyperfineSample, phase: PhaseSample) -> Self {
        let (c_e, c_h) = p.carrier_couplings(lande);
        PulseDrive { pulse: *p, phase, hf, c_e, c_h }
    }
}

impl FieldSource for PulseDrive {
    fn fields(&self, t: f64) -> EffectiveFields {
        let (bx, bz) = field_components_signed(t, &self.pulse, self.phase.phase, self.phase.sign);
        let be = -self.c_e * bz + self.hf.i_e;
        let bh = -self.c_h * bz + self.hf.i_h;
        EffectiveFields { delta0: 0.5 * (be - bh), b_bar: 0.5 * (be + bh), b_x: 0.5 * (self.c_e + self.c_h) * bx }
    }

    fn carrier_omega(&self) -> f64 {
        self.pulse.omega
    }

    fn coupling_bound(&self) -> EffectiveFields {
        let b0 = self.pulse.b0;
        EffectiveFields {
            delta0: 0.5 * ((self.c_e - self.c_h).abs() * b0 + (self.hf.i_e - self.hf.i_h).abs()),
            b_bar: 0.5 * ((self.c_e + self.c_h).abs() * b0 + (self.hf.i_e + self.hf.i_h).abs()),
            b_x: 0.5 * (self.c_e + self.c_h).abs() * b0,
        }
    }
}

/// Draw i.i.d. per-carrier hyperfine energies from N(0, σ²).
pub fn draw_hyperfine_ensemble(cfg: &HyperfineConfig, seed: u64) -> Vec<HyperfineSample> {
    let n = cfg.n_samples;
    if cfg.sigma_hf == 0.0 {
        return vec![HyperfineSample::default(); n];
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, cfg.sigma_hf).expect("validated width");
    (0..n)
        .map(|_| HyperfineSample { i_e: normal.sample(&mut rng), i_h: normal.sample(&mut rng) })
        .collect()
}

/// One trajectory of the hyperfine × phase outer product.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleMember {
    pub index: usize,
    pub drive: PulseDrive,
}

/// Members ordered hyperfine-major: index = i_hf · n_phase + i_phase.
///
/// Since the hyperfine distribution is symmetric, pairing negated phase points
/// with the negated draw leaves the average unbiased.
pub fn ensemble_members(
    hyperfine: &HyperfineConfig,
    seed: u64,
    pulse: &PulseConfig,
    lande: &LandeFactors,
) -> Vec<EnsembleMember> {
    let samples = draw_hyperfine_ensemble(hyperfine, seed);
    let phases = pulse.phase_grid();
    let mut out = Vec::with_capacity(samples.len() * phases.len());
    for hf in &samples {
        for ph in &phases {
            let h = if ph.sign < 0.0 { HyperfineSample { i_e: -hf.i_e, i_h: -hf.i_h } } else { *hf };
            out.push(EnsembleMember { index: out.len(), drive: PulseDrive::new(pulse, lande, h, *ph) });
        }
    }
    out
}
