//! Coherent singlet-triplet amplitude dynamics of one electron-hole pair.
//!
//! Amplitudes live in the frame rotating at E_T, so the only static energy
//! left is the detuning E_S − E_T on the singlet.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{EnergyLevels, SystemConfig};
use crate::ode::{step_cap, Dopri, OdeOptions, OdeSystem};
use crate::pulse::{ensemble_members, max_coupling, FieldSource, PulseConfig};
use crate::units::HBAR_MEV_FS;
use crate::C64;

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinAmplitudes {
    pub s: C64,
    pub t0: C64,
    pub t_plus: C64,
    pub t_minus: C64,
}

impl SpinAmplitudes {
    pub fn singlet() -> Self {
        let z = C64::new(0.0, 0.0);
        SpinAmplitudes { s: C64::new(1.0, 0.0), t0: z, t_plus: z, t_minus: z }
    }

    pub fn from_array(a: [C64; 4]) -> Self {
        SpinAmplitudes { s: a[0], t0: a[1], t_plus: a[2], t_minus: a[3] }
    }

    pub fn to_array(&self) -> [C64; 4] {
        [self.s, self.t0, self.t_plus, self.t_minus]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.to_array().iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn populations(&self) -> [f64; 4] {
        self.to_array().map(|c| c.norm_sqr())
    }

    /// Amplitudes with the e^{−iE_T t/ħ} carrier restored.
    pub fn lab_frame(&self, t: f64, levels: &EnergyLevels) -> SpinAmplitudes {
        let ph = C64::from_polar(1.0, -levels.e_triplet * t / HBAR_MEV_FS);
        SpinAmplitudes::from_array(self.to_array().map(|c| c * ph))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Populations of S, T0, T+, T− in that order.
    pub populations: [Vec<f64>; 4],
    pub amplitudes: Option<Vec<SpinAmplitudes>>,
}

impl Trajectory {
    pub fn triplet_total(&self, k: usize) -> f64 {
        self.populations[1][k] + self.populations[2][k] + self.populations[3][k]
    }
}

/// The excited-manifold Hamiltonian in the E_T frame, ordering (S, T0, T+, T−), meV.
pub fn spin_hamiltonian<F: FieldSource + ?Sized>(t: f64, fields: &F, levels: &EnergyLevels) -> [[f64; 4]; 4] {
    let f = fields.fields(t);
    let d = levels.e_singlet - levels.e_triplet;
    let b = SQRT2 * f.b_x;
    [
        [d, f.delta0, 0.0, 0.0],
        [f.delta0, 0.0, b, b],
        [0.0, b, f.b_bar, 0.0],
        [0.0, b, 0.0, -f.b_bar],
    ]
}

struct SpinOde<'a, F: ?Sized> {
    fields: &'a F,
    detuning: f64,
}

// Integrated in the interaction picture of the static detuning,
// z_S = e^{i(E_S−E_T)t/ħ}·S, so a coupling-free pair has an identically zero
// right-hand side and its populations are frozen exactly.
impl<F: FieldSource + ?Sized> OdeSystem for SpinOde<'_, F> {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let f = self.fields.fields(t);
        let b = SQRT2 * f.b_x;
        let k = C64::new(0.0, -1.0 / HBAR_MEV_FS);
        let ph = C64::from_polar(1.0, self.detuning * t / HBAR_MEV_FS);
        dy[0] = k * (y[1] * ph * f.delta0);
        dy[1] = k * (y[0] * ph.conj() * f.delta0 + (y[2] + y[3]) * b);
        dy[2] = k * (y[1] * b + y[2] * f.b_bar);
        dy[3] = k * (y[1] * b - y[3] * f.b_bar);
    }
}

fn to_picture(a: [C64; 4], t: f64, detuning: f64) -> [C64; 4] {
    let mut z = a;
    z[0] *= C64::from_polar(1.0, detuning * t / HBAR_MEV_FS);
    z
}

fn from_picture(z: [C64; 4], t: f64, detuning: f64) -> SpinAmplitudes {
    let mut a = z;
    a[0] *= C64::from_polar(1.0, -detuning * t / HBAR_MEV_FS);
    SpinAmplitudes::from_array(a)
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::Domain("time grid is empty".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Integrate the amplitude equations, sampling at every point of `t_grid`.
/// The state `init` is taken to hold at `t_grid[0]`.
pub fn propagate_amplitudes<F: FieldSource + ?Sized>(
    init: SpinAmplitudes,
    fields: &F,
    levels: &EnergyLevels,
    t_grid: &[f64],
    keep_amplitudes: bool,
) -> Result<Trajectory> {
    check_grid(t_grid)?;
    if !((init.norm_sqr() - 1.0).abs() <= 1e-12) {
        return Err(Error::Domain(format!("initial state not normalized (|psi|^2 = {})", init.norm_sqr())));
    }
    let detuning = levels.e_singlet - levels.e_triplet;
    let ode = SpinOde { fields, detuning };
    let scale = max_coupling(&fields.coupling_bound(), detuning);
    // norm must hold to 1e-8 over 5000 fs at 100 meV couplings
    let opts = OdeOptions { rtol: 1e-10, atol: 1e-13, max_step: step_cap(fields.carrier_omega(), scale), ..Default::default() };
    let mut ig = Dopri::new(4, opts);
    let mut y = to_picture(init.to_array(), t_grid[0], detuning);
    let n = t_grid.len();
    let mut pops: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    let mut amps = keep_amplitudes.then(|| Vec::with_capacity(n));
    for (k, &t) in t_grid.iter().enumerate() {
        if k > 0 {
            ig.integrate(&ode, t_grid[k - 1], t, &mut y)?;
        }
        let a = from_picture(y, t, detuning);
        let drift = (a.norm_sqr() - 1.0).abs();
        if drift > 1e-6 {
            return Err(Error::Integration { t, reason: format!("norm drift {drift:e} exceeds 1e-6") });
        }
        for (p, v) in pops.iter_mut().zip(y.map(|c| c.norm_sqr())) {
            p.push(v);
        }
        if let Some(am) = amps.as_mut() {
            am.push(a);
        }
    }
    Ok(Trajectory { times: t_grid.to_vec(), populations: pops, amplitudes: amps })
}

/// Mean populations over the hyperfine × phase ensemble, starting from the singlet.
pub fn ensemble_average_populations(cfg: &SystemConfig, p: &PulseConfig, t_grid: &[f64]) -> Result<Trajectory> {
    check_grid(t_grid)?;
    let members = ensemble_members(&cfg.hyperfine, cfg.rng_seed, p, &cfg.lande);
    let runs: Vec<Result<Trajectory>> = members
        .par_iter()
        .map(|m| propagate_amplitudes(SpinAmplitudes::singlet(), &m.drive, &cfg.levels, t_grid, false))
        .collect();
    let n = t_grid.len();
    let mut sum: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    for (i, r) in runs.into_iter().enumerate() {
        let tr = r.map_err(|e| match e {
            Error::Integration { t, reason } => Error::Integration { t, reason: format!("ensemble member {i}: {reason}") },
            other => other,
        })?;
        for (acc, pop) in sum.iter_mut().zip(tr.populations.iter()) {
            for (a, v) in acc.iter_mut().zip(pop) {
                *a += v;
            }
        }
    }
    let inv = 1.0 / members.len() as f64;
    for acc in sum.iter_mut() {
        for a in acc.iter_mut() {
            *a *= inv;
        }
    }
    Ok(Trajectory { times: t_grid.to_vec(), populations: sum, amplitudes: None })
}

/// Closed form for a two-level pair driven far above its splitting:
/// cos((B0/ω)·cos ωt).
pub fn strong_drive_reference(t: f64, ratio: f64, omega: f64) -> f64 {
    (ratio * (omega * t).cos()).cos()
}

/// Uniform grid `start, start + dt, ...` up to and including `end`.
pub fn uniform_grid(start: f64, end: f64, dt: f64) -> Vec<f64> {
    let n = ((end - start) / dt + 1e-9).floor() as usize + 1;
    (0..n).map(|k| start + k as f64 * dt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use crate::pulse::*;
    use crate::units::thz_to_rad_per_fs;

    fn levels() -> EnergyLevels {
        EnergyLevels { e_singlet: 1400.0, e_triplet: 1398.0 }
    }

    fn drive(b0: f64, hf: HyperfineSample) -> PulseDrive {
        let p = PulseConfig {
            b0,
            omega: thz_to_rad_per_fs(1.0),
            t_center: 2000.0,
            sigma_t: 600.0,
            phase: 0.3,
            coupling_scale: Some(4.0),
            n_phase: 1,
        };
        PulseDrive::new(&p, &LandeFactors { g_e: 1.8, g_h: 2.2 }, hf, PhaseSample { phase: 0.3, sign: 1.0 })
    }

    #[test]
    fn field_free_singlet_only_rotates() {
        let grid = uniform_grid(0.0, 3000.0, 10.0);
        let tr = propagate_amplitudes(SpinAmplitudes::singlet(), &drive(0.0, Default::default()), &levels(), &grid, true)
            .unwrap();
        let amps = tr.amplitudes.as_ref().unwrap();
        for (k, &t) in grid.iter().enumerate() {
            assert!((tr.populations[0][k] - 1.0).abs() < 1e-12);
            let expect = C64::from_polar(1.0, -2.0 * t / HBAR_MEV_FS);
            assert!((amps[k].s - expect).norm() < 1e-8);
        }
    }

    #[test]
    fn zero_coupling_freezes_populations() {
        let grid = uniform_grid(0.0, 4000.0, 25.0);
        let init = SpinAmplitudes::from_array([
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.5),
            C64::new(0.5, 0.0),
            C64::new(-0.5, 0.0),
        ]);
        let tr = propagate_amplitudes(init, &drive(0.0, Default::default()), &levels(), &grid, false).unwrap();
        for s in 0..4 {
            for v in &tr.populations[s] {
                assert!((v - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn driven_norm_is_conserved() {
        let grid = uniform_grid(0.0, 5000.0, 5.0);
        let hf = HyperfineSample { i_e: 0.8, i_h: -0.3 };
        let tr = propagate_amplitudes(SpinAmplitudes::singlet(), &drive(1.0, hf), &levels(), &grid, true).unwrap();
        for a in tr.amplitudes.unwrap() {
            assert!((a.norm_sqr() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn propagation_is_linear() {
        let grid = uniform_grid(0.0, 3000.0, 50.0);
        let hf = HyperfineSample { i_e: 0.2, i_h: 0.1 };
        let d = drive(1.0, hf);
        let psi1 = SpinAmplitudes::singlet();
        let psi2 = SpinAmplitudes::from_array([C64::new(0.0, 0.0), C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0)]);
        let (al, be) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let mix = SpinAmplitudes::from_array(std::array::from_fn(|i| al * psi1.to_array()[i] + be * psi2.to_array()[i]));
        let run = |s| propagate_amplitudes(s, &d, &levels(), &grid, true).unwrap().amplitudes.unwrap();
        let (a1, a2, am) = (run(psi1), run(psi2), run(mix));
        for k in 0..grid.len() {
            for i in 0..4 {
                let lin = al * a1[k].to_array()[i] + be * a2[k].to_array()[i];
                assert!((lin - am[k].to_array()[i]).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn rejects_unnormalized_or_unsorted_input() {
        let d = drive(1.0, Default::default());
        let mut bad = SpinAmplitudes::singlet();
        bad.s = C64::new(1.1, 0.0);
        assert!(propagate_amplitudes(bad, &d, &levels(), &[0.0, 1.0], false).is_err());
        assert!(propagate_amplitudes(SpinAmplitudes::singlet(), &d, &levels(), &[0.0, 0.0], false).is_err());
    }

    #[test]
    fn strong_drive_reference_limits() {
        assert_eq!(strong_drive_reference(123.0, 0.0, 0.1), 1.0);
        assert_eq!(strong_drive_reference(0.0, 0.7, 0.1), 0.7f64.cos());
    }

    struct StrongDrive {
        amp: f64,
        omega: f64,
    }

    impl FieldSource for StrongDrive {
        fn fields(&self, t: f64) -> EffectiveFields {
            EffectiveFields { delta0: -self.amp * (self.omega * t).sin(), b_bar: 0.0, b_x: 0.0 }
        }
        fn carrier_omega(&self) -> f64 {
            self.omega
        }
        fn coupling_bound(&self) -> EffectiveFields {
            EffectiveFields { delta0: self.amp, b_bar: 0.0, b_x: 0.0 }
        }
    }

    #[test]
    fn two_level_reduction_follows_closed_form() {
        let omega = 0.006283;
        let ratio = 1.0;
        let drive = StrongDrive { amp: HBAR_MEV_FS * omega * ratio, omega };
        let lv = EnergyLevels { e_singlet: 1400.0, e_triplet: 1400.0 };
        let init = SpinAmplitudes::from_array([
            C64::new(ratio.cos(), 0.0),
            C64::new(0.0, -ratio.sin()),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ]);
        let grid = uniform_grid(0.0, 2000.0, 1.0);
        let tr = propagate_amplitudes(init, &drive, &lv, &grid, true).unwrap();
        let worst = grid
            .iter()
            .zip(tr.amplitudes.unwrap())
            .map(|(&t, a)| (a.s.re - strong_drive_reference(t, ratio, omega)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn single_member_ensemble_is_the_trajectory() {
        let cfg = SystemConfig {
            levels: levels(),
            lande: LandeFactors { g_e: 1.8, g_h: 2.2 },
            hyperfine: HyperfineConfig { sigma_hf: 0.5, n_samples: 1 },
            dephasing: DephasingConfig { gamma_s: 0.0, gamma_t: 0.0 },
            dipole: DipoleOperator::default(),
            rng_seed: 11,
        };
        let p = drive(1.0, Default::default()).pulse;
        let grid = uniform_grid(0.0, 4000.0, 20.0);
        let avg = ensemble_average_populations(&cfg, &p, &grid).unwrap();
        let m = ensemble_members(&cfg.hyperfine, cfg.rng_seed, &p, &cfg.lande);
        let one = propagate_amplitudes(SpinAmplitudes::singlet(), &m[0].drive, &cfg.levels, &grid, false).unwrap();
        assert_eq!(avg.populations, one.populations);
    }
}
