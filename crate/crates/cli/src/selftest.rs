//! Quick invariant checks on a clean build; a failing check exits with status 1.

use anyhow::{bail, Result};
use darkspec::analysis::{forward_eigenvalues, reconstruct_hamiltonian};
use darkspec::config::{Preset, RunConfig};
use darkspec::io::GridFile;
use darkspec::liouville::{propagate_density, DensityMatrix, LindbladGenerator, TimeDependentHamiltonian};
use darkspec::model::StateIndex;
use darkspec::pulse::{ensemble_members, EffectiveFields, FieldSource};
use darkspec::response::{averaged_response, TimeGrids};
use darkspec::spectra::{absorption, twod_transform, MapKind, TransformOptions};
use darkspec::spin::{ensemble_average_populations, propagate_amplitudes, strong_drive_reference, uniform_grid, SpinAmplitudes};
use darkspec::units::HBAR_MEV_FS;
use darkspec::C64;
use serde_json::json;

use crate::commands::setup;
use crate::manifest::Run;
use crate::Common;

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check { name, pass: false, detail: format!("error: {e:#}") },
    }
}

struct Detuned {
    amp: f64,
    omega: f64,
}

impl FieldSource for Detuned {
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

fn small(p: Preset, n_hf: usize) -> Result<RunConfig> {
    Ok(RunConfig::load(Some(p), Some(&format!("n_hyperfine = {n_hf}\n")))?)
}

pub fn run(common: &Common) -> Result<()> {
    setup(common)?;
    let checks = vec![
        check("norm conservation over 5000 fs", || {
            let c = small(Preset::Paper2d, 1)?;
            let m = &ensemble_members(&c.system.hyperfine, c.system.rng_seed, &c.pulse, &c.system.lande)[0];
            let grid = uniform_grid(0.0, 5000.0, 50.0);
            let tr = propagate_amplitudes(SpinAmplitudes::singlet(), &m.drive, &c.system.levels, &grid, true)?;
            let drift = tr.amplitudes.unwrap().iter().map(|a| (a.norm_sqr() - 1.0).abs()).fold(0.0, f64::max);
            Ok((drift <= 1e-8, format!("max drift {drift:.2e}")))
        }),
        check("density trace and positivity over 1000 fs", || {
            let c = small(Preset::Paper2d, 1)?;
            let m = &ensemble_members(&c.system.hyperfine, c.system.rng_seed, &c.pulse, &c.system.lande)[0];
            let h = TimeDependentHamiltonian::new(c.system.levels, m.drive);
            let gen = LindbladGenerator::from(c.system.dephasing);
            let mut psi = [C64::new(0.0, 0.0); 5];
            psi[StateIndex::S.idx()] = C64::new(1.0, 0.0);
            let rho = propagate_density(&DensityMatrix::pure(&psi), 0.0, 1000.0, &h, &gen)?;
            let tr = (rho.trace() - 1.0).norm();
            let min = rho.min_eigenvalue();
            Ok((tr <= 1e-10 && min >= -1e-8, format!("trace drift {tr:.2e}, min eigenvalue {min:.2e}")))
        }),
        check("strong-drive two-level closed form", || {
            let omega = 0.006283;
            let d = Detuned { amp: HBAR_MEV_FS * omega, omega };
            let lv = darkspec::model::EnergyLevels { e_singlet: 1400.0, e_triplet: 1400.0 };
            let z = C64::new(0.0, 0.0);
            let init = SpinAmplitudes::from_array([C64::new(1f64.cos(), 0.0), C64::new(0.0, -1f64.sin()), z, z]);
            let grid = uniform_grid(0.0, 2000.0, 5.0);
            let tr = propagate_amplitudes(init, &d, &lv, &grid, true)?;
            let err = grid
                .iter()
                .zip(tr.amplitudes.unwrap())
                .map(|(&t, a)| (a.s.re - strong_drive_reference(t, 1.0, omega)).abs())
                .fold(0.0, f64::max);
            Ok((err < 0.02, format!("max error {err:.2e}")))
        }),
        check("resonant and off-resonant regimes", || {
            let mut out = Vec::new();
            for p in [Preset::Resonant, Preset::OffResonant] {
                let c = small(p, 20)?;
                let tr = ensemble_average_populations(&c.system, &c.pulse, &c.dynamics.grid())?;
                out.push(tr.triplet_total(tr.times.len() - 1));
            }
            Ok((out[0] < 1e-3 && out[1] > 0.05, format!("final triplet {:.2e} / {:.2e}", out[0], out[1])))
        }),
        check("zero-field absorption peak at E_S", || {
            let c = RunConfig::load(None, Some("b0_tesla = 0\nn_hyperfine = 1\nn_phase_samples = 1\n"))?;
            let s = absorption(&c.system, &c.pulse, &c.linear, &c.transform)?;
            let k = s.argmax().unwrap();
            let bin = s.omega[1] - s.omega[0];
            let off = (s.omega[k] - c.system.levels.e_singlet).abs();
            Ok((off <= bin, format!("peak {:.3} meV, bin {bin:.3}", s.omega[k])))
        }),
        check("Hamiltonian reconstruction round trip", || {
            let ev = forward_eigenvalues(1410.0, 1386.0, 6.0, 9.0, 13.0);
            let m = reconstruct_hamiltonian(&ev, 9.0, 13.0)?;
            let err = (m.e_singlet_fit - 1410.0).abs().max((m.e_triplet_fit - 1386.0).abs()).max((m.zeeman - 6.0).abs());
            Ok((err < 1e-6 && !m.flagged, format!("max error {err:.2e} meV")))
        }),
        check("deterministic grid files", || {
            let c = RunConfig::load(Some(Preset::Paper2d), Some("n_hyperfine = 2\nn_phase_samples = 2\n"))?;
            let g = TimeGrids { n1: 16, n3: 16, ..c.grids };
            let bytes = || -> Result<Vec<u8>> {
                let r = averaged_response(&g, &c.system, &c.pulse)?;
                let m = twod_transform(&r, MapKind::TotalReal, &TransformOptions::default())?;
                Ok(GridFile::map(&m, r.omega_ref)?.to_bytes())
            };
            let (a, b) = (bytes()?, bytes()?);
            let back = GridFile::from_bytes(&a)?.to_bytes();
            Ok((a == b && a == back, format!("{} bytes", a.len())))
        }),
    ];
    let mut run = Run::new("selftest", &common.out);
    let mut failed = 0;
    let mut report = Vec::new();
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.pass);
        report.push(json!({ "check": c.name, "pass": c.pass, "detail": c.detail }));
    }
    run.note("checks", json!(report));
    run.finish(None)?;
    if failed > 0 {
        bail!("{failed} of {} self-test checks failed", checks.len());
    }
    Ok(())
}
