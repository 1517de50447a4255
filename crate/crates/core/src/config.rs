//! Flat `key = value` run configuration with named presets.
//!
//! A run is described by one merged document: the built-in defaults, then a
//! preset, then the user's file, each overriding the previous one key by key.
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{ConfigReport, Error, Result};
use crate::model::{
    system_diagnostics, DephasingConfig, DipoleOperator, EnergyLevels, HyperfineConfig, LandeFactors, SystemConfig,
};
use crate::pulse::{pulse_diagnostics, PulseConfig};
use crate::response::{LinearGrid, TimeGrids};
use crate::spectra::TransformOptions;
use crate::units::thz_to_rad_per_fs;

/// Every accepted key with its built-in default.
const DEFAULTS: &[(&str, &str)] = &[
    ("e_singlet_mev", "1400"),
    ("e_triplet_mev", "1390"),
    ("g_e", "1.8"),
    ("g_h", "2.2"),
    ("sigma_hf_mev", "1.0"),
    ("n_hyperfine", "100"),
    ("gamma_s_per_fs", "0.0125"),
    ("gamma_t_per_fs", "0.005"),
    ("seed", "1"),
    ("dipole_mu", "1"),
    ("b0_tesla", "1"),
    ("omega_thz", "1"),
    ("t_center_fs", "0"),
    ("sigma_t_fs", "2000"),
    ("phase_rad", "0"),
    // a number in meV/T, or "physical" for mu_B*g/2
    ("coupling_scale_mev_per_tesla", "100"),
    ("n_phase_samples", "8"),
    ("n_t1", "128"),
    ("dt1_fs", "3"),
    ("n_t3", "128"),
    ("dt3_fs", "3"),
    ("t2_fs", "400"),
    ("t_first_fs", "-200"),
    ("lattice_step_fs", "1"),
    ("n_linear", "1024"),
    ("dt_linear_fs", "2"),
    ("zero_pad", "4"),
    ("t_start_fs", "0"),
    ("t_end_fs", "5000"),
    ("dt_out_fs", "10"),
];

const RESONANT: &str = "\
# ħω equal to the peak coupling at 1 T, slow envelope
e_triplet_mev = 1380
sigma_hf_mev = 0.1
omega_thz = 1
coupling_scale_mev_per_tesla = 4.135667
t_center_fs = 2500
sigma_t_fs = 500
t_end_fs = 5000
";

const OFFRESONANT: &str = "\
# 100 GHz carrier, coupling ten times ħω
e_triplet_mev = 1395
sigma_hf_mev = 1.0
omega_thz = 0.1
coupling_scale_mev_per_tesla = 4.135667
t_center_fs = 8000
sigma_t_fs = 2000
t_end_fs = 16000
";

const PAPER2D: &str = "\
# 1 THz, 1 T pulse with 100 meV coupling, flat over the whole sequence
coupling_scale_mev_per_tesla = 100
omega_thz = 1
t_center_fs = 0
sigma_t_fs = 2000
dt1_fs = 6
dt3_fs = 6
lattice_step_fs = 2
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Resonant,
    OffResonant,
    Paper2d,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Resonant, Preset::OffResonant, Preset::Paper2d];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Resonant => "resonant",
            Preset::OffResonant => "offresonant",
            Preset::Paper2d => "paper2d",
        }
    }

    pub fn parse(s: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown preset {s:?} (expected resonant, offresonant or paper2d)")))
    }

    pub fn document(self) -> &'static str {
        match self {
            Preset::Resonant => RESONANT,
            Preset::OffResonant => OFFRESONANT,
            Preset::Paper2d => PAPER2D,
        }
    }
}

/// Parsed key–value pairs, kept as text so a snapshot reproduces the input exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDocument {
    entries: BTreeMap<String, String>,
}

impl ConfigDocument {
    pub fn defaults() -> Self {
        ConfigDocument { entries: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    /// Parse a document. Syntax errors stop at the first bad line; unknown
    /// keys are collected and reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut unknown = ConfigReport::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: n + 1, msg: format!("expected `key = value`, got {line:?}") })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Parse { line: n + 1, msg: "empty key or value".into() });
            }
            if !DEFAULTS.iter().any(|(d, _)| *d == k) {
                unknown.push(k, format!("unknown key (line {})", n + 1));
                continue;
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Parse { line: n + 1, msg: format!("duplicate key {k}") });
            }
        }
        unknown.into_result()?;
        Ok(ConfigDocument { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !DEFAULTS.iter().any(|(d, _)| *d == key) {
            return Err(Error::Domain(format!("unknown key {key}")));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Values in `other` replace ours.
    pub fn overlay(&mut self, other: &ConfigDocument) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Canonical text form, keys sorted.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Output window of the `dynamics` subcommand, fs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl DynamicsWindow {
    pub fn grid(&self) -> Vec<f64> {
        crate::spin::uniform_grid(self.t_start, self.t_end, self.dt)
    }
}

/// Everything a run needs, in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub pulse: PulseConfig,
    pub grids: TimeGrids,
    pub linear: LinearGrid,
    pub transform: TransformOptions,
    pub dynamics: DynamicsWindow,
    /// The merged document this was built from.
    pub document: ConfigDocument,
}

struct Reader<'a> {
    doc: &'a ConfigDocument,
    report: ConfigReport,
}

impl Reader<'_> {
    fn raw(&mut self, key: &str) -> Option<&str> {
        let v = self.doc.get(key);
        if v.is_none() {
            self.report.push(key, "missing");
        }
        v
    }

    fn f64(&mut self, key: &str) -> f64 {
        let Some(v) = self.raw(key) else { return f64::NAN };
        match v.parse::<f64>() {
            Ok(x) => x,
            Err(_) => {
                let msg = format!("expected a number, got {v:?}");
                self.report.push(key, msg);
                f64::NAN
            }
        }
    }

    fn usize(&mut self, key: &str) -> usize {
        let Some(v) = self.raw(key) else { return 0 };
        match v.parse::<usize>() {
            Ok(x) => x,
            Err(_) => {
                let msg = format!("expected a non-negative integer, got {v:?}");
                self.report.push(key, msg);
                0
            }
        }
    }

    fn u64(&mut self, key: &str) -> u64 {
        let Some(v) = self.raw(key) else { return 0 };
        match v.parse::<u64>() {
            Ok(x) => x,
            Err(_) => {
                let msg = format!("expected an unsigned integer, got {v:?}");
                self.report.push(key, msg);
                0
            }
        }
    }

    fn coupling(&mut self, key: &str) -> Option<f64> {
        match self.raw(key) {
            Some("physical") | None => None,
            Some(_) => Some(self.f64(key)),
        }
    }
}

impl RunConfig {
    /// Defaults, then the preset, then `user`.
    pub fn load(preset: Option<Preset>, user: Option<&str>) -> Result<RunConfig> {
        let mut doc = ConfigDocument::defaults();
        if let Some(p) = preset {
            doc.overlay(&ConfigDocument::parse(p.document())?);
        }
        if let Some(text) = user {
            doc.overlay(&ConfigDocument::parse(text)?);
        }
        RunConfig::from_document(doc)
    }

    pub fn preset(p: Preset) -> Result<RunConfig> {
        RunConfig::load(Some(p), None)
    }

    /// Convert and validate, reporting every problem at once.
    pub fn from_document(doc: ConfigDocument) -> Result<RunConfig> {
        let mut r = Reader { doc: &doc, report: ConfigReport::default() };
        let system = SystemConfig {
            levels: EnergyLevels { e_singlet: r.f64("e_singlet_mev"), e_triplet: r.f64("e_triplet_mev") },
            lande: LandeFactors { g_e: r.f64("g_e"), g_h: r.f64("g_h") },
            hyperfine: HyperfineConfig { sigma_hf: r.f64("sigma_hf_mev"), n_samples: r.usize("n_hyperfine") },
            dephasing: DephasingConfig { gamma_s: r.f64("gamma_s_per_fs"), gamma_t: r.f64("gamma_t_per_fs") },
            dipole: DipoleOperator { mu: r.f64("dipole_mu") },
            rng_seed: r.u64("seed"),
        };
        let omega_thz = r.f64("omega_thz");
        let pulse = PulseConfig {
            b0: r.f64("b0_tesla"),
            omega: thz_to_rad_per_fs(omega_thz),
            t_center: r.f64("t_center_fs"),
            sigma_t: r.f64("sigma_t_fs"),
            phase: r.f64("phase_rad"),
            coupling_scale: r.coupling("coupling_scale_mev_per_tesla"),
            n_phase: r.usize("n_phase_samples"),
        };
        let grids = TimeGrids {
            n1: r.usize("n_t1"),
            dt1: r.f64("dt1_fs"),
            n3: r.usize("n_t3"),
            dt3: r.f64("dt3_fs"),
            t2: r.f64("t2_fs"),
            t_first: r.f64("t_first_fs"),
            lattice_step: r.f64("lattice_step_fs"),
        };
        let linear = LinearGrid {
            n: r.usize("n_linear"),
            dt: r.f64("dt_linear_fs"),
            t_first: grids.t_first,
            lattice_step: grids.lattice_step,
        };
        let transform = TransformOptions { zero_pad: r.usize("zero_pad"), ..TransformOptions::default() };
        let dynamics = DynamicsWindow { t_start: r.f64("t_start_fs"), t_end: r.f64("t_end_fs"), dt: r.f64("dt_out_fs") };
        let mut report = r.report;

        system_diagnostics(&system, &mut report);
        pulse_diagnostics(&pulse, &system.lande, &mut report);
        if let Err(e) = grids.validate() {
            report.push("grid", e.to_string());
        }
        if linear.n < 2 {
            report.push("n_linear", "need at least 2 samples");
        }
        let lin = TimeGrids { n1: linear.n.max(1), dt1: linear.dt, ..grids };
        if let Err(e) = lin.validate() {
            report.push("dt_linear_fs", e.to_string());
        }
        if transform.zero_pad == 0 {
            report.push("zero_pad", "padding factor must be >= 1");
        }
        if !(dynamics.dt > 0.0 && dynamics.t_end > dynamics.t_start) {
            report.push("dt_out_fs", "dynamics window needs dt_out_fs > 0 and t_end_fs > t_start_fs");
        }
        report.into_result()?;
        Ok(RunConfig { system, pulse, grids, linear, transform, dynamics, document: doc })
    }

    /// Canonical snapshot of the merged document.
    pub fn snapshot(&self) -> String {
        self.document.render()
    }
}
