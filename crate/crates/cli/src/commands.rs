use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use darkspec::analysis::{run_pipeline, PipelineOptions, PipelineReport};
use darkspec::config::{Preset, RunConfig};
use darkspec::io::{write_map_csv, write_response_csv, GridFile};
use darkspec::pulse::{HyperfineSample, PhaseSample, PulseDrive};
use darkspec::response::{averaged_response, response_movie_with_progress, ResponseGrid};
use darkspec::spectra::{
    absorption, heatmap_ppm, heatmap_sidecar, transient_absorption, twod_transform, AbsorptionSpectrum, MapKind,
    SpectrumMap,
};
use darkspec::spin::{ensemble_average_populations, spin_hamiltonian};
use serde_json::json;

use crate::manifest::Run;
use crate::{Common, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn init_threads(requested: Option<usize>) -> Result<()> {
    let n = match requested {
        Some(n) => n,
        None => match std::env::var("DARKSPEC_THREADS") {
            Ok(v) => v.trim().parse().map_err(|_| usage(format!("DARKSPEC_THREADS must be a count, got {v:?}")))?,
            Err(_) => 0,
        },
    };
    // a second initialisation only happens in-process (tests) and is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Threads, preset, config file and seed override, in that order.
pub fn setup(common: &Common) -> Result<RunConfig> {
    init_threads(common.threads)?;
    let preset = common.preset.as_deref().map(Preset::parse).transpose().map_err(|e| usage(e.to_string()))?;
    let user = match &common.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?),
        None => None,
    };
    let mut cfg = RunConfig::load(preset, user.as_deref())?;
    if let Some(seed) = common.seed {
        let mut doc = cfg.document.clone();
        doc.set("seed", seed.to_string())?;
        cfg = RunConfig::from_document(doc)?;
    }
    Ok(cfg)
}

fn with_t2(cfg: &RunConfig, t2: Option<f64>) -> Result<darkspec::response::TimeGrids> {
    let mut g = cfg.grids;
    if let Some(t) = t2 {
        g.t2 = t;
    }
    g.validate().map_err(|e| usage(e.to_string()))?;
    Ok(g)
}

/// `a:b:c` (inclusive of b when it lies on the step) or a single value.
pub fn parse_t2_list(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| usage(format!("bad number {x:?} in --t2")));
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [a, b, c] => {
            let (a, b, c) = (num(a)?, num(b)?, num(c)?);
            if !(c > 0.0 && b >= a && a >= 0.0) {
                return Err(usage("--t2 range needs 0 <= start <= stop and step > 0"));
            }
            let n = ((b - a) / c + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| a + k as f64 * c).collect())
        }
        _ => Err(usage("--t2 takes a value or start:stop:step")),
    }
}

fn parse_window(s: Option<&str>, cfg: &RunConfig) -> Result<(f64, f64)> {
    let lv = &cfg.system.levels;
    match s {
        None => Ok((lv.e_singlet.min(lv.e_triplet) - 100.0, lv.e_singlet.max(lv.e_triplet) + 100.0)),
        Some(s) => {
            let (a, b) = s.split_once(':').ok_or_else(|| usage("--window takes lo:hi"))?;
            let p = |x: &str| x.trim().parse::<f64>().map_err(|_| usage(format!("bad number {x:?} in --window")));
            let (a, b) = (p(a)?, p(b)?);
            if !(b > a) {
                return Err(usage("--window needs lo < hi"));
            }
            Ok((a, b))
        }
    }
}

fn t2_tag(t2: f64) -> String {
    if t2.fract() == 0.0 {
        format!("{:06}", t2 as i64)
    } else {
        format!("{t2:09.2}")
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut b = Vec::new();
    f(&mut b).expect("writing to memory");
    b
}

fn spectrum_peaks(s: &AbsorptionSpectrum) -> serde_json::Value {
    json!(s.local_maxima(0.05).into_iter().map(|i| s.omega[i]).collect::<Vec<_>>())
}

pub fn dynamics(common: &Common, dump: Option<f64>) -> Result<()> {
    let cfg = setup(common)?;
    let mut run = Run::new("dynamics", &common.out);
    run.stage("propagate");
    let grid = cfg.dynamics.grid();
    let tr = ensemble_average_populations(&cfg.system, &cfg.pulse, &grid)?;
    let csv = csv_bytes(|w| {
        use std::io::Write;
        writeln!(w, "t_fs,pop_S,pop_T0,pop_Tplus,pop_Tminus")?;
        for (k, t) in tr.times.iter().enumerate() {
            let p = |i: usize| tr.populations[i][k];
            writeln!(w, "{t},{:.12e},{:.12e},{:.12e},{:.12e}", p(0), p(1), p(2), p(3))?;
        }
        Ok(())
    });
    run.add("dynamics.csv", csv);
    if let Some(t) = dump {
        let drive = PulseDrive::new(
            &cfg.pulse,
            &cfg.system.lande,
            HyperfineSample::default(),
            PhaseSample { phase: cfg.pulse.phase, sign: 1.0 },
        );
        let h = spin_hamiltonian(t, &drive, &cfg.system.levels);
        let mut s = format!("# spin Hamiltonian at t = {t} fs, meV, basis S T0 T+ T-, E_T frame, no hyperfine\n");
        for row in h {
            let _ = writeln!(s, "{}", row.map(|x| format!("{x:.9e}")).join(" "));
        }
        print!("{s}");
        run.add("hamiltonian.txt", s.into_bytes());
    }
    let n = tr.times.len();
    run.note("final_triplet_population", json!(tr.triplet_total(n - 1)));
    run.finish(Some(&cfg))
}

fn response_files(run: &mut Run, r: &ResponseGrid, csv: bool) {
    let tag = t2_tag(r.grids.t2);
    for (label, v) in [("rephasing", r.rephasing()), ("nonrephasing", r.nonrephasing())] {
        if csv {
            run.add(format!("response_{label}_t2_{tag}.csv"), csv_bytes(|w| write_response_csv(r, &v, w)));
        }
        run.add(format!("response_{label}_t2_{tag}.dspc"), GridFile::response(r, v).to_bytes());
    }
}

pub fn response(common: &Common, t2: Option<f64>, csv: bool) -> Result<()> {
    let cfg = setup(common)?;
    let g = with_t2(&cfg, t2)?;
    let mut run = Run::new("response", &common.out);
    run.stage("response");
    let r = averaged_response(&g, &cfg.system, &cfg.pulse)?;
    run.stage("write");
    response_files(&mut run, &r, csv);
    run.finish(Some(&cfg))
}

pub fn absorption_cmd(common: &Common) -> Result<()> {
    let cfg = setup(common)?;
    let mut run = Run::new("absorption", &common.out);
    run.stage("linear");
    let (lo, hi) = parse_window(None, &cfg)?;
    let s = absorption(&cfg.system, &cfg.pulse, &cfg.linear, &cfg.transform)?.crop(lo, hi);
    run.note("peaks_mev", spectrum_peaks(&s));
    run.add("absorption.csv", csv_bytes(|w| s.write_csv(w)));
    run.finish(Some(&cfg))
}

pub fn pumpprobe(common: &Common, t2: Option<f64>) -> Result<()> {
    let cfg = setup(common)?;
    let g = with_t2(&cfg, t2)?;
    let mut run = Run::new("pumpprobe", &common.out);
    run.stage("response");
    let (lo, hi) = parse_window(None, &cfg)?;
    let s = transient_absorption(&cfg.system, &cfg.pulse, &g, g.t2, &cfg.transform)?.crop(lo, hi);
    run.note("peaks_mev", spectrum_peaks(&s));
    run.add(format!("pumpprobe_t2_{}.csv", t2_tag(g.t2)), csv_bytes(|w| s.write_csv(w)));
    run.finish(Some(&cfg))
}

fn map_files(run: &mut Run, m: &SpectrumMap, omega_ref: f64, all: bool) -> Result<()> {
    let base = format!("map_{}_t2_{}", m.kind.label(), t2_tag(m.t2));
    run.add(format!("{base}.dspc"), GridFile::map(m, omega_ref)?.to_bytes());
    if all {
        run.add(format!("{base}.csv"), csv_bytes(|w| write_map_csv(m, w)));
        let ppm = format!("{base}.ppm");
        run.add(format!("{base}.txt"), heatmap_sidecar(m, &ppm).into_bytes());
        run.add(ppm, heatmap_ppm(m)?);
    }
    Ok(())
}

pub fn map2d(common: &Common, t2: Option<&str>, kind: &str, window: Option<&str>, all_formats: bool) -> Result<()> {
    let cfg = setup(common)?;
    let kind = MapKind::parse(kind).map_err(|e| usage(e.to_string()))?;
    let t2s = match t2 {
        Some(s) => parse_t2_list(s)?,
        None => vec![cfg.grids.t2],
    };
    for &t in &t2s {
        with_t2(&cfg, Some(t))?;
    }
    let (lo, hi) = parse_window(window, &cfg)?;
    let mut run = Run::new("2dmap", &common.out);
    run.stage("response");
    let g = with_t2(&cfg, Some(t2s[0]))?;
    let verbose = t2s.len() > 1;
    let frames = response_movie_with_progress(&g, &t2s, &cfg.system, &cfg.pulse, |done, total| {
        if verbose {
            eprint!("\rmember {done}/{total}");
        }
    })?;
    if verbose {
        eprintln!();
    }
    run.stage("transform");
    let single = t2s.len() == 1;
    for r in &frames {
        let m = twod_transform(r, kind, &cfg.transform)?.crop(lo, hi);
        map_files(&mut run, &m, r.omega_ref, single || all_formats)?;
    }
    run.note("kind", json!(kind.label()));
    run.note("t2_fs", json!(t2s));
    run.finish(Some(&cfg))
}

fn collect_maps(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut in_dir: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "dspc"))
                .collect();
            in_dir.sort();
            files.extend(in_dir);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(usage(format!("no such map file or directory: {}", p.display())));
        }
    }
    if files.is_empty() {
        return Err(usage("no .dspc map files given"));
    }
    Ok(files)
}

pub fn load_maps(paths: &[PathBuf]) -> Result<Vec<SpectrumMap>> {
    let mut maps = Vec::new();
    for f in collect_maps(paths)? {
        let bytes = std::fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
        let g = GridFile::from_bytes(&bytes).with_context(|| f.display().to_string())?;
        if g.version != 2 {
            // only total maps carry the real display the peak finder works on
            return Err(usage(format!("{} is a time-domain file, not a 2D map", f.display())));
        }
        maps.push(g.to_map(MapKind::TotalReal)?);
    }
    maps.sort_by(|a, b| a.t2.total_cmp(&b.t2));
    Ok(maps)
}

fn report_text(r: &PipelineReport) -> String {
    let m = &r.model;
    let mut s = String::new();
    let _ = writeln!(s, "reference t2 {} fs", r.reference_t2);
    let _ = writeln!(s, "diagonal peaks (meV, amplitude):");
    for p in &r.diagonal {
        let _ = writeln!(s, "  {:.3} {:.3} {:.6e}", p.omega1, p.omega3, p.amplitude);
    }
    let _ = writeln!(s, "cross-peak traces:");
    for c in &r.cross {
        let f: Vec<String> = c.oscillations.iter().map(|o| format!("{:.3}", o.energy)).collect();
        let _ = writeln!(s, "  ({:.3}, {:.3}) rates {:?} /fs, oscillations {} meV", c.peak.omega1, c.peak.omega3, c.fit.rates, f.join(" "));
    }
    let _ = writeln!(s, "coupling clusters (meV, weight):");
    for c in r.clusters.iter().take(6) {
        let _ = writeln!(s, "  {:.3} {:.6e}", c.energy, c.weight);
    }
    let _ = writeln!(
        s,
        "model: E_S {:.4} E_T {:.4} Z {:.4} A {:.4} B {:.4} meV, residual {:.4e} meV{}",
        m.e_singlet_fit,
        m.e_triplet_fit,
        m.zeeman,
        m.a_coupling,
        m.b_coupling,
        m.residual,
        if m.flagged { " (FLAGGED)" } else { "" }
    );
    s
}

pub fn reconstruct(common: &Common, maps: &[PathBuf], reference_t2: Option<f64>, threshold: Option<f64>) -> Result<()> {
    let cfg = setup(common)?;
    let mut run = Run::new("reconstruct", &common.out);
    run.stage("load");
    let maps = load_maps(maps)?;
    run.stage("pipeline");
    let mut opts = PipelineOptions::for_grid(cfg.grids.n1, cfg.grids.dt1);
    if let Some(t) = reference_t2 {
        opts.reference_t2 = t;
    }
    if let Some(t) = threshold {
        opts.threshold_frac = t;
    }
    let r = run_pipeline(&maps, &opts)?;
    let m = r.model;
    let text = report_text(&r);
    print!("{text}");
    let csv = format!(
        "e_singlet_fit_mev,e_triplet_fit_mev,zeeman_mev,a_mev,b_mev,residual_mev,flagged\n{:.9},{:.9},{:.9},{:.9},{:.9},{:.9e},{}\n",
        m.e_singlet_fit, m.e_triplet_fit, m.zeeman, m.a_coupling, m.b_coupling, m.residual, m.flagged
    );
    run.add("reconstruction.csv", csv.into_bytes());
    run.add("reconstruction.txt", text.into_bytes());
    run.note("n_maps", json!(maps.len()));
    run.note("fit_tolerance_mev", json!(opts.fit.tolerance));
    run.finish(Some(&cfg))?;
    if m.flagged {
        return Err(anyhow!("fit residual {:.3e} meV exceeds tolerance {:.3e} meV", m.residual, opts.fit.tolerance));
    }
    Ok(())
}
