use darkspec::analysis::find_peaks;
use darkspec::config::{ConfigDocument, Preset, RunConfig};
use darkspec::pulse::{ensemble_members, wrap_phase, PulseConfig};
use darkspec::response::{averaged_response, member_response, response_movie, LinearGrid, PathwayKind, ResponseGrid, TimeGrids};
use darkspec::spectra::{absorption, transient_absorption, twod_transform, MapKind, SpectrumMap};
use darkspec::units::HBAR_MEV_FS;
use darkspec::C64;

fn small(extra: &str) -> RunConfig {
    let mut doc = ConfigDocument::parse("n_hyperfine = 3\nn_phase_samples = 4\nn_t1 = 32\nn_t3 = 32\n").unwrap();
    doc.overlay(&ConfigDocument::parse(extra).unwrap());
    RunConfig::load(Some(Preset::Paper2d), Some(&doc.render())).unwrap()
}

fn field_free(extra: &str) -> RunConfig {
    small(&format!("b0_tesla = 0\nsigma_hf_mev = 0\n{extra}"))
}

fn max_abs(v: impl IntoIterator<Item = C64>) -> f64 {
    v.into_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn relative_difference(a: &ResponseGrid, b: &ResponseGrid) -> f64 {
    let scale = max_abs(a.values.iter().flatten().copied());
    max_abs(a.values.iter().flatten().zip(b.values.iter().flatten()).map(|(x, y)| x - y)) / scale
}

fn argmax(m: &SpectrumMap) -> (f64, f64) {
    let k = (0..m.values.len()).max_by(|&i, &j| m.values[i].norm().total_cmp(&m.values[j].norm())).unwrap();
    (m.omega1[k / m.n3()], m.omega3[k % m.n3()])
}

#[test]
fn shifting_the_whole_experiment_by_a_carrier_period_changes_nothing() {
    let c = small("");
    let r = averaged_response(&c.grids, &c.system, &c.pulse).unwrap();
    // 1 THz carrier
    let period = 1000.0;
    let g = TimeGrids { t_first: c.grids.t_first + period, ..c.grids };
    let p = PulseConfig { t_center: c.pulse.t_center + period, ..c.pulse };
    let shifted = averaged_response(&g, &c.system, &p).unwrap();
    let d = relative_difference(&r, &shifted);
    assert!(d <= 1e-10, "period {period}, relative change {d:e}");
}

#[test]
fn arbitrary_time_shift_is_covariant_once_the_carrier_phase_follows() {
    let c = small("");
    let r = averaged_response(&c.grids, &c.system, &c.pulse).unwrap();
    let shift = 314.0;
    let g = TimeGrids { t_first: c.grids.t_first + shift, ..c.grids };
    let p = PulseConfig {
        t_center: c.pulse.t_center + shift,
        phase: wrap_phase(c.pulse.phase - c.pulse.omega * shift),
        ..c.pulse
    };
    let shifted = averaged_response(&g, &c.system, &p).unwrap();
    assert!(relative_difference(&r, &shifted) <= 1e-10);
}

#[test]
fn dense_phase_average_ignores_a_global_phase_offset() {
    // Negated phase points carry the negated hyperfine draw, so with hyperfine
    // disorder the offset only cancels on average over draws. Without it the
    // grid covers the full circle for every member.
    let c = small("n_phase_samples = 64\nn_hyperfine = 1\nsigma_hf_mev = 0\n");
    let r = averaged_response(&c.grids, &c.system, &c.pulse).unwrap();
    let p = PulseConfig { phase: wrap_phase(c.pulse.phase + 0.7), ..c.pulse };
    let offset = averaged_response(&c.grids, &c.system, &p).unwrap();
    let d = relative_difference(&r, &offset);
    assert!(d <= 1e-3, "relative change {d:e}");
}

#[test]
fn frames_converge_as_the_population_step_shrinks() {
    let c = small("n_t1 = 16\nn_t3 = 16\n");
    let t2s = [400.0, 402.0, 404.0, 408.0, 416.0];
    let frames = response_movie(&c.grids, &t2s, &c.system, &c.pulse).unwrap();
    let d: Vec<f64> = frames[1..].iter().map(|f| relative_difference(&frames[0], f)).collect();
    for w in d.windows(2) {
        assert!(w[0] < w[1], "{d:?}");
        let ratio = w[0] / w[1];
        assert!((0.3..0.7).contains(&ratio), "halving dt2 should roughly halve the change: {d:?}");
    }
}

#[test]
fn field_free_averaging_is_a_no_op_and_bleach_frames_are_stationary() {
    let c = field_free("");
    let avg = averaged_response(&c.grids, &c.system, &c.pulse).unwrap();
    let m = ensemble_members(&c.system.hyperfine, c.system.rng_seed, &c.pulse, &c.system.lande);
    let one = member_response(&c.grids, &c.system, m[0].drive).unwrap();
    assert!(relative_difference(&avg, &one) <= 1e-14);
    let frames = response_movie(&c.grids, &[0.0, 200.0, 600.0], &c.system, &c.pulse).unwrap();
    for f in &frames[1..] {
        for k in [PathwayKind::GsbR, PathwayKind::GsbNr] {
            let d = max_abs(f.kind(k).iter().zip(frames[0].kind(k)).map(|(x, y)| x - y));
            assert!(d <= 1e-14 * max_abs(frames[0].kind(k).iter().copied()));
        }
    }
}

#[test]
fn projection_slice_holds_on_random_configurations() {
    for (k, extra) in ["", "e_triplet_mev = 1375\ng_e = 2.0\nseed = 9\n", "b0_tesla = 0.4\nsigma_hf_mev = 3\nt_center_fs = 700\n"]
        .iter()
        .enumerate()
    {
        let c = small(extra);
        let g = TimeGrids { t2: 0.0, ..c.grids };
        let m = twod_transform(&averaged_response(&g, &c.system, &c.pulse).unwrap(), MapKind::TotalReal, &c.transform).unwrap();
        let lin = LinearGrid { n: g.n1, dt: g.dt1, t_first: g.t_first, lattice_step: g.lattice_step };
        let s = absorption(&c.system, &c.pulse, &lin, &c.transform).unwrap();
        let factor = m.n3() as f64 * g.dt3 * 2.0 * c.system.dipole.mu.powi(2) / HBAR_MEV_FS.powi(3);
        let scale = s.intensity.iter().fold(0.0f64, |a, x| a.max(x.abs())) * factor;
        for i in 0..m.n1() {
            let proj: f64 = (0..m.n3()).map(|j| m.real_at(i, j)).sum();
            assert!((proj - factor * s.intensity[i]).abs() <= 1e-6 * scale, "dataset {k}, row {i}");
        }
    }
}

#[test]
fn transient_absorption_scales_with_the_fourth_power_of_the_dipole() {
    let c = small("n_t3 = 64\n");
    let a = transient_absorption(&c.system, &c.pulse, &c.grids, 400.0, &c.transform).unwrap();
    let mut sys = c.system;
    sys.dipole.mu = 2.0;
    let b = transient_absorption(&sys, &c.pulse, &c.grids, 400.0, &c.transform).unwrap();
    let scale = a.intensity.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for (x, y) in a.intensity.iter().zip(&b.intensity) {
        assert!((y - 16.0 * x).abs() <= 1e-12 * 16.0 * scale);
    }
}

#[test]
fn shifting_both_levels_shifts_every_peak() {
    let c = small("n_t1 = 64\nn_t3 = 64\n");
    let delta = 7.3;
    let mut sys = c.system;
    sys.levels.e_singlet += delta;
    sys.levels.e_triplet += delta;
    let map = |s| twod_transform(&averaged_response(&c.grids, s, &c.pulse).unwrap(), MapKind::TotalReal, &c.transform).unwrap();
    let (a, b) = (map(&c.system), map(&sys));
    let bin = a.omega1[1] - a.omega1[0];
    let pa = find_peaks(&a, 0.01, 6.0).unwrap();
    let pb = find_peaks(&b, 0.01, 6.0).unwrap();
    assert!(pa.len() >= 2);
    assert_eq!(pa.len(), pb.len());
    for (p, q) in pa.iter().zip(&pb) {
        assert!((q.omega1 - p.omega1 - delta).abs() <= bin && (q.omega3 - p.omega3 - delta).abs() <= bin);
    }
}

#[test]
fn field_free_rephasing_and_nonrephasing_peak_at_the_same_point() {
    let c = field_free("n_t1 = 128\nn_t3 = 128\n");
    let r = averaged_response(&c.grids, &c.system, &c.pulse).unwrap();
    let rep = twod_transform(&r, MapKind::Rephasing, &c.transform).unwrap();
    let non = twod_transform(&r, MapKind::Nonrephasing, &c.transform).unwrap();
    let (a, b) = (argmax(&rep), argmax(&non));
    let bin = rep.omega1[1] - rep.omega1[0];
    assert_eq!(a, b);
    assert!((a.0 - 1400.0).abs() <= bin && (a.1 - 1400.0).abs() <= bin, "{a:?}");
}
