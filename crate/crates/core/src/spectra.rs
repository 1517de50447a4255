//! Frequency-domain spectra: mixed time–frequency 2D maps, linear absorption
//! and pump–probe.
//!
//! Transforms approximate the half-infinite integrals ∫₀^∞ dt e^{±iΩt/ħ}(…)
//! by a zero-padded DFT with the t = 0 sample weighted ½. Axes are absolute
//! energies: Ω = Ω_ref + (k − N_p/2)·2πħ/(N_p·dt).
//!
//! Real-valued displays use Re(i·S). The (i/ħ)³ prefactor makes the raw
//! response mostly imaginary, so this phasing turns bleach and emission into
//! positive absorptive peaks.

use std::io::Write;
use std::path::Path;

use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::pulse::PulseConfig;
use crate::response::{averaged_response, linear_signal, LinearGrid, ResponseGrid, TimeGrids};
use crate::units::{mev_to_nm, HBAR_MEV_FS};
use crate::C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    Rephasing,
    Nonrephasing,
    TotalReal,
}

impl MapKind {
    pub fn label(self) -> &'static str {
        match self {
            MapKind::Rephasing => "rephasing",
            MapKind::Nonrephasing => "nonrephasing",
            MapKind::TotalReal => "total",
        }
    }

    pub fn parse(s: &str) -> Result<MapKind> {
        match s {
            "rephasing" => Ok(MapKind::Rephasing),
            "nonrephasing" => Ok(MapKind::Nonrephasing),
            "total" | "total-real" => Ok(MapKind::TotalReal),
            _ => Err(Error::Domain(format!("unknown map kind '{s}' (rephasing, nonrephasing, total)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    None,
    /// Half raised cosine, 1 at t = 0 falling to 0 one step past the last sample.
    RaisedCosine,
}

impl Window {
    fn weight(self, n: usize, len: usize) -> f64 {
        match self {
            Window::None => 1.0,
            Window::RaisedCosine => 0.5 * (1.0 + (std::f64::consts::PI * n as f64 / len as f64).cos()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformOptions {
    pub zero_pad: usize,
    pub window: Window,
}

impl Default for TransformOptions {
    fn default() -> Self {
        TransformOptions { zero_pad: 4, window: Window::None }
    }
}

/// Sign of the exponent in e^{±iω't/ħ}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Plus,
    Minus,
}

/// Energy axis of a padded transform.
pub fn frequency_axis(n_padded: usize, dt: f64, omega_ref: f64) -> Vec<f64> {
    let dw = 2.0 * std::f64::consts::PI * HBAR_MEV_FS / (n_padded as f64 * dt);
    (0..n_padded).map(|k| omega_ref + (k as f64 - (n_padded / 2) as f64) * dw).collect()
}

/// Half-infinite transform of uniformly sampled `x` (spacing dt), padded to
/// `n_padded` and returned in ascending-frequency order.
fn transform_1d(x: &[C64], dt: f64, n_padded: usize, kernel: Kernel, window: Window, planner: &mut FftPlanner<f64>) -> Vec<C64> {
    let mut buf = vec![C64::new(0.0, 0.0); n_padded];
    for (n, (b, v)) in buf.iter_mut().zip(x).enumerate() {
        let w = if n == 0 { 0.5 } else { 1.0 } * window.weight(n, x.len());
        *b = v * (w * dt);
    }
    let fft = match kernel {
        Kernel::Plus => planner.plan_fft_inverse(n_padded),
        Kernel::Minus => planner.plan_fft_forward(n_padded),
    };
    fft.process(&mut buf);
    let half = n_padded / 2;
    (0..n_padded).map(|j| buf[(j + n_padded - half) % n_padded]).collect()
}

/// A 2D spectrum on absolute (Ω1, Ω3) axes, stored row-major in Ω1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMap {
    pub omega1: Vec<f64>,
    pub omega3: Vec<f64>,
    pub values: Vec<C64>,
    pub t2: f64,
    pub kind: MapKind,
}

impl SpectrumMap {
    pub fn n1(&self) -> usize {
        self.omega1.len()
    }

    pub fn n3(&self) -> usize {
        self.omega3.len()
    }

    pub fn at(&self, i1: usize, i3: usize) -> C64 {
        self.values[i1 * self.n3() + i3]
    }

    /// Real display value: the stored real part for total maps, Re(i·S) otherwise.
    pub fn real_at(&self, i1: usize, i3: usize) -> f64 {
        let v = self.at(i1, i3);
        match self.kind {
            MapKind::TotalReal => v.re,
            _ => (I * v).re,
        }
    }

    pub fn real_values(&self) -> Vec<f64> {
        match self.kind {
            MapKind::TotalReal => self.values.iter().map(|v| v.re).collect(),
            _ => self.values.iter().map(|v| (I * v).re).collect(),
        }
    }

    /// Sub-map with both axes restricted to [lo, hi] meV.
    pub fn crop(&self, lo: f64, hi: f64) -> SpectrumMap {
        self.crop_axes((lo, hi), (lo, hi))
    }

    pub fn crop_axes(&self, w1: (f64, f64), w3: (f64, f64)) -> SpectrumMap {
        let r1: Vec<usize> = (0..self.n1()).filter(|&i| self.omega1[i] >= w1.0 && self.omega1[i] <= w1.1).collect();
        let r3: Vec<usize> = (0..self.n3()).filter(|&i| self.omega3[i] >= w3.0 && self.omega3[i] <= w3.1).collect();
        let mut values = Vec::with_capacity(r1.len() * r3.len());
        for &i in &r1 {
            for &j in &r3 {
                values.push(self.at(i, j));
            }
        }
        SpectrumMap {
            omega1: r1.iter().map(|&i| self.omega1[i]).collect(),
            omega3: r3.iter().map(|&j| self.omega3[j]).collect(),
            values,
            t2: self.t2,
            kind: self.kind,
        }
    }
}

fn check_uniform(n: usize, dt: f64, what: &str) -> Result<()> {
    if n == 0 || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Grid(format!("{what} grid must be non-empty with a positive step")));
    }
    Ok(())
}

/// Double transform of a t1 × t3 array (row-major in t1).
fn transform_2d(
    data: &[C64],
    n1: usize,
    n3: usize,
    dt1: f64,
    dt3: f64,
    k1: Kernel,
    opts: &TransformOptions,
) -> (usize, usize, Vec<C64>) {
    let (p1, p3) = (n1 * opts.zero_pad.max(1), n3 * opts.zero_pad.max(1));
    let mut planner = FftPlanner::new();
    // t3 rows first
    let rows: Vec<Vec<C64>> = (0..n1)
        .map(|i| transform_1d(&data[i * n3..(i + 1) * n3], dt3, p3, Kernel::Plus, opts.window, &mut planner))
        .collect();
    // then t1 columns
    let mut out = vec![C64::new(0.0, 0.0); p1 * p3];
    let mut col = vec![C64::new(0.0, 0.0); n1];
    for j in 0..p3 {
        for (i, c) in col.iter_mut().enumerate() {
            *c = rows[i][j];
        }
        let t = transform_1d(&col, dt1, p1, k1, opts.window, &mut planner);
        for (i, v) in t.into_iter().enumerate() {
            out[i * p3 + j] = v;
        }
    }
    (p1, p3, out)
}

/// 2D spectrum of one response grid.
pub fn twod_transform(r: &ResponseGrid, kind: MapKind, opts: &TransformOptions) -> Result<SpectrumMap> {
    let g = &r.grids;
    check_uniform(g.n1, g.dt1, "t1")?;
    check_uniform(g.n3, g.dt3, "t3")?;
    let n = g.n1 * g.n3;
    if r.values.iter().any(|v| v.len() != n) {
        return Err(Error::Grid("response arrays do not match the t1 × t3 grid".into()));
    }
    let tr = |data: &[C64], k1: Kernel| transform_2d(data, g.n1, g.n3, g.dt1, g.dt3, k1, opts);
    let (p1, p3, values) = match kind {
        MapKind::Rephasing => tr(&r.rephasing(), Kernel::Minus),
        MapKind::Nonrephasing => tr(&r.nonrephasing(), Kernel::Plus),
        MapKind::TotalReal => {
            let (p1, p3, a) = tr(&r.rephasing(), Kernel::Minus);
            let (_, _, b) = tr(&r.nonrephasing(), Kernel::Plus);
            let v = a.iter().zip(&b).map(|(x, y)| C64::new((I * (x + y)).re, 0.0)).collect();
            (p1, p3, v)
        }
    };
    Ok(SpectrumMap {
        omega1: frequency_axis(p1, g.dt1, r.omega_ref),
        omega3: frequency_axis(p3, g.dt3, r.omega_ref),
        values,
        t2: g.t2,
        kind,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionSpectrum {
    pub omega: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl AbsorptionSpectrum {
    pub fn crop(&self, lo: f64, hi: f64) -> AbsorptionSpectrum {
        let keep: Vec<usize> = (0..self.omega.len()).filter(|&i| self.omega[i] >= lo && self.omega[i] <= hi).collect();
        AbsorptionSpectrum {
            omega: keep.iter().map(|&i| self.omega[i]).collect(),
            intensity: keep.iter().map(|&i| self.intensity[i]).collect(),
        }
    }

    pub fn argmax(&self) -> Option<usize> {
        (0..self.intensity.len()).max_by(|&a, &b| self.intensity[a].total_cmp(&self.intensity[b]))
    }

    /// Indices of strict local maxima above `frac`·max, ascending in energy.
    pub fn local_maxima(&self, frac: f64) -> Vec<usize> {
        let y = &self.intensity;
        let top = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (1..y.len().saturating_sub(1)).filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > frac * top).collect()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "omega_mev,omega_nm,intensity")?;
        for (o, v) in self.omega.iter().zip(&self.intensity) {
            writeln!(w, "{o:.6},{:.6},{v:.9e}", mev_to_nm(*o))?;
        }
        Ok(())
    }
}

/// Real part of the e^{+iω't/ħ} transform of a rotating-frame signal.
pub fn absorption_from_signal(j: &[C64], dt: f64, omega_ref: f64, opts: &TransformOptions) -> Result<AbsorptionSpectrum> {
    check_uniform(j.len(), dt, "signal")?;
    let p = j.len() * opts.zero_pad.max(1);
    let mut planner = FftPlanner::new();
    let s = transform_1d(j, dt, p, Kernel::Plus, opts.window, &mut planner);
    Ok(AbsorptionSpectrum { omega: frequency_axis(p, dt, omega_ref), intensity: s.iter().map(|v| v.re).collect() })
}

/// Linear absorption from the ensemble-mean first-order coherence.
pub fn absorption(cfg: &SystemConfig, pulse: &PulseConfig, grid: &LinearGrid, opts: &TransformOptions) -> Result<AbsorptionSpectrum> {
    let j = linear_signal(grid, cfg, pulse)?;
    absorption_from_signal(&j, grid.dt, cfg.omega_ref(), opts)
}

/// Pump–probe spectrum over Ω3 from the t1 = 0 row of a response grid.
pub fn pump_probe_from_response(r: &ResponseGrid, opts: &TransformOptions) -> Result<AbsorptionSpectrum> {
    let g = &r.grids;
    check_uniform(g.n3, g.dt3, "t3")?;
    let (re, nr) = (r.rephasing(), r.nonrephasing());
    let row: Vec<C64> = (0..g.n3).map(|j| re[j] + nr[j]).collect();
    let p = g.n3 * opts.zero_pad.max(1);
    let mut planner = FftPlanner::new();
    let s = transform_1d(&row, g.dt3, p, Kernel::Plus, opts.window, &mut planner);
    Ok(AbsorptionSpectrum { omega: frequency_axis(p, g.dt3, r.omega_ref), intensity: s.iter().map(|v| (I * v).re).collect() })
}

/// Transient absorption at population time t2 in the impulsive-pump limit.
pub fn transient_absorption(
    cfg: &SystemConfig,
    pulse: &PulseConfig,
    grids: &TimeGrids,
    t2: f64,
    opts: &TransformOptions,
) -> Result<AbsorptionSpectrum> {
    if !(t2 >= 0.0) {
        return Err(Error::Domain(format!("population time must be ≥ 0, got {t2}")));
    }
    let g = TimeGrids { n1: 1, t2, ..*grids };
    pump_probe_from_response(&averaged_response(&g, cfg, pulse)?, opts)
}

/// Blue–white–red map of x ∈ [−1, 1]; white at 0, and x ↦ −x swaps red and blue.
pub fn diverging_color(x: f64) -> [u8; 3] {
    let x = x.clamp(-1.0, 1.0);
    let fade = |a: f64| (255.0 * (1.0 - a.abs())).round() as u8;
    if x >= 0.0 {
        [255, fade(x), fade(x)]
    } else {
        [fade(x), fade(x), 255]
    }
}

/// Binary PPM with Ω1 along x (left to right) and Ω3 along y (bottom to top).
pub fn heatmap_ppm(map: &SpectrumMap) -> Result<Vec<u8>> {
    let v = map.real_values();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("heatmap values must be finite".into()));
    }
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let scale = lo.abs().max(hi.abs());
    let (w, h) = (map.n1(), map.n3());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for row in (0..h).rev() {
        for col in 0..w {
            // a constant map carries no contrast and renders at the midpoint
            let x = if hi > lo && scale > 0.0 { v[col * h + row] / scale } else { 0.0 };
            out.extend_from_slice(&diverging_color(x));
        }
    }
    Ok(out)
}

/// Axis and scale description written next to a heatmap named `image`.
pub fn heatmap_sidecar(map: &SpectrumMap, image: &str) -> String {
    let v = map.real_values();
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let first_last = |a: &[f64]| (a.first().copied().unwrap_or(f64::NAN), a.last().copied().unwrap_or(f64::NAN));
    let (a1, b1) = first_last(&map.omega1);
    let (a3, b3) = first_last(&map.omega3);
    format!(
        "image {image}\nkind {}\nt2_fs {}\nwidth {} (omega1, left to right)\nheight {} (omega3, bottom to top)\n\
         omega1_mev {a1:.6} {b1:.6}\nomega3_mev {a3:.6} {b3:.6}\n\
         colormap blue-white-red, value/scale in [-1, 1], white = 0\nscale {scale:.9e}\n",
        map.kind.label(),
        map.t2,
        map.n1(),
        map.n3(),
    )
}

/// Writes `path` (PPM) and `path` with extension `.txt` describing the axes.
pub fn render_heatmap(map: &SpectrumMap, path: &Path) -> Result<()> {
    let img = heatmap_ppm(map)?;
    std::fs::write(path, img).map_err(|e| Error::io(path, e))?;
    let side = path.with_extension("txt");
    let text = heatmap_sidecar(map, path.file_name().and_then(|s| s.to_str()).unwrap_or(""));
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::TimeGrids;

    fn synthetic(n: usize, dt: f64, wa: f64, wb: f64, gam: f64, rephasing: bool) -> ResponseGrid {
        let g = TimeGrids { n1: n, dt1: dt, n3: n, dt3: dt, t2: 0.0, t_first: 0.0, lattice_step: dt };
        let mut r = ResponseGrid { grids: g, omega_ref: 1000.0, values: std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n * n]) };
        let s1 = if rephasing { 1.0 } else { -1.0 };
        let k = if rephasing { crate::response::PathwayKind::SeR } else { crate::response::PathwayKind::SeNr };
        for i in 0..n {
            for j in 0..n {
                let (t1, t3) = (i as f64 * dt, j as f64 * dt);
                let ph = (s1 * wa * t1 - wb * t3) / HBAR_MEV_FS;
                r.values[k as usize][i * n + j] = C64::from_polar((-gam * (t1 + t3)).exp(), ph) * -I;
            }
        }
        r
    }

    fn argmax(v: &[f64]) -> usize {
        (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
    }

    #[test]
    fn lorentzian_peak_lands_on_the_right_bin() {
        for (rephasing, kind) in [(false, MapKind::Nonrephasing), (true, MapKind::Rephasing)] {
            let r = synthetic(64, 4.0, 12.0, -20.0, 0.01, rephasing);
            let m = twod_transform(&r, kind, &TransformOptions::default()).unwrap();
            let v = m.real_values();
            let k = argmax(&v);
            let (i1, i3) = (k / m.n3(), k % m.n3());
            let dw = m.omega1[1] - m.omega1[0];
            assert!((m.omega1[i1] - 1012.0).abs() <= dw, "{kind:?} omega1 {}", m.omega1[i1]);
            assert!((m.omega3[i3] - 980.0).abs() <= dw);
        }
    }

    #[test]
    fn lorentzian_width_matches_closed_form() {
        // Re of ∫₀^∞ e^{iΔt/ħ − γt} dt is γ/((Δ/ħ)² + γ²): HWHM ħγ
        let gam = 0.02;
        let j: Vec<C64> = (0..2048).map(|n| C64::from((-gam * n as f64).exp())).collect();
        let a = absorption_from_signal(&j, 1.0, 0.0, &TransformOptions::default()).unwrap();
        let k = a.argmax().unwrap();
        let half = a.intensity[k] / 2.0;
        let right = (k..a.omega.len()).find(|&i| a.intensity[i] < half).unwrap();
        let (x0, x1) = (a.omega[right - 1], a.omega[right]);
        let (y0, y1) = (a.intensity[right - 1], a.intensity[right]);
        let hw = x0 + (half - y0) * (x1 - x0) / (y1 - y0);
        assert!((hw - HBAR_MEV_FS * gam).abs() / (HBAR_MEV_FS * gam) < 0.01, "{hw}");
    }

    #[test]
    fn zeros_map_to_zeros() {
        let g = TimeGrids { n1: 8, dt1: 2.0, n3: 8, dt3: 2.0, t2: 0.0, t_first: 0.0, lattice_step: 2.0 };
        let r = ResponseGrid { grids: g, omega_ref: 0.0, values: std::array::from_fn(|_| vec![C64::new(0.0, 0.0); 64]) };
        for kind in [MapKind::Rephasing, MapKind::Nonrephasing, MapKind::TotalReal] {
            assert!(twod_transform(&r, kind, &TransformOptions::default()).unwrap().values.iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn parseval_for_padded_transform() {
        let x: Vec<C64> = (0..50).map(|n| C64::new((0.3 * n as f64).sin(), (0.07 * n as f64).cos()) * (1.0 + n as f64 * 0.01)).collect();
        let dt = 2.5;
        let p = 200;
        let mut planner = FftPlanner::new();
        let s = transform_1d(&x, dt, p, Kernel::Plus, Window::None, &mut planner);
        let freq: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        let time: f64 = x.iter().enumerate().map(|(n, v)| (v * if n == 0 { 0.5 * dt } else { dt }).norm_sqr()).sum::<f64>() * p as f64;
        assert!((freq - time).abs() / time < 1e-12);
    }

    #[test]
    fn axis_is_centered_on_reference() {
        let a = frequency_axis(8, 1.0, 100.0);
        assert_eq!(a[4], 100.0);
        assert!(a.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn heatmap_contracts() {
        let m = SpectrumMap {
            omega1: vec![0.0, 1.0, 2.0],
            omega3: vec![0.0, 1.0],
            values: vec![C64::from(2.5); 6],
            t2: 0.0,
            kind: MapKind::TotalReal,
        };
        let img = heatmap_ppm(&m).unwrap();
        let body = &img[img.len() - 18..];
        assert!(body.iter().all(|&b| b == 255));
        let vals = [0.3, -1.0, 0.0, 0.7, -0.2, 1.0];
        let mut a = m.clone();
        a.values = vals.iter().map(|&v| C64::from(v)).collect();
        let mut b = a.clone();
        b.values.iter_mut().for_each(|v| *v = -*v);
        let (ia, ib) = (heatmap_ppm(&a).unwrap(), heatmap_ppm(&b).unwrap());
        let off = ia.len() - 18;
        for px in 0..6 {
            let (pa, pb) = (&ia[off + 3 * px..off + 3 * px + 3], &ib[off + 3 * px..off + 3 * px + 3]);
            assert_eq!([pa[0], pa[1], pa[2]], [pb[2], pb[1], pb[0]]);
        }
    }

    #[test]
    fn crop_keeps_the_window() {
        let r = synthetic(16, 4.0, 0.0, 0.0, 0.01, false);
        let m = twod_transform(&r, MapKind::Nonrephasing, &TransformOptions::default()).unwrap();
        let c = m.crop(950.0, 1050.0);
        assert!(c.omega1.iter().all(|&w| (950.0..=1050.0).contains(&w)));
        assert_eq!(c.values.len(), c.n1() * c.n3());
        let i = m.omega1.iter().position(|&w| w == c.omega1[0]).unwrap();
        let j = m.omega3.iter().position(|&w| w == c.omega3[0]).unwrap();
        assert_eq!(c.at(0, 0), m.at(i, j));
    }
}
