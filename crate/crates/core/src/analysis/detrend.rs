//! Multi-exponential detrending by variable projection, and oscillation
//! frequencies of the residual.

use nalgebra::{DMatrix, DVector};
use rustfft::FftPlanner;

use super::peaks::T2Trace;
use crate::error::{Error, Result};
use crate::units::HBAR_MEV_FS;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetrendOptions {
    pub n_exp: usize,
    pub with_offset: bool,
    pub max_iter: usize,
}

impl Default for DetrendOptions {
    fn default() -> Self {
        DetrendOptions { n_exp: 2, with_offset: true, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetrendFit {
    /// Decay rates, 1/fs, ascending.
    pub rates: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub offset: f64,
    pub residual: T2Trace,
    pub rss: f64,
    pub iterations: usize,
    /// False when the iteration limit was hit; the parameters are then the
    /// best found so far.
    pub converged: bool,
}

/// Model c_k·e^{−r_k (t − t_0)} with r_k = θ_k² ≥ 0 in units of 1/span.
struct Problem<'a> {
    tau: Vec<f64>,
    y: &'a [f64],
    with_offset: bool,
}

impl Problem<'_> {
    fn basis(&self, theta: &[f64]) -> DMatrix<f64> {
        let cols = theta.len() + usize::from(self.with_offset);
        DMatrix::from_fn(self.tau.len(), cols, |i, k| if k < theta.len() { (-theta[k] * theta[k] * self.tau[i]).exp() } else { 1.0 })
    }

    fn linear(&self, theta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let phi = self.basis(theta);
        let y = DVector::from_column_slice(self.y);
        let svd = phi.clone().svd(true, true);
        let tol = 1e-13 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        let c = svd.solve(&y, tol).unwrap_or_else(|_| DVector::zeros(phi.ncols()));
        let r = &y - &phi * &c;
        (c, r)
    }

    fn residual(&self, theta: &[f64]) -> DVector<f64> {
        self.linear(theta).1
    }
}

fn levenberg_marquardt(p: &Problem, mut theta: Vec<f64>, max_iter: usize, scale: f64) -> (Vec<f64>, f64, usize, bool) {
    let mut r = p.residual(&theta);
    let mut rss = r.norm_squared();
    let mut lambda = 1e-3;
    let n = theta.len();
    for it in 0..max_iter {
        if rss <= 1e-28 * scale {
            return (theta, rss, it, true);
        }
        // central-difference Jacobian of the projected residual
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let h = 1e-6 * theta[k].abs().max(1e-3);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            let d = (p.residual(&tp) - p.residual(&tm)) / (2.0 * h);
            jac.set_column(k, &d);
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            let rc = p.residual(&cand);
            let rss_c = rc.norm_squared();
            if rss_c < rss {
                let rel = (rss - rss_c) / rss.max(f64::MIN_POSITIVE);
                let small_step = step.norm() <= 1e-12 * (1.0 + theta.iter().map(|t| t * t).sum::<f64>().sqrt());
                theta = cand;
                r = rc;
                rss = rss_c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-15 || small_step {
                    return (theta, rss, it + 1, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left: a stationary point
            return (theta, rss, it + 1, true);
        }
    }
    (theta, rss, max_iter, false)
}

fn starts(n_exp: usize) -> Vec<Vec<f64>> {
    let sets: &[&[f64]] = match n_exp {
        1 => &[&[0.5], &[2.0], &[8.0]],
        2 => &[&[0.5, 5.0], &[1.0, 10.0], &[2.0, 20.0], &[0.2, 2.0]],
        _ => &[&[0.3, 3.0, 30.0], &[0.5, 5.0, 50.0], &[1.0, 4.0, 16.0]],
    };
    sets.iter().map(|s| s.iter().map(|r| r.sqrt()).collect()).collect()
}

pub fn detrend_multiexp(trace: &T2Trace, n_exp: usize) -> Result<DetrendFit> {
    detrend_with(trace, &DetrendOptions { n_exp, ..Default::default() })
}

pub fn detrend_with(trace: &T2Trace, opts: &DetrendOptions) -> Result<DetrendFit> {
    if !(1..=3).contains(&opts.n_exp) {
        return Err(Error::Domain(format!("n_exp must be 1, 2 or 3, got {}", opts.n_exp)));
    }
    if trace.len() < 4 * opts.n_exp {
        return Err(Error::Domain(format!("trace of {} points is too short for {} exponentials", trace.len(), opts.n_exp)));
    }
    if trace.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("trace contains non-finite values".into()));
    }
    let t0 = trace.t2[0];
    let span = (trace.t2[trace.len() - 1] - t0).max(f64::MIN_POSITIVE);
    let p = Problem { tau: trace.t2.iter().map(|t| (t - t0) / span).collect(), y: &trace.values, with_offset: opts.with_offset };
    let scale = trace.values.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut best: Option<(Vec<f64>, f64, usize, bool)> = None;
    for s in starts(opts.n_exp) {
        let cand = levenberg_marquardt(&p, s, opts.max_iter, scale);
        if best.as_ref().is_none_or(|b| cand.1 < b.1) {
            best = Some(cand);
        }
    }
    let (theta, _, iterations, converged) = best.expect("at least one start");
    let (c, r) = p.linear(&theta);
    let mut order: Vec<usize> = (0..opts.n_exp).collect();
    order.sort_by(|&a, &b| (theta[a] * theta[a]).total_cmp(&(theta[b] * theta[b])));
    let rates = order.iter().map(|&k| theta[k] * theta[k] / span).collect();
    let amplitudes = order.iter().map(|&k| c[k]).collect();
    let offset = if opts.with_offset { c[opts.n_exp] } else { 0.0 };
    Ok(DetrendFit {
        rates,
        amplitudes,
        offset,
        rss: r.norm_squared(),
        residual: T2Trace { t2: trace.t2.clone(), values: r.iter().copied().collect() },
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    /// ħω, meV.
    pub energy: f64,
    /// Amplitude estimate 2|X(ω)|/N.
    pub weight: f64,
}

/// Strongest spectral maxima of a uniformly sampled trace, refined by a
/// parabola through the three bins around each maximum. Components slower
/// than one unpadded bin are ignored.
pub fn oscillation_frequencies(residual: &T2Trace, n_freq: usize, zero_pad: usize) -> Result<Vec<Oscillation>> {
    let dt = residual.spacing()?;
    let n = residual.len();
    let pad = zero_pad.max(1);
    let np = n * pad;
    let mut buf: Vec<C64> = residual.values.iter().map(|&v| C64::from(v)).chain(std::iter::repeat(C64::from(0.0))).take(np).collect();
    FftPlanner::new().plan_fft_forward(np).process(&mut buf);
    let mag: Vec<f64> = buf.iter().map(|z| z.norm()).collect();
    let mut out = Vec::new();
    for k in pad.max(1)..np / 2 {
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        if !(b > a && b >= c) {
            continue;
        }
        let den = a - 2.0 * b + c;
        let delta = if den < 0.0 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 };
        let peak = b - 0.25 * (a - c) * delta;
        let energy = 2.0 * std::f64::consts::PI * HBAR_MEV_FS * (k as f64 + delta) / (np as f64 * dt);
        out.push(Oscillation { energy, weight: 2.0 * peak / n as f64 });
    }
    out.sort_by(|x, y| y.weight.total_cmp(&x.weight));
    out.truncate(n_freq);
    Ok(out)
}

/// Energy resolution of a padded frequency estimate: one padded bin.
pub fn padded_bin(trace: &T2Trace, zero_pad: usize) -> Result<f64> {
    let dt = trace.spacing()?;
    Ok(2.0 * std::f64::consts::PI * HBAR_MEV_FS / ((trace.len() * zero_pad.max(1)) as f64 * dt))
}
