//! Adaptive Dormand–Prince 5(4) integration of complex linear ODE systems.

use crate::error::{Error, Result};
use crate::C64;

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on the step, fs.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-9, atol: 1e-12, max_step: f64::INFINITY, max_steps: 50_000_000 }
    }
}

/// Step cap resolving the fastest oscillation: 2π/(20·max(ω, E/ħ)).
pub fn step_cap(omega: f64, energy_scale: f64) -> f64 {
    let rate = omega.max(energy_scale / crate::units::HBAR_MEV_FS);
    if rate > 0.0 { 2.0 * std::f64::consts::PI / (20.0 * rate) } else { f64::INFINITY }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrator with reusable stage buffers. Carries the step-size estimate
/// across calls so a trajectory integrated piecewise continues smoothly.
#[derive(Debug, Clone)]
pub struct Dopri {
    pub opts: OdeOptions,
    k: Vec<Vec<C64>>,
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    h: f64,
    pub steps: usize,
    pub rejected: usize,
}

impl Dopri {
    pub fn new(dim: usize, opts: OdeOptions) -> Self {
        Dopri {
            opts,
            k: vec![vec![C64::new(0.0, 0.0); dim]; 7],
            ytmp: vec![C64::new(0.0, 0.0); dim],
            ynew: vec![C64::new(0.0, 0.0); dim],
            h: 0.0,
            steps: 0,
            rejected: 0,
        }
    }

    /// Advance `y` from `t0` to exactly `t1` (t1 ≥ t0).
    pub fn integrate<S: OdeSystem + ?Sized>(&mut self, sys: &S, t0: f64, t1: f64, y: &mut [C64]) -> Result<()> {
        let n = y.len();
        if t1 < t0 {
            return Err(Error::Domain(format!("integration interval reversed: {t0} -> {t1}")));
        }
        if t1 == t0 {
            return Ok(());
        }
        let span = t1 - t0;
        if self.h <= 0.0 {
            self.h = self.opts.max_step.min(span).min(1.0);
        }
        let mut t = t0;
        sys.rhs(t, y, &mut self.k[0]);
        let min_step = 1e-12 * t0.abs().max(t1.abs()).max(1.0);
        while t < t1 {
            let mut h = self.h.min(self.opts.max_step);
            let mut hit_end = false;
            if t + h >= t1 || t1 - (t + h) < 1e-9 * h {
                h = t1 - t;
                hit_end = true;
            }
            if h < min_step {
                return Err(Error::Integration { t, reason: format!("step size underflow (h = {h:e} fs)") });
            }
            if self.steps + self.rejected >= self.opts.max_steps {
                return Err(Error::Integration { t, reason: "step budget exhausted".into() });
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in self.k.iter().enumerate().take(s) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc += kj[i] * (h * a);
                        }
                    }
                    if s == 6 {
                        self.ynew[i] = acc;
                    } else {
                        self.ytmp[i] = acc;
                    }
                }
                let tail = &mut self.k[s..];
                let arg = if s == 6 { &self.ynew } else { &self.ytmp };
                sys.rhs(t + C[s] * h, arg, &mut tail[0]);
            }
            let mut err = 0.0f64;
            for i in 0..n {
                let mut e = C64::new(0.0, 0.0);
                for (j, kj) in self.k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e += kj[i] * E[j];
                    }
                }
                let scale = self.opts.atol + self.opts.rtol * y[i].norm().max(self.ynew[i].norm());
                let v = (e * h).norm() / scale;
                if !v.is_finite() {
                    return Err(Error::Integration { t, reason: "non-finite state".into() });
                }
                err = err.max(v);
            }
            if err <= 1.0 {
                self.steps += 1;
                t = if hit_end { t1 } else { t + h };
                y.copy_from_slice(&self.ynew);
                self.k.swap(0, 6);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !hit_end || h >= self.h {
                    self.h = h * fac;
                }
            } else {
                self.rejected += 1;
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rotor {
        w: f64,
    }

    impl OdeSystem for Rotor {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[C64], dy: &mut [C64]) {
            dy[0] = C64::new(0.0, -self.w) * y[0];
        }
    }

    struct Ramp;

    impl OdeSystem for Ramp {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
            dy[0] = C64::new(0.0, -t) * y[0];
        }
    }

    #[test]
    fn harmonic_phase_is_accurate() {
        let mut ig = Dopri::new(1, OdeOptions::default());
        let mut y = [C64::new(1.0, 0.0)];
        ig.integrate(&Rotor { w: 0.3 }, 0.0, 500.0, &mut y).unwrap();
        let exact = C64::from_polar(1.0, -0.3 * 500.0);
        assert!((y[0] - exact).norm() < 1e-7);
    }

    #[test]
    fn piecewise_matches_time_dependent_solution() {
        let mut ig = Dopri::new(1, OdeOptions { max_step: 0.5, ..Default::default() });
        let mut y = [C64::new(1.0, 0.0)];
        for k in 0..20 {
            let (a, b) = (k as f64 * 0.5, (k + 1) as f64 * 0.5);
            ig.integrate(&Ramp, a, b, &mut y).unwrap();
        }
        let exact = C64::from_polar(1.0, -0.5 * 100.0);
        assert!((y[0] - exact).norm() < 1e-7);
    }

    #[test]
    fn step_cap_is_respected() {
        let opts = OdeOptions { max_step: 0.25, ..Default::default() };
        let mut ig = Dopri::new(1, opts);
        let mut y = [C64::new(1.0, 0.0)];
        ig.integrate(&Rotor { w: 1e-6 }, 0.0, 10.0, &mut y).unwrap();
        assert!(ig.steps >= 40);
    }

    #[test]
    fn stiff_system_underflows_with_time() {
        let mut ig = Dopri::new(1, OdeOptions::default());
        let mut y = [C64::new(1.0, 0.0)];
        match ig.integrate(&Rotor { w: 1e16 }, 5.0, 6.0, &mut y) {
            Err(Error::Integration { t, reason }) => {
                assert!((5.0..6.0).contains(&t));
                assert!(reason.contains("underflow"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_state_is_reported() {
        struct Bad;
        impl OdeSystem for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
                dy[0] = if t > 0.5 { C64::new(f64::NAN, 0.0) } else { y[0] };
            }
        }
        let mut ig = Dopri::new(1, OdeOptions { max_step: 0.1, ..Default::default() });
        let mut y = [C64::new(1.0, 0.0)];
        match ig.integrate(&Bad, 0.0, 1.0, &mut y) {
            Err(Error::Integration { t, .. }) => assert!(t > 0.3 && t <= 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cap_formula() {
        let w = crate::units::thz_to_rad_per_fs(1.0);
        assert!((step_cap(w, 0.0) - 50.0).abs() < 1e-9);
        assert_eq!(step_cap(0.0, 0.0), f64::INFINITY);
    }
}
