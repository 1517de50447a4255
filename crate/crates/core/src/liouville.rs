//! Five-level Hamiltonian under the pulse and Lindblad propagation of the
//! density matrix with projector pure dephasing.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::model::{DephasingConfig, EnergyLevels};
use crate::ode::{step_cap, Dopri, OdeOptions, OdeSystem};
use crate::pulse::{max_coupling, FieldSource, PulseDrive};
use crate::units::HBAR_MEV_FS;
use crate::{Mat5, C64};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// H(t) for one ensemble member: bare levels, Zeeman-shifted T±, δ0 on
/// (S,T0) and √2·b on (T0,T±). The ground row and column stay zero.
#[derive(Debug, Clone, Copy)]
pub struct TimeDependentHamiltonian<F = PulseDrive> {
    pub levels: EnergyLevels,
    pub drive: F,
}

impl<F: FieldSource> TimeDependentHamiltonian<F> {
    pub fn new(levels: EnergyLevels, drive: F) -> Self {
        TimeDependentHamiltonian { levels, drive }
    }

    /// Entries of H(t) − shift·P_e as a real 5×5 array (H is real symmetric here).
    pub fn shifted(&self, t: f64, shift: f64) -> [[f64; 5]; 5] {
        let f = self.drive.fields(t);
        let (es, et) = (self.levels.e_singlet - shift, self.levels.e_triplet - shift);
        let b = SQRT2 * f.b_x;
        [
            [0.0; 5],
            [0.0, es, f.delta0, 0.0, 0.0],
            [0.0, f.delta0, et, b, b],
            [0.0, 0.0, b, et + f.b_bar, 0.0],
            [0.0, 0.0, b, 0.0, et - f.b_bar],
        ]
    }

    /// Largest energy in H − shift·P_e that the step cap has to resolve, meV.
    pub fn energy_scale(&self, shift: f64) -> f64 {
        let static_part = (self.levels.e_singlet - shift).abs().max((self.levels.e_triplet - shift).abs());
        max_coupling(&self.drive.coupling_bound(), static_part)
    }
}

pub fn hamiltonian_at<F: FieldSource>(t: f64, h: &TimeDependentHamiltonian<F>) -> Mat5 {
    Mat5::from_fn(|i, j| C64::new(h.shifted(t, 0.0)[i][j], 0.0))
}

/// Sorted eigenvalues of a Hermitian 5×5 matrix.
pub fn hermitian_eigenvalues(m: &Mat5) -> [f64; 5] {
    let e = SymmetricEigen::new(*m).eigenvalues;
    let mut v: [f64; 5] = std::array::from_fn(|i| e[i]);
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Density matrix in the {g, S, T0, T+, T−} basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub Mat5);

impl DensityMatrix {
    pub fn pure(psi: &[C64; 5]) -> Self {
        DensityMatrix(Mat5::from_fn(|i, j| psi[i] * psi[j].conj()))
    }

    pub fn ground() -> Self {
        let mut m = Mat5::zeros();
        m[(0, 0)] = C64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        hermitian_eigenvalues(&herm)[0]
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }
}

/// Pure dephasing with the singlet projector and the collective triplet projector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladGenerator {
    pub gamma_s: f64,
    pub gamma_t: f64,
}

impl From<DephasingConfig> for LindbladGenerator {
    fn from(d: DephasingConfig) -> Self {
        LindbladGenerator { gamma_s: d.gamma_s, gamma_t: d.gamma_t }
    }
}

fn projector(states: &[usize]) -> Mat5 {
    let mut m = Mat5::zeros();
    for &s in states {
        m[(s, s)] = C64::new(1.0, 0.0);
    }
    m
}

impl LindbladGenerator {
    pub fn sigma_s(&self) -> Mat5 {
        projector(&[1])
    }

    pub fn sigma_t(&self) -> Mat5 {
        projector(&[2, 3, 4])
    }

    /// Σ_α γ_α(σ ρ σ† − ½{σ†σ, ρ}), evaluated with operator products.
    pub fn apply(&self, rho: &Mat5) -> Mat5 {
        let mut out = Mat5::zeros();
        for (g, s) in [(self.gamma_s, self.sigma_s()), (self.gamma_t, self.sigma_t())] {
            let ss = s.adjoint() * s;
            out += (s * rho * s.adjoint() - (ss * rho + rho * ss) * C64::new(0.5, 0.0)) * C64::new(g, 0.0);
        }
        out
    }

    /// Projector dephasing acts elementwise: L(ρ)_ij = −d_ij ρ_ij with
    /// d_ij = Σ_α γ_α |p_i^α − p_j^α| / 2.
    pub fn decay_rates(&self) -> [[f64; 5]; 5] {
        let ps = [0.0, 1.0, 0.0, 0.0, 0.0];
        let pt = [0.0, 0.0, 1.0, 1.0, 1.0];
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                0.5 * (self.gamma_s * (ps[i] - ps[j])).abs() + 0.5 * (self.gamma_t * (pt[i] - pt[j])).abs()
            })
        })
    }

    pub fn max_rate(&self) -> f64 {
        self.gamma_s.abs() + self.gamma_t.abs()
    }
}

pub fn lindblad_apply(rho: &DensityMatrix, gen: &LindbladGenerator) -> Mat5 {
    gen.apply(&rho.0)
}

/// dX/dt = −(i/ħ)[H(t) − Ω·P_e, X] − d∘X on a row-major 5×5 operator.
struct LiouvilleOde<'a, F> {
    h: &'a TimeDependentHamiltonian<F>,
    shift: f64,
    rates: [[f64; 5]; 5],
}

impl<F: FieldSource> OdeSystem for LiouvilleOde<'_, F> {
    fn dim(&self) -> usize {
        25
    }

    fn rhs(&self, t: f64, x: &[C64], dx: &mut [C64]) {
        let hm = self.h.shifted(t, self.shift);
        let k = C64::new(0.0, -1.0 / HBAR_MEV_FS);
        for i in 0..5 {
            for j in 0..5 {
                let mut c = C64::new(0.0, 0.0);
                for m in 0..5 {
                    c += x[m * 5 + j] * hm[i][m] - x[i * 5 + m] * hm[m][j];
                }
                dx[i * 5 + j] = k * c - x[i * 5 + j] * self.rates[i][j];
            }
        }
    }
}

fn excited(i: usize) -> f64 {
    if i == 0 { 0.0 } else { 1.0 }
}

/// Propagate an arbitrary operator (not necessarily Hermitian) from `t_a` to `t_b`.
///
/// Integration runs in the frame rotating at the mean excited energy; the
/// scalar phases of the g–e blocks are restored exactly at the end.
pub fn propagate_operator<F: FieldSource>(
    x: &Mat5,
    t_a: f64,
    t_b: f64,
    h: &TimeDependentHamiltonian<F>,
    gen: &LindbladGenerator,
) -> Result<Mat5> {
    if !(t_b >= t_a) {
        return Err(Error::Domain(format!("propagation needs t_b >= t_a (got {t_a} -> {t_b})")));
    }
    let shift = 0.5 * (h.levels.e_singlet + h.levels.e_triplet);
    let ode = LiouvilleOde { h, shift, rates: gen.decay_rates() };
    let cap = step_cap(h.drive.carrier_omega(), h.energy_scale(shift)).min(0.2 / gen.max_rate().max(1e-300));
    // tighter than the library default: purity of closed evolution must hold to
    // 1e-8 at 100 meV couplings, and this path is not performance critical
    let mut ig = Dopri::new(25, OdeOptions { rtol: 1e-11, atol: 1e-14, max_step: cap, ..Default::default() });
    let mut y: Vec<C64> = (0..25).map(|k| x[(k / 5, k % 5)]).collect();
    ig.integrate(&ode, t_a, t_b, &mut y)?;
    let dt = t_b - t_a;
    Ok(Mat5::from_fn(|i, j| {
        let w = excited(i) - excited(j);
        let ph = if w == 0.0 { C64::new(1.0, 0.0) } else { C64::from_polar(1.0, -w * shift * dt / HBAR_MEV_FS) };
        y[i * 5 + j] * ph
    }))
}

pub fn propagate_density<F: FieldSource>(
    rho: &DensityMatrix,
    t_a: f64,
    t_b: f64,
    h: &TimeDependentHamiltonian<F>,
    gen: &LindbladGenerator,
) -> Result<DensityMatrix> {
    let herm = rho.hermiticity_error();
    if !(herm <= 1e-12) {
        return Err(Error::Domain(format!("density matrix is not Hermitian (deviation {herm:e})")));
    }
    Ok(DensityMatrix(propagate_operator(&rho.0, t_a, t_b, h, gen)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LandeFactors;
    use crate::pulse::{HyperfineSample, PhaseSample, PulseConfig};
    use crate::units::thz_to_rad_per_fs;

    fn ham(b0: f64) -> TimeDependentHamiltonian {
        let p = PulseConfig {
            b0,
            omega: thz_to_rad_per_fs(1.0),
            t_center: 300.0,
            sigma_t: 2000.0,
            phase: 0.0,
            coupling_scale: Some(10.0),
            n_phase: 1,
        };
        let drive = PulseDrive::new(
            &p,
            &LandeFactors { g_e: 1.8, g_h: 2.2 },
            HyperfineSample { i_e: 0.4, i_h: -0.2 },
            PhaseSample { phase: 0.0, sign: 1.0 },
        );
        TimeDependentHamiltonian::new(EnergyLevels { e_singlet: 1400.0, e_triplet: 1390.0 }, drive)
    }

    fn paper_rates() -> LindbladGenerator {
        LindbladGenerator { gamma_s: 1.0 / 80.0, gamma_t: 1.0 / 200.0 }
    }

    fn random_hermitian(seed: u64) -> Mat5 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Mat5::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        a + a.adjoint()
    }

    fn random_state(seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Mat5::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let p = a * a.adjoint();
        let tr = p.trace();
        let r = p / tr;
        DensityMatrix((r + r.adjoint()) * C64::new(0.5, 0.0))
    }

    #[test]
    fn field_free_hamiltonian_is_bare() {
        let mut h = ham(0.0);
        h.drive.hf = HyperfineSample::default();
        let m = hamiltonian_at(123.0, &h);
        let diag = [0.0, 1400.0, 1390.0, 1390.0, 1390.0];
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { diag[i] } else { 0.0 };
                assert_eq!(m[(i, j)], C64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_with_empty_ground_row() {
        let h = ham(1.0);
        for k in 0..50 {
            let m = hamiltonian_at(-500.0 + 37.0 * k as f64, &h);
            assert!((m - m.adjoint()).iter().all(|c| c.norm() < 1e-14));
            assert!((0..5).all(|j| m[(0, j)] == C64::new(0.0, 0.0) && m[(j, 0)] == C64::new(0.0, 0.0)));
        }
    }

    /// Cyclic Jacobi rotations, an eigensolver independent of the library one.
    fn jacobi_eigenvalues(mut a: [[f64; 5]; 5]) -> [f64; 5] {
        for _ in 0..100 {
            let off: f64 = (0..5).flat_map(|i| (0..5).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..5 {
                for q in p + 1..5 {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..5 {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..5 {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut e: [f64; 5] = std::array::from_fn(|i| a[i][i]);
        e.sort_by(|x, y| x.total_cmp(y));
        e
    }

    #[test]
    fn eigenvalues_agree_with_jacobi() {
        let h = ham(1.0);
        for k in 0..40 {
            let t = -2000.0 + 113.0 * k as f64;
            let lib = hermitian_eigenvalues(&hamiltonian_at(t, &h));
            let jac = jacobi_eigenvalues(h.shifted(t, 0.0));
            for (a, b) in lib.iter().zip(jac) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn projectors_are_hermitian_idempotent() {
        let g = paper_rates();
        for s in [g.sigma_s(), g.sigma_t()] {
            assert_eq!(s, s.adjoint());
            assert_eq!(s, s * s);
        }
    }

    #[test]
    fn dephasing_leaves_singlet_population() {
        let mut r = Mat5::zeros();
        r[(1, 1)] = C64::new(1.0, 0.0);
        assert!(lindblad_apply(&DensityMatrix(r), &paper_rates()).iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn ground_singlet_coherence_decays_at_half_rate() {
        let mut r = Mat5::zeros();
        r[(0, 1)] = C64::new(0.3, -0.2);
        let out = lindblad_apply(&DensityMatrix(r), &paper_rates());
        let expect = r[(0, 1)] * (-0.5 / 80.0);
        assert!((out[(0, 1)] - expect).norm() < 1e-16);
        assert!(out.iter().enumerate().all(|(k, c)| k == 5 || c.norm() == 0.0));
    }

    #[test]
    fn elementwise_rates_match_operator_form() {
        let g = LindbladGenerator { gamma_s: 0.013, gamma_t: 0.004 };
        let rates = g.decay_rates();
        for seed in 0..10 {
            let r = random_hermitian(seed);
            let op = g.apply(&r);
            for i in 0..5 {
                for j in 0..5 {
                    assert!((op[(i, j)] + r[(i, j)] * rates[i][j]).norm() < 1e-16);
                }
            }
            assert!(op.trace().norm() < 1e-14);
            assert!((op - op.adjoint()).iter().all(|c| c.norm() < 1e-16));
        }
        assert!((rates[1][2] - 0.5 * (0.013 + 0.004)).abs() < 1e-18);
        assert_eq!(rates[2][3], 0.0);
    }

    #[test]
    fn trace_and_positivity_under_dephasing() {
        let h = ham(1.0);
        let g = paper_rates();
        let mut rho = random_state(3);
        for k in 0..10 {
            let t = 100.0 * k as f64;
            rho = propagate_density(&rho, t, t + 100.0, &h, &g).unwrap();
            assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-10);
            assert!(rho.hermiticity_error() < 1e-12);
            assert!(rho.min_eigenvalue() >= -1e-8);
        }
    }

    #[test]
    fn ground_population_is_untouched() {
        let h = ham(1.0);
        let rho0 = random_state(5);
        let rho = propagate_density(&rho0, 0.0, 500.0, &h, &paper_rates()).unwrap();
        assert!((rho.0[(0, 0)] - rho0.0[(0, 0)]).norm() < 1e-12);
    }

    #[test]
    fn composition_of_intervals() {
        let h = ham(1.0);
        let g = paper_rates();
        let rho0 = random_state(7);
        let direct = propagate_density(&rho0, 0.0, 700.0, &h, &g).unwrap();
        let mid = propagate_density(&rho0, 0.0, 260.0, &h, &g).unwrap();
        let split = propagate_density(&mid, 260.0, 700.0, &h, &g).unwrap();
        assert!((direct.0 - split.0).iter().all(|c| c.norm() < 1e-8));
    }

    #[test]
    fn purity_is_conserved_without_dephasing() {
        let h = ham(1.0);
        let g = LindbladGenerator { gamma_s: 0.0, gamma_t: 0.0 };
        let rho0 = random_state(9);
        let rho = propagate_density(&rho0, 0.0, 1000.0, &h, &g).unwrap();
        assert!((rho.purity() - rho0.purity()).abs() < 1e-8);
    }

    #[test]
    fn field_free_coherence_oscillates_at_singlet_energy() {
        let mut h = ham(0.0);
        h.drive.hf = HyperfineSample::default();
        let mut x = Mat5::zeros();
        x[(1, 0)] = C64::new(1.0, 0.0);
        let g = paper_rates();
        let out = propagate_operator(&x, 0.0, 250.0, &h, &g).unwrap();
        let expect = C64::from_polar((-0.5 * 250.0 / 80.0f64).exp(), -1400.0 * 250.0 / HBAR_MEV_FS);
        assert!((out[(1, 0)] - expect).norm() < 1e-8);
    }

    #[test]
    fn rejects_non_hermitian_density() {
        let mut r = DensityMatrix::ground();
        r.0[(0, 1)] = C64::new(0.1, 0.0);
        assert!(propagate_density(&r, 0.0, 1.0, &ham(1.0), &paper_rates()).is_err());
    }
}
