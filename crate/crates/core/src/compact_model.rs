//! Compact 2x2 transfer-matrix model of a single tunable basic unit (TBU).
//!
//! A TBU is a Mach-Zehnder cell: two 50:50 directional couplers around a pair
//! of phase shifters (theta, phi), with the waveguide delay and loss lumped
//! into a single factor `alpha * exp(-j w n_eff L / c)`. The whole crate uses
//! the `exp(+j w t)` time-dependence convention, which puts the minus signs
//! in front of `j` everywhere below; conventions are never mixed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, TAU};

use crate::error::{Error, Result};

/// Center wavelength used for frequency normalization and as the dispersion
/// reference point: 1550 nm.
pub const LAMBDA_CENTER_M: f64 = 1.55e-6;

/// Reduce an angle to [0, 2*pi).
pub fn reduce_angle(x: f64) -> f64 {
    x.rem_euclid(TAU)
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_to_pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > std::f64::consts::PI {
        y - TAU
    } else {
        y
    }
}

/// Which of the two phase shifters inside a TBU a derivative refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseShifter {
    Theta,
    Phi,
}

/// Tunable and physical parameters of one TBU.
///
/// `theta` and `phi` are stored reduced modulo 2*pi; the reduction never
/// changes the transfer matrix. `eta1`/`eta2` are directional-coupler
/// deviations from the ideal 50:50 split (zero for an ideal device).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TbuParams {
    pub theta: f64,
    pub phi: f64,
    /// Amplitude transmission in (0, 1].
    pub alpha: f64,
    /// Total lumped waveguide length in meters.
    pub length: f64,
    #[serde(default)]
    pub eta1: f64,
    #[serde(default)]
    pub eta2: f64,
}

impl TbuParams {
    pub fn new(theta: f64, phi: f64, alpha: f64, length: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in (0, 1], got {alpha}"
            )));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "length must be positive, got {length}"
            )));
        }
        Ok(Self {
            theta: reduce_angle(theta),
            phi: reduce_angle(phi),
            alpha,
            length,
            eta1: 0.0,
            eta2: 0.0,
        })
    }

    pub fn with_couplers(mut self, eta1: f64, eta2: f64) -> Self {
        self.eta1 = eta1;
        self.eta2 = eta2;
        self
    }

    pub fn set_phases(&mut self, theta: f64, phi: f64) {
        self.theta = reduce_angle(theta);
        self.phi = reduce_angle(phi);
    }

    /// True when both couplers are exactly ideal (eta1 = eta2 = 0).
    pub fn has_ideal_couplers(&self) -> bool {
        self.eta1 == 0.0 && self.eta2 == 0.0
    }
}

/// Global physical constants of the platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Effective index of the propagating mode.
    pub n_eff: f64,
    /// Group index, used for FSR bookkeeping.
    pub n_g: f64,
    /// Speed of light in free space, m/s.
    pub c: f64,
    /// Optional first-order dispersion coefficient: n_eff(w) = n_eff + s * (w - w_center),
    /// with w_center = 2*pi*c/LAMBDA_CENTER_M. Absent means n_eff constant.
    #[serde(default)]
    pub dispersion_slope: Option<f64>,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            n_eff: 2.35,
            n_g: 2.35,
            c: 3.0e8,
            dispersion_slope: None,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_eff > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "n_eff must be positive, got {}",
                self.n_eff
            )));
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "c must be positive, got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// Effective index at angular frequency `omega`, with the optional
    /// first-order dispersion model applied.
    pub fn n_eff_at(&self, omega: f64) -> f64 {
        match self.dispersion_slope {
            None => self.n_eff,
            Some(s) => {
                let omega_center = TAU * self.c / LAMBDA_CENTER_M;
                self.n_eff + s * (omega - omega_center)
            }
        }
    }

    /// Single-TBU delay tau(w) = n_eff(w) * length / c, in seconds.
    pub fn tau(&self, length: f64, omega: f64) -> f64 {
        self.n_eff_at(omega) * length / self.c
    }
}

/// Dense 2x2 complex transfer matrix with named entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex2x2 {
    pub f11: Complex64,
    pub f12: Complex64,
    pub f21: Complex64,
    pub f22: Complex64,
}

impl Complex2x2 {
    pub fn new(f11: Complex64, f12: Complex64, f21: Complex64, f22: Complex64) -> Self {
        Self { f11, f12, f21, f22 }
    }

    pub fn zero() -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self::new(z, z, z, z)
    }

    pub fn identity() -> Self {
        let o = Complex64::new(1.0, 0.0);
        let z = Complex64::new(0.0, 0.0);
        Self::new(o, z, z, o)
    }

    pub fn det(&self) -> Complex64 {
        self.f11 * self.f22 - self.f12 * self.f21
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.f11 * s, self.f12 * s, self.f21 * s, self.f22 * s)
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        Self::new(
            self.f11 * rhs.f11 + self.f12 * rhs.f21,
            self.f11 * rhs.f12 + self.f12 * rhs.f22,
            self.f21 * rhs.f11 + self.f22 * rhs.f21,
            self.f21 * rhs.f12 + self.f22 * rhs.f22,
        )
    }

    /// Largest entrywise absolute difference against another matrix.
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        [
            (self.f11 - rhs.f11).norm(),
            (self.f12 - rhs.f12).norm(),
            (self.f21 - rhs.f21).norm(),
            (self.f22 - rhs.f22).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        [self.f11, self.f12, self.f21, self.f22]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Lumped loss-and-delay factor `alpha * exp(-j w n_eff(w) L / c)`.
fn phase_factor(p: &TbuParams, consts: &PhysicalConstants, omega: f64) -> Complex64 {
    p.alpha * Complex64::from_polar(1.0, -omega * consts.tau(p.length, omega))
}

/// Ideal TBU transfer matrix:
///
/// F = 0.5 * [[e^-jt - e^-jf, -j(e^-jt + e^-jf)],
///            [-j(e^-jt + e^-jf), -e^-jt + e^-jf]] * alpha e^{-j w n_eff L / c}
pub fn tbu_transfer(p: &TbuParams, consts: &PhysicalConstants, omega: f64) -> Complex2x2 {
    let et = Complex64::from_polar(1.0, -p.theta);
    let ep = Complex64::from_polar(1.0, -p.phi);
    let s = phase_factor(p, consts, omega);
    let f11 = 0.5 * (et - ep) * s;
    let f12 = Complex64::new(0.0, -0.5) * (et + ep) * s;
    // Reciprocity of the closed form: F21 is the same expression as F12.
    Complex2x2::new(f11, f12, f12, -f11)
}

/// TBU transfer matrix with non-ideal couplers M(eta1), M(eta2).
///
/// M(eta) = [[cos(pi/4+eta), -j sin(pi/4+eta)], [-j sin(pi/4+eta), cos(pi/4+eta)]].
/// The published non-ideal form carries a redundant global 1/2 in front of
/// M(eta1) D M(eta2); M(0) M(0) already reproduces the ideal coupler pair, so
/// that prefactor is dropped here. Exact zeros of eta1 and eta2 delegate to
/// [`tbu_transfer`] so the ideal reduction is bit-for-bit.
pub fn tbu_transfer_nonideal(p: &TbuParams, consts: &PhysicalConstants, omega: f64) -> Complex2x2 {
    if p.has_ideal_couplers() {
        return tbu_transfer(p, consts, omega);
    }
    let (c1, s1) = ((FRAC_PI_4 + p.eta1).cos(), (FRAC_PI_4 + p.eta1).sin());
    let (c2, s2) = ((FRAC_PI_4 + p.eta2).cos(), (FRAC_PI_4 + p.eta2).sin());
    let et = Complex64::from_polar(1.0, -p.theta);
    let ep = Complex64::from_polar(1.0, -p.phi);
    let s = phase_factor(p, consts, omega);
    let mj = Complex64::new(0.0, -1.0);
    Complex2x2::new(
        (c1 * c2 * et - s1 * s2 * ep) * s,
        mj * (c1 * s2 * et + s1 * c2 * ep) * s,
        mj * (s1 * c2 * et + c1 * s2 * ep) * s,
        (-s1 * s2 * et + c1 * c2 * ep) * s,
    )
}

/// Analytic derivative of the ideal transfer matrix with respect to theta or phi.
///
/// Only the half of F carrying the chosen exponential survives:
/// dF/dtheta = 0.5 [[-j e^-jt, -e^-jt], [-e^-jt, j e^-jt]] * alpha e^{-j w tau}.
pub fn tbu_derivative(
    p: &TbuParams,
    consts: &PhysicalConstants,
    omega: f64,
    which: PhaseShifter,
) -> Complex2x2 {
    let s = phase_factor(p, consts, omega);
    match which {
        PhaseShifter::Theta => {
            let det = Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, -p.theta);
            let f11 = 0.5 * det * s;
            let f12 = Complex64::new(0.0, -0.5) * det * s;
            Complex2x2::new(f11, f12, f12, -f11)
        }
        PhaseShifter::Phi => {
            let dep = Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, -p.phi);
            let f11 = -0.5 * dep * s;
            let f12 = Complex64::new(0.0, -0.5) * dep * s;
            Complex2x2::new(f11, f12, f12, -f11)
        }
    }
}

/// Analytic derivative of the non-ideal transfer matrix.
pub fn tbu_derivative_nonideal(
    p: &TbuParams,
    consts: &PhysicalConstants,
    omega: f64,
    which: PhaseShifter,
) -> Complex2x2 {
    if p.has_ideal_couplers() {
        return tbu_derivative(p, consts, omega, which);
    }
    let (c1, s1) = ((FRAC_PI_4 + p.eta1).cos(), (FRAC_PI_4 + p.eta1).sin());
    let (c2, s2) = ((FRAC_PI_4 + p.eta2).cos(), (FRAC_PI_4 + p.eta2).sin());
    let s = phase_factor(p, consts, omega);
    let mj = Complex64::new(0.0, -1.0);
    match which {
        PhaseShifter::Theta => {
            let det = mj * Complex64::from_polar(1.0, -p.theta);
            Complex2x2::new(
                c1 * c2 * det * s,
                mj * c1 * s2 * det * s,
                mj * s1 * c2 * det * s,
                -s1 * s2 * det * s,
            )
        }
        PhaseShifter::Phi => {
            let dep = mj * Complex64::from_polar(1.0, -p.phi);
            Complex2x2::new(
                -s1 * s2 * dep * s,
                mj * s1 * c2 * dep * s,
                mj * c1 * s2 * dep * s,
                c1 * c2 * dep * s,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn nominal(theta: f64, phi: f64, alpha: f64) -> TbuParams {
        TbuParams::new(theta, phi, alpha, 250e-6).unwrap()
    }

    /// Angular frequency whose accumulated phase w*n_eff*L/c is a multiple of 2*pi,
    /// so the lumped delay factor is exactly 1 in structure (cos/sin of 2*pi*k).
    fn omega_phase_one(k: f64) -> f64 {
        let c = consts();
        k * TAU * c.c / (c.n_eff * 250e-6)
    }

    #[test]
    fn bar_state_is_diagonal() {
        // theta=0, phi=pi, alpha=1, accumulated phase = 0 mod 2pi -> [[1,0],[0,-1]]
        let f = tbu_transfer(&nominal(0.0, PI, 1.0), &consts(), omega_phase_one(1e6));
        assert!((f.f11 - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        assert!(f.f12.norm() < 1e-9);
        assert!(f.f21.norm() < 1e-9);
        assert!((f.f22 - Complex64::new(-1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn cross_state_is_antidiagonal() {
        let f = tbu_transfer(&nominal(0.0, 0.0, 1.0), &consts(), omega_phase_one(1e6));
        assert!(f.f11.norm() < 1e-9);
        assert!((f.f12 - Complex64::new(0.0, -1.0)).norm() < 1e-9);
        assert!((f.f21 - Complex64::new(0.0, -1.0)).norm() < 1e-9);
        assert!(f.f22.norm() < 1e-9);
    }

    #[test]
    fn determinant_magnitude_is_alpha_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = nominal(rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), 0.99);
            let omega = rng.random_range(1.0e15..1.3e15);
            let f = tbu_transfer(&p, &consts(), omega);
            assert!((f.det().norm() - 0.99f64 * 0.99).abs() < 1e-12);
        }
    }

    #[test]
    fn unitary_at_unit_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = nominal(rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), 1.0);
            let omega = rng.random_range(1.0e15..1.3e15);
            let f = tbu_transfer(&p, &consts(), omega);
            // F F^dagger = I
            let g11 = f.f11 * f.f11.conj() + f.f12 * f.f12.conj();
            let g12 = f.f11 * f.f21.conj() + f.f12 * f.f22.conj();
            let g22 = f.f21 * f.f21.conj() + f.f22 * f.f22.conj();
            assert!((g11 - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            assert!(g12.norm() < 1e-12);
            assert!((g22 - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn reciprocity_and_periodicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let theta = rng.random_range(0.0..TAU);
            let phi = rng.random_range(0.0..TAU);
            let omega = rng.random_range(1.0e15..1.3e15);
            let p = nominal(theta, phi, 0.97);
            let f = tbu_transfer(&p, &consts(), omega);
            assert_eq!(f.f12, f.f21);

            // 2*pi periodicity in theta and phi, after reduction.
            let p2 = nominal(theta + TAU, phi + TAU, 0.97);
            assert!(f.max_abs_diff(&tbu_transfer(&p2, &consts(), omega)) < 1e-12);

            // 2*pi periodicity in the accumulated waveguide phase.
            let omega_shift = omega + TAU / consts().tau(p.length, omega);
            let f3 = tbu_transfer(&p, &consts(), omega_shift);
            assert!(f.max_abs_diff(&f3) < 1e-9);
        }
    }

    #[test]
    fn balanced_segments_lump_into_single_model() {
        // Compose L1 . DC . L2 . PS . L3 . DC . L4 with balanced arms and
        // compare against the lumped model with L = sum(L_i), alpha = prod(alpha_i).
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cst = consts();
        for _ in 0..50 {
            let theta = rng.random_range(0.0..TAU);
            let phi = rng.random_range(0.0..TAU);
            let omega = rng.random_range(1.0e15..1.3e15);
            let lengths: Vec<f64> = (0..4).map(|_| rng.random_range(10e-6..200e-6)).collect();
            let alphas: Vec<f64> = (0..4).map(|_| rng.random_range(0.9..1.0)).collect();

            let dc = Complex2x2::new(
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(1.0, 0.0),
            );
            let ps = Complex2x2::new(
                Complex64::from_polar(1.0, -theta),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::from_polar(1.0, -phi),
            );
            let seg = |i: usize| {
                let z = alphas[i] * Complex64::from_polar(1.0, -omega * cst.tau(lengths[i], omega));
                Complex2x2::new(z, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), z)
            };
            let composed = seg(0)
                .mul(&dc)
                .mul(&seg(1))
                .mul(&ps)
                .mul(&seg(2))
                .mul(&dc)
                .mul(&seg(3))
                .scale(Complex64::new(0.5, 0.0));

            let lumped = tbu_transfer(
                &TbuParams::new(theta, phi, alphas.iter().product(), lengths.iter().sum()).unwrap(),
                &cst,
                omega,
            );
            assert!(composed.max_abs_diff(&lumped) < 1e-12);
        }
    }

    #[test]
    fn nonideal_reduces_to_ideal_at_zero_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = nominal(rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), 0.99);
            let omega = rng.random_range(1.0e15..1.3e15);
            let ideal = tbu_transfer(&p, &consts(), omega);
            let non = tbu_transfer_nonideal(&p, &consts(), omega);
            // Exact-zero couplers delegate to the ideal closed form.
            assert_eq!(ideal, non);
        }
    }

    #[test]
    fn nonideal_coupler_limits() {
        // eta = pi/4 turns a coupler into a full cross; the TBU at theta=phi=0
        // with both couplers crossed becomes diagonal up to the lumped factor.
        let p = nominal(0.0, 0.0, 1.0).with_couplers(FRAC_PI_4, FRAC_PI_4);
        let omega = omega_phase_one(1e6);
        let f = tbu_transfer_nonideal(&p, &consts(), omega);
        // M(pi/4) D M(pi/4) at theta=phi=0: [[0,-j],[-j,0]]^2 = -I
        assert!((f.f11 - Complex64::new(-1.0, 0.0)).norm() < 1e-9);
        assert!(f.f12.norm() < 1e-9);

        // eta = -pi/4 removes all coupling: pure diagonal phases.
        let p = nominal(0.7, 1.9, 1.0).with_couplers(-FRAC_PI_4, -FRAC_PI_4);
        let f = tbu_transfer_nonideal(&p, &consts(), omega);
        assert!(f.f12.norm() < 1e-12);
        assert!(f.f21.norm() < 1e-12);
        assert!((f.f11.norm() - 1.0).abs() < 1e-12);
        assert!((f.f22.norm() - 1.0).abs() < 1e-12);
    }

    fn fd_derivative(
        p: &TbuParams,
        omega: f64,
        which: PhaseShifter,
        h: f64,
        nonideal: bool,
    ) -> Complex2x2 {
        let eval = |pp: &TbuParams| {
            if nonideal {
                tbu_transfer_nonideal(pp, &consts(), omega)
            } else {
                tbu_transfer(pp, &consts(), omega)
            }
        };
        let mut plus = *p;
        let mut minus = *p;
        match which {
            PhaseShifter::Theta => {
                plus.theta = p.theta + h;
                minus.theta = p.theta - h;
            }
            PhaseShifter::Phi => {
                plus.phi = p.phi + h;
                minus.phi = p.phi - h;
            }
        }
        let fp = eval(&plus);
        let fm = eval(&minus);
        let inv = Complex64::new(1.0 / (2.0 * h), 0.0);
        Complex2x2::new(
            (fp.f11 - fm.f11) * inv,
            (fp.f12 - fm.f12) * inv,
            (fp.f21 - fm.f21) * inv,
            (fp.f22 - fm.f22) * inv,
        )
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = nominal(0.7, 1.3, 0.99);
        let omega = 1.2e15;
        for which in [PhaseShifter::Theta, PhaseShifter::Phi] {
            let analytic = tbu_derivative(&p, &consts(), omega, which);
            let fd = fd_derivative(&p, omega, which, 1e-6, false);
            let scale = analytic.f12.norm().max(1e-12);
            assert!(analytic.max_abs_diff(&fd) / scale < 1e-8);
        }
        // Same check for the non-ideal variant.
        let p = p.with_couplers(0.08, -0.05);
        for which in [PhaseShifter::Theta, PhaseShifter::Phi] {
            let analytic = tbu_derivative_nonideal(&p, &consts(), omega, which);
            let fd = fd_derivative(&p, omega, which, 1e-6, true);
            let scale = analytic.f12.norm().max(1e-12);
            assert!(analytic.max_abs_diff(&fd) / scale < 1e-8);
        }
    }

    #[test]
    fn derivative_structure() {
        let cst = consts();
        let omega = 1.1e15;
        // At theta = phi the diagonal parts of dF/dtheta and dF/dphi cancel.
        let p = nominal(0.9, 0.9, 0.99);
        let dt = tbu_derivative(&p, &cst, omega, PhaseShifter::Theta);
        let dp = tbu_derivative(&p, &cst, omega, PhaseShifter::Phi);
        assert!((dt.f11 + dp.f11).norm() < 1e-14);
        assert!((dt.f22 + dp.f22).norm() < 1e-14);

        // dF/dtheta is independent of phi entirely.
        let a = nominal(0.9, 0.3, 0.99);
        let b = nominal(0.9, 2.8, 0.99);
        let da = tbu_derivative(&a, &cst, omega, PhaseShifter::Theta);
        let db = tbu_derivative(&b, &cst, omega, PhaseShifter::Theta);
        assert!(da.max_abs_diff(&db) < 1e-15);
    }

    #[test]
    fn linear_dispersion_shifts_the_delay() {
        let base = consts();
        let mut disp = base;
        disp.dispersion_slope = Some(1e-18);
        let omega_center = TAU * base.c / LAMBDA_CENTER_M;
        // At the reference frequency the two models agree exactly.
        assert_eq!(base.n_eff_at(omega_center), disp.n_eff_at(omega_center));
        // Away from it the effective index moves linearly.
        let omega = omega_center + 1.0e13;
        assert!((disp.n_eff_at(omega) - (2.35 + 1e-18 * 1.0e13)).abs() < 1e-12);
        let p = nominal(0.4, 1.1, 0.99);
        let f_base = tbu_transfer(&p, &base, omega);
        let f_disp = tbu_transfer(&p, &disp, omega);
        // Same magnitudes, different accumulated phase.
        assert!((f_base.f12.norm() - f_disp.f12.norm()).abs() < 1e-12);
        let dphi = (f_base.f12 / f_disp.f12).arg();
        let expect = omega * 1e-18 * 1.0e13 * p.length / base.c;
        assert!((dphi.abs() - expect.abs()).abs() < 1e-9);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(TbuParams::new(0.0, 0.0, 0.0, 250e-6).is_err());
        assert!(TbuParams::new(0.0, 0.0, 1.1, 250e-6).is_err());
        assert!(TbuParams::new(0.0, 0.0, 0.99, 0.0).is_err());
        assert!(TbuParams::new(-1.0, 9.0, 0.99, 250e-6).unwrap().theta >= 0.0);
    }
}
