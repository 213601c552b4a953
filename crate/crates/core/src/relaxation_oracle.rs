//! Closed-form responses of horizontally-relaxed meshes, used as an
//! independent check of the full solver.
//!
//! With every horizontal TBU fixed to the bar state (theta = 0, phi = pi) the
//! mesh rows decouple. The top and bottom lines become pure delay chains
//! e^{-j M w tau}, and each row's cross transfer reduces to a scalar xi_M
//! whose magnitude follows from a 2x2 coefficient-matrix product. The closed
//! forms carry no loss term, so this oracle is defined at alpha = 1 only;
//! lossy relaxed meshes are cross-checked solver-vs-direct-solve instead.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::compact_model::wrap_to_pi;
use crate::error::{Error, Result};
use crate::mesh_solver::MeshSpec;

/// Tolerance on |q_m| below which a relaxed row is degenerate (phi = theta + pi).
const DEGENERATE_TOL: f64 = 1e-12;
/// Tolerance for recognizing the horizontal relaxation configuration.
const RELAXED_TOL: f64 = 1e-12;

/// Vertical phase shifts of one decoupled row, plus the single-TBU delay tau.
#[derive(Debug, Clone)]
pub struct RelaxedRow {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// Single-TBU delay in seconds.
    pub tau: f64,
}

impl RelaxedRow {
    pub fn new(thetas: Vec<f64>, phis: Vec<f64>, tau: f64) -> Result<Self> {
        if thetas.len() != phis.len() || thetas.is_empty() {
            return Err(Error::ShapeMismatch(
                "thetas and phis must be equal-length and non-empty".into(),
            ));
        }
        Ok(Self { thetas, phis, tau })
    }

    /// p_m = e^{-j theta_m} - e^{-j phi_m}.
    pub fn p(&self, m: usize) -> Complex64 {
        Complex64::from_polar(1.0, -self.thetas[m]) - Complex64::from_polar(1.0, -self.phis[m])
    }

    /// q_m = -e^{-j theta_m} - e^{-j phi_m}.
    pub fn q(&self, m: usize) -> Complex64 {
        -Complex64::from_polar(1.0, -self.thetas[m]) - Complex64::from_polar(1.0, -self.phis[m])
    }
}

/// |xi_M| of one relaxed row at angular frequency `omega`.
///
/// Evaluates the quotient of the coefficient product over the [0 1] ...[0;1]
/// contraction; the numerator product has unit magnitude, which is asserted
/// numerically rather than assumed.
pub fn xi_magnitude(row: &RelaxedRow, omega: f64) -> Result<f64> {
    let m_count = row.thetas.len();
    let j = Complex64::new(0.0, 1.0);
    let e_m2 = Complex64::from_polar(1.0, -2.0 * omega * row.tau);
    let e_m1 = Complex64::from_polar(1.0, -omega * row.tau);
    let e_p1 = Complex64::from_polar(1.0, omega * row.tau);
    let e_p2 = Complex64::from_polar(1.0, 2.0 * omega * row.tau);

    let mut numerator = Complex64::new(1.0, 0.0);
    // Accumulated product of the per-TBU coefficient matrices, left to right.
    let mut k11 = Complex64::new(1.0, 0.0);
    let mut k12 = Complex64::new(0.0, 0.0);
    let mut k21 = Complex64::new(0.0, 0.0);
    let mut k22 = Complex64::new(1.0, 0.0);

    for m in 0..m_count {
        let q = row.q(m);
        if q.norm() < DEGENERATE_TOL {
            return Err(Error::DegenerateRow { index: m });
        }
        let p = row.p(m);
        let c = j * e_m2 * (p * p - q * q) / (2.0 * q);
        let d = -j * e_m1 * p / q;
        let e = j * e_p1 * p / q;
        let f = -2.0 * j * e_p2 / q;
        numerator *= c * f - d * e;

        let (n11, n12) = (k11 * c + k12 * e, k11 * d + k12 * f);
        let (n21, n22) = (k21 * c + k22 * e, k21 * d + k22 * f);
        k11 = n11;
        k12 = n12;
        k21 = n21;
        k22 = n22;
    }
    let denominator = k22; // [0 1] K [0; 1]
    if denominator.norm() < 1e-300 {
        return Err(Error::SolveFailure("relaxed denominator vanished".into()));
    }
    debug_assert!((numerator.norm() - 1.0).abs() < 1e-9);
    Ok((numerator / denominator).norm())
}

/// Predicted structure of G* for a horizontally relaxed N x M mesh.
#[derive(Debug, Clone)]
pub struct RelaxedPrediction {
    /// |G*| entry by entry, (2N+2) x (2N+2).
    pub magnitudes: Vec<Vec<f64>>,
    /// Complex top-line transmission e^{-j M w tau}.
    pub corner_top: Complex64,
    /// Complex bottom-line transmission (-1)^M e^{-j M w tau}.
    pub corner_bottom: Complex64,
    /// |xi_M| per mesh row.
    pub xi: Vec<f64>,
}

/// Evaluate the closed-form prediction for a relaxed mesh at one frequency.
///
/// Requires every horizontal TBU at (theta, phi) = (0, pi) and unit alpha
/// throughout.
pub fn relaxed_mesh_response(spec: &MeshSpec, omega: f64) -> Result<RelaxedPrediction> {
    for (i, t) in spec.horizontal_tbus.iter().enumerate() {
        if wrap_to_pi(t.theta).abs() > RELAXED_TOL || wrap_to_pi(t.phi - PI).abs() > RELAXED_TOL {
            return Err(Error::Validation {
                field: format!("horizontal_tbus[{i}]"),
                message: "horizontal relaxation requires theta = 0, phi = pi".into(),
            });
        }
    }
    for t in spec.vertical_tbus.iter().chain(&spec.horizontal_tbus) {
        if (t.alpha - 1.0).abs() > RELAXED_TOL {
            return Err(Error::Validation {
                field: "alpha".into(),
                message: "the relaxed closed forms hold at alpha = 1 only".into(),
            });
        }
    }

    let n = spec.n_rows;
    let m = spec.n_cols;
    let length = spec.vertical_tbus[0].length;
    let tau = spec.constants.tau(length, omega);

    let mut xi = Vec::with_capacity(n);
    for r in 0..n {
        let thetas: Vec<f64> = (0..m).map(|c| spec.vertical(r, c).theta).collect();
        let phis: Vec<f64> = (0..m).map(|c| spec.vertical(r, c).phi).collect();
        xi.push(xi_magnitude(&RelaxedRow::new(thetas, phis, tau)?, omega)?);
    }

    let rows = 2 * n + 2;
    let mut mags = vec![vec![0.0; rows]; rows];
    mags[0][0] = 1.0;
    mags[rows - 1][rows - 1] = 1.0;
    for (r, &x) in xi.iter().enumerate() {
        let top = 2 * r + 1;
        let bot = 2 * r + 2;
        if m % 2 == 1 {
            mags[top][bot] = x;
            mags[bot][top] = x;
        } else {
            mags[top][top] = x;
            mags[bot][bot] = x;
        }
    }
    let corner = Complex64::from_polar(1.0, -(m as f64) * omega * tau);
    Ok(RelaxedPrediction {
        magnitudes: mags,
        corner_top: corner,
        corner_bottom: if m % 2 == 0 { corner } else { -corner },
        xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compact_model::{PhysicalConstants, TbuParams};
    use crate::mesh_solver::{forward_map, global_scatter};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn relaxed_mesh(seed: u64, n: usize, m: usize) -> MeshSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = MeshSpec::uniform(
            n,
            m,
            TbuParams::new(0.0, PI, 1.0, 250e-6).unwrap(),
            PhysicalConstants::default(),
        )
        .unwrap();
        for t in spec.vertical_tbus.iter_mut() {
            loop {
                let theta = rng.random_range(0.0..TAU);
                let phi = rng.random_range(0.0..TAU);
                let d = wrap_to_pi(theta - phi);
                if (d.abs() - PI).abs() > 0.1 {
                    t.set_phases(theta, phi);
                    break;
                }
            }
        }
        spec
    }

    #[test]
    fn xi1_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let row = RelaxedRow::new(
                vec![rng.random_range(0.0..TAU)],
                vec![rng.random_range(0.0..TAU)],
                2.35 * 250e-6 / 3.0e8,
            )
            .unwrap();
            let omega = rng.random_range(1.1e15..1.3e15);
            match xi_magnitude(&row, omega) {
                Ok(xi) => {
                    // |xi_1| = |q_0 / 2|
                    assert!((xi - row.q(0).norm() / 2.0).abs() < 1e-12);
                }
                Err(Error::DegenerateRow { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn xi2_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tau = 2.35 * 250e-6 / 3.0e8;
        for _ in 0..50 {
            let row = RelaxedRow::new(
                vec![rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
                vec![rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
                tau,
            )
            .unwrap();
            let omega = rng.random_range(1.1e15..1.3e15);
            if row.q(0).norm() < 1e-3 || row.q(1).norm() < 1e-3 {
                continue;
            }
            let xi = xi_magnitude(&row, omega).unwrap();
            // |xi_2| = |q0 q1| / |-4 + p0 p1 e^{-j 4 w tau}|
            let e4 = Complex64::from_polar(1.0, -4.0 * omega * tau);
            let expect = (row.q(0) * row.q(1)).norm()
                / (Complex64::new(-4.0, 0.0) + row.p(0) * row.p(1) * e4).norm();
            assert!((xi - expect).abs() < 1e-12, "xi {xi} vs {expect}");
        }
    }

    #[test]
    fn cross_states_give_unit_xi2() {
        // theta_m = phi_m everywhere: p = 0, |q| = 2, so |xi_2| = |q0 q1| / 4 = 1.
        let row = RelaxedRow::new(vec![0.4, 1.7], vec![0.4, 1.7], 1.9e-12).unwrap();
        let xi = xi_magnitude(&row, 1.2e15).unwrap();
        assert!((xi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_row_detected() {
        let row = RelaxedRow::new(vec![0.3], vec![0.3 + PI], 1.9e-12).unwrap();
        assert!(matches!(
            xi_magnitude(&row, 1.2e15),
            Err(Error::DegenerateRow { index: 0 })
        ));
    }

    #[test]
    fn full_solver_matches_oracle_on_1xm() {
        for m in 1..=4 {
            let spec = relaxed_mesh(40 + m as u64, 1, m);
            for (i, omega) in [1.15e15, 1.21e15, 1.27e15].iter().enumerate() {
                let prediction = relaxed_mesh_response(&spec, *omega).unwrap();
                let gs = global_scatter(&spec, *omega).unwrap();
                let g = forward_map(&gs).unwrap();
                for r in 0..4 {
                    for c in 0..4 {
                        assert!(
                            (g[(r, c)].norm() - prediction.magnitudes[r][c]).abs() < 1e-9,
                            "M={m} omega#{i} entry ({r},{c}): {} vs {}",
                            g[(r, c)].norm(),
                            prediction.magnitudes[r][c]
                        );
                    }
                }
                // Top and bottom lines are exact complex delays.
                assert!((g[(0, 0)] - prediction.corner_top).norm() < 1e-9);
                assert!((g[(3, 3)] - prediction.corner_bottom).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rows_decouple_in_nxm() {
        let spec = relaxed_mesh(60, 2, 3);
        let omega = 1.2e15;
        let prediction = relaxed_mesh_response(&spec, omega).unwrap();
        let gs = global_scatter(&spec, omega).unwrap();
        let g = forward_map(&gs).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                assert!((g[(r, c)].norm() - prediction.magnitudes[r][c]).abs() < 1e-9);
            }
        }

        // Perturbing row-2 phases leaves the row-1 transfer untouched.
        let mut spec2 = spec.clone();
        for c in 0..3 {
            let t = spec2.vertical_tbus[1 * 3 + c];
            spec2.vertical_tbus[1 * 3 + c].set_phases(t.theta + 0.5, t.phi + 0.9);
        }
        let g2 = forward_map(&global_scatter(&spec2, omega).unwrap()).unwrap();
        for r in 1..=2 {
            for c in 1..=2 {
                assert!((g[(r, c)] - g2[(r, c)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn xi_is_periodic_with_the_fsr() {
        let spec = relaxed_mesh(70, 1, 3);
        let omega = 1.2e15;
        let tau = spec.constants.tau(250e-6, omega);
        let r = RelaxedRow::new(
            (0..3).map(|c| spec.vertical(0, c).theta).collect(),
            (0..3).map(|c| spec.vertical(0, c).phi).collect(),
            tau,
        )
        .unwrap();
        // The denominator is a polynomial in e^{j 2 w tau}: period pi / tau.
        let a = xi_magnitude(&r, omega).unwrap();
        let b = xi_magnitude(&r, omega + PI / tau).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn non_relaxed_config_rejected() {
        let mut spec = relaxed_mesh(80, 1, 2);
        spec.horizontal_tbus[0].set_phases(0.2, PI);
        assert!(matches!(
            relaxed_mesh_response(&spec, 1.2e15),
            Err(Error::Validation { .. })
        ));
    }
}
