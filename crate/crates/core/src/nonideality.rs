//! Thermal-crosstalk reparameterization of the synthesis problem and
//! process-variation Monte Carlo.
//!
//! Heater power maps to phase through x = h(Phi p), with Phi diagonal-dominant
//! (ones on the diagonal) capturing crosstalk between heaters. Both extra
//! operations are differentiable, so the synthesis loop runs unchanged over p
//! with the gradient pulled back through Phi^T and h'. The optimizer treats p
//! as an unconstrained mathematical variable; [`phases_from_power`] is the
//! physical map and keeps its nonnegativity requirement.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh_solver::{global_scatter, mesh_response, MeshSpec, WaveVector};
use crate::objectives::{CostKind, FrequencyGrid, TargetSpec};
use crate::optimizer::{
    synthesize_in_space, NoObserver, OptimizerOptions, ParamSpace, SynthesisResult,
};

/// Elementwise power-to-phase map. Linear is the standard first-order
/// thermo-optic model; other smooth maps can slot in as new variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PowerPhaseMap {
    Linear { coefficient: f64 },
}

impl PowerPhaseMap {
    pub fn apply(&self, u: f64) -> f64 {
        match self {
            PowerPhaseMap::Linear { coefficient } => coefficient * u,
        }
    }

    pub fn derivative(&self, _u: f64) -> f64 {
        match self {
            PowerPhaseMap::Linear { coefficient } => *coefficient,
        }
    }

    pub fn invert(&self, x: f64) -> f64 {
        match self {
            PowerPhaseMap::Linear { coefficient } => x / coefficient,
        }
    }
}

/// Thermal coefficient matrix and power-to-phase map.
#[derive(Debug, Clone)]
pub struct ThermalModel {
    /// Square, diagonal-dominant, ones on the diagonal; size 2(2N+1)M.
    pub phi_matrix: DMatrix<f64>,
    pub h: PowerPhaseMap,
}

impl ThermalModel {
    pub fn identity(dim: usize) -> Self {
        Self {
            phi_matrix: DMatrix::identity(dim, dim),
            h: PowerPhaseMap::Linear { coefficient: 1.0 },
        }
    }

    /// Uniform off-diagonal crosstalk of the given strength.
    pub fn uniform_crosstalk(dim: usize, strength: f64) -> Self {
        let mut phi = DMatrix::from_element(dim, dim, strength);
        for i in 0..dim {
            phi[(i, i)] = 1.0;
        }
        Self {
            phi_matrix: phi,
            h: PowerPhaseMap::Linear { coefficient: 1.0 },
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.phi_matrix.nrows() != dim || self.phi_matrix.ncols() != dim {
            return Err(Error::ShapeMismatch(format!(
                "thermal matrix must be {dim}x{dim}, got {}x{}",
                self.phi_matrix.nrows(),
                self.phi_matrix.ncols()
            )));
        }
        for i in 0..dim {
            if (self.phi_matrix[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Validation {
                    field: "phi_matrix".into(),
                    message: format!(
                        "diagonal entry {i} must be 1, got {}",
                        self.phi_matrix[(i, i)]
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Phases induced by a heater power vector: x = h(Phi p).
pub fn phases_from_power(tm: &ThermalModel, power: &[f64]) -> Result<Vec<f64>> {
    tm.validate(power.len())?;
    if let Some((i, &v)) = power.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativePower { index: i, value: v });
    }
    let p = nalgebra::DVector::from_column_slice(power);
    let u = &tm.phi_matrix * p;
    Ok(u.iter().map(|&ui| tm.h.apply(ui)).collect())
}

/// Power-space view of the mesh parameters for the optimizer.
struct ThermalSpace<'a> {
    tm: &'a ThermalModel,
}

impl ParamSpace for ThermalSpace<'_> {
    fn raw_from_phases(&self, phases: &[f64]) -> Result<Vec<f64>> {
        // p = Phi^-1 h^-1(x), so the run starts at the same phases as the
        // unconstrained synthesis with the same seed.
        let hx = nalgebra::DVector::from_iterator(
            phases.len(),
            phases.iter().map(|&x| self.tm.h.invert(x)),
        );
        let p = self
            .tm
            .phi_matrix
            .clone()
            .lu()
            .solve(&hx)
            .ok_or_else(|| Error::SolveFailure("thermal matrix is singular".into()))?;
        Ok(p.iter().copied().collect())
    }

    fn phases(&self, raw: &[f64]) -> Vec<f64> {
        let u = &self.tm.phi_matrix * nalgebra::DVector::from_column_slice(raw);
        u.iter().map(|&ui| self.tm.h.apply(ui)).collect()
    }

    fn pullback(&self, raw: &[f64], grad_phases: &[f64]) -> Vec<f64> {
        // dC/dp = Phi^T (h'(Phi p) . dC/dx)
        let u = &self.tm.phi_matrix * nalgebra::DVector::from_column_slice(raw);
        let scaled = nalgebra::DVector::from_iterator(
            grad_phases.len(),
            grad_phases
                .iter()
                .zip(u.iter())
                .map(|(&g, &ui)| g * self.tm.h.derivative(ui)),
        );
        (self.tm.phi_matrix.tr_mul(&scaled))
            .iter()
            .copied()
            .collect()
    }
}

/// Synthesis result in power space: the optimal heater powers and the
/// phase-space result they induce.
#[derive(Debug, Clone)]
pub struct ThermalSynthesisResult {
    pub power: Vec<f64>,
    pub result: SynthesisResult,
}

/// Synthesize over heater powers instead of phases. With the identity thermal
/// model this reproduces [`crate::optimizer::synthesize`] exactly, seed for seed.
pub fn synthesize_thermal(
    spec_template: &MeshSpec,
    grid: &FrequencyGrid,
    a0_in: &WaveVector,
    targets: &TargetSpec,
    cost_kind: CostKind,
    tm: &ThermalModel,
    opts: &OptimizerOptions,
) -> Result<ThermalSynthesisResult> {
    opts.validate()?;
    tm.validate(spec_template.param_count())?;
    let space = ThermalSpace { tm };
    let outcomes: Vec<Result<(SynthesisResult, Vec<f64>)>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            synthesize_in_space(
                spec_template,
                grid,
                a0_in,
                targets,
                cost_kind,
                opts,
                &space,
                opts.seed.wrapping_add(r as u64),
                r,
                None::<&mut NoObserver>,
            )
        })
        .collect();
    let mut best: Option<(SynthesisResult, Vec<f64>)> = None;
    let mut costs = Vec::new();
    let mut traces = Vec::new();
    let mut first_err = None;
    for outcome in outcomes {
        match outcome {
            Ok((res, raw)) => {
                costs.push(res.diagnostics.final_cost);
                traces.push(res.cost_trace.clone());
                let better = best
                    .as_ref()
                    .map(|(b, _)| res.diagnostics.final_cost < b.diagnostics.final_cost)
                    .unwrap_or(true);
                if better {
                    best = Some((res, raw));
                }
            }
            Err(e) => {
                costs.push(f64::NAN);
                traces.push(Vec::new());
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match best {
        Some((mut res, raw)) => {
            res.diagnostics.restart_costs = costs;
            res.diagnostics.restart_traces = traces;
            Ok(ThermalSynthesisResult {
                power: raw,
                result: res,
            })
        }
        None => Err(first_err.expect("restarts >= 1")),
    }
}

/// Gradient of the cost with respect to heater powers, for verification.
pub fn d_cost_power(
    spec_template: &MeshSpec,
    grid: &FrequencyGrid,
    a0_in: &WaveVector,
    targets: &TargetSpec,
    cost_kind: CostKind,
    tm: &ThermalModel,
    power: &[f64],
) -> Result<Vec<f64>> {
    tm.validate(spec_template.param_count())?;
    let space = ThermalSpace { tm };
    let mut spec = spec_template.clone();
    spec.set_params(&space.phases(power))?;
    let grad_phases = crate::autodiff::d_cost(&spec, grid, a0_in, targets, cost_kind)?;
    Ok(space.pullback(power, &grad_phases))
}

/// Cost at a heater power vector (finite-difference support).
pub fn cost_at_power(
    spec_template: &MeshSpec,
    grid: &FrequencyGrid,
    a0_in: &WaveVector,
    targets: &TargetSpec,
    cost_kind: CostKind,
    tm: &ThermalModel,
    power: &[f64],
) -> Result<f64> {
    let space = ThermalSpace { tm };
    let mut spec = spec_template.clone();
    spec.set_params(&space.phases(power))?;
    Ok(crate::autodiff::cost_only(&spec, grid, a0_in, targets, cost_kind)?.0)
}

/// Mean-zero perturbation widths for the per-TBU physical parameters.
/// Draws are independent Gaussians truncated at 3 sigma, re-drawn until the
/// perturbed value stays physical (alpha in (0,1], length > 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationModel {
    #[serde(default)]
    pub sigma_eta1: f64,
    #[serde(default)]
    pub sigma_eta2: f64,
    #[serde(default)]
    pub sigma_alpha: f64,
    #[serde(default)]
    pub sigma_length: f64,
}

impl VariationModel {
    pub fn zero() -> Self {
        Self {
            sigma_eta1: 0.0,
            sigma_eta2: 0.0,
            sigma_alpha: 0.0,
            sigma_length: 0.0,
        }
    }
}

fn truncated_draw(rng: &mut ChaCha8Rng, sigma: f64, valid: impl Fn(f64) -> bool) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked nonzero");
    loop {
        let d = normal.sample(rng);
        if d.abs() <= 3.0 * sigma && valid(d) {
            return d;
        }
    }
}

/// Apply one random process-variation draw to every TBU of the mesh.
/// Deterministic for a fixed (model, seed); phases are left untouched.
pub fn sample_variation(nominal: &MeshSpec, vm: &VariationModel, seed: u64) -> MeshSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = nominal.clone();
    for tbu in spec
        .vertical_tbus
        .iter_mut()
        .chain(spec.horizontal_tbus.iter_mut())
    {
        tbu.eta1 += truncated_draw(&mut rng, vm.sigma_eta1, |_| true);
        tbu.eta2 += truncated_draw(&mut rng, vm.sigma_eta2, |_| true);
        let alpha0 = tbu.alpha;
        tbu.alpha += truncated_draw(&mut rng, vm.sigma_alpha, |d| {
            alpha0 + d > 0.0 && alpha0 + d <= 1.0
        });
        let length0 = tbu.length;
        tbu.length += truncated_draw(&mut rng, vm.sigma_length, |d| length0 + d > 0.0);
    }
    spec
}

/// Per-frequency magnitude envelope of one output row over the sample set.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeRow {
    pub row: usize,
    pub f_norm: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Monte Carlo yield estimate with the per-frequency response envelope.
#[derive(Debug, Clone, Serialize)]
pub struct YieldReport {
    pub n_samples: usize,
    pub n_passed: usize,
    /// Samples whose perturbed mesh could not be solved (counted as failures).
    pub n_solver_failures: usize,
    pub yield_fraction: f64,
    pub envelope: Vec<EnvelopeRow>,
}

/// Estimate the fraction of process-variation samples whose fixed
/// configuration still satisfies `pass`. The predicate receives per-output
/// magnitude spectra indexed [output][frequency].
pub fn monte_carlo_yield<P>(
    nominal: &MeshSpec,
    vm: &VariationModel,
    grid: &FrequencyGrid,
    a0_in: &WaveVector,
    output_rows: &[usize],
    pass: P,
    n_samples: usize,
    seed: u64,
) -> Result<YieldReport>
where
    P: Fn(&[Vec<f64>]) -> bool + Sync,
{
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    let samples: Vec<Option<Vec<Vec<f64>>>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let spec = sample_variation(nominal, vm, seed.wrapping_add(i as u64));
            let mut mags = vec![Vec::with_capacity(grid.n_grid); output_rows.len()];
            for &omega in &grid.points {
                let gs = match global_scatter(&spec, omega) {
                    Ok(gs) => gs,
                    Err(_) => return None,
                };
                let zero = WaveVector::zeros(spec.port_rows());
                let (am, _) = match mesh_response(&gs, a0_in, &zero) {
                    Ok(r) => r,
                    Err(_) => return None,
                };
                for (slot, &row) in mags.iter_mut().zip(output_rows) {
                    slot.push(am[row].norm());
                }
            }
            Some(mags)
        })
        .collect();

    let mut n_passed = 0usize;
    let mut n_solver_failures = 0usize;
    // per (output, freq) magnitude collections for the envelope
    let mut collect = vec![vec![Vec::with_capacity(n_samples); grid.n_grid]; output_rows.len()];
    for sample in &samples {
        match sample {
            Some(mags) => {
                if pass(mags) {
                    n_passed += 1;
                }
                for (oi, spectrum) in mags.iter().enumerate() {
                    for (k, &v) in spectrum.iter().enumerate() {
                        collect[oi][k].push(v);
                    }
                }
            }
            None => n_solver_failures += 1,
        }
    }
    let mut envelope = Vec::new();
    for (oi, &row) in output_rows.iter().enumerate() {
        for k in 0..grid.n_grid {
            let vals = &mut collect[oi][k];
            if vals.is_empty() {
                continue;
            }
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
            envelope.push(EnvelopeRow {
                row,
                f_norm: grid.normalized[k],
                min: vals[0],
                median: vals[vals.len() / 2],
                max: vals[vals.len() - 1],
            });
        }
    }
    Ok(YieldReport {
        n_samples,
        n_passed,
        n_solver_failures,
        yield_fraction: n_passed as f64 / n_samples as f64,
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compact_model::{PhysicalConstants, TbuParams};
    use crate::mesh_solver::MeshSpec;
    use crate::objectives::{make_grid, GridRange, OutputTarget, TargetValues};
    use crate::optimizer::{synthesize, Algorithm, GradientMode};
    use num_complex::Complex64;

    fn template(n: usize, m: usize) -> MeshSpec {
        MeshSpec::uniform(
            n,
            m,
            TbuParams::new(0.0, 0.0, 0.99, 250e-6).unwrap(),
            PhysicalConstants::default(),
        )
        .unwrap()
    }

    fn grid(n: usize) -> FrequencyGrid {
        make_grid(
            GridRange::Normalized {
                min: -0.5,
                max: 0.5,
            },
            n,
            &PhysicalConstants::default(),
            250e-6,
        )
        .unwrap()
    }

    fn unit_input(rows: usize, at: usize) -> WaveVector {
        let mut a0 = WaveVector::zeros(rows);
        a0[at] = Complex64::new(1.0, 0.0);
        a0
    }

    fn flat_target(grid: &FrequencyGrid, row: usize, level: f64) -> TargetSpec {
        TargetSpec {
            outputs: vec![OutputTarget {
                row,
                values: TargetValues::Magnitude(vec![level; grid.n_grid]),
                weights: vec![1.0; grid.n_grid],
            }],
        }
    }

    #[test]
    fn phases_from_power_examples() {
        let tm = ThermalModel::identity(2);
        assert_eq!(phases_from_power(&tm, &[1.0, 0.5]).unwrap(), vec![1.0, 0.5]);
        assert_eq!(phases_from_power(&tm, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);

        let mut tm2 = ThermalModel::identity(2);
        tm2.phi_matrix[(0, 1)] = 0.1;
        tm2.phi_matrix[(1, 0)] = 0.1;
        let x = phases_from_power(&tm2, &[1.0, 0.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15);
        assert!((x[1] - 0.1).abs() < 1e-15);

        assert!(matches!(
            phases_from_power(&tm, &[1.0, -0.1]),
            Err(Error::NegativePower { index: 1, .. })
        ));
    }

    #[test]
    fn identity_reparameterization_matches_phase_space() {
        let template = template(1, 2);
        let g = grid(3);
        let a0 = unit_input(template.port_rows(), 1);
        let targets = flat_target(&g, 2, 0.6);
        let opts = OptimizerOptions {
            seed: 13,
            max_iters: 40,
            ..Default::default()
        };
        let phase_run =
            synthesize(&template, &g, &a0, &targets, CostKind::LinearMag, &opts).unwrap();
        let tm = ThermalModel::identity(template.param_count());
        let thermal_run = synthesize_thermal(
            &template,
            &g,
            &a0,
            &targets,
            CostKind::LinearMag,
            &tm,
            &opts,
        )
        .unwrap();
        assert_eq!(phase_run.cost_trace, thermal_run.result.cost_trace);
        for (a, b) in phase_run
            .best_params
            .iter()
            .zip(&thermal_run.result.best_params)
        {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn power_gradient_matches_finite_difference() {
        let template = template(1, 2);
        let g = grid(3);
        let a0 = unit_input(template.port_rows(), 1);
        let targets = flat_target(&g, 2, 0.6);
        let dim = template.param_count();
        let tm = ThermalModel::uniform_crosstalk(dim, 0.05);

        // A well-scaled operating point away from bar states.
        let phases = crate::optimizer::random_initial_phases(&template, 5);
        let space = ThermalSpace { tm: &tm };
        let power = space.raw_from_phases(&phases).unwrap();

        let grad = d_cost_power(
            &template,
            &g,
            &a0,
            &targets,
            CostKind::LinearMag,
            &tm,
            &power,
        )
        .unwrap();
        let h = 1e-6;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for i in (0..dim).step_by(3) {
            let mut plus = power.clone();
            plus[i] += h;
            let mut minus = power.clone();
            minus[i] -= h;
            let cp = cost_at_power(
                &template,
                &g,
                &a0,
                &targets,
                CostKind::LinearMag,
                &tm,
                &plus,
            )
            .unwrap();
            let cm = cost_at_power(
                &template,
                &g,
                &a0,
                &targets,
                CostKind::LinearMag,
                &tm,
                &minus,
            )
            .unwrap();
            let fd = (cp - cm) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-3 * (1.0 + scale));
            assert!(
                (grad[i] - fd).abs() / denom < 1e-6,
                "param {i}: analytic {} vs fd {}",
                grad[i],
                fd
            );
        }
    }

    #[test]
    fn zero_variation_is_identity() {
        let spec = template(2, 2);
        let sampled = sample_variation(&spec, &VariationModel::zero(), 42);
        assert_eq!(spec, sampled);
    }

    #[test]
    fn variation_is_deterministic_and_seed_sensitive() {
        let spec = template(2, 2);
        let vm = VariationModel {
            sigma_eta1: 0.02,
            sigma_eta2: 0.02,
            sigma_alpha: 0.002,
            sigma_length: 1e-7,
        };
        let a = sample_variation(&spec, &vm, 7);
        let b = sample_variation(&spec, &vm, 7);
        let c = sample_variation(&spec, &vm, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for t in a.vertical_tbus.iter().chain(&a.horizontal_tbus) {
            assert!(t.alpha > 0.0 && t.alpha <= 1.0);
            assert!(t.length > 0.0);
            assert!((t.eta1).abs() <= 3.0 * vm.sigma_eta1 + 1e-12);
        }
    }

    #[test]
    fn sample_mean_alpha_is_unbiased() {
        let spec = template(1, 1);
        let vm = VariationModel {
            sigma_alpha: 0.003,
            ..VariationModel::zero()
        };
        let n = 10_000;
        let mut sum = 0.0;
        let mut count = 0usize;
        for seed in 0..n {
            let s = sample_variation(&spec, &vm, seed);
            for t in s.vertical_tbus.iter().chain(&s.horizontal_tbus) {
                sum += t.alpha;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        // Truncated-Gaussian mean within 3 sigma / sqrt(n) of the nominal.
        let tol = 3.0 * vm.sigma_alpha / (count as f64).sqrt();
        assert!(
            (mean - 0.99).abs() < tol,
            "mean {mean} deviates more than {tol}"
        );
    }

    #[test]
    fn yield_trivial_cases() {
        let mut spec = template(1, 2);
        // Configure something non-singular.
        spec.set_params(&crate::optimizer::random_initial_phases(&spec, 3))
            .unwrap();
        let g = grid(3);
        let a0 = unit_input(spec.port_rows(), 1);
        let report = monte_carlo_yield(
            &spec,
            &VariationModel::zero(),
            &g,
            &a0,
            &[2],
            |_| true,
            8,
            17,
        )
        .unwrap();
        assert_eq!(report.yield_fraction, 1.0);
        assert_eq!(report.n_solver_failures, 0);
        assert_eq!(report.envelope.len(), g.n_grid);
        // Zero perturbation: envelope collapses to a point.
        for row in &report.envelope {
            assert!((row.max - row.min).abs() < 1e-15);
        }

        let report = monte_carlo_yield(
            &spec,
            &VariationModel::zero(),
            &g,
            &a0,
            &[2],
            |_| false,
            8,
            17,
        )
        .unwrap();
        assert_eq!(report.yield_fraction, 0.0);
    }

    #[test]
    fn yield_is_deterministic() {
        let mut spec = template(1, 2);
        spec.set_params(&crate::optimizer::random_initial_phases(&spec, 3))
            .unwrap();
        let g = grid(3);
        let a0 = unit_input(spec.port_rows(), 1);
        let vm = VariationModel {
            sigma_eta1: 0.05,
            sigma_eta2: 0.05,
            sigma_alpha: 0.003,
            sigma_length: 1e-7,
        };
        let pass = |mags: &[Vec<f64>]| mags[0].iter().all(|m| *m < 0.9);
        let a = monte_carlo_yield(&spec, &vm, &g, &a0, &[2], pass, 32, 5).unwrap();
        let b = monte_carlo_yield(&spec, &vm, &g, &a0, &[2], pass, 32, 5).unwrap();
        assert_eq!(a.yield_fraction, b.yield_fraction);
        assert_eq!(a.n_passed, b.n_passed);
        for (x, y) in a.envelope.iter().zip(&b.envelope) {
            assert_eq!(x.min, y.min);
            assert_eq!(x.median, y.median);
            assert_eq!(x.max, y.max);
        }
    }

    #[test]
    fn yield_reported_against_growing_variation() {
        // Monotonicity is empirical, so it is printed rather than asserted.
        let mut spec = template(1, 2);
        spec.set_params(&crate::optimizer::random_initial_phases(&spec, 11))
            .unwrap();
        let g = grid(3);
        let a0 = unit_input(spec.port_rows(), 1);
        // Nominal response level at the output, used as the pass threshold.
        let nominal = monte_carlo_yield(
            &spec,
            &VariationModel::zero(),
            &g,
            &a0,
            &[2],
            |_| true,
            1,
            0,
        )
        .unwrap();
        let level = nominal.envelope[g.n_grid / 2].median;
        let pass = move |mags: &[Vec<f64>]| (mags[0][g.n_grid / 2] - level).abs() < 0.05;
        for sigma in [0.0, 0.05, 0.15] {
            let vm = VariationModel {
                sigma_eta1: sigma,
                sigma_eta2: sigma,
                ..VariationModel::zero()
            };
            let rep = monte_carlo_yield(&spec, &vm, &g, &a0, &[2], &pass, 64, 9).unwrap();
            println!("sigma_eta {sigma}: yield {}", rep.yield_fraction);
        }
    }

    #[test]
    fn numerical_diff_mode_runs() {
        // The ND baseline follows (approximately) the same trajectory.
        let template = template(1, 1);
        let g = grid(2);
        let a0 = unit_input(template.port_rows(), 1);
        let targets = flat_target(&g, 2, 0.5);
        let analytic = synthesize(
            &template,
            &g,
            &a0,
            &targets,
            CostKind::LinearMag,
            &OptimizerOptions {
                seed: 4,
                max_iters: 10,
                ..Default::default()
            },
        )
        .unwrap();
        let nd = synthesize(
            &template,
            &g,
            &a0,
            &targets,
            CostKind::LinearMag,
            &OptimizerOptions {
                seed: 4,
                max_iters: 10,
                algorithm: Algorithm::Adam,
                gradient: GradientMode::NumericalDiff { step: 1e-6 },
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in analytic.cost_trace.iter().zip(&nd.cost_trace) {
            assert!((a - b).abs() < 1e-4 * (1.0 + a));
        }
    }
}
