//! Gradient-descent synthesis loop with random initialization, convergence
//! control, and multi-restart.
//!
//! The landscape is interferometric: curvature varies wildly across phase
//! space, so the default algorithm is Adam with a radians-scale step. Bar
//! states of vertical TBUs are singular points of the column transfer; the
//! initializer nudges away from them and a step that lands inside one is
//! halved up to twenty times before the run gives up.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::time::Instant;

use crate::autodiff::{cost_and_gradient, cost_only, EvalDiagnostics, GradientVector};
use crate::compact_model::{reduce_angle, wrap_to_pi, PhaseShifter};
use crate::error::{Error, Result};
use crate::mesh_solver::{global_scatter, MeshSpec, ParamIndex, TbuKind, WaveVector};
use crate::objectives::{CostKind, FrequencyGrid, ResponseSet, TargetSpec};

/// Cost below which the run stops outright (the fit is exact).
const ABSOLUTE_COST_FLOOR: f64 = 1e-16;
/// Window length for the relative-change convergence check.
const CONVERGENCE_WINDOW: usize = 50;
/// Baseline number of iterations without a new best cost tolerated before
/// the run stops; scales with the iteration budget.
const NO_PROGRESS_PATIENCE: usize = 500;
/// Maximum step halvings when an update lands in a bar-state singularity.
const MAX_BACKTRACKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    PlainGd,
    Momentum,
    Adam,
}

/// How the gradient is obtained each iteration. The numerical-differentiation
/// mode exists as a baseline for run-time comparisons, not for production use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GradientMode {
    Analytic,
    NumericalDiff { step: f64 },
}

impl Default for GradientMode {
    fn default() -> Self {
        GradientMode::Analytic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub algorithm: Algorithm,
    /// Step size in radians.
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Relative cost change over the trailing window below which the run is
    /// declared converged.
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    #[serde(default)]
    pub gradient: GradientMode,
    /// Optional per-iteration learning-rate multiplier (e.g. 0.9995 decays
    /// the step roughly 150x over 10k iterations). Absent means constant.
    #[serde(default)]
    pub lr_decay: Option<f64>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Adam,
            learning_rate: 0.02,
            max_iters: 5000,
            rel_tol: 1e-9,
            restarts: 1,
            seed: 1,
            gradient: GradientMode::Analytic,
            lr_decay: None,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.rel_tol < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "rel_tol must be nonnegative, got {}",
                self.rel_tol
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        if let Some(d) = self.lr_decay {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "lr_decay must be in (0, 1], got {d}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    AbsoluteFloor,
    /// No new best cost for the patience window, after real progress was made.
    Stalled,
    /// Step halving could not clear a bar-state singularity; the run ends at
    /// its best point.
    SingularWall,
}

/// Run health and bookkeeping carried alongside the optimized parameters.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub final_cost: f64,
    /// Cumulative log-cost magnitude clamps over the run.
    pub clamp_count: usize,
    /// Cumulative frequency evaluations inside the soft bar-state band.
    pub soft_singular_freqs: usize,
    /// Worst T22* condition estimate over the grid at the final parameters.
    pub condition_estimate_final: f64,
    /// Wall time of this run in seconds (not part of deterministic exports).
    pub wall_time_s: f64,
    /// Final cost per restart (multi-restart runs).
    pub restart_costs: Vec<f64>,
    /// Full cost trace per restart (multi-restart runs).
    pub restart_traces: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisResult {
    /// Canonical parameter vector, reduced modulo 2*pi.
    pub best_params: Vec<f64>,
    pub cost_trace: Vec<f64>,
    pub final_responses: ResponseSet,
    pub restart_index: usize,
    pub diagnostics: Diagnostics,
}

/// One line of the optional progress stream.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Progress {
    pub restart: usize,
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
}

/// Maps between the optimizer's raw variables and the mesh phases. The
/// identity space optimizes phases directly; the thermal model swaps in a
/// power-vector parameterization.
pub(crate) trait ParamSpace: Sync {
    /// Raw variables that realize the given initial phases.
    fn raw_from_phases(&self, phases: &[f64]) -> Result<Vec<f64>>;
    /// Phases induced by the raw variables.
    fn phases(&self, raw: &[f64]) -> Vec<f64>;
    /// Pull the phase-space gradient back to raw variables.
    fn pullback(&self, raw: &[f64], grad_phases: &[f64]) -> Vec<f64>;
}

pub(crate) struct IdentitySpace;

impl ParamSpace for IdentitySpace {
    fn raw_from_phases(&self, phases: &[f64]) -> Result<Vec<f64>> {
        Ok(phases.to_vec())
    }
    fn phases(&self, raw: &[f64]) -> Vec<f64> {
        raw.to_vec()
    }
    fn pullback(&self, _raw: &[f64], grad_phases: &[f64]) -> Vec<f64> {
        grad_phases.to_vec()
    }
}

/// Uniform random phases in [0, 2*pi) with a nudge away from vertical-TBU bar
/// states (|theta - phi - pi| < 1e-3 shifted by 1e-2).
pub fn random_initial_phases(spec_template: &MeshSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec_template.param_count();
    let mut phases: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..TAU)).collect();
    let (n, m) = (spec_template.n_rows, spec_template.n_cols);
    for r in 0..n {
        for c in 0..m {
            let it = ParamIndex::to_flat(TbuKind::Vertical, r, c, PhaseShifter::Theta, n, m);
            let ip = ParamIndex::to_flat(TbuKind::Vertical, r, c, PhaseShifter::Phi, n, m);
            let delta = wrap_to_pi(phases[it] - phases[ip] - PI);
            if delta.abs() < 1e-3 {
                phases[it] += 1e-2;
            }
        }
    }
    phases
}

struct EvalOutput {
    cost: f64,
    grad: GradientVector,
    diag: EvalDiagnostics,
}

fn evaluate(
    spec_template: &MeshSpec,
    grid: &FrequencyGrid,
    a0_in: &WaveVector,
    targets: &TargetSpec,
    cost_kind: CostKind,
    space: &dyn ParamSpace,
    raw: &[f64],
    mode: GradientMode,
) -> Result<EvalOutput> {
    let mut spec = spec_template.clone();
    spec.set_params(&space.phases(raw))?;
    match mode {
        GradientMode::Analytic => {
            let (cost, grad_phases, _, diag) =
                cost_and_gradient(&spec, grid, a0_in, targets, cost_kind)?;
            Ok(EvalOutput {
                cost,
                grad: space.pullback(raw, &grad_phases),
                diag,
            })
        }
        GradientMode::NumericalDiff { step } => {
            let (cost, _, diag) = cost_only(&spec, grid, a0_in, targets, cost_kind)?;
            let mut grad = vec![0.0; raw.len()];
            for i in 0..raw.len() {
                let mut plus = raw.to_vec();
                plus[i] += step;
                let mut minus = raw.to_vec();
                minus[i] -= step;
                let mut sp = spec_template.clone();
                sp.set_params(&space.phases(&plus))?;
                let cp = cost_only(&sp, grid, a0_in, targets, cost_kind)?.0;
                let mut sm = spec_template.clone();
                sm.set_params(&space.phases(&minus))?;
                let cm = cost_only(&sm, grid, a0_in, targets, cost_kind)?.0;
                grad[i] = (cp - cm) / (2.0 * step);
            }
            Ok(EvalOutput { cost, grad, diag })
        }
    }
}

struct UpdateState {
    momentum: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    step: usize,
    learning_rate: f64,
}

impl UpdateState {
    fn new(dim: usize, learning_rate: f64) -> Self {
        Self {
            momentum: vec![0.0; dim],
            adam_m: vec![0.0; dim],
            adam_v: vec![0.0; dim],
            step: 0,
            learning_rate,
        }
    }

    /// Update vector to subtract from the parameters.
    fn update(&mut self, opts: &OptimizerOptions, grad: &[f64]) -> Vec<f64> {
        self.step += 1;
        if let Some(decay) = opts.lr_decay {
            self.learning_rate *= decay;
        }
        let lr = self.learning_rate;
        match opts.algorithm {
            Algorithm::PlainGd => grad.iter().map(|g| lr * g).collect(),
            Algorithm::Momentum => {
                let beta = 0.9f64;
                for (m, g) in self.momentum.iter_mut().zip(grad) {
                    *m = beta * *m + g;
                }
                self.momentum.iter().map(|m| lr * m).collect()
            }
            Algorithm::Adam => {
                let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
                let bias1 = 1.0 - b1.powi(self.step as i32);
                let bias2 = 1.0 - b2.powi(self.step as i32);
                let mut out = Vec::with_capacity(grad.len());
                for i in 0..grad.len() {
                    self.adam_m[i] = b1 * self.adam_m[i] + (1.0 - b1) * grad[i];
                    self.adam_v[i] = b2 * self.adam_v[i] + (1.0 - b2) * grad[i] * grad[i];
                    let mhat = self.adam_m[i] / bias1;
                    let vhat = self.adam_v[i] / bias2;
                    out.push(lr * mhat / (vhat.sqrt() + eps));
                }
                out
            }
        }
    }
}

/// Observer type for call sites that do not stream progress.
pub type NoObserver = fn(&Progress);

/// Single synthesis run in a given parameter space.
pub(crate) fn synthesize_in_space<F: FnMut(&Progress)>(
    spec_template: &MeshSpec,
    grid: &FrequencyGrid,
    a0_in: &WaveVector,
    targets: &TargetSpec,
    cost_kind: CostKind,
    opts: &OptimizerOptions,
    space: &dyn ParamSpace,
    seed: u64,
    restart_index: usize,
    mut observer: Option<&mut F>,
) -> Result<(SynthesisResult, Vec<f64>)> {
    opts.validate()?;
    targets.validate(grid, cost_kind)?;
    let start = Instant::now();

    let phases0 = random_initial_phases(spec_template, seed);
    let mut raw = space.raw_from_phases(&phases0)?;
    let mut state = UpdateState::new(raw.len(), opts.learning_rate);
    let mut trace: Vec<f64> = Vec::new();
    let mut clamp_count = 0usize;
    let mut soft_singular = 0usize;
    let mut stall = 0usize;
    let mut stop = StopReason::MaxIters;

    let mut eval = evaluate(
        spec_template,
        grid,
        a0_in,
        targets,
        cost_kind,
        space,
        &raw,
        opts.gradient,
    )?;
    let mut best_cost = eval.cost;
    let mut best_raw = raw.clone();

    for iter in 0..opts.max_iters {
        trace.push(eval.cost);
        clamp_count += eval.diag.clamp_count;
        soft_singular += eval.diag.soft_singular_freqs;
        if let Some(obs) = observer.as_deref_mut() {
            obs(&Progress {
                restart: restart_index,
                iteration: iter,
                cost: eval.cost,
                grad_norm: eval.grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            });
        }

        if eval.cost < ABSOLUTE_COST_FLOOR {
            stop = StopReason::AbsoluteFloor;
            break;
        }
        if iter >= CONVERGENCE_WINDOW {
            let past = trace[iter - CONVERGENCE_WINDOW];
            if (past - eval.cost).abs() <= opts.rel_tol * past.max(ABSOLUTE_COST_FLOOR) {
                stop = StopReason::Converged;
                break;
            }
        }
        // A run whose best cost never moved below its starting point for the
        // whole patience window is going nowhere; hand control back so the
        // caller can trigger a restart. Oscillating runs that did improve keep
        // their full iteration budget (the best point is tracked anyway).
        if iter > 0 && eval.cost >= best_cost {
            stall += 1;
            let patience = NO_PROGRESS_PATIENCE.max(opts.max_iters / 2);
            if stall > patience && best_cost >= 0.999 * trace[0] {
                return Err(Error::NoProgress {
                    iterations: iter,
                    best_cost,
                });
            }
        } else {
            stall = 0;
        }

        let update = state.update(opts, &eval.grad);
        let mut scale = 1.0f64;
        let mut attempt = 0usize;
        let mut wall = false;
        loop {
            let candidate: Vec<f64> = raw
                .iter()
                .zip(&update)
                .map(|(x, u)| x - scale * u)
                .collect();
            match evaluate(
                spec_template,
                grid,
                a0_in,
                targets,
                cost_kind,
                space,
                &candidate,
                opts.gradient,
            ) {
                Ok(next) => {
                    raw = candidate;
                    if next.cost < best_cost {
                        best_cost = next.cost;
                        best_raw = raw.clone();
                    }
                    eval = next;
                    break;
                }
                Err(e @ Error::SingularBarState { .. }) => {
                    if attempt < MAX_BACKTRACKS {
                        attempt += 1;
                        scale *= 0.5;
                    } else if best_cost < 0.999 * trace[0] {
                        // The descent is grinding against the singular wall;
                        // the tracked best point is still a valid optimum.
                        wall = true;
                        break;
                    } else {
                        return Err(e);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        if wall {
            stop = StopReason::SingularWall;
            break;
        }
    }
    if trace.last() != Some(&eval.cost) {
        trace.push(eval.cost);
    }

    // Final state: the best point seen along the trajectory, with reduced
    // phases, its responses, and condition diagnostics.
    let raw = best_raw;
    let phases: Vec<f64> = space
        .phases(&raw)
        .iter()
        .map(|x| reduce_angle(*x))
        .collect();
    let mut final_spec = spec_template.clone();
    final_spec.set_params(&phases)?;
    let (final_cost_check, final_responses, _) =
        crate::autodiff::cost_only(&final_spec, grid, a0_in, targets, cost_kind)?;
    debug_assert!((final_cost_check - best_cost).abs() <= 1e-9 * (1.0 + best_cost));
    let mut condition = 0.0f64;
    for &omega in &grid.points {
        condition = condition.max(global_scatter(&final_spec, omega)?.condition_estimate_t22);
    }
    let final_cost = best_cost;
    let result = SynthesisResult {
        best_params: phases,
        cost_trace: trace.clone(),
        final_responses,
        restart_index,
        diagnostics: Diagnostics {
            iterations: trace.len() - 1,
            stop_reason: stop,
            final_cost,
            clamp_count,
            soft_singular_freqs: soft_singular,
            condition_estimate_final: condition,
            wall_time_s: start.elapsed().as_secs_f64(),
            restart_costs: vec![final_cost],
            restart_traces: vec![trace],
        },
    };
    Ok((result, raw))
}

/// Synthesize the mesh configuration minimizing the chosen cost, starting
/// from a random initial guess. Deterministic given the seed.
pub fn synthesize(
    spec_template: &MeshSpec,
    grid: &FrequencyGrid,
    a0_in: &WaveVector,
    targets: &TargetSpec,
    cost_kind: CostKind,
    opts: &OptimizerOptions,
) -> Result<SynthesisResult> {
    synthesize_in_space(
        spec_template,
        grid,
        a0_in,
        targets,
        cost_kind,
        opts,
        &IdentitySpace,
        opts.seed,
        0,
        None::<&mut NoObserver>,
    )
    .map(|(r, _)| r)
}

/// Run `opts.restarts` independent seeds and return the best local optimum;
/// every restart's final cost and trace is retained in the diagnostics.
pub fn multi_restart<F: FnMut(&Progress)>(
    spec_template: &MeshSpec,
    grid: &FrequencyGrid,
    a0_in: &WaveVector,
    targets: &TargetSpec,
    cost_kind: CostKind,
    opts: &OptimizerOptions,
    mut observer: Option<&mut F>,
) -> Result<SynthesisResult> {
    opts.validate()?;
    let outcomes: Vec<Result<SynthesisResult>> = if observer.is_some() {
        // Progress streaming forces sequential restarts.
        let mut out = Vec::with_capacity(opts.restarts);
        for r in 0..opts.restarts {
            out.push(
                synthesize_in_space(
                    spec_template,
                    grid,
                    a0_in,
                    targets,
                    cost_kind,
                    opts,
                    &IdentitySpace,
                    opts.seed.wrapping_add(r as u64),
                    r,
                    observer.as_deref_mut(),
                )
                .map(|(res, _)| res),
            );
        }
        out
    } else {
        (0..opts.restarts)
            .into_par_iter()
            .map(|r| {
                synthesize_in_space(
                    spec_template,
                    grid,
                    a0_in,
                    targets,
                    cost_kind,
                    opts,
                    &IdentitySpace,
                    opts.seed.wrapping_add(r as u64),
                    r,
                    None::<&mut NoObserver>,
                )
                .map(|(res, _)| res)
            })
            .collect()
    };

    let mut best: Option<SynthesisResult> = None;
    let mut costs = Vec::with_capacity(opts.restarts);
    let mut traces = Vec::with_capacity(opts.restarts);
    let mut first_err: Option<Error> = None;
    for outcome in outcomes {
        match outcome {
            Ok(res) => {
                costs.push(res.diagnostics.final_cost);
                traces.push(res.cost_trace.clone());
                let better = best
                    .as_ref()
                    .map(|b| res.diagnostics.final_cost < b.diagnostics.final_cost)
                    .unwrap_or(true);
                if better {
                    best = Some(res);
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
        Some(mut res) => {
            res.diagnostics.restart_costs = costs;
            res.diagnostics.restart_traces = traces;
            Ok(res)
        }
        None => Err(first_err.expect("restarts >= 1")),
    }
}
