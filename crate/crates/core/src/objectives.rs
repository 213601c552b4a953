//! Frequency grids, target specifications, and the three cost functions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::compact_model::{PhysicalConstants, LAMBDA_CENTER_M};
use crate::error::{Error, Result};

/// Magnitudes below this floor are clamped in the log cost so stop bands
/// cannot drive the cost to -inf; each clamp is counted, never hidden.
pub const LOG_MAG_FLOOR: f64 = 1e-12;

/// One normalized-frequency unit per band: delta_f = c / (n_g * L).
pub fn delta_f(consts: &PhysicalConstants, tbu_length: f64) -> f64 {
    consts.c / (consts.n_g * tbu_length)
}

/// Center frequency c / lambda_center in Hz.
pub fn center_frequency(consts: &PhysicalConstants) -> f64 {
    consts.c / LAMBDA_CENTER_M
}

/// Requested frequency span, either around the center frequency in
/// normalized units or as an absolute band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRange {
    Normalized { min: f64, max: f64 },
    AbsoluteHz { min: f64, max: f64 },
}

/// Uniformly sampled angular frequencies with their normalized-axis images
/// f_norm = (2 / delta_f) (f - f_center).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_grid: usize,
    /// Sample points in rad/s.
    pub points: Vec<f64>,
    /// Normalized frequency per sample.
    pub normalized: Vec<f64>,
    /// Center frequency in Hz used for normalization.
    pub f_center: f64,
    /// Normalization bandwidth in Hz.
    pub delta_f: f64,
}

pub fn make_grid(
    range: GridRange,
    n_grid: usize,
    consts: &PhysicalConstants,
    tbu_length: f64,
) -> Result<FrequencyGrid> {
    if n_grid < 2 {
        return Err(Error::InvalidRange(format!(
            "n_grid must be at least 2, got {n_grid}"
        )));
    }
    let df = delta_f(consts, tbu_length);
    let fc = center_frequency(consts);
    let (f_min, f_max) = match range {
        GridRange::Normalized { min, max } => (fc + 0.5 * df * min, fc + 0.5 * df * max),
        GridRange::AbsoluteHz { min, max } => (min, max),
    };
    if !(f_max > f_min) || !(f_min > 0.0) {
        return Err(Error::InvalidRange(format!(
            "need 0 < f_min < f_max, got [{f_min}, {f_max}]"
        )));
    }
    let step = (f_max - f_min) / (n_grid - 1) as f64;
    let points: Vec<f64> = (0..n_grid)
        .map(|k| TAU * (f_min + step * k as f64))
        .collect();
    let normalized: Vec<f64> = (0..n_grid)
        .map(|k| 2.0 / df * (f_min + step * k as f64 - fc))
        .collect();
    Ok(FrequencyGrid {
        omega_min: points[0],
        omega_max: points[n_grid - 1],
        n_grid,
        points,
        normalized,
        f_center: fc,
        delta_f: df,
    })
}

/// Which cost function drives the synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// Complex mean squared error against complex targets.
    Complex,
    /// Weighted squared error on linear magnitude.
    LinearMag,
    /// Weighted squared error on log magnitude.
    LogMag,
}

/// Target values for one output, matching the grid length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetValues {
    Complex(Vec<Complex64>),
    Magnitude(Vec<f64>),
}

impl TargetValues {
    pub fn len(&self) -> usize {
        match self {
            TargetValues::Complex(v) => v.len(),
            TargetValues::Magnitude(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Target magnitude at sample k.
    pub fn magnitude(&self, k: usize) -> f64 {
        match self {
            TargetValues::Complex(v) => v[k].norm(),
            TargetValues::Magnitude(v) => v[k],
        }
    }
}

/// Desired response at one output port row (column M, direction I).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputTarget {
    pub row: usize,
    pub values: TargetValues,
    /// Per-frequency weights r_k (all 1 when unweighted).
    pub weights: Vec<f64>,
}

/// The complete target specification for a synthesis problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub outputs: Vec<OutputTarget>,
}

impl TargetSpec {
    pub fn validate(&self, grid: &FrequencyGrid, cost: CostKind) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(Error::Validation {
                field: "targets".into(),
                message: "at least one output target is required".into(),
            });
        }
        for (i, out) in self.outputs.iter().enumerate() {
            if out.values.len() != grid.n_grid || out.weights.len() != grid.n_grid {
                return Err(Error::ShapeMismatch(format!(
                    "target {i}: values/weights must have {} entries",
                    grid.n_grid
                )));
            }
            if out.weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                return Err(Error::Validation {
                    field: format!("targets[{i}].weights"),
                    message: "weights must be finite and nonnegative".into(),
                });
            }
            match (&out.values, cost) {
                (TargetValues::Magnitude(v), CostKind::Complex) => {
                    if !v.is_empty() {
                        return Err(Error::Validation {
                            field: format!("targets[{i}]"),
                            message: "complex cost requires complex targets".into(),
                        });
                    }
                }
                (TargetValues::Magnitude(v), CostKind::LinearMag) => {
                    if v.iter().any(|u| *u < 0.0) {
                        return Err(Error::Validation {
                            field: format!("targets[{i}]"),
                            message: "magnitude targets must be nonnegative".into(),
                        });
                    }
                }
                _ => {}
            }
            if cost == CostKind::LogMag {
                for k in 0..grid.n_grid {
                    if out.weights[k] > 0.0 && !(out.values.magnitude(k) > 0.0) {
                        return Err(Error::DomainError(format!(
                            "log cost requires positive targets (output {i}, sample {k})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> Vec<usize> {
        self.outputs.iter().map(|o| o.row).collect()
    }
}

/// Simulated complex responses, one spectrum per target output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub rows: Vec<usize>,
    /// values[output][frequency]
    pub values: Vec<Vec<Complex64>>,
}

impl ResponseSet {
    fn check(&self, targets: &TargetSpec, grid: &FrequencyGrid) -> Result<()> {
        if self.values.len() != targets.outputs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} responses vs {} targets",
                self.values.len(),
                targets.outputs.len()
            )));
        }
        for v in &self.values {
            if v.len() != grid.n_grid {
                return Err(Error::ShapeMismatch(format!(
                    "response length {} vs grid {}",
                    v.len(),
                    grid.n_grid
                )));
            }
        }
        Ok(())
    }
}

/// Cost term and residual factor for one (output, frequency) sample.
///
/// Returns `(cost_term, g, clamped)` where `g` is the complex residual vector
/// entry such that dCost/dp = sum Re{conj(g) * da/dp}; the clamp flag marks a
/// log-cost magnitude hitting [`LOG_MAG_FLOOR`].
pub(crate) fn cost_term(
    kind: CostKind,
    a: Complex64,
    target: &TargetValues,
    k: usize,
    weight: f64,
) -> (f64, Complex64, bool) {
    match kind {
        CostKind::Complex => {
            let u = match target {
                TargetValues::Complex(v) => v[k],
                TargetValues::Magnitude(v) => Complex64::new(v[k], 0.0),
            };
            let r = a - u;
            (r.norm_sqr(), 2.0 * r, false)
        }
        CostKind::LinearMag => {
            let u = target.magnitude(k);
            let mag = a.norm();
            let d = mag - u;
            let g = if mag < LOG_MAG_FLOOR {
                Complex64::new(0.0, 0.0)
            } else {
                (2.0 * weight * d / mag) * a
            };
            (weight * d * d, g, false)
        }
        CostKind::LogMag => {
            let u = target.magnitude(k);
            let mag = a.norm();
            if mag < LOG_MAG_FLOOR {
                let d = LOG_MAG_FLOOR.ln() - u.ln();
                (weight * d * d, Complex64::new(0.0, 0.0), true)
            } else {
                let d = mag.ln() - u.ln();
                let g = (2.0 * weight * d / (mag * mag)) * a;
                (weight * d * d, g, false)
            }
        }
    }
}

fn total_cost(
    kind: CostKind,
    responses: &ResponseSet,
    targets: &TargetSpec,
    grid: &FrequencyGrid,
) -> Result<(f64, usize)> {
    responses.check(targets, grid)?;
    let mut cost = 0.0;
    let mut clamps = 0usize;
    for k in 0..grid.n_grid {
        for (out, resp) in targets.outputs.iter().zip(&responses.values) {
            let (c, _, clamped) = cost_term(kind, resp[k], &out.values, k, out.weights[k]);
            cost += c;
            clamps += clamped as usize;
        }
    }
    Ok((cost, clamps))
}

/// Complex mean-squared-error cost: sum_k sum_n |a_n(w_k) - U_n(w_k)|^2.
pub fn cost_complex(
    responses: &ResponseSet,
    targets: &TargetSpec,
    grid: &FrequencyGrid,
) -> Result<f64> {
    targets.validate(grid, CostKind::Complex)?;
    Ok(total_cost(CostKind::Complex, responses, targets, grid)?.0)
}

/// Weighted linear-magnitude cost: sum_k sum_n r_k (|a| - U)^2.
pub fn cost_linear_mag(
    responses: &ResponseSet,
    targets: &TargetSpec,
    grid: &FrequencyGrid,
) -> Result<f64> {
    targets.validate(grid, CostKind::LinearMag)?;
    Ok(total_cost(CostKind::LinearMag, responses, targets, grid)?.0)
}

/// Weighted log-magnitude cost: sum_k sum_n r_k (ln|a| - ln U)^2.
pub fn cost_log_mag(
    responses: &ResponseSet,
    targets: &TargetSpec,
    grid: &FrequencyGrid,
) -> Result<f64> {
    Ok(cost_log_mag_with_clamps(responses, targets, grid)?.0)
}

/// Log-magnitude cost together with the number of clamped samples.
pub fn cost_log_mag_with_clamps(
    responses: &ResponseSet,
    targets: &TargetSpec,
    grid: &FrequencyGrid,
) -> Result<(f64, usize)> {
    targets.validate(grid, CostKind::LogMag)?;
    total_cost(CostKind::LogMag, responses, targets, grid)
}

/// Dispatch on [`CostKind`].
pub fn cost(
    kind: CostKind,
    responses: &ResponseSet,
    targets: &TargetSpec,
    grid: &FrequencyGrid,
) -> Result<f64> {
    match kind {
        CostKind::Complex => cost_complex(responses, targets, grid),
        CostKind::LinearMag => cost_linear_mag(responses, targets, grid),
        CostKind::LogMag => cost_log_mag(responses, targets, grid),
    }
}
