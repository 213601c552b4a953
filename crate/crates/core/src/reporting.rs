//! Scenario definition, experiment runner, and export of every
//! figure-backing dataset (spectra, heatmaps, mesh states, coupling ratios,
//! port-magnitude maps).
//!
//! Scenarios are versioned JSON documents. All exports are deterministic for
//! a fixed seed: two runs of the same scenario produce byte-identical files.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use crate::compact_model::{wrap_to_pi, PhysicalConstants, TbuParams};
use crate::error::{Error, Result};
use crate::mesh_solver::{
    global_scatter, internal_amplitudes, mesh_response, MeshSpec, MeshState, ParamIndex, PortId,
    TbuKind, WaveVector,
};
use crate::nonideality::{
    monte_carlo_yield, synthesize_thermal, PowerPhaseMap, ThermalModel, VariationModel, YieldReport,
};
use crate::objectives::{
    make_grid, CostKind, FrequencyGrid, GridRange, OutputTarget, TargetSpec, TargetValues,
};
use crate::optimizer::{multi_restart, OptimizerOptions, Progress, SynthesisResult};

/// Display floor for dB conversion: magnitudes below this render as the floor.
const DB_FLOOR_MAG: f64 = 1e-18;

/// 20 log10 |a| with a deterministic floor for zero magnitudes.
pub fn magnitude_db(mag: f64) -> f64 {
    20.0 * mag.max(DB_FLOOR_MAG).log10()
}

/// Power coupling ratio cos^2((phi-theta)/2) and common phase
/// pi/2 - (phi+theta)/2 (reduced to (-pi, pi]) of one TBU.
pub fn coupling_and_common_phase(theta: f64, phi: f64) -> (f64, f64) {
    let ratio = ((phi - theta) / 2.0).cos().powi(2);
    let common = wrap_to_pi(FRAC_PI_2 - (phi + theta) / 2.0);
    (ratio, common)
}

// ---------------------------------------------------------------------------
// Scenario schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshDef {
    pub n_rows: usize,
    pub n_cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TbuNominal {
    pub alpha: f64,
    pub length_m: f64,
    #[serde(default)]
    pub eta1: f64,
    #[serde(default)]
    pub eta2: f64,
}

/// Forward input at A(row, 0) direction I.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDef {
    pub row: usize,
    pub re: f64,
    pub im: f64,
    /// Must be 0 when present (inputs live on the left edge).
    #[serde(default)]
    pub col: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridDef {
    pub f_norm_min: f64,
    pub f_norm_max: f64,
    pub n_grid: usize,
}

/// Piecewise-constant magnitude segment over the normalized axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub from: f64,
    pub to: f64,
    pub level: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetShape {
    /// Complex target: magnitude times a linear phase accumulated over
    /// `n_tbus` waveguide sections.
    ComplexPath { magnitude: f64, n_tbus: f64 },
    /// Magnitude-only target defined by band segments; grid points outside
    /// every segment carry zero weight.
    MagnitudeMask { segments: Vec<Segment> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetDef {
    /// Output port row at the right edge (column M, direction I).
    pub row: usize,
    pub shape: TargetShape,
    /// Must equal M when present (outputs live on the right edge).
    #[serde(default)]
    pub col: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermalDef {
    /// Uniform off-diagonal crosstalk strength of the thermal matrix.
    pub uniform_crosstalk: f64,
    #[serde(default = "default_h_coefficient")]
    pub h_coefficient: f64,
}

fn default_h_coefficient() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonidealityDef {
    #[serde(default)]
    pub thermal: Option<ThermalDef>,
    #[serde(default)]
    pub variation: Option<VariationModel>,
}

/// Pass/fail band constraint for yield analysis, in dB.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandConstraint {
    pub row: usize,
    pub from: f64,
    pub to: f64,
    #[serde(default)]
    pub min_db: Option<f64>,
    #[serde(default)]
    pub max_db: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDef {
    /// Ports below this magnitude are omitted from the port-magnitude map.
    #[serde(default = "default_min_display")]
    pub min_display_magnitude: f64,
    /// Normalized frequency at which the port map is evaluated.
    #[serde(default)]
    pub portmap_f_norm: f64,
}

fn default_min_display() -> f64 {
    0.2
}

impl Default for ReportDef {
    fn default() -> Self {
        Self {
            min_display_magnitude: default_min_display(),
            portmap_f_norm: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub mesh: MeshDef,
    pub constants: PhysicalConstants,
    pub tbu: TbuNominal,
    pub inputs: Vec<InputDef>,
    pub grid: GridDef,
    pub cost: CostKind,
    pub targets: Vec<TargetDef>,
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub report: Option<ReportDef>,
    #[serde(default)]
    pub nonideality: Option<NonidealityDef>,
    #[serde(default)]
    pub yield_pass: Option<Vec<BandConstraint>>,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Scenario> {
        let text = fs::read_to_string(path)?;
        let scenario: Scenario = serde_json::from_str(&text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, message: String| -> Result<()> {
            Err(Error::Validation {
                field: field.into(),
                message,
            })
        };
        if self.schema_version != 1 {
            return fail(
                "schema_version",
                format!("unsupported version {}", self.schema_version),
            );
        }
        if self.mesh.n_rows == 0 || self.mesh.n_cols == 0 {
            return fail("mesh", "n_rows and n_cols must be positive".into());
        }
        let port_rows = 2 * self.mesh.n_rows + 2;
        if self.inputs.is_empty() {
            return fail("inputs", "at least one input is required".into());
        }
        for (i, input) in self.inputs.iter().enumerate() {
            if input.row >= port_rows {
                return fail(
                    &format!("inputs[{i}].row"),
                    format!("row {} out of range 0..{}", input.row, port_rows),
                );
            }
            if let Some(col) = input.col {
                if col != 0 {
                    return fail(
                        &format!("inputs[{i}].col"),
                        format!("inputs must sit on column 0, got {col}"),
                    );
                }
            }
            if !input.re.is_finite() || !input.im.is_finite() {
                return fail(&format!("inputs[{i}]"), "amplitude must be finite".into());
            }
        }
        if self.targets.is_empty() {
            return fail("targets", "at least one target is required".into());
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.row >= port_rows {
                return fail(
                    &format!("targets[{i}].row"),
                    format!("row {} out of range 0..{}", t.row, port_rows),
                );
            }
            if let Some(col) = t.col {
                if col != self.mesh.n_cols {
                    return fail(
                        &format!("targets[{i}].col"),
                        format!("outputs must sit on column {}, got {col}", self.mesh.n_cols),
                    );
                }
            }
            match (&t.shape, self.cost) {
                (TargetShape::MagnitudeMask { .. }, CostKind::Complex) => {
                    return fail(
                        &format!("targets[{i}].shape"),
                        "complex cost requires complex_path targets".into(),
                    );
                }
                (TargetShape::MagnitudeMask { segments }, CostKind::LogMag) => {
                    for (s, seg) in segments.iter().enumerate() {
                        if !(seg.level > 0.0) {
                            return fail(
                                &format!("targets[{i}].shape.segments[{s}].level"),
                                "log cost requires positive target levels".into(),
                            );
                        }
                    }
                }
                _ => {}
            }
        }
        if self.grid.n_grid < 2 {
            return fail("grid.n_grid", "need at least 2 grid points".into());
        }
        if !(self.tbu.alpha > 0.0 && self.tbu.alpha <= 1.0) {
            return fail(
                "tbu.alpha",
                format!("alpha must be in (0,1], got {}", self.tbu.alpha),
            );
        }
        if !(self.tbu.length_m > 0.0) {
            return fail("tbu.length_m", "length must be positive".into());
        }
        Ok(())
    }

    pub fn template(&self) -> Result<MeshSpec> {
        let tbu = TbuParams::new(0.0, 0.0, self.tbu.alpha, self.tbu.length_m)?
            .with_couplers(self.tbu.eta1, self.tbu.eta2);
        MeshSpec::uniform(self.mesh.n_rows, self.mesh.n_cols, tbu, self.constants)
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        make_grid(
            GridRange::Normalized {
                min: self.grid.f_norm_min,
                max: self.grid.f_norm_max,
            },
            self.grid.n_grid,
            &self.constants,
            self.tbu.length_m,
        )
    }

    pub fn input_vector(&self) -> WaveVector {
        let mut a0 = WaveVector::zeros(2 * self.mesh.n_rows + 2);
        for input in &self.inputs {
            a0[input.row] += Complex64::new(input.re, input.im);
        }
        a0
    }

    /// Materialize the target shapes over the frequency grid.
    pub fn target_spec(&self, grid: &FrequencyGrid) -> Result<TargetSpec> {
        let outputs = self
            .targets
            .iter()
            .map(|t| {
                let (values, weights) = match &t.shape {
                    TargetShape::ComplexPath { magnitude, n_tbus } => {
                        let values = grid
                            .points
                            .iter()
                            .map(|&omega| {
                                let tau = self.constants.tau(self.tbu.length_m, omega);
                                Complex64::from_polar(*magnitude, -n_tbus * omega * tau)
                            })
                            .collect();
                        (TargetValues::Complex(values), vec![1.0; grid.n_grid])
                    }
                    TargetShape::MagnitudeMask { segments } => {
                        let mut levels = Vec::with_capacity(grid.n_grid);
                        let mut weights = Vec::with_capacity(grid.n_grid);
                        for &fnorm in &grid.normalized {
                            match segments.iter().find(|s| fnorm >= s.from && fnorm <= s.to) {
                                Some(s) => {
                                    levels.push(s.level);
                                    weights.push(s.weight);
                                }
                                None => {
                                    levels.push(1.0);
                                    weights.push(0.0);
                                }
                            }
                        }
                        (TargetValues::Magnitude(levels), weights)
                    }
                };
                Ok(OutputTarget {
                    row: t.row,
                    values,
                    weights,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TargetSpec { outputs })
    }
}

// ---------------------------------------------------------------------------
// Report bundle
// ---------------------------------------------------------------------------

/// One TBU's coupling summary.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingEntry {
    pub kind: TbuKind,
    pub row: usize,
    pub col: usize,
    pub theta: f64,
    pub phi: f64,
    pub coupling_ratio: f64,
    pub common_phase: f64,
}

/// One port magnitude at the report frequency.
#[derive(Debug, Clone, Serialize)]
pub struct PortMagnitude {
    pub port: PortId,
    pub re: f64,
    pub im: f64,
    pub mag: f64,
}

/// Deterministic run metadata written next to the datasets (no wall time).
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub scenario: String,
    pub seed: u64,
    pub restarts: usize,
    pub restart_index: usize,
    pub iterations: usize,
    pub stop_reason: crate::optimizer::StopReason,
    pub final_cost: f64,
    pub clamp_count: usize,
    pub soft_singular_freqs: usize,
    pub condition_estimate_final: f64,
    pub restart_costs: Vec<f64>,
}

/// Everything needed to back the figure panels for one run.
#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    pub grid: FrequencyGrid,
    /// Output rows and their complex spectra.
    pub spectrum_rows: Vec<usize>,
    pub spectra: Vec<Vec<Complex64>>,
    /// Canonical parameter vector (heatmap order).
    pub heatmap: Vec<f64>,
    pub coupling: Vec<CouplingEntry>,
    pub portmap: Vec<PortMagnitude>,
    pub portmap_f_norm: f64,
    pub min_display_magnitude: f64,
    pub cost_trace: Vec<f64>,
    pub mesh_state: MeshState,
    /// Optimal heater powers when the run was thermally reparameterized.
    pub power: Option<Vec<f64>>,
}

/// Build the full report bundle from a finished synthesis.
pub fn build_bundle(
    scenario: &Scenario,
    grid: &FrequencyGrid,
    result: &SynthesisResult,
    power: Option<Vec<f64>>,
) -> Result<ReportBundle> {
    let mut spec = scenario.template()?;
    spec.set_params(&result.best_params)?;
    let report_def = scenario.report.clone().unwrap_or_default();

    let (n, m) = (spec.n_rows, spec.n_cols);
    let mut coupling = Vec::with_capacity((2 * n + 1) * m);
    for p in ParamIndex::all(n, m) {
        if p.which != crate::compact_model::PhaseShifter::Theta {
            continue;
        }
        let tbu = match p.kind {
            TbuKind::Vertical => spec.vertical(p.row, p.col),
            TbuKind::Horizontal => spec.horizontal(p.row, p.col),
        };
        let (ratio, common) = coupling_and_common_phase(tbu.theta, tbu.phi);
        coupling.push(CouplingEntry {
            kind: p.kind,
            row: p.row,
            col: p.col,
            theta: tbu.theta,
            phi: tbu.phi,
            coupling_ratio: ratio,
            common_phase: common,
        });
    }

    // Port-magnitude map at the requested normalized frequency.
    let f_req = report_def.portmap_f_norm;
    let k_near = (0..grid.n_grid)
        .min_by(|&a, &b| {
            (grid.normalized[a] - f_req)
                .abs()
                .partial_cmp(&(grid.normalized[b] - f_req).abs())
                .expect("finite")
        })
        .expect("non-empty grid");
    let omega = grid.points[k_near];
    let a0 = scenario.input_vector();
    let gs = global_scatter(&spec, omega)?;
    let zero = WaveVector::zeros(spec.port_rows());
    let (_, a0_out) = mesh_response(&gs, &a0, &zero)?;
    let map = internal_amplitudes(&spec, omega, &a0, &a0_out)?;
    let mut portmap = Vec::new();
    for (port, value) in map.iter() {
        let mag = value.norm();
        if mag >= report_def.min_display_magnitude {
            portmap.push(PortMagnitude {
                port,
                re: value.re,
                im: value.im,
                mag,
            });
        }
    }

    Ok(ReportBundle {
        metadata: RunMetadata {
            scenario: scenario.name.clone(),
            seed: scenario.optimizer.seed,
            restarts: scenario.optimizer.restarts,
            restart_index: result.restart_index,
            iterations: result.diagnostics.iterations,
            stop_reason: result.diagnostics.stop_reason,
            final_cost: result.diagnostics.final_cost,
            clamp_count: result.diagnostics.clamp_count,
            soft_singular_freqs: result.diagnostics.soft_singular_freqs,
            condition_estimate_final: result.diagnostics.condition_estimate_final,
            restart_costs: result.diagnostics.restart_costs.clone(),
        },
        grid: grid.clone(),
        spectrum_rows: result.final_responses.rows.clone(),
        spectra: result.final_responses.values.clone(),
        heatmap: result.best_params.clone(),
        coupling,
        portmap,
        portmap_f_norm: grid.normalized[k_near],
        min_display_magnitude: report_def.min_display_magnitude,
        cost_trace: result.cost_trace.clone(),
        mesh_state: MeshState::from_spec(&spec),
        power,
    })
}

/// Run a scenario end to end: synthesize and build the report bundle.
/// `observer` receives one event per iteration when progress streaming is on.
pub fn run_scenario<F: FnMut(&Progress)>(
    scenario: &Scenario,
    observer: Option<&mut F>,
) -> Result<(ReportBundle, SynthesisResult)> {
    scenario.validate()?;
    let template = scenario.template()?;
    let grid = scenario.frequency_grid()?;
    let targets = scenario.target_spec(&grid)?;
    targets.validate(&grid, scenario.cost)?;
    let a0 = scenario.input_vector();

    let thermal = scenario
        .nonideality
        .as_ref()
        .and_then(|nd| nd.thermal.as_ref());
    let (result, power) = match thermal {
        Some(td) => {
            let mut tm =
                ThermalModel::uniform_crosstalk(template.param_count(), td.uniform_crosstalk);
            tm.h = PowerPhaseMap::Linear {
                coefficient: td.h_coefficient,
            };
            let out = synthesize_thermal(
                &template,
                &grid,
                &a0,
                &targets,
                scenario.cost,
                &tm,
                &scenario.optimizer,
            )?;
            (out.result, Some(out.power))
        }
        None => (
            multi_restart(
                &template,
                &grid,
                &a0,
                &targets,
                scenario.cost,
                &scenario.optimizer,
                observer,
            )?,
            None,
        ),
    };
    let bundle = build_bundle(scenario, &grid, &result, power)?;
    Ok((bundle, result))
}

/// Monte Carlo yield for a scenario with a variation model and band
/// constraints, evaluated at a fixed (already synthesized) configuration.
pub fn run_yield(
    scenario: &Scenario,
    nominal: &MeshSpec,
    n_samples: usize,
    seed: u64,
) -> Result<YieldReport> {
    let constraints = scenario.yield_pass.clone().ok_or(Error::Validation {
        field: "yield_pass".into(),
        message: "yield analysis requires band constraints".into(),
    })?;
    let vm = scenario
        .nonideality
        .as_ref()
        .and_then(|nd| nd.variation)
        .ok_or(Error::Validation {
            field: "nonideality.variation".into(),
            message: "yield analysis requires a variation model".into(),
        })?;
    let grid = scenario.frequency_grid()?;
    let a0 = scenario.input_vector();

    let mut rows: Vec<usize> = constraints.iter().map(|c| c.row).collect();
    rows.sort_unstable();
    rows.dedup();
    let row_index = |row: usize| rows.iter().position(|&r| r == row).expect("row present");
    let normalized = grid.normalized.clone();
    let pass = move |mags: &[Vec<f64>]| {
        constraints.iter().all(|c| {
            let oi = row_index(c.row);
            normalized.iter().enumerate().all(|(k, &fnorm)| {
                if fnorm < c.from || fnorm > c.to {
                    return true;
                }
                let db = magnitude_db(mags[oi][k]);
                c.min_db.map_or(true, |lo| db >= lo) && c.max_db.map_or(true, |hi| db <= hi)
            })
        })
    };
    monte_carlo_yield(nominal, &vm, &grid, &a0, &rows, pass, n_samples, seed)
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

/// Spectrum CSV writer shared by scenario reports and plain simulations.
pub fn export_spectrum_series(
    grid: &FrequencyGrid,
    rows: &[usize],
    spectra: &[Vec<Complex64>],
    n_cols: usize,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("f_hz,f_norm,port,re,im,mag,mag_db,phase_rad\n");
    for (row, spectrum) in rows.iter().zip(spectra) {
        let port = PortId::new(
            crate::mesh_solver::Side::A,
            *row,
            n_cols,
            crate::mesh_solver::Direction::I,
        );
        for (k, value) in spectrum.iter().enumerate() {
            let f_hz = grid.points[k] / std::f64::consts::TAU;
            let mag = value.norm();
            out.push_str(&format!(
                "{},{},\"{}\",{},{},{},{},{}\n",
                f_hz,
                grid.normalized[k],
                port.label(),
                value.re,
                value.im,
                mag,
                magnitude_db(mag),
                value.arg()
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Spectrum CSV: one row per (output port, frequency sample).
pub fn export_spectrum(bundle: &ReportBundle, path: &Path) -> Result<()> {
    export_spectrum_series(
        &bundle.grid,
        &bundle.spectrum_rows,
        &bundle.spectra,
        bundle.mesh_state.n_cols,
        path,
    )
}

/// Forward-simulate the spectra of the given output rows (no optimization).
pub fn simulate_spectra(
    spec: &MeshSpec,
    grid: &FrequencyGrid,
    a0_in: &WaveVector,
    rows: &[usize],
) -> Result<Vec<Vec<Complex64>>> {
    let mut spectra = vec![Vec::with_capacity(grid.n_grid); rows.len()];
    for &omega in &grid.points {
        let gs = global_scatter(spec, omega)?;
        let zero = WaveVector::zeros(spec.port_rows());
        let (am, _) = mesh_response(&gs, a0_in, &zero)?;
        for (slot, &row) in spectra.iter_mut().zip(rows) {
            slot.push(am[row]);
        }
    }
    Ok(spectra)
}

/// Heatmap CSV: the canonical parameter vector with its index decoding.
pub fn export_heatmap(bundle: &ReportBundle, path: &Path) -> Result<()> {
    let mut out = String::from("flat_index,kind,row,col,which,value_rad\n");
    let (n, m) = (bundle.mesh_state.n_rows, bundle.mesh_state.n_cols);
    for (flat, value) in bundle.heatmap.iter().enumerate() {
        let p = ParamIndex::from_flat(flat, n, m)?;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            flat,
            match p.kind {
                TbuKind::Vertical => "vertical",
                TbuKind::Horizontal => "horizontal",
            },
            p.row,
            p.col,
            match p.which {
                crate::compact_model::PhaseShifter::Theta => "theta",
                crate::compact_model::PhaseShifter::Phi => "phi",
            },
            value
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Mesh state JSON (reloadable via [`MeshState`]).
pub fn export_meshstate(bundle: &ReportBundle, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&bundle.mesh_state)?;
    fs::write(path, json)?;
    Ok(())
}

/// Port-magnitude map CSV at the report frequency.
pub fn export_portmap(bundle: &ReportBundle, path: &Path) -> Result<()> {
    let mut out = String::from("port,re,im,mag\n");
    for entry in &bundle.portmap {
        out.push_str(&format!(
            "\"{}\",{},{},{}\n",
            entry.port.label(),
            entry.re,
            entry.im,
            entry.mag
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Coupling ratio and common phase per TBU.
pub fn export_coupling(bundle: &ReportBundle, path: &Path) -> Result<()> {
    let mut out = String::from("kind,row,col,theta_rad,phi_rad,coupling_ratio,common_phase_rad\n");
    for e in &bundle.coupling {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            match e.kind {
                TbuKind::Vertical => "vertical",
                TbuKind::Horizontal => "horizontal",
            },
            e.row,
            e.col,
            e.theta,
            e.phi,
            e.coupling_ratio,
            e.common_phase
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Cost trace CSV.
pub fn export_cost_trace(bundle: &ReportBundle, path: &Path) -> Result<()> {
    let mut out = String::from("iteration,cost\n");
    for (i, c) in bundle.cost_trace.iter().enumerate() {
        out.push_str(&format!("{i},{c}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Simple SVG line plot of the magnitude spectra (dB against f_norm).
pub fn write_spectrum_svg(bundle: &ReportBundle, path: &Path) -> Result<()> {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const MARGIN: f64 = 50.0;
    const COLORS: [&str; 6] = ["#c22", "#22c", "#2a2", "#c82", "#828", "#288"];

    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for spectrum in &bundle.spectra {
        for v in spectrum {
            let db = magnitude_db(v.norm()).max(-120.0);
            y_min = y_min.min(db);
            y_max = y_max.max(db);
        }
    }
    if !y_min.is_finite() || y_min == y_max {
        y_min = -60.0;
        y_max = 0.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;
    let x_min = bundle.grid.normalized[0];
    let x_max = bundle.grid.normalized[bundle.grid.n_grid - 1];

    let x_of = |f: f64| MARGIN + (f - x_min) / (x_max - x_min) * (W - 2.0 * MARGIN);
    let y_of = |db: f64| H - MARGIN - (db - y_min) / (y_max - y_min) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN,
        H - MARGIN,
        W - MARGIN,
        H - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN,
        MARGIN,
        MARGIN,
        H - MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">f_norm</text>\n",
        W / 2.0,
        H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"6\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\">|a| dB</text>\n",
        H / 2.0,
        H / 2.0
    ));
    for (i, (row, spectrum)) in bundle.spectrum_rows.iter().zip(&bundle.spectra).enumerate() {
        let mut points = String::new();
        for (k, v) in spectrum.iter().enumerate() {
            let db = magnitude_db(v.norm()).max(-120.0);
            points.push_str(&format!(
                "{:.2},{:.2} ",
                x_of(bundle.grid.normalized[k]),
                y_of(db)
            ));
        }
        let color = COLORS[i % COLORS.len()];
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{points}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">A({row},{})I</text>\n",
            W - MARGIN + 4.0,
            MARGIN + 14.0 * i as f64,
            bundle.mesh_state.n_cols
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

/// Deterministic run metadata JSON.
pub fn export_metadata(bundle: &ReportBundle, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&bundle.metadata)?;
    fs::write(path, json)?;
    Ok(())
}

/// Optimal heater powers (thermal runs only).
pub fn export_power(bundle: &ReportBundle, path: &Path) -> Result<()> {
    if let Some(power) = &bundle.power {
        let mut out = String::from("flat_index,power\n");
        for (i, p) in power.iter().enumerate() {
            out.push_str(&format!("{i},{p}\n"));
        }
        fs::write(path, out)?;
    }
    Ok(())
}

/// Write the full report bundle into `out_dir`; returns the written paths.
pub fn export_bundle(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let targets: [(&str, fn(&ReportBundle, &Path) -> Result<()>); 8] = [
        ("spectrum.csv", export_spectrum),
        ("heatmap.csv", export_heatmap),
        ("meshstate.json", export_meshstate),
        ("portmap.csv", export_portmap),
        ("coupling.csv", export_coupling),
        ("cost_trace.csv", export_cost_trace),
        ("report.json", export_metadata),
        ("spectrum.svg", write_spectrum_svg),
    ];
    for (name, writer) in targets {
        let path = out_dir.join(name);
        writer(bundle, &path)?;
        written.push(path);
    }
    if bundle.power.is_some() {
        let path = out_dir.join("power.csv");
        export_power(bundle, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Export the yield report as JSON plus the envelope CSV.
pub fn export_yield(report: &YieldReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join("yield.json");
    #[derive(Serialize)]
    struct YieldSummary<'a> {
        n_samples: usize,
        n_passed: usize,
        n_solver_failures: usize,
        yield_fraction: f64,
        #[serde(skip)]
        _m: &'a (),
    }
    let summary = YieldSummary {
        n_samples: report.n_samples,
        n_passed: report.n_passed,
        n_solver_failures: report.n_solver_failures,
        yield_fraction: report.yield_fraction,
        _m: &(),
    };
    fs::write(&json_path, serde_json::to_string_pretty(&summary)?)?;
    let csv_path = out_dir.join("envelope.csv");
    let mut out = String::from("row,f_norm,min_mag,median_mag,max_mag\n");
    for e in &report.envelope {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.row, e.f_norm, e.min, e.median, e.max
        ));
    }
    fs::write(&csv_path, out)?;
    Ok(vec![json_path, csv_path])
}
