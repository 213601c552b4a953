//! `meshlight` command line: run synthesis scenarios, simulate saved mesh
//! states, and estimate Monte Carlo yield.
//!
//! Exit codes: 0 success, 2 validation error, 3 solver error,
//! 4 optimizer made no progress.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use meshlight_core::error::Error;
use meshlight_core::mesh_solver::{MeshState, WaveVector};
use meshlight_core::objectives::{make_grid, GridRange};
use meshlight_core::optimizer::Progress;
use meshlight_core::reporting::{
    export_bundle, export_spectrum_series, export_yield, run_scenario, run_yield, simulate_spectra,
    Scenario,
};

#[derive(Parser)]
#[command(
    name = "meshlight",
    version,
    about = "Square-mesh photonic circuit simulator and synthesis engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthesis scenario and export all report datasets.
    Run {
        scenario: PathBuf,
        /// Output directory for the exported datasets.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of restarts.
        #[arg(long)]
        restarts: Option<usize>,
        /// Stream line-delimited JSON progress events to stdout.
        #[arg(long)]
        progress: bool,
        /// Verify the analytic gradient against finite differences at the
        /// optimum and export the comparison.
        #[arg(long)]
        fd_check: bool,
    },
    /// Simulate a saved mesh state over a frequency grid (no optimization).
    Simulate {
        meshstate: PathBuf,
        /// Normalized grid as MIN:MAX:NPOINTS, e.g. -1:1:201.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Input as ROW[:RE[:IM]] at the left edge; repeatable.
        /// Defaults to a unit input at row 1.
        #[arg(long = "input")]
        inputs: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Monte Carlo yield of a scenario under its process-variation model.
    Yield {
        scenario: PathBuf,
        #[arg(long)]
        samples: usize,
        /// Reuse a synthesized mesh state instead of re-running synthesis.
        #[arg(long)]
        meshstate: Option<PathBuf>,
        /// Seed for the variation draws (defaults to the scenario seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Validation { .. }
        | Error::InvalidParameter(_)
        | Error::InvalidRange(_)
        | Error::ShapeMismatch(_)
        | Error::DomainError(_)
        | Error::Json(_) => 2,
        Error::SingularBarState { .. }
        | Error::SolveFailure(_)
        | Error::DegenerateRow { .. }
        | Error::NegativePower { .. } => 3,
        Error::NoProgress { .. } => 4,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn dispatch(cli: Cli) -> meshlight_core::Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            restarts,
            progress,
            fd_check,
        } => cmd_run(&scenario, &out, seed, restarts, progress, fd_check),
        Command::Simulate {
            meshstate,
            grid,
            inputs,
            out,
        } => cmd_simulate(&meshstate, &grid, &inputs, &out),
        Command::Yield {
            scenario,
            samples,
            meshstate,
            seed,
            out,
        } => cmd_yield(&scenario, samples, meshstate.as_deref(), seed, &out),
    }
}

fn cmd_run(
    scenario_path: &Path,
    out: &Path,
    seed: Option<u64>,
    restarts: Option<usize>,
    progress: bool,
    fd_check: bool,
) -> meshlight_core::Result<()> {
    let mut scenario = Scenario::from_path(scenario_path)?;
    if let Some(seed) = seed {
        scenario.optimizer.seed = seed;
    }
    if let Some(restarts) = restarts {
        scenario.optimizer.restarts = restarts;
    }
    let started = Instant::now();
    let (bundle, result) = if progress {
        let mut emit = |p: &Progress| {
            if let Ok(line) = serde_json::to_string(p) {
                println!("{line}");
            }
        };
        run_scenario(&scenario, Some(&mut emit))?
    } else {
        run_scenario(&scenario, None::<&mut fn(&Progress)>)?
    };
    let files = export_bundle(&bundle, out)?;

    if fd_check {
        let mut spec = scenario.template()?;
        spec.set_params(&result.best_params)?;
        let grid = scenario.frequency_grid()?;
        let targets = scenario.target_spec(&grid)?;
        let a0 = scenario.input_vector();
        let all: Vec<usize> = (0..spec.param_count()).collect();
        let report = meshlight_core::autodiff::finite_difference_check(
            &spec,
            &grid,
            &a0,
            &targets,
            scenario.cost,
            1e-6,
            &all,
        )?;
        let path = out.join("fd_check.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        eprintln!(
            "fd-check: max rel err {:.3e}, mean {:.3e} -> {}",
            report.max_rel_error,
            report.mean_rel_error,
            path.display()
        );
    }

    eprintln!(
        "scenario `{}`: cost {:.6e} after {} iterations (best restart {}), {:.1} s",
        scenario.name,
        result.diagnostics.final_cost,
        result.diagnostics.iterations,
        result.restart_index,
        started.elapsed().as_secs_f64()
    );
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn parse_grid(text: &str) -> meshlight_core::Result<(f64, f64, usize)> {
    let invalid = |message: String| Error::Validation {
        field: "--grid".into(),
        message,
    };
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(invalid(format!("expected MIN:MAX:N, got `{text}`")));
    }
    let min = parts[0]
        .parse::<f64>()
        .map_err(|e| invalid(e.to_string()))?;
    let max = parts[1]
        .parse::<f64>()
        .map_err(|e| invalid(e.to_string()))?;
    let n = parts[2]
        .parse::<usize>()
        .map_err(|e| invalid(e.to_string()))?;
    Ok((min, max, n))
}

fn parse_input(text: &str) -> meshlight_core::Result<(usize, f64, f64)> {
    let invalid = |message: String| Error::Validation {
        field: "--input".into(),
        message,
    };
    let parts: Vec<&str> = text.split(':').collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(invalid(format!("expected ROW[:RE[:IM]], got `{text}`")));
    }
    let row = parts[0]
        .parse::<usize>()
        .map_err(|e| invalid(e.to_string()))?;
    let re = if parts.len() > 1 {
        parts[1]
            .parse::<f64>()
            .map_err(|e| invalid(e.to_string()))?
    } else {
        1.0
    };
    let im = if parts.len() > 2 {
        parts[2]
            .parse::<f64>()
            .map_err(|e| invalid(e.to_string()))?
    } else {
        0.0
    };
    Ok((row, re, im))
}

fn cmd_simulate(
    meshstate_path: &Path,
    grid_text: &str,
    input_texts: &[String],
    out: &Path,
) -> meshlight_core::Result<()> {
    let text = std::fs::read_to_string(meshstate_path)?;
    let state: MeshState = serde_json::from_str(&text)?;
    let spec = state.to_spec()?;
    let (min, max, n) = parse_grid(grid_text)?;
    let length = spec.vertical_tbus[0].length;
    let grid = make_grid(
        GridRange::Normalized { min, max },
        n,
        &spec.constants,
        length,
    )?;

    let mut a0 = WaveVector::zeros(spec.port_rows());
    if input_texts.is_empty() {
        a0[1] = num_complex::Complex64::new(1.0, 0.0);
    } else {
        for text in input_texts {
            let (row, re, im) = parse_input(text)?;
            if row >= spec.port_rows() {
                return Err(Error::Validation {
                    field: "--input".into(),
                    message: format!("row {row} out of range 0..{}", spec.port_rows()),
                });
            }
            a0[row] += num_complex::Complex64::new(re, im);
        }
    }

    let rows: Vec<usize> = (0..spec.port_rows()).collect();
    let spectra = simulate_spectra(&spec, &grid, &a0, &rows)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("spectrum.csv");
    export_spectrum_series(&grid, &rows, &spectra, spec.n_cols, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_yield(
    scenario_path: &Path,
    samples: usize,
    meshstate: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> meshlight_core::Result<()> {
    let scenario = Scenario::from_path(scenario_path)?;
    let nominal = match meshstate {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let state: MeshState = serde_json::from_str(&text)?;
            state.to_spec()?
        }
        None => {
            eprintln!("no --meshstate given; synthesizing the nominal configuration first");
            let (bundle, _) = run_scenario(&scenario, None::<&mut fn(&Progress)>)?;
            bundle.mesh_state.to_spec()?
        }
    };
    let report = run_yield(
        &scenario,
        &nominal,
        samples,
        seed.unwrap_or(scenario.optimizer.seed),
    )?;
    let files = export_yield(&report, out)?;
    eprintln!(
        "yield: {}/{} samples passed ({:.1}%), {} solver failures",
        report.n_passed,
        report.n_samples,
        100.0 * report.yield_fraction,
        report.n_solver_failures
    );
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}
