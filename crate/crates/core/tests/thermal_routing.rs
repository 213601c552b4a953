//! Routing synthesis under thermal crosstalk: optimizing heater powers
//! through a non-trivial thermal matrix still meets the routing target.

use meshlight_core::compact_model::{PhysicalConstants, TbuParams};
use meshlight_core::mesh_solver::{MeshSpec, WaveVector};
use meshlight_core::nonideality::{synthesize_thermal, ThermalModel};
use meshlight_core::objectives::{
    make_grid, CostKind, GridRange, OutputTarget, TargetSpec, TargetValues,
};
use meshlight_core::optimizer::OptimizerOptions;
use meshlight_core::reporting::magnitude_db;
use num_complex::Complex64;

#[test]
fn routing_survives_five_percent_crosstalk() {
    let consts = PhysicalConstants::default();
    let length = 250e-6;
    let template = MeshSpec::uniform(
        5,
        5,
        TbuParams::new(0.0, 0.0, 0.99, length).unwrap(),
        consts,
    )
    .unwrap();
    let grid = make_grid(
        GridRange::Normalized {
            min: -1.0,
            max: 1.0,
        },
        21,
        &consts,
        length,
    )
    .unwrap();
    let mut a0 = WaveVector::zeros(template.port_rows());
    a0[1] = Complex64::new(1.0, 0.0);
    // Complex routing target with eight-TBU loss and linear phase.
    let magnitude = 0.99f64.powi(8);
    let values: Vec<Complex64> = grid
        .points
        .iter()
        .map(|&omega| Complex64::from_polar(magnitude, -8.0 * omega * consts.tau(length, omega)))
        .collect();
    let targets = TargetSpec {
        outputs: vec![OutputTarget {
            row: 2,
            values: TargetValues::Complex(values),
            weights: vec![1.0; grid.n_grid],
        }],
    };

    let tm = ThermalModel::uniform_crosstalk(template.param_count(), 0.05);
    let opts = OptimizerOptions {
        learning_rate: 0.03,
        max_iters: 2500,
        restarts: 2,
        seed: 21,
        ..Default::default()
    };
    let out = synthesize_thermal(
        &template,
        &grid,
        &a0,
        &targets,
        CostKind::Complex,
        &tm,
        &opts,
    )
    .unwrap();

    let target_db = 20.0 * magnitude.log10();
    let center = grid.n_grid / 2;
    let db = magnitude_db(out.result.final_responses.values[0][center].norm());
    assert!(
        (db - target_db).abs() < 0.1,
        "routing under crosstalk reached {db:.3} dB, target {target_db:.3} dB"
    );
}
