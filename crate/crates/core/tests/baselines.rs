//! Reference baselines kept out of the library surface: a compact
//! differential-evolution optimizer for run-time comparisons against the
//! analytic-gradient synthesis.

use meshlight_core::autodiff::cost_only;
use meshlight_core::compact_model::{PhysicalConstants, TbuParams};
use meshlight_core::mesh_solver::{MeshSpec, WaveVector};
use meshlight_core::objectives::{
    make_grid, CostKind, FrequencyGrid, GridRange, OutputTarget, TargetSpec, TargetValues,
};
use meshlight_core::optimizer::{synthesize, OptimizerOptions};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

struct Problem {
    template: MeshSpec,
    grid: FrequencyGrid,
    a0: WaveVector,
    targets: TargetSpec,
}

fn problem() -> Problem {
    let consts = PhysicalConstants::default();
    let template = MeshSpec::uniform(
        1,
        2,
        TbuParams::new(0.0, 0.0, 0.99, 250e-6).unwrap(),
        consts,
    )
    .unwrap();
    let grid = make_grid(
        GridRange::Normalized {
            min: -0.5,
            max: 0.5,
        },
        7,
        &consts,
        250e-6,
    )
    .unwrap();
    let mut a0 = WaveVector::zeros(template.port_rows());
    a0[1] = Complex64::new(1.0, 0.0);
    let targets = TargetSpec {
        outputs: vec![OutputTarget {
            row: 2,
            values: TargetValues::Magnitude(vec![0.6; grid.n_grid]),
            weights: vec![1.0; grid.n_grid],
        }],
    };
    Problem {
        template,
        grid,
        a0,
        targets,
    }
}

fn eval(p: &Problem, x: &[f64]) -> f64 {
    let mut spec = p.template.clone();
    spec.set_params(x).unwrap();
    match cost_only(&spec, &p.grid, &p.a0, &p.targets, CostKind::LinearMag) {
        Ok((c, _, _)) => c,
        Err(_) => f64::INFINITY, // bar states are simply bad candidates
    }
}

/// DE/rand/1/bin with fixed population and generation budget.
fn differential_evolution(p: &Problem, seed: u64, pop_size: usize, generations: usize) -> f64 {
    let dim = p.template.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pop: Vec<Vec<f64>> = (0..pop_size)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..TAU)).collect())
        .collect();
    let mut costs: Vec<f64> = pop.iter().map(|x| eval(p, x)).collect();
    let (f_weight, crossover) = (0.7, 0.9);

    for _ in 0..generations {
        for i in 0..pop_size {
            let mut pick = || loop {
                let k = rng.random_range(0..pop_size);
                if k != i {
                    return k;
                }
            };
            let (a, b, c) = (pick(), pick(), pick());
            let forced = rng.random_range(0..dim);
            let mut trial = pop[i].clone();
            for d in 0..dim {
                if d == forced || rng.random_range(0.0..1.0) < crossover {
                    trial[d] = pop[a][d] + f_weight * (pop[b][d] - pop[c][d]);
                }
            }
            let trial_cost = eval(p, &trial);
            if trial_cost <= costs[i] {
                pop[i] = trial;
                costs[i] = trial_cost;
            }
        }
    }
    costs.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[test]
fn analytic_gradient_beats_de_at_equal_evaluation_budget() {
    let p = problem();
    // DE budget: 20 x 80 = 1600 cost evaluations (plus the initial 20).
    let de_cost = differential_evolution(&p, 42, 20, 80);

    // Gradient synthesis with far fewer forward passes.
    let opts = OptimizerOptions {
        seed: 42,
        max_iters: 400,
        ..Default::default()
    };
    let gd = synthesize(
        &p.template,
        &p.grid,
        &p.a0,
        &p.targets,
        CostKind::LinearMag,
        &opts,
    )
    .unwrap();
    let gd_cost = gd.diagnostics.final_cost;

    println!("DE best cost (1600 evals): {de_cost:.3e}");
    println!("gradient best cost (400 iterations): {gd_cost:.3e}");
    assert!(de_cost.is_finite());
    assert!(
        gd_cost <= de_cost * 1.001,
        "gradient synthesis ({gd_cost:.3e}) should not trail DE ({de_cost:.3e})"
    );
}
