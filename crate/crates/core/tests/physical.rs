use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavebreak::physical::{
    rhs_physical, run_to_breaking, step, Model, PhysicalSolver, RunOptions, StepController,
    Termination,
};
use wavebreak::{Error, Field, GridSpec};

/// Trigonometric polynomial with its exact derivative.
struct Trig {
    terms: Vec<(f64, f64, f64)>,
}

impl Trig {
    fn random(modes: usize, rng: &mut ChaCha8Rng) -> Self {
        let terms = (1..=modes)
            .map(|m| {
                (
                    m as f64,
                    rng.gen_range(-1.0..1.0) / m as f64,
                    rng.gen_range(-1.0..1.0) / m as f64,
                )
            })
            .collect();
        Self { terms }
    }

    fn value(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(k, a, b)| a * (k * x).cos() + b * (k * x).sin())
            .sum()
    }

    fn slope(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(k, a, b)| k * (b * (k * x).cos() - a * (k * x).sin()))
            .sum()
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn advance_to(solver: &mut PhysicalSolver<f64>, t_end: f64) {
    let c = StepController::default();
    while solver.time() < t_end - 1e-15 {
        solver.step_controlled(&c, t_end - solver.time()).unwrap();
    }
}

#[test]
fn constants_are_steady() {
    let grid = GridSpec::new(64, 4.0).unwrap();
    let u = Field::from_fn(grid, 0.0, |_| 2.5);
    for model in [Model::full(-1.0).unwrap(), Model::burgers()] {
        assert!(rhs_physical(&u, &model).unwrap().max_abs() < 1e-14);
    }
}

#[test]
fn burgers_rhs_on_sine() {
    let grid = GridSpec::new(64, PI).unwrap();
    let u = Field::from_fn(grid, 0.0, f64::sin);
    let r = rhs_physical(&u, &Model::burgers()).unwrap();
    let exact: Vec<f64> = grid.nodes().iter().map(|x| -x.sin() * x.cos()).collect();
    assert!(max_diff(r.values(), &exact) < 1e-14);
}

#[test]
fn quadratic_term_matches_pointwise_product() {
    let grid = GridSpec::new(128, PI).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // 16 modes keep the product inside the retained two-thirds band.
    let p = Trig::random(16, &mut rng);
    let u = Field::from_fn(grid, 0.0, |x| p.value(x));
    let r = rhs_physical(&u, &Model::burgers()).unwrap();
    let oracle: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| -p.value(x) * p.slope(x))
        .collect();
    let scale = oracle.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(max_diff(r.values(), &oracle) < 1e-10 * scale);
}

#[test]
fn unresolved_input_is_rejected() {
    let grid = GridSpec::new(128, 4.0).unwrap();
    let square = Field::from_fn(grid, 0.0, |x: f64| if x.abs() < 1.0 { 1.0 } else { 0.0 });
    assert!(matches!(
        rhs_physical(&square, &Model::burgers()),
        Err(Error::Resolution(_))
    ));
}

#[test]
fn overflow_guard_trips() {
    let grid = GridSpec::new(32, PI).unwrap();
    let huge = Field::from_fn(grid, 0.0, |x| 1.0e13 * x.sin());
    assert!(matches!(
        step(&huge, &StepController::default(), &Model::burgers()),
        Err(Error::Blowup { .. })
    ));
}

fn linear_mode_error(dt: f64, steps: usize) -> f64 {
    let (alpha, k) = (-0.25, 3.0);
    let grid = GridSpec::new(32, PI).unwrap();
    let mut s = PhysicalSolver::new(
        &Field::from_fn(grid, 0.0, |x| (k * x).cos()),
        Model::linear(alpha).unwrap(),
    );
    for _ in 0..steps {
        s.step_fixed(dt).unwrap();
    }
    let t = dt * steps as f64;
    let omega = k * (1.0 + k * k).powf((alpha - 1.0) / 2.0);
    let exact: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| (k * x + omega * t).cos())
        .collect();
    max_diff(s.field().values(), &exact)
}

#[test]
fn linear_mode_single_step_is_fifth_order() {
    let (e1, e2) = (linear_mode_error(0.4, 1), linear_mode_error(0.2, 1));
    assert!((e1 / e2).log2() > 4.8, "local order {}", (e1 / e2).log2());
}

#[test]
fn linear_mode_global_order_is_four() {
    let errors: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&dt| linear_mode_error(dt, (2.0 / dt).round() as usize))
        .collect();
    for w in errors.windows(2) {
        assert!(
            (w[0] / w[1]).log2() >= 3.9,
            "observed order {}",
            (w[0] / w[1]).log2()
        );
    }
}

/// Burgers solution by characteristics: `u(x, t) = u0(x0)` with `x = x0 + t u0(x0)`.
fn characteristics(u0: impl Fn(f64) -> (f64, f64), x: f64, t: f64) -> f64 {
    let mut x0 = x;
    for _ in 0..60 {
        let (v, d) = u0(x0);
        let step = (x0 + t * v - x) / (1.0 + t * d);
        x0 -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    u0(x0).0
}

#[test]
fn burgers_matches_characteristics_before_breaking() {
    let grid = GridSpec::new(256, PI).unwrap();
    let u0 = |x: f64| (0.2 + 0.5 * x.sin(), 0.5 * x.cos());
    let mut s = PhysicalSolver::new(&Field::from_fn(grid, 0.0, |x| u0(x).0), Model::burgers());
    advance_to(&mut s, 1.0);
    let exact: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| characteristics(u0, x, 1.0))
        .collect();
    assert!(max_diff(s.field().values(), &exact) < 1e-6);
}

#[test]
fn burgers_breaks_at_inverse_steepest_slope() {
    let eps = 0.1;
    let grid = GridSpec::new(1024, 6.0).unwrap();
    let u0 = Field::from_fn(grid, 0.0, |x: f64| -x * (-x * x).exp() / eps);
    let opts = RunOptions {
        max_points: 1 << 15,
        output_interval: 1e-3,
        ..Default::default()
    };
    let controller = StepController {
        stop_gradient: -200.0,
        ..Default::default()
    };
    let run = run_to_breaking(&u0, &Model::burgers(), &controller, &opts).unwrap();
    assert_eq!(run.termination, Termination::Breaking);
    let last = run.records.last().unwrap();
    let t_break = last.t - 1.0 / last.min_ux;
    assert!((t_break - eps).abs() <= 0.02 * eps, "breaking at {t_break}");
    assert!(last.argmin.abs() < 1e-3);
    assert!(run.records.iter().all(|r| r.tail <= 1e-8));
    let edge = run.records.iter().map(|r| r.edge).fold(0.0, f64::max);
    // The exact edge value is below 1e-13; what remains is resolution noise.
    assert!(edge <= 1e-8, "edge {edge:e}");
}

#[test]
fn resolution_limit_is_reported() {
    let grid = GridSpec::new(256, 6.0).unwrap();
    let u0 = Field::from_fn(grid, 0.0, |x: f64| -x * (-x * x).exp() / 0.1);
    let opts = RunOptions {
        max_points: 256,
        ..Default::default()
    };
    let run = run_to_breaking(&u0, &Model::burgers(), &StepController::default(), &opts).unwrap();
    match run.termination {
        Termination::ResolutionLimit { last_resolved_time } => {
            assert!(last_resolved_time > 0.0 && last_resolved_time < 0.1);
            assert_eq!(run.final_frame.time_tag(), last_resolved_time);
        }
        other => panic!("expected a resolution limit, got {other:?}"),
    }
}

#[test]
fn dispersive_run_conserves_mean_and_energy() {
    let grid = GridSpec::new(512, 8.0).unwrap();
    let u0 = Field::from_fn(grid, 0.0, |x: f64| 0.3 + (-x * x).exp() * (1.0 - 0.4 * x));
    let mut s = PhysicalSolver::new(&u0, Model::full(-1.0).unwrap());
    let start = s.field();
    advance_to(&mut s, 0.5);
    let end = s.field();
    assert!((end.mean() - start.mean()).abs() <= 1e-12);
    assert!((end.l2_norm() - start.l2_norm()).abs() <= 1e-8 * 0.5);
}

#[test]
fn single_precision_tracks_double() {
    let grid64 = GridSpec::new(64, PI).unwrap();
    let grid32 = GridSpec::new(64, PI as f32).unwrap();
    let mut a = PhysicalSolver::new(
        &Field::from_fn(grid64, 0.0, |x| 0.5 * x.sin()),
        Model::full(-1.0).unwrap(),
    );
    let mut b = PhysicalSolver::new(
        &Field::from_fn(grid32, 0.0f32, |x| 0.5 * x.sin()),
        Model::full(-1.0f32).unwrap(),
    );
    for _ in 0..10 {
        a.step_fixed(0.01).unwrap();
        b.step_fixed(0.01f32).unwrap();
    }
    let diff = a
        .field()
        .values()
        .iter()
        .zip(b.field().values())
        .map(|(x, y)| (x - *y as f64).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mean_is_preserved_by_any_step(seed in 0u64..10_000, alpha in -2.0..-0.2f64) {
        let grid = GridSpec::new(64, PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Trig::random(8, &mut rng);
        let shift: f64 = rng.gen_range(-1.0..1.0);
        let u = Field::from_fn(grid, 0.0, |x| shift + p.value(x));
        let next = step(&u, &StepController::default(), &Model::full(alpha).unwrap()).unwrap();
        prop_assert!((next.mean() - u.mean()).abs() <= 1e-12);
        prop_assert!(next.time_tag() > 0.0);
    }
}
