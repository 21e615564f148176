//! End-to-end acceptance run: one pass/fail line per criterion.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavebreak::diagnostics::{
    convergence_to_profile, fit_blowup_time, fit_holder_exponent, local_frame, monitor_bootstrap,
    sandwich_fraction, BlowupReport, BootstrapLog, ConvergenceWindow, Coverage, COMPLIANCE_IDS,
    HOLDER_WINDOW,
};
use wavebreak::initial_data::{
    construct_data, tapered_profile, AdmissibilityParams, InitialData, Taper,
};
use wavebreak::multiplier::{
    apply_dispersion, apply_split, dispersion_symbol, KernelQuadrature, KernelTable, OperatorSplit,
};
use wavebreak::physical::{run_to_breaking, Model, PhysicalTrajectory, RunOptions, StepController};
use wavebreak::profile::{check_decay_envelope, eval_jet, eval_profile};
use wavebreak::selfsim::{
    trace_trajectory, ModulationState, SelfSimConfig, SelfSimField, SelfSimRun, SelfSimSolver,
};
use wavebreak::spectral::SpectralPlan;
use wavebreak::{Field, GridSpec};

const M: f64 = 1000.0;
const EPS: f64 = 0.14;
const SELFSIM_HALF: f64 = 1000.0;
const S_END: f64 = 6.0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn params() -> AdmissibilityParams {
    AdmissibilityParams::new(M, EPS).unwrap()
}

fn profile_jet() -> Outcome {
    let start = Instant::now();
    let jet = eval_jet(0.0, 6.0);
    let expected = [0.0_f64, -1.0, 0.0, 6.0, 0.0];
    let jet_err = (0..5)
        .map(|i| (jet.derivative(i) - expected[i]).abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut residual = 0.0_f64;
    for _ in 0..10_000 {
        let x: f64 = rng.gen_range(-1.0e6..1.0e6);
        let u = eval_profile(x, 6.0);
        residual = residual.max((x + u + u * u * u).abs() / (1.0 + x.abs()));
    }

    let mut envelope_ok = true;
    for _ in 0..1000 {
        let magnitude = 10f64.powf(rng.gen_range(2.0..6.0));
        let x = if rng.gen_bool(0.5) {
            magnitude
        } else {
            -magnitude
        };
        envelope_ok &= check_decay_envelope(x).unwrap();
    }
    let elapsed = start.elapsed();
    Outcome::new(
        jet_err <= 1e-12 && residual <= 1e-10 && envelope_ok && elapsed < Duration::from_secs(1),
        format!("jet error {jet_err:.1e}, scaled residual {residual:.1e}, envelope {envelope_ok}, {elapsed:.2?}"),
    )
}

fn multiplier_modes() -> Outcome {
    let start = Instant::now();
    let grid = GridSpec::new(128, std::f64::consts::PI).unwrap();
    let mut plan = SpectralPlan::new(grid);
    let mut mode_err = 0.0_f64;
    for &alpha in &[-0.25, -0.5, -1.0, -2.0] {
        for k in 1..=50 {
            let kf = k as f64;
            let u = Field::from_fn(grid, 0.0, |x| (kf * x).cos());
            let out = apply_dispersion(&u, alpha).unwrap();
            let ratio = plan.forward(out.values())[k] / plan.forward(u.values())[k];
            let symbol = dispersion_symbol(kf, alpha);
            mode_err = mode_err.max((ratio.re.abs() + (ratio.im - symbol).abs()) / symbol);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut split_err = 0.0_f64;
    let (n, half) = (1024, 200.0);
    let grid = GridSpec::new(n, half).unwrap();
    for _ in 0..100 {
        let bumps: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-60.0..60.0),
                    rng.gen_range(3.0..20.0),
                )
            })
            .collect();
        let s: f64 = rng.gen_range(0.2..2.0);
        let f = Field::from_fn(grid, 0.0, |x| {
            bumps
                .iter()
                .map(|&(a, c, w)| a * (-((x - c) / w).powi(2)).exp())
                .sum()
        });
        let (h, l) = apply_split(&f, &OperatorSplit::new(-1.0, s).unwrap(), 0).unwrap();
        let sum: Vec<f64> = h
            .values()
            .iter()
            .zip(l.values())
            .map(|(a, b)| a + b)
            .collect();
        // In x = e^{-3s/2} X the full operator is the plain dispersion.
        let compressed = GridSpec::new(n, half * (-1.5 * s).exp()).unwrap();
        let oracle = apply_dispersion(
            &Field::new(compressed, f.values().to_vec(), 0.0).unwrap(),
            -1.0,
        )
        .unwrap();
        split_err = split_err.max(max_diff(&sum, oracle.values()) / max_abs(oracle.values()));
    }
    let elapsed = start.elapsed();
    Outcome::new(
        mode_err <= 1e-14 && split_err <= 1e-10 && elapsed < Duration::from_secs(5),
        format!("mode error {mode_err:.1e}, partition error {split_err:.1e}, {elapsed:.2?}"),
    )
}

fn kernel_envelope_constants() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for &alpha in &[-0.25, -0.5, -1.0, -2.0] {
        let base = KernelTable::build(alpha, 1e-3, 10.0, 200, KernelQuadrature::default()).unwrap();
        let fine = KernelTable::build(
            alpha,
            1e-3,
            10.0,
            200,
            KernelQuadrature::default().refined(),
        )
        .unwrap();
        let (near, far) = base.constants();
        let (near_f, far_f) = fine.constants();
        let drift = (near - near_f).abs().max((far - far_f).abs());
        pass &= near.is_finite() && far.is_finite() && drift <= 1e-4;
        detail.push(format!(
            "alpha {alpha}: near {near:.3} far {far:.3} drift {drift:.1e}"
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    Outcome::new(pass, format!("{}, {elapsed:.2?}", detail.join("; ")))
}

/// Burgers solution by characteristics from `u0` returning `(u0, u0')`.
fn characteristics(u0: impl Fn(f64) -> (f64, f64), x: f64, t: f64) -> f64 {
    let mut x0 = x;
    for _ in 0..80 {
        let (v, d) = u0(x0);
        let step = (x0 + t * v - x) / (1.0 + t * d);
        x0 -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    u0(x0).0
}

fn burgers_limit(data: &InitialData) -> Outcome {
    let start = Instant::now();
    let grid = GridSpec::new(4096, 4.0).unwrap();
    let taper = Taper::default();
    let u0 = |x: f64| {
        let (v, d) = tapered_profile(&taper, EPS, x * EPS.powf(-1.5));
        (EPS.sqrt() * v + data.params.kappa0, d / EPS)
    };
    let start_field = Field::from_fn(grid, -EPS, |x| u0(x).0);
    let steepest = grid
        .nodes()
        .iter()
        .map(|&x| u0(x).1)
        .fold(f64::INFINITY, f64::min);
    let expected = -EPS - 1.0 / steepest;

    // The front outgrows a fixed grid well before breaking, so the run refines
    // from the starting grid as the production solver does.
    let controller = StepController {
        stop_gradient: -200.0,
        ..Default::default()
    };
    let times: Vec<f64> = [0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|f| -EPS + f * EPS)
        .collect();
    let opts = RunOptions {
        max_points: 1 << 16,
        output_interval: 1e-3,
        snapshot_times: times,
        ..Default::default()
    };
    let run = run_to_breaking(&start_field, &Model::burgers(), &controller, &opts).unwrap();
    let last = run.records.last().unwrap();
    let t_break = last.t - 1.0 / last.min_ux;
    let time_err = (t_break - expected).abs() / (expected + EPS);
    let extrapolated = (t_break - last.t) / (t_break + EPS);

    let mut char_err = 0.0_f64;
    for frame in &run.snapshots {
        let t = frame.time_tag() + EPS;
        let exact: Vec<f64> = frame
            .grid()
            .nodes()
            .iter()
            .map(|&x| characteristics(u0, x, t))
            .collect();
        char_err = char_err.max(max_diff(frame.values(), &exact));
    }
    let elapsed = start.elapsed();
    Outcome::new(
        time_err <= 0.02
            && char_err <= 1e-6
            && extrapolated <= 0.1
            && run.snapshots.len() == 4
            && elapsed < Duration::from_secs(60),
        format!(
            "breaking at {t_break:.4e} vs {expected:.4e} ({:.2}%, last {:.1}% extrapolated), characteristics error {char_err:.1e} over {} frames, {elapsed:.2?}",
            100.0 * time_err,
            100.0 * extrapolated,
            run.snapshots.len()
        ),
    )
}

/// The shared desk-scale run that criteria 5 to 10 read from.
struct DeskRun {
    data: InitialData,
    selfsim: SelfSimRun,
    physical: PhysicalTrajectory,
    coverage: Coverage,
    elapsed: Duration,
}

fn desk_run() -> DeskRun {
    let start = Instant::now();
    let p = params();
    let (data, _) = construct_data(
        &p,
        &Taper::default(),
        GridSpec::new(1 << 16, SELFSIM_HALF).unwrap(),
        GridSpec::new(8192, 4.0).unwrap(),
    )
    .unwrap();
    let cfg = SelfSimConfig::default();
    let selfsim = SelfSimSolver::new(&data.selfsim, &data.modulation, cfg.clone())
        .unwrap()
        .run(S_END, 1_000_000)
        .unwrap();
    let first_t = selfsim.snapshots[0].modulation.t;
    let coverage = Coverage {
        interior_limit: cfg.interior_limit(SELFSIM_HALF),
        support_radius: 1.0 + data.physical.max_abs() * (selfsim.last().modulation.t - first_t),
    };
    let times: Vec<f64> = selfsim
        .snapshots
        .iter()
        .filter(|s| coverage.covers(s.modulation.s))
        .map(|s| s.modulation.t)
        .collect();
    let opts = RunOptions {
        max_points: 1 << 17,
        output_interval: 5e-3,
        snapshot_times: times,
        ..Default::default()
    };
    let physical = run_to_breaking(
        &data.physical,
        &Model::full(-1.0).unwrap(),
        &StepController::default(),
        &opts,
    )
    .unwrap();
    DeskRun {
        data,
        selfsim,
        physical,
        coverage,
        elapsed: start.elapsed(),
    }
}

fn theorem_flags(run: &DeskRun) -> Outcome {
    let p = params();
    let rate = fit_blowup_time(&run.physical.records).unwrap();
    let last = run.selfsim.last();
    let frame = local_frame(last, run.coverage.interior_limit, 0.5, 1 << 14).unwrap();
    let holder = fit_holder_exponent(&frame, last.modulation.xi, HOLDER_WINDOW).unwrap();
    let window = ConvergenceWindow {
        base: 5.0,
        s0: p.s0(),
        limit: run.coverage.interior_limit,
    };
    let convergence = convergence_to_profile(&run.selfsim.snapshots, window, 1e-2).unwrap();
    let amplitude = run
        .physical
        .records
        .iter()
        .map(|r| r.max_abs_u)
        .fold(0.0, f64::max);
    let report = BlowupReport::assemble(rate, holder, convergence, amplitude, &p);
    let history: Vec<ModulationState> =
        run.selfsim.snapshots.iter().map(|s| s.modulation).collect();
    Outcome::new(
        report.all_pass() && run.elapsed < Duration::from_secs(1800),
        format!(
            "{:?}; T* {:.4e}, rate {:.5}, exponent {:.4}, max |u| {amplitude:.3}, sandwich {:.2}, run {:.1?}",
            report.flags,
            report.rate.t_star,
            report.rate.rate_constant,
            report.holder.exponent,
            sandwich_fraction(&history, report.rate.t_star),
            run.elapsed
        ),
    )
}

fn profile_convergence(run: &DeskRun) -> Outcome {
    let window = ConvergenceWindow {
        base: 5.0,
        s0: params().s0(),
        limit: run.coverage.interior_limit,
    };
    let c = convergence_to_profile(&run.selfsim.snapshots, window, 1e-2).unwrap();
    let in_range = run.selfsim.log.iter().all(|r| (5.0..=7.0).contains(&r.nu));
    Outcome::new(
        c.nu_spread <= 1e-2 && in_range && (5.0..=7.0).contains(&c.nu_limit) && c.reduction <= 0.1,
        format!(
            "nu {:.5} spread {:.1e}, reduction {:.2e}",
            c.nu_limit, c.nu_spread, c.reduction
        ),
    )
}

fn fixture_trips(p: &AdmissibilityParams) -> Vec<(String, Vec<String>, Vec<&'static str>)> {
    let grid = GridSpec::new(1 << 15, 100.0).unwrap();
    let s0 = p.s0();
    let nodes = grid.nodes();
    let base = SelfSimField::from_slope(
        grid,
        nodes.iter().map(|&x| eval_jet(x, 6.0).d1).collect(),
        s0,
    )
    .unwrap();
    let m0 = ModulationState::at(s0, -EPS, 0.0, 0.0);
    let coverage = Coverage {
        interior_limit: 85.0,
        support_radius: 1.1,
    };
    let trip = |u: &SelfSimField, m: &ModulationState| -> Vec<String> {
        monitor_bootstrap(u, m, p, &coverage)
            .failures()
            .map(|c| c.id.clone())
            .collect()
    };
    let mut plan = SpectralPlan::new(grid);
    let mut from_value = |f: &dyn Fn(f64) -> f64| {
        let bump: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        let slope = base
            .slope()
            .iter()
            .zip(plan.derivative(&bump, 1))
            .map(|(a, b)| a + b)
            .collect();
        SelfSimField::from_slope(grid, slope, s0).unwrap()
    };
    let from_slope = |f: &dyn Fn(f64) -> f64| {
        let slope = base
            .slope()
            .iter()
            .zip(&nodes)
            .map(|(a, &x)| a + f(x))
            .collect();
        SelfSimField::from_slope(grid, slope, s0).unwrap()
    };
    let gauss = |x: f64, c: f64, w: f64| (-((x - c) / w).powi(2)).exp();
    let cubic = |c: f64| move |x: f64| c * x.powi(3) / 6.0 * (-x.powi(4)).exp();

    let mut out = vec![("unperturbed".to_string(), trip(&base, &m0), vec![])];
    let mut push = |name: &str, got: Vec<String>, want: Vec<&'static str>| {
        out.push((name.to_string(), got, want))
    };

    push(
        "near_value",
        trip(&from_value(&cubic(0.6)), &m0),
        vec![
            "near_value",
            "near_slope",
            "near_curvature",
            "near_third",
            "origin_third",
        ],
    );
    push(
        "near_slope",
        trip(&from_value(&cubic(0.3)), &m0),
        vec!["near_slope", "near_curvature", "near_third"],
    );
    push(
        "near_curvature",
        trip(&from_value(&cubic(0.1)), &m0),
        vec!["near_curvature", "near_third"],
    );
    push(
        "origin_third",
        trip(&from_value(&cubic(0.4)), &m0),
        vec!["near_slope", "near_curvature", "near_third", "origin_third"],
    );
    push(
        "nu_range",
        trip(&from_value(&cubic(1.2)), &m0),
        vec![
            "near_value",
            "near_slope",
            "near_curvature",
            "near_third",
            "origin_third",
            "nu_range",
        ],
    );
    let w = 0.1_f64;
    push(
        "near_fourth",
        trip(
            &from_value(&|x| {
                0.65 * w.powi(4)
                    * ((x / w).cos() - 1.0 + x * x / (2.0 * w * w))
                    * gauss(x, 0.0, 0.5)
            }),
            &m0,
        ),
        vec!["near_fourth"],
    );

    // Oscillation in log |X| at the edge of the allowed middle-region size.
    let smooth_step = |t: f64| -> (f64, f64) {
        if t <= 0.0 {
            (0.0, 0.0)
        } else if t >= 1.0 {
            (1.0, 0.0)
        } else {
            let (a, b) = ((-1.0 / t).exp(), (-1.0 / (1.0 - t)).exp());
            (
                a / (a + b),
                (a * b / (t * t) + a * b / ((1.0 - t) * (1.0 - t))) / ((a + b) * (a + b)),
            )
        }
    };
    let (amp, wavelength, s_mid, h) = (1.6 * EPS.powf(0.25), 8.0, 3.5, p.h());
    let slope = base
        .slope()
        .iter()
        .zip(&nodes)
        .map(|(b, &x)| {
            let ax = x.abs().max(1e-300);
            let (v, d) = smooth_step((ax / h).ln() / wavelength);
            let (cut, _) = smooth_step((ax - 86.0) / 10.0);
            b + amp * ax.powf(-2.0 / 3.0) * (v / 3.0 + d / wavelength) * (1.0 - cut)
        })
        .collect();
    let mut m_mid = m0;
    m_mid.s = s_mid;
    push(
        "middle_value",
        trip(
            &SelfSimField::from_slope(grid, slope, s_mid).unwrap(),
            &m_mid,
        ),
        vec!["middle_value"],
    );

    push(
        "slope_sup",
        trip(&from_slope(&|x| -0.55 * gauss(x, 0.7, 0.15)), &m0),
        vec!["slope_sup"],
    );
    push(
        "middle_slope",
        trip(&from_slope(&|x| 0.5 * gauss(x, 3.0, 0.5)), &m0),
        vec!["middle_slope"],
    );
    push(
        "far_slope",
        trip(&from_slope(&|x| 0.5 * gauss(x, 20.0, 2.0)), &m0),
        vec!["far_slope"],
    );
    push(
        "outer_curvature",
        trip(
            &from_value(&|x| {
                -4.3 * 0.075_f64.powi(2) * ((x - 2.0) / 0.075).cos() * gauss(x, 2.0, 0.5)
            }),
            &m0,
        ),
        vec!["outer_curvature", "curvature_sup"],
    );
    push(
        "fourth_sup",
        trip(
            &from_value(&|x| {
                1100.0 * 0.055_f64.powi(4) * ((x - 30.0) / 0.055).cos() * gauss(x, 30.0, 0.3)
            }),
            &m0,
        ),
        vec!["fourth_sup"],
    );
    push(
        "fifth_l2",
        trip(
            &from_value(&|x| {
                40000.0 * 0.02_f64.powi(5) * ((x - 40.0) / 0.02).sin() * gauss(x, 40.0, 2.0)
            }),
            &m0,
        ),
        vec!["fifth_l2"],
    );
    push(
        "slope_l2",
        trip(&from_slope(&|x| 30.0 * gauss(x, 50.0, 10.0)), &m0),
        vec!["far_slope", "slope_sup", "slope_l2"],
    );

    let with = |f: &dyn Fn(&mut ModulationState)| {
        let mut m = m0;
        f(&mut m);
        trip(&base, &m)
    };
    push(
        "shifted_sup",
        with(&|m| m.kappa = 1100.0),
        vec!["shifted_sup", "shifted_l2"],
    );
    push(
        "shifted_l2",
        with(&|m| m.kappa = 1000.0 / (0.5 * s0).exp()),
        vec!["shifted_l2"],
    );
    push(
        "tau_rate",
        with(&|m| m.tau_dot = 0.25),
        vec!["tau_rate", "beta", "tau_rate_strict"],
    );
    push("beta", with(&|m| m.tau_dot = 0.02), vec!["beta"]);
    push(
        "tau_position",
        with(&|m| m.tau = 3.0 * EPS.powf(1.75)),
        vec!["tau_position"],
    );
    push("xi_rate", with(&|m| m.xi_dot = 2500.0), vec!["xi_rate"]);
    push("xi_position", with(&|m| m.xi = 500.0), vec!["xi_position"]);
    push("drift_rate", with(&|m| m.drift = 0.3), vec!["drift_rate"]);
    push(
        "kappa_rate",
        with(&|m| m.kappa_rate = 0.6),
        vec!["kappa_rate"],
    );
    push(
        "tau_rate_strict",
        with(&|m| m.tau_dot = 0.15),
        vec!["beta", "tau_rate_strict"],
    );
    out
}

fn bootstrap_compliance(run: &DeskRun) -> Outcome {
    let p = params();
    let log = BootstrapLog {
        entries: run
            .selfsim
            .snapshots
            .iter()
            .map(|s| monitor_bootstrap(&s.field, &s.modulation, &p, &run.coverage))
            .collect(),
    };
    let violations = log.violations(&COMPLIANCE_IDS);
    let fixtures = fixture_trips(&p);
    let mut mismatched = Vec::new();
    for (name, got, want) in &fixtures {
        let mut got = got.clone();
        let mut want: Vec<String> = want.iter().map(|s| s.to_string()).collect();
        got.sort();
        want.sort();
        if got != want || !(name == "unperturbed" || want.contains(name)) {
            mismatched.push(format!("{name} tripped {got:?}"));
        }
    }
    Outcome::new(
        violations.is_empty() && mismatched.is_empty(),
        format!(
            "{} covered snapshots, {} violations, {} fixtures, mismatches {:?}",
            log.entries.iter().filter(|e| e.covered).count(),
            violations.len(),
            fixtures.len(),
            mismatched
        ),
    )
}

fn modulation_rates(run: &DeskRun) -> Outcome {
    let (mut tau, mut drift, mut kappa) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for r in &run.selfsim.log {
        tau = tau.min((-0.75 * r.s).exp() - r.tau_dot.abs());
        drift = drift.min((-0.75 * r.s).exp() - (0.5 * r.s).exp() * r.drift.abs());
        if run.coverage.covers(r.s) {
            kappa = kappa.min((-r.s / 3.0).exp() - (-0.5 * r.s).exp() * r.kappa_rate.abs());
        }
    }
    Outcome::new(
        tau >= 0.0 && drift >= 0.0 && kappa >= 0.0,
        format!(
            "{} steps, smallest margins: time rate {tau:.2e}, drift {drift:.2e}, shift rate {kappa:.2e} (covered to s = {:.3})",
            run.selfsim.log.len(),
            run.coverage.horizon()
        ),
    )
}

fn trajectories(run: &DeskRun) -> Outcome {
    let p = params();
    let s0 = run.selfsim.snapshots[0].field.s_tag();
    let (mut growth, mut escape, mut exits) = (f64::INFINITY, f64::INFINITY, 0);
    for i in 0..20 {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let x0 = sign * p.h() * (1.0 + 0.5 * i as f64);
        let traced = trace_trajectory(
            x0,
            &run.selfsim.snapshots,
            1e-3,
            run.coverage.interior_limit,
        )
        .unwrap();
        exits += usize::from(traced.exit.is_some());
        for &(s, x) in &traced.path {
            growth = growth
                .min((x0.abs() + 6.0 * p.m / p.epsilon.sqrt()) * (1.5 * (s - s0)).exp() - x.abs());
            escape = escape.min(x.abs() - x0.abs() * ((s - s0) / 5.0).exp());
        }
    }
    Outcome::new(
        growth >= 0.0 && escape >= 0.0,
        format!("smallest growth margin {growth:.3e}, escape margin {escape:.3e}, {exits} left the interior"),
    )
}

fn frame_consistency(run: &DeskRun) -> Outcome {
    let mut worst = 0.0_f64;
    let mut compared = 0;
    for frame in &run.physical.snapshots {
        let Some(snap) = run
            .selfsim
            .snapshots
            .iter()
            .find(|s| (s.modulation.t - frame.time_tag()).abs() < 1e-12)
        else {
            continue;
        };
        let m = &snap.modulation;
        let scale = (1.5 * m.s).exp();
        let limit = 0.5 * snap.field.grid().half_length();
        for (&x, &u) in frame.grid().nodes().iter().zip(frame.values()) {
            if x.abs() > 2.0 || (scale * (x - m.xi)).abs() > limit {
                continue;
            }
            if let Some(v) = SelfSimRun::physical_value(snap, x) {
                worst = worst.max((v - u).abs());
            }
        }
        compared += 1;
    }
    Outcome::new(
        compared > 0 && worst <= 1e-4,
        format!(
            "{compared} frames compared up to s = {:.3}, largest difference {worst:.2e}",
            run.coverage.horizon()
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!(
            "criterion {n:>2} {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    };
    report(1, "profile jet and decay", profile_jet());
    report(2, "multiplier modes and split", multiplier_modes());
    report(3, "kernel envelope", kernel_envelope_constants());
    let run = desk_run();
    report(4, "burgers limit", burgers_limit(&run.data));
    report(5, "theorem flags", theorem_flags(&run));
    report(6, "convergence to profile", profile_convergence(&run));
    report(7, "bootstrap compliance", bootstrap_compliance(&run));
    report(8, "modulation rates", modulation_rates(&run));
    report(9, "trajectories", trajectories(&run));
    report(10, "frame consistency", frame_consistency(&run));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
