//! Pipeline stages, run manifests and parameter sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wavebreak::diagnostics::{
    convergence_to_profile, fit_blowup_time, fit_holder_exponent, local_frame, monitor_bootstrap,
    monitor_operator_decay, sandwich_fraction, svg_plot, BlowupReport, BootstrapLog,
    ConvergenceWindow, Coverage, OperatorDecayEntry, COMPLIANCE_IDS,
};
use wavebreak::initial_data::{certify, construct_unchecked, AdmissibilityParams, Taper};
use wavebreak::multiplier::{KernelQuadrature, KernelTable};
use wavebreak::physical::{run_to_breaking, Model, RunOptions, StepController, Termination};
use wavebreak::profile::{eval_rescaled, profile_table};
use wavebreak::selfsim::{trace_trajectory, SelfSimConfig, SelfSimSolver, Snapshot};
use wavebreak::{Error, GridSpec, OperatorSplit, Result};

use crate::config::{Check, ExperimentConfig, Stage};
use crate::store::{self, num, write_csv};

/// Version recorded in manifests: the package version plus `git describe` when available.
pub fn version_string() -> String {
    let pkg = env!("CARGO_PKG_VERSION");
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    match git {
        Some(g) => format!("{pkg}+{g}"),
        None => pkg.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

/// Everything needed to reproduce a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub termination: Option<String>,
    pub stages: Vec<StageSummary>,
    pub checks: Vec<CheckResult>,
    /// FFT plans and reductions run in a fixed order on one thread per experiment.
    pub determinism: String,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_entries(self.config.clone())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(
            dir.join(store::MANIFEST),
        )?)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        fs::write(
            dir.join(store::MANIFEST),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }
}

/// Reads a config file, or the config recorded in a run manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        let mut config = manifest.config()?;
        if let Ok(dir) = std::env::var(crate::config::OUTPUT_DIR_ENV) {
            config.set("output_dir", &dir)?;
        }
        Ok(config)
    } else {
        ExperimentConfig::load(path)
    }
}

fn stage_error(stage: Stage, e: Error) -> Error {
    Error::Stage {
        stage: stage.name().into(),
        reason: e.to_string(),
    }
}

fn params(config: &ExperimentConfig) -> Result<AdmissibilityParams> {
    let mut p = AdmissibilityParams::new(config.m, config.epsilon)?;
    p.kappa0 = config.kappa0;
    Ok(p)
}

fn selfsim_config(config: &ExperimentConfig) -> SelfSimConfig {
    SelfSimConfig {
        alpha: config.alpha,
        dispersion: config.dispersion,
        ds: config.ds,
        sponge_start: config.sponge_start,
        snapshot_interval: config.snapshot_interval,
        regrid_interval: config.regrid_interval,
        ..SelfSimConfig::default()
    }
}

fn model(config: &ExperimentConfig) -> Result<Model<f64>> {
    if config.dispersion {
        Model::full(config.alpha)
    } else {
        Ok(Model::burgers())
    }
}

/// Runs the configured stages into the output directory and returns the manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let started = Instant::now();
    let mut manifest = RunManifest {
        version: version_string(),
        config: config.entries().clone(),
        started_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        wall_clock_seconds: 0.0,
        termination: None,
        stages: Vec::new(),
        checks: Vec::new(),
        determinism: "single-threaded FFT path per experiment; no random inputs".into(),
    };
    manifest.write(&dir)?;
    let mut admissible = false;
    let mut data = None;
    for &stage in &config.stages {
        let clock = Instant::now();
        let detail = match stage {
            Stage::Profile => {
                let rows = profile_table(config.nu, config.xmin, config.xmax, config.rows)
                    .map_err(|e| stage_error(stage, e))?;
                write_csv(
                    &dir.join("profile_table.csv"),
                    &["X", "U", "d1", "d2", "d3", "d4", "d5"],
                    rows.iter().map(|r| r.iter().map(|v| num(*v)).collect()),
                )?;
                format!("{} rows", rows.len())
            }
            Stage::Kernel => {
                let table = KernelTable::build(
                    config.alpha,
                    config.rmin,
                    config.rmax,
                    config.rows,
                    KernelQuadrature::default(),
                )
                .map_err(|e| stage_error(stage, e))?;
                write_kernel_table(&dir.join("kernel_table.csv"), &table, config.kernel_bound)?;
                let (near, far) = table.constants();
                format!("constants near {near:.6} far {far:.6}")
            }
            Stage::InitData => {
                let p = params(config).map_err(|e| stage_error(stage, e))?;
                let selfsim_grid =
                    GridSpec::new(config.selfsim_points, config.selfsim_half_length)?;
                let physical_grid = GridSpec::new(config.n_points, config.half_length)?;
                let d = construct_unchecked(&p, &Taper::default(), selfsim_grid, physical_grid)
                    .map_err(|e| stage_error(stage, e))?;
                let report = certify(&d.selfsim, &p).map_err(|e| stage_error(stage, e))?;
                fs::write(
                    dir.join("admissibility.json"),
                    serde_json::to_string_pretty(&report)? + "\n",
                )?;
                write_csv(
                    &dir.join("initial_physical.csv"),
                    &["x", "u"],
                    d.physical
                        .grid()
                        .nodes()
                        .iter()
                        .zip(d.physical.values())
                        .map(|(x, u)| vec![num(*x), num(*u)]),
                )?;
                if !report.admissible() {
                    let failed: Vec<&str> = report.failures().map(|c| c.id.as_str()).collect();
                    let e = Error::Infeasible(format!(
                        "epsilon = {} with M = {} fails {}",
                        p.epsilon,
                        p.m,
                        failed.join(", ")
                    ));
                    return finish_failed(&dir, manifest, started, stage, e);
                }
                admissible = true;
                data = Some(d);
                "admissible".to_string()
            }
            Stage::SelfSim => {
                let d = data.as_ref().expect("validated: initdata precedes selfsim");
                let mut solver =
                    SelfSimSolver::new(&d.selfsim, &d.modulation, selfsim_config(config))
                        .map_err(|e| stage_error(stage, e))?;
                let run = solver
                    .run(config.s_end, config.max_steps)
                    .map_err(|e| stage_error(stage, e))?;
                write_selfsim_log(&dir, &run.log)?;
                store::write_snapshots(&dir, &run.snapshots)?;
                write_snapshot_summary(&dir, &run.snapshots, config)?;
                if let Some(f) = &run.failure {
                    manifest.termination = Some(format!("selfsim: {f}"));
                }
                format!(
                    "{} steps, {} snapshots, final s {:.6}",
                    run.log.len(),
                    run.snapshots.len(),
                    solver.s()
                )
            }
            Stage::Simulate => {
                let d = data
                    .as_ref()
                    .expect("validated: initdata precedes simulate");
                let controller = StepController {
                    cfl: config.cfl,
                    stop_gradient: config.stop_gradient,
                    ..StepController::default()
                };
                let opts = RunOptions {
                    max_points: config.max_points,
                    output_interval: config.output_interval,
                    ..RunOptions::default()
                };
                let traj = run_to_breaking(&d.physical, &model(config)?, &controller, &opts)
                    .map_err(|e| stage_error(stage, e))?;
                store::write_trajectory(&dir.join(store::TRAJECTORY), &traj.records)?;
                let f = &traj.final_frame;
                write_csv(
                    &dir.join(store::FINAL_FRAME),
                    &["x", "u"],
                    f.grid()
                        .nodes()
                        .iter()
                        .zip(f.values())
                        .map(|(x, u)| vec![num(*x), num(*u)]),
                )?;
                let reason = match traj.termination {
                    Termination::Breaking => "breaking".to_string(),
                    Termination::ResolutionLimit { last_resolved_time } => {
                        format!("resolution limit at t = {last_resolved_time}")
                    }
                    Termination::StepLimit => "step limit".to_string(),
                };
                manifest
                    .termination
                    .get_or_insert_with(|| format!("simulate: {reason}"));
                format!("{} steps, {reason}", traj.steps)
            }
            Stage::Diagnose => {
                let outcome = diagnose_dir(&dir, config).map_err(|e| stage_error(stage, e))?;
                manifest.checks.extend(
                    outcome
                        .checks
                        .into_iter()
                        .filter(|c| config.acceptance.iter().any(|a| a.name() == c.check)),
                );
                "report written".to_string()
            }
        };
        manifest.stages.push(StageSummary {
            stage: stage.name().into(),
            seconds: clock.elapsed().as_secs_f64(),
            detail,
        });
    }
    if config.active_checks().contains(&Check::Admissible) {
        manifest.checks.insert(
            0,
            CheckResult {
                check: Check::Admissible.name().into(),
                pass: admissible,
                detail: String::new(),
            },
        );
    }
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(&dir)?;
    Ok(manifest)
}

fn finish_failed(
    dir: &Path,
    mut manifest: RunManifest,
    started: Instant,
    stage: Stage,
    e: Error,
) -> Result<RunManifest> {
    manifest.termination = Some(format!("{}: {e}", stage.name()));
    manifest.checks.push(CheckResult {
        check: Check::Admissible.name().into(),
        pass: false,
        detail: e.to_string(),
    });
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(dir)?;
    Err(stage_error(stage, e))
}

pub fn write_kernel_table(path: &Path, table: &KernelTable, bound: f64) -> Result<()> {
    write_csv(
        path,
        &["r", "G", "envelope", "pass"],
        (0..table.radii.len()).map(|i| {
            vec![
                num(table.radii[i]),
                num(table.values[i]),
                num(table.envelope(i)),
                (table.ratio(i) <= bound).to_string(),
            ]
        }),
    )
}

fn write_selfsim_log(dir: &Path, log: &[wavebreak::selfsim::StepRecord]) -> Result<()> {
    write_csv(
        &dir.join("selfsim_log.csv"),
        &[
            "s",
            "t",
            "tau",
            "xi",
            "kappa",
            "tau_dot",
            "drift",
            "kappa_rate",
            "beta",
            "nu",
            "pin_value",
            "pin_slope",
            "pin_curvature",
            "repin_shift",
            "newton_iterations",
        ],
        log.iter().map(|r| {
            vec![
                num(r.s),
                num(r.t),
                num(r.tau),
                num(r.xi),
                num(r.kappa),
                num(r.tau_dot),
                num(r.drift),
                num(r.kappa_rate),
                num(r.beta),
                num(r.nu),
                num(r.pin_value),
                num(r.pin_slope),
                num(r.pin_curvature),
                num(r.repin_shift),
                r.newton_iterations.to_string(),
            ]
        }),
    )
}

fn convergence_window(config: &ExperimentConfig, p: &AdmissibilityParams) -> ConvergenceWindow {
    ConvergenceWindow {
        base: config.convergence_window,
        s0: p.s0(),
        limit: config.sponge_start * config.selfsim_half_length,
    }
}

/// Per-snapshot distance to the profile with the current third derivative.
fn write_snapshot_summary(
    dir: &Path,
    snapshots: &[Snapshot],
    config: &ExperimentConfig,
) -> Result<()> {
    let window = convergence_window(config, &params(config)?);
    let rows = snapshots
        .iter()
        .map(|snap| {
            let f = &snap.field;
            let (nu, w) = (f.curvature(), window.at(f.s_tag()));
            let mut dist = 0.0_f64;
            for (x, u) in f.grid().nodes().iter().zip(f.values()) {
                if x.abs() <= w {
                    dist = dist.max((u - eval_rescaled(*x, nu)?).abs());
                }
            }
            let [a, b, c] = f.pin_residuals();
            let m = &snap.modulation;
            Ok(vec![
                num(f.s_tag()),
                num(m.t),
                num(m.tau),
                num(m.xi),
                num(m.kappa),
                num(m.tau_dot),
                num(nu),
                num(dist),
                num(a),
                num(b),
                num(c),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(
        &dir.join("selfsim_snapshots.csv"),
        &[
            "s",
            "t",
            "tau",
            "xi",
            "kappa",
            "tau_dot",
            "nu",
            "profile_distance",
            "pin_value",
            "pin_slope",
            "pin_curvature",
        ],
        rows,
    )
}

/// Output of [`diagnose_dir`].
#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub report: BlowupReport,
    pub log: BootstrapLog,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Serialize)]
struct TrajectorySummary {
    x0: f64,
    samples: usize,
    exit_s: Option<f64>,
    growth_margin: f64,
    escape_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ReportDocument<'a> {
    blowup: &'a BlowupReport,
    sandwich_fraction: f64,
    coverage_horizon: f64,
    compliance_violations: Vec<(f64, String)>,
    trends: Vec<wavebreak::diagnostics::TrendSummary>,
    operator_decay: &'a [OperatorDecayEntry],
    trajectories: &'a [TrajectorySummary],
}

/// Fits, monitors and plots for a run directory holding solver output.
pub fn diagnose_dir(dir: &Path, config: &ExperimentConfig) -> Result<Diagnosis> {
    let p = params(config)?;
    let records = store::read_trajectory(&dir.join(store::TRAJECTORY))?;
    let snapshots = store::read_snapshots(dir)?;
    let first = snapshots
        .first()
        .ok_or_else(|| Error::Format("no snapshots".into()))?;
    let last = snapshots.last().expect("non-empty");
    let interior = config.sponge_start * config.selfsim_half_length;
    let amplitude = (-0.5 * first.modulation.s).exp()
        * first
            .field
            .values()
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()))
        + first.modulation.kappa.abs();
    let coverage = Coverage {
        interior_limit: interior,
        support_radius: 1.0 + amplitude * (last.modulation.t - first.modulation.t),
    };

    let rate = fit_blowup_time(&records)?;
    let frame = local_frame(last, interior, 0.5, 1 << 14)?;
    let holder = fit_holder_exponent(&frame, last.modulation.xi, config.holder_window)?;
    let convergence = convergence_to_profile(
        &snapshots,
        convergence_window(config, &p),
        config.cauchy_tolerance,
    )?;
    let max_amplitude = records.iter().map(|r| r.max_abs_u).fold(0.0, f64::max);
    let report = BlowupReport::assemble(rate, holder, convergence, max_amplitude, &p);

    let log = BootstrapLog {
        entries: snapshots
            .iter()
            .map(|s| monitor_bootstrap(&s.field, &s.modulation, &p, &coverage))
            .collect(),
    };
    let decay: Vec<OperatorDecayEntry> = snapshots
        .iter()
        .map(|s| {
            let split = OperatorSplit::new(config.alpha, s.field.s_tag())?;
            Ok(monitor_operator_decay(&s.field, &split, &p, &coverage))
        })
        .collect::<Result<_>>()?;
    let s0 = first.field.s_tag();
    let trajectories: Vec<TrajectorySummary> = (0..config.trajectory_seeds)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let x0 = sign * p.h() * (1.0 + 0.5 * i as f64);
            let traced = trace_trajectory(x0, &snapshots, config.ds, interior)?;
            let (mut growth, mut escape) = (f64::INFINITY, f64::INFINITY);
            for &(s, x) in &traced.path {
                growth = growth.min(
                    (x0.abs() + 6.0 * p.m / p.epsilon.sqrt()) * (1.5 * (s - s0)).exp() - x.abs(),
                );
                escape = escape.min(x.abs() - x0.abs() * ((s - s0) / 5.0).exp());
            }
            Ok(TrajectorySummary {
                x0,
                samples: traced.path.len(),
                exit_s: traced.exit.map(|e| e.0),
                growth_margin: growth,
                escape_margin: escape,
            })
        })
        .collect::<Result<_>>()?;
    let modulation: Vec<_> = snapshots.iter().map(|s| s.modulation).collect();
    let violations = log.violations(&COMPLIANCE_IDS);
    let document = ReportDocument {
        blowup: &report,
        sandwich_fraction: sandwich_fraction(&modulation, report.rate.t_star),
        coverage_horizon: coverage.horizon(),
        compliance_violations: violations.clone(),
        trends: log.trends(),
        operator_decay: &decay,
        trajectories: &trajectories,
    };
    fs::write(
        dir.join("blowup_report.json"),
        serde_json::to_string_pretty(&document)? + "\n",
    )?;
    fs::write(dir.join("bootstrap_log.csv"), log.to_csv())?;
    write_csv(
        &dir.join("convergence.csv"),
        &["s", "distance"],
        report
            .convergence
            .points
            .iter()
            .map(|(s, d)| vec![num(*s), num(*d)]),
    )?;
    if config.plots {
        write_plots(
            dir,
            &records,
            &report,
            &frame,
            last.modulation.xi,
            config.holder_window,
        )?;
    }

    let trajectories_ok = trajectories
        .iter()
        .all(|t| t.growth_margin >= 0.0 && t.escape_margin >= 0.0);
    let checks = vec![
        CheckResult {
            check: Check::Theorem.name().into(),
            pass: report.all_pass(),
            detail: format!("{:?}", report.flags),
        },
        CheckResult {
            check: Check::Bootstrap.name().into(),
            pass: violations.is_empty() && trajectories_ok,
            detail: format!(
                "{} violations, trajectories {}",
                violations.len(),
                if trajectories_ok { "ok" } else { "failed" }
            ),
        },
        CheckResult {
            check: Check::Convergence.name().into(),
            pass: report.convergence.reduction <= 0.1
                && (5.0..=7.0).contains(&report.convergence.nu_limit)
                && report.convergence.trend.decreasing,
            detail: format!(
                "reduction {:e}, nu {}",
                report.convergence.reduction, report.convergence.nu_limit
            ),
        },
    ];
    Ok(Diagnosis {
        report,
        log,
        checks,
    })
}

fn write_plots(
    dir: &Path,
    records: &[wavebreak::physical::PhysicalRecord],
    report: &BlowupReport,
    frame: &wavebreak::Field<f64>,
    x_star: f64,
    window: (f64, f64),
) -> Result<()> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let measured: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.min_ux < 0.0)
        .map(|r| (r.t, -1.0 / r.min_ux))
        .collect();
    let fitted: Vec<(f64, f64)> = measured
        .iter()
        .map(|&(t, _)| (t, (report.rate.t_star - t) / report.rate.rate_constant))
        .collect();
    fs::write(
        plots.join("rate_fit.svg"),
        svg_plot(
            "-1/min u_x against t",
            &[("measured", &measured), ("fit", &fitted)],
            false,
        ),
    )?;
    let center =
        wavebreak::selfsim::lagrange_sample(frame.grid(), frame.values(), x_star, 8).unwrap_or(0.0);
    let cusp: Vec<(f64, f64)> = (0..60)
        .filter_map(|i| {
            let r = window.0 * (window.1 / window.0).powf(i as f64 / 59.0);
            wavebreak::selfsim::lagrange_sample(frame.grid(), frame.values(), x_star + r, 8)
                .map(|u| (r.ln(), (u - center).abs().ln()))
        })
        .collect();
    let slope = report.holder.exponent;
    let anchor = cusp.first().copied().unwrap_or((0.0, 0.0));
    let line: Vec<(f64, f64)> = cusp
        .iter()
        .map(|&(x, _)| (x, anchor.1 + slope * (x - anchor.0)))
        .collect();
    fs::write(
        plots.join("cusp_fit.svg"),
        svg_plot(
            "log|u - u(x*)| against log|x - x*|",
            &[("measured", &cusp), ("fit", &line)],
            false,
        ),
    )?;
    fs::write(
        plots.join("convergence.svg"),
        svg_plot(
            "distance to the limiting profile",
            &[("sup distance", &report.convergence.points)],
            true,
        ),
    )?;
    Ok(())
}

/// Runs one experiment per value of `key`, concurrently, each in its own subdirectory.
pub fn sweep(
    base: &ExperimentConfig,
    key: &str,
    values: &[String],
) -> Vec<(String, Result<RunManifest>)> {
    values
        .par_iter()
        .map(|v| {
            let run = (|| {
                let mut c = base.clone();
                c.set(key, v)?;
                let dir: PathBuf = base.output_dir.join(format!("{key}={v}"));
                c.set("output_dir", &dir.to_string_lossy())?;
                run_experiment(&c)
            })();
            (v.clone(), run)
        })
        .collect()
}
