use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavebreak::initial_data::{
    certify, construct_unchecked, feasible_epsilon, AdmissibilityParams, Taper,
};
use wavebreak::multiplier::{KernelQuadrature, KernelTable};
use wavebreak::profile::profile_table;
use wavebreak::{Error, GridSpec, Result, SelfSimField};
use wavebreak_cli::runner::{
    diagnose_dir, load_config, run_experiment, sweep, write_kernel_table, RunManifest,
};
use wavebreak_cli::store::{num, read_columns, write_csv, write_csv_to};

#[derive(Parser)]
#[command(
    name = "wavebreak",
    version,
    about = "Gradient blowup experiments for weakly dispersive Burgers equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tables of the self-similar Burgers profile.
    Profile {
        #[command(subcommand)]
        action: ProfileAction,
    },
    /// Tables of the dispersion kernel.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// Construct or certify initial data.
    Initdata {
        #[command(subcommand)]
        action: InitAction,
    },
    /// Physical-variable run up to breaking.
    Simulate {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        config: PathBuf,
    },
    /// Self-similar run with modulation.
    Selfsim {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        config: PathBuf,
    },
    /// Fits and monitors for an existing run directory.
    Diagnose {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        plots: bool,
    },
    /// Full pipeline from a config file or a run manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// One run per value of a config key, in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
    },
}

#[derive(Subcommand)]
enum ProfileAction {
    Table {
        #[arg(long, default_value_t = 6.0)]
        nu: f64,
        #[arg(long, allow_hyphen_values = true)]
        xmin: f64,
        #[arg(long, allow_hyphen_values = true)]
        xmax: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KernelAction {
    Table {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0e-3)]
        rmin: f64,
        #[arg(long)]
        rmax: f64,
        #[arg(long)]
        n: usize,
        /// Largest ratio to the envelope reported as a pass.
        #[arg(long, default_value_t = 10.0)]
        bound: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct DataArgs {
    #[arg(long = "M")]
    m: f64,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1 << 16)]
    selfsim_points: usize,
    #[arg(long, default_value_t = 1000.0)]
    selfsim_half_length: f64,
}

#[derive(Subcommand)]
enum InitAction {
    /// Build the data, write it and its admissibility report.
    Make {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 8192)]
        n_points: usize,
        #[arg(long, default_value_t = 4.0)]
        half_length: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Certify data built from the parameters, or a self-similar slope read from CSV (`X`, `slope`).
    Certify {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Largest admissible epsilon for each M.
    Wedge {
        #[arg(long = "M", value_delimiter = ',')]
        m: Vec<f64>,
        #[arg(long, default_value_t = 0.02)]
        lo: f64,
        #[arg(long, default_value_t = 0.9)]
        hi: f64,
        #[arg(long, default_value_t = 1.0e-3)]
        tol: f64,
        #[arg(long, default_value_t = 1 << 16)]
        selfsim_points: usize,
        #[arg(long, default_value_t = 1000.0)]
        selfsim_half_length: f64,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn table_out(out: &Option<PathBuf>, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    match out {
        Some(path) => write_csv(path, header, rows),
        None => write_csv_to(io::stdout().lock(), header, rows),
    }
}

fn slope_from_csv(path: &Path, s0: f64) -> Result<SelfSimField> {
    let rows = read_columns(path, "X", "slope")?;
    let n = rows.len();
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::Format(format!(
            "{}: need a power-of-two number of rows, found {n}",
            path.display()
        )));
    }
    let grid = GridSpec::new(n, -rows[0].0)?;
    let off = rows
        .iter()
        .enumerate()
        .map(|(j, r)| (r.0 - grid.node(j)).abs())
        .fold(0.0, f64::max);
    if off > 1e-9 * grid.half_length() {
        return Err(Error::Format(format!(
            "{}: X is not a uniform grid centred at 0",
            path.display()
        )));
    }
    SelfSimField::from_slope(grid, rows.into_iter().map(|r| r.1).collect(), s0)
}

fn finish(manifest: RunManifest) -> Result<ExitCode> {
    for c in &manifest.checks {
        println!(
            "{:<12} {} {}",
            c.check,
            if c.pass { "pass" } else { "FAIL" },
            c.detail
        );
    }
    Ok(if manifest.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn single_solver(alpha: f64, config: &Path, stages: &str) -> Result<ExitCode> {
    let mut c = load_config(config)?;
    c.set("alpha", &alpha.to_string())?;
    c.set("stages", stages)?;
    finish(run_experiment(&c)?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Profile {
            action:
                ProfileAction::Table {
                    nu,
                    xmin,
                    xmax,
                    n,
                    out,
                },
        } => {
            let rows = profile_table(nu, xmin, xmax, n)?;
            table_out(
                &out,
                &["X", "U", "d1", "d2", "d3", "d4", "d5"],
                rows.iter()
                    .map(|r| r.iter().map(|v| num(*v)).collect())
                    .collect(),
            )?;
        }
        Command::Kernel {
            action:
                KernelAction::Table {
                    alpha,
                    rmin,
                    rmax,
                    n,
                    bound,
                    out,
                },
        } => {
            let table = KernelTable::build(alpha, rmin, rmax, n, KernelQuadrature::default())?;
            match &out {
                Some(path) => write_kernel_table(path, &table, bound)?,
                None => {
                    let rows = (0..n)
                        .map(|i| {
                            vec![
                                num(table.radii[i]),
                                num(table.values[i]),
                                num(table.envelope(i)),
                                (table.ratio(i) <= bound).to_string(),
                            ]
                        })
                        .collect();
                    table_out(&None, &["r", "G", "envelope", "pass"], rows)?;
                }
            }
        }
        Command::Initdata { action } => match action {
            InitAction::Make {
                data,
                n_points,
                half_length,
                output,
            } => {
                let p = AdmissibilityParams::new(data.m, data.epsilon)?;
                let d = construct_unchecked(
                    &p,
                    &Taper::default(),
                    GridSpec::new(data.selfsim_points, data.selfsim_half_length)?,
                    GridSpec::new(n_points, half_length)?,
                )?;
                let report = certify(&d.selfsim, &p)?;
                std::fs::create_dir_all(&output)?;
                std::fs::write(
                    output.join("admissibility.json"),
                    serde_json::to_string_pretty(&report)? + "\n",
                )?;
                let g = d.selfsim.grid();
                write_csv(
                    &output.join("initial_selfsim.csv"),
                    &["X", "U", "slope"],
                    g.nodes()
                        .iter()
                        .zip(d.selfsim.values())
                        .zip(d.selfsim.slope())
                        .map(|((x, u), w)| vec![num(*x), num(*u), num(*w)]),
                )?;
                write_csv(
                    &output.join("initial_physical.csv"),
                    &["x", "u"],
                    d.physical
                        .grid()
                        .nodes()
                        .iter()
                        .zip(d.physical.values())
                        .map(|(x, u)| vec![num(*x), num(*u)]),
                )?;
                println!("admissible: {}", report.admissible());
                return Ok(if report.admissible() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                });
            }
            InitAction::Certify { data, input } => {
                let p = AdmissibilityParams::new(data.m, data.epsilon)?;
                let field = match input {
                    Some(path) => slope_from_csv(&path, p.s0())?,
                    None => {
                        construct_unchecked(
                            &p,
                            &Taper::default(),
                            GridSpec::new(data.selfsim_points, data.selfsim_half_length)?,
                            GridSpec::new(16, 4.0)?,
                        )?
                        .selfsim
                    }
                };
                let report = certify(&field, &p)?;
                print_json(&report)?;
                return Ok(if report.admissible() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                });
            }
            InitAction::Wedge {
                m,
                lo,
                hi,
                tol,
                selfsim_points,
                selfsim_half_length,
            } => {
                let grid = GridSpec::new(selfsim_points, selfsim_half_length)?;
                let rows = m
                    .iter()
                    .map(|&m| feasible_epsilon(m, lo, hi, tol, &Taper::default(), grid))
                    .collect::<Result<Vec<_>>>()?;
                print_json(&rows)?;
            }
        },
        Command::Simulate { alpha, config } => {
            return single_solver(alpha, &config, "initdata,simulate")
        }
        Command::Selfsim { alpha, config } => {
            return single_solver(alpha, &config, "initdata,selfsim")
        }
        Command::Diagnose { run, plots } => {
            let mut manifest = RunManifest::read(&run)?;
            let mut config = manifest.config()?;
            if plots {
                config.set("plots", "true")?;
            }
            let outcome = diagnose_dir(&run, &config)?;
            manifest.checks.retain(|c| c.check == "admissible");
            manifest.checks.extend(
                outcome
                    .checks
                    .into_iter()
                    .filter(|c| config.acceptance.iter().any(|a| a.name() == c.check)),
            );
            std::fs::write(
                run.join(wavebreak_cli::store::MANIFEST),
                serde_json::to_string_pretty(&manifest)? + "\n",
            )?;
            return finish(manifest);
        }
        Command::Run { config } => return finish(run_experiment(&load_config(&config)?)?),
        Command::Sweep {
            config,
            param,
            values,
        } => {
            let base = load_config(&config)?;
            let mut all_pass = true;
            for (value, outcome) in sweep(&base, &param, &values) {
                match outcome {
                    Ok(m) => {
                        all_pass &= m.passed();
                        println!(
                            "{param}={value}: {}",
                            if m.passed() { "pass" } else { "FAIL" }
                        );
                    }
                    Err(e) => {
                        all_pass = false;
                        println!("{param}={value}: error: {e}");
                    }
                }
            }
            return Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
