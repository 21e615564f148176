use std::fs;
use std::path::Path;
use std::process::Command;

use wavebreak::selfsim::SelfSimField;
use wavebreak::GridSpec;
use wavebreak_cli::config::{ExperimentConfig, Stage};
use wavebreak_cli::runner::{run_experiment, sweep, RunManifest};
use wavebreak_cli::store::{
    read_snapshots, read_trajectory, write_snapshots, write_trajectory, MANIFEST, TRAJECTORY,
};

fn config(text: &str, dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::parse(text).unwrap();
    c.set("output_dir", &dir.to_string_lossy()).unwrap();
    c
}

const PROFILE: &str =
    "stages = profile,kernel\nalpha = -1\nrows = 41\nxmin = -3\nxmax = 3\nrmax = 5\n";

const BURGERS: &str =
    "stages = initdata,simulate\nalpha = -1\ndispersion = false\nn_points = 1024\n\
max_points = 4096\nstop_gradient = -100\nacceptance = admissible\n";

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn profile_only_run_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&config(PROFILE, tmp.path())).unwrap();
    assert!(manifest.passed() && manifest.checks.is_empty());
    let table = String::from_utf8(bytes(tmp.path(), "profile_table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "X,U,d1,d2,d3,d4,d5");
    assert_eq!(lines.len(), 42);
    assert!(!table.contains('\r'));
    let middle: Vec<f64> = lines[21].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(middle[0], 0.0);
    assert!((middle[2] + 1.0).abs() < 1e-12 && (middle[4] - 6.0).abs() < 1e-12);
    let kernel = String::from_utf8(bytes(tmp.path(), "kernel_table.csv")).unwrap();
    assert!(kernel.starts_with("r,G,envelope,pass\n"));
    assert!(kernel.lines().skip(1).all(|l| l.ends_with(",true")));
    assert!(!tmp.path().join(TRAJECTORY).exists() && !tmp.path().join("snapshots").exists());
    let stored = RunManifest::read(tmp.path()).unwrap();
    assert_eq!(
        stored.config().unwrap().stages,
        vec![Stage::Profile, Stage::Kernel]
    );
}

#[test]
fn identical_configs_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let m = run_experiment(&config(BURGERS, dir)).unwrap();
        assert!(m.passed(), "{:?}", m.checks);
        run_experiment(&config(PROFILE, dir)).unwrap();
    }
    for name in [
        "profile_table.csv",
        "kernel_table.csv",
        "initial_physical.csv",
        TRAJECTORY,
        "final_frame.csv",
        "admissibility.json",
    ] {
        assert_eq!(bytes(a.path(), name), bytes(b.path(), name), "{name}");
    }
}

#[test]
fn manifest_reruns_the_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    run_experiment(&config(PROFILE, tmp.path())).unwrap();
    let first = bytes(tmp.path(), "profile_table.csv");
    let again = tempfile::tempdir().unwrap();
    let mut c = RunManifest::read(tmp.path()).unwrap().config().unwrap();
    c.set("output_dir", &again.path().to_string_lossy())
        .unwrap();
    run_experiment(&c).unwrap();
    assert_eq!(first, bytes(again.path(), "profile_table.csv"));
}

#[test]
fn trajectory_and_snapshots_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(BURGERS, tmp.path());
    run_experiment(&c).unwrap();
    let records = read_trajectory(&tmp.path().join(TRAJECTORY)).unwrap();
    assert!(!records.is_empty());
    let copy = tmp.path().join("copy.csv");
    write_trajectory(&copy, &records).unwrap();
    assert_eq!(read_trajectory(&copy).unwrap(), records);

    let grid = GridSpec::new(64, 10.0).unwrap();
    let snaps: Vec<_> = (0..3)
        .map(|i| {
            let s = 1.0 + 0.1 * i as f64;
            let field = SelfSimField::from_slope(
                grid,
                grid.nodes()
                    .iter()
                    .map(|&x| -(-x * x).exp() * (1.0 + 0.1 * s))
                    .collect(),
                s,
            )
            .unwrap();
            let mut modulation =
                wavebreak::selfsim::ModulationState::at(s, -(-s).exp(), 1e-3 * s, -2e-3);
            modulation.rates_s = s;
            modulation.tau_dot = 1.0 / 3.0;
            wavebreak::selfsim::Snapshot { field, modulation }
        })
        .collect();
    let dir = tmp.path().join("snaps");
    fs::create_dir_all(&dir).unwrap();
    write_snapshots(&dir, &snaps).unwrap();
    let back = read_snapshots(&dir).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in snaps.iter().zip(&back) {
        assert_eq!(a.field.slope(), b.field.slope());
        assert_eq!(a.field.values(), b.field.values());
        assert_eq!(a.modulation.tau_dot, b.modulation.tau_dot);
        assert_eq!(a.modulation.xi, b.modulation.xi);
    }
}

#[test]
fn sweep_runs_each_value_in_its_own_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = sweep(
        &config(PROFILE, tmp.path()),
        "nu",
        &["5".into(), "7".into()],
    );
    assert_eq!(runs.len(), 2);
    for (value, outcome) in runs {
        assert!(outcome.unwrap().passed());
        assert!(tmp
            .path()
            .join(format!("nu={value}"))
            .join(MANIFEST)
            .exists());
    }
    let bad = sweep(&config(PROFILE, tmp.path()), "no_such_key", &["1".into()]);
    assert!(bad[0].1.is_err());
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavebreak"))
}

#[test]
fn missing_alpha_exits_with_the_key_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "stages = profile\nnu = 6\n").unwrap();
    let out = binary()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`alpha`"));
}

#[test]
fn output_dir_follows_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("p.cfg");
    fs::write(
        &cfg,
        "stages = profile\nalpha = -1\noutput_dir = somewhere-else\nrows = 5\n",
    )
    .unwrap();
    let target = tmp.path().join("out");
    let status = binary()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("WAVEBREAK_OUTPUT_DIR", &target)
        .current_dir(tmp.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(target.join("profile_table.csv").exists());
    assert!(!tmp.path().join("somewhere-else").exists());
}

#[test]
fn profile_table_prints_to_stdout() {
    let out = binary()
        .args([
            "profile", "table", "--xmin", "-1", "--xmax", "1", "--n", "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("0.0000000000000000e0,0.0000000000000000e0,-1.0000000000000000e0"));
}

#[test]
fn certify_reports_admissible_data() {
    let out = binary()
        .args(["initdata", "certify", "--M", "1000", "--epsilon", "0.14"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["entries"].as_array().unwrap().len(), 17);
    let out = binary()
        .args(["initdata", "certify", "--M", "1000", "--epsilon", "0.9"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
