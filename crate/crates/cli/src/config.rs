//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use wavebreak::{Error, Result};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "WAVEBREAK_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Profile,
    Kernel,
    InitData,
    SelfSim,
    Simulate,
    Diagnose,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Profile => "profile",
            Stage::Kernel => "kernel",
            Stage::InitData => "initdata",
            Stage::SelfSim => "selfsim",
            Stage::Simulate => "simulate",
            Stage::Diagnose => "diagnose",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "profile" => Stage::Profile,
            "kernel" => Stage::Kernel,
            "initdata" => Stage::InitData,
            "selfsim" => Stage::SelfSim,
            "simulate" => Stage::Simulate,
            "diagnose" => Stage::Diagnose,
            other => return Err(Error::Config(format!("unknown stage `{other}`"))),
        })
    }
}

/// Check groups that decide the exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    Admissible,
    Theorem,
    Bootstrap,
    Convergence,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Admissible => "admissible",
            Check::Theorem => "theorem",
            Check::Bootstrap => "bootstrap",
            Check::Convergence => "convergence",
        }
    }

    fn required_stage(self) -> Stage {
        match self {
            Check::Admissible => Stage::InitData,
            _ => Stage::Diagnose,
        }
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "admissible" => Check::Admissible,
            "theorem" => Check::Theorem,
            "bootstrap" => Check::Bootstrap,
            "convergence" => Check::Convergence,
            other => return Err(Error::Config(format!("unknown acceptance check `{other}`"))),
        })
    }
}

/// Every recognised key with its default; `None` marks a required key.
const KEYS: &[(&str, Option<&str>)] = &[
    ("stages", Some("initdata,selfsim,simulate,diagnose")),
    ("output_dir", Some("wavebreak-out")),
    ("alpha", None),
    ("dispersion", Some("true")),
    ("M", Some("1000")),
    ("epsilon", Some("0.14")),
    ("kappa0", Some("0")),
    ("selfsim_points", Some("65536")),
    ("selfsim_half_length", Some("1000")),
    ("ds", Some("0.001")),
    ("s_end", Some("6")),
    ("regrid_interval", Some("0.05")),
    ("sponge_start", Some("0.85")),
    ("snapshot_interval", Some("0.05")),
    ("max_steps", Some("1000000")),
    ("n_points", Some("8192")),
    ("half_length", Some("4")),
    ("max_points", Some("131072")),
    ("cfl", Some("0.5")),
    ("stop_gradient", Some("-10000")),
    ("output_interval", Some("0.005")),
    ("cauchy_tolerance", Some("0.01")),
    ("holder_window_min", Some("0.001")),
    ("holder_window_max", Some("0.1")),
    ("convergence_window", Some("5")),
    ("trajectory_seeds", Some("20")),
    ("plots", Some("false")),
    ("nu", Some("6")),
    ("xmin", Some("-10")),
    ("xmax", Some("10")),
    ("rows", Some("201")),
    ("rmin", Some("0.001")),
    ("rmax", Some("10")),
    ("kernel_bound", Some("10")),
    (
        "acceptance",
        Some("admissible,theorem,bootstrap,convergence"),
    ),
];

/// Parsed and validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, String>,
    pub stages: Vec<Stage>,
    pub output_dir: PathBuf,
    pub alpha: f64,
    pub dispersion: bool,
    pub m: f64,
    pub epsilon: f64,
    pub kappa0: f64,
    pub selfsim_points: usize,
    pub selfsim_half_length: f64,
    pub ds: f64,
    pub s_end: f64,
    pub regrid_interval: f64,
    pub sponge_start: f64,
    pub snapshot_interval: f64,
    pub max_steps: usize,
    pub n_points: usize,
    pub half_length: f64,
    pub max_points: usize,
    pub cfl: f64,
    pub stop_gradient: f64,
    pub output_interval: f64,
    pub cauchy_tolerance: f64,
    pub holder_window: (f64, f64),
    pub convergence_window: f64,
    pub trajectory_seeds: usize,
    pub plots: bool,
    pub nu: f64,
    pub xmin: f64,
    pub xmax: f64,
    pub rows: usize,
    pub rmin: f64,
    pub rmax: f64,
    pub kernel_bound: f64,
    pub acceptance: Vec<Check>,
}

fn parse_value<T: FromStr>(entries: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = &entries[key];
    raw.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{raw}`")))
}

fn parse_list<T: FromStr<Err = Error>>(raw: &str) -> Result<Vec<T>> {
    let mut out: Vec<T> = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        out.push(item.parse()?);
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parses config text. Blank lines and `#` comments are ignored; unknown,
    /// duplicate or malformed keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut given = BTreeMap::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", number + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}`",
                    number + 1
                )));
            }
            if given.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    number + 1
                )));
            }
        }
        Self::from_entries(given)
    }

    pub fn from_entries(given: BTreeMap<String, String>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (key, default) in KEYS {
            match (given.get(*key), default) {
                (Some(v), _) => entries.insert(key.to_string(), v.clone()),
                (None, Some(d)) => entries.insert(key.to_string(), d.to_string()),
                (None, None) => return Err(Error::Config(format!("missing required key `{key}`"))),
            };
        }
        if let Some(extra) = given.keys().find(|k| !KEYS.iter().any(|(key, _)| key == k)) {
            return Err(Error::Config(format!("unknown key `{extra}`")));
        }
        let mut stages: Vec<Stage> = parse_list(&entries["stages"])?;
        stages.sort();
        stages.dedup();
        let mut acceptance: Vec<Check> = parse_list(&entries["acceptance"])?;
        acceptance.sort();
        acceptance.dedup();
        let config = Self {
            stages,
            output_dir: PathBuf::from(&entries["output_dir"]),
            alpha: parse_value(&entries, "alpha")?,
            dispersion: parse_value(&entries, "dispersion")?,
            m: parse_value(&entries, "M")?,
            epsilon: parse_value(&entries, "epsilon")?,
            kappa0: parse_value(&entries, "kappa0")?,
            selfsim_points: parse_value(&entries, "selfsim_points")?,
            selfsim_half_length: parse_value(&entries, "selfsim_half_length")?,
            ds: parse_value(&entries, "ds")?,
            s_end: parse_value(&entries, "s_end")?,
            regrid_interval: parse_value(&entries, "regrid_interval")?,
            sponge_start: parse_value(&entries, "sponge_start")?,
            snapshot_interval: parse_value(&entries, "snapshot_interval")?,
            max_steps: parse_value(&entries, "max_steps")?,
            n_points: parse_value(&entries, "n_points")?,
            half_length: parse_value(&entries, "half_length")?,
            max_points: parse_value(&entries, "max_points")?,
            cfl: parse_value(&entries, "cfl")?,
            stop_gradient: parse_value(&entries, "stop_gradient")?,
            output_interval: parse_value(&entries, "output_interval")?,
            cauchy_tolerance: parse_value(&entries, "cauchy_tolerance")?,
            holder_window: (
                parse_value(&entries, "holder_window_min")?,
                parse_value(&entries, "holder_window_max")?,
            ),
            convergence_window: parse_value(&entries, "convergence_window")?,
            trajectory_seeds: parse_value(&entries, "trajectory_seeds")?,
            plots: parse_value(&entries, "plots")?,
            nu: parse_value(&entries, "nu")?,
            xmin: parse_value(&entries, "xmin")?,
            xmax: parse_value(&entries, "xmax")?,
            rows: parse_value(&entries, "rows")?,
            rmin: parse_value(&entries, "rmin")?,
            rmax: parse_value(&entries, "rmax")?,
            kernel_bound: parse_value(&entries, "kernel_bound")?,
            acceptance,
            entries,
        };
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and applies the output-directory override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::parse(&text)?;
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            config.set("output_dir", &dir)?;
        }
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("`stages` is empty".into()));
        }
        let needs_data = [Stage::SelfSim, Stage::Simulate, Stage::Diagnose];
        if self.stages.iter().any(|s| needs_data.contains(s)) && !self.has(Stage::InitData) {
            return Err(Error::Config(
                "solver and diagnose stages need the `initdata` stage".into(),
            ));
        }
        if self.has(Stage::Diagnose) && !(self.has(Stage::SelfSim) && self.has(Stage::Simulate)) {
            return Err(Error::Config(
                "`diagnose` needs both `selfsim` and `simulate`".into(),
            ));
        }
        Ok(())
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Acceptance checks whose stage is part of this run.
    pub fn active_checks(&self) -> Vec<Check> {
        self.acceptance
            .iter()
            .copied()
            .filter(|c| self.has(c.required_stage()))
            .collect()
    }

    /// Replaces one key and re-validates.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let mut entries = self.entries.clone();
        entries.insert(key.to_string(), value.to_string());
        *self = Self::from_entries(entries)?;
        Ok(())
    }

    /// Effective value of every key.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_alpha_is_named() {
        let err = ExperimentConfig::parse("M = 1000\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("`alpha`"), "{err}");
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        assert!(ExperimentConfig::parse("alpha = -1\nalhpa = 2\n")
            .unwrap_err()
            .to_string()
            .contains("alhpa"));
        assert!(ExperimentConfig::parse("alpha = -1\nalpha = -2\n")
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        assert!(ExperimentConfig::parse("alpha = -1\nM\n").is_err());
    }

    #[test]
    fn display_round_trips() {
        let c = ExperimentConfig::parse("alpha = -0.25 # comment\nstages = profile\n\nnu = 6.6\n")
            .unwrap();
        assert_eq!(c.stages, vec![Stage::Profile]);
        assert!(c.active_checks().is_empty());
        let again = ExperimentConfig::parse(&c.to_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn stage_dependencies_are_checked() {
        assert!(ExperimentConfig::parse("alpha = -1\nstages = selfsim\n").is_err());
        assert!(
            ExperimentConfig::parse("alpha = -1\nstages = initdata,selfsim,diagnose\n").is_err()
        );
        let c = ExperimentConfig::parse("alpha = -1\nstages = initdata\n").unwrap();
        assert_eq!(c.active_checks(), vec![Check::Admissible]);
    }
}
