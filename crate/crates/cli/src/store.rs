//! On-disk layout of a run directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use wavebreak::diagnostics::fmt17;
use wavebreak::physical::PhysicalRecord;
use wavebreak::selfsim::{ModulationState, SelfSimField, Snapshot};
use wavebreak::{Error, GridSpec, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const FINAL_FRAME: &str = "final_frame.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_INDEX: &str = "index.csv";

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Writes CSV with a header row to any sink; numbers use 17 significant digits.
pub fn write_csv_to<W: Write>(
    sink: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    write_csv_to(fs::File::create(path)?, header, rows)
}

pub fn num(v: f64) -> String {
    fmt17(v)
}

fn read_rows(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = r.headers().map_err(csv_error)?.clone();
    let rows = r
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_error)?;
    Ok((header, rows))
}

fn column(header: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Format(format!("{}: missing column `{name}`", path.display())))
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    row.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format(format!("{}: bad value in column {i}", path.display())))
}

const TRAJECTORY_HEADER: [&str; 9] = [
    "t",
    "min_ux",
    "argmin",
    "max_abs_u",
    "l2",
    "mean",
    "tail",
    "edge",
    "n_points",
];

pub fn write_trajectory(path: &Path, records: &[PhysicalRecord]) -> Result<()> {
    write_csv(
        path,
        &TRAJECTORY_HEADER,
        records.iter().map(|r| {
            vec![
                num(r.t),
                num(r.min_ux),
                num(r.argmin),
                num(r.max_abs_u),
                num(r.l2),
                num(r.mean),
                num(r.tail),
                num(r.edge),
                r.n_points.to_string(),
            ]
        }),
    )
}

pub fn read_trajectory(path: &Path) -> Result<Vec<PhysicalRecord>> {
    let (header, rows) = read_rows(path)?;
    let idx: Vec<usize> = TRAJECTORY_HEADER
        .iter()
        .map(|h| column(&header, h, path))
        .collect::<Result<_>>()?;
    rows.iter()
        .map(|row| {
            Ok(PhysicalRecord {
                t: field(row, idx[0], path)?,
                min_ux: field(row, idx[1], path)?,
                argmin: field(row, idx[2], path)?,
                max_abs_u: field(row, idx[3], path)?,
                l2: field(row, idx[4], path)?,
                mean: field(row, idx[5], path)?,
                tail: field(row, idx[6], path)?,
                edge: field(row, idx[7], path)?,
                n_points: field(row, idx[8], path)?,
            })
        })
        .collect()
}

/// Reads two numeric columns of a CSV file.
pub fn read_columns(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let (header, rows) = read_rows(path)?;
    let (ix, iy) = (column(&header, x, path)?, column(&header, y, path)?);
    rows.iter()
        .map(|row| Ok((field(row, ix, path)?, field(row, iy, path)?)))
        .collect()
}

const INDEX_HEADER: [&str; 14] = [
    "file",
    "s",
    "t",
    "tau",
    "xi",
    "kappa",
    "tau_dot",
    "xi_dot",
    "kappa_dot",
    "drift",
    "kappa_rate",
    "n_points",
    "half_length",
    "rates_s",
];

/// Stores snapshots as raw little-endian slope arrays plus a CSV index.
pub fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> Result<()> {
    let dir = dir.join(SNAPSHOT_DIR);
    fs::create_dir_all(&dir)?;
    let mut rows = Vec::with_capacity(snapshots.len());
    for (i, snap) in snapshots.iter().enumerate() {
        let name = format!("{i:05}.f64");
        let bytes: Vec<u8> = snap
            .field
            .slope()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        fs::write(dir.join(&name), bytes)?;
        let m = &snap.modulation;
        let g = snap.field.grid();
        rows.push(vec![
            name,
            num(snap.field.s_tag()),
            num(m.t),
            num(m.tau),
            num(m.xi),
            num(m.kappa),
            num(m.tau_dot),
            num(m.xi_dot),
            num(m.kappa_dot),
            num(m.drift),
            num(m.kappa_rate),
            g.n_points().to_string(),
            num(g.half_length()),
            num(m.rates_s),
        ]);
    }
    write_csv(&dir.join(SNAPSHOT_INDEX), &INDEX_HEADER, rows)
}

pub fn read_snapshots(dir: &Path) -> Result<Vec<Snapshot>> {
    let dir: PathBuf = dir.join(SNAPSHOT_DIR);
    let path = dir.join(SNAPSHOT_INDEX);
    let (header, rows) = read_rows(&path)?;
    let idx: Vec<usize> = INDEX_HEADER
        .iter()
        .map(|h| column(&header, h, &path))
        .collect::<Result<_>>()?;
    rows.iter()
        .map(|row| {
            let name: String = field(row, idx[0], &path)?;
            let value = |k: usize| -> Result<f64> { field(row, idx[k], &path) };
            let n: usize = field(row, idx[11], &path)?;
            let bytes = fs::read(dir.join(&name))?;
            if bytes.len() != 8 * n {
                return Err(Error::Format(format!(
                    "{name}: expected {n} values, found {} bytes",
                    bytes.len()
                )));
            }
            let slope: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let s = value(1)?;
            let grid = GridSpec::new(n, value(12)?)?;
            let modulation = ModulationState {
                s,
                t: value(2)?,
                tau: value(3)?,
                xi: value(4)?,
                kappa: value(5)?,
                tau_dot: value(6)?,
                xi_dot: value(7)?,
                kappa_dot: value(8)?,
                drift: value(9)?,
                kappa_rate: value(10)?,
                rates_s: value(13)?,
            };
            Ok(Snapshot {
                field: SelfSimField::from_slope(grid, slope, s)?,
                modulation,
            })
        })
        .collect()
}
