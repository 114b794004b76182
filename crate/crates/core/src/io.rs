//! CSV persistence. Floats are written with 17 significant digits so that
//! reading a file back reproduces every value exactly.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::kernels::MemoryKernel;
use crate::memory_spaces::{HistoryField, MemoryMeasure};
use crate::quadrature::QuadratureRule;

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?)
}

fn parse_row(record: &csv::StringRecord, path: &Path) -> Result<Vec<f64>> {
    record
        .iter()
        .map(|s| {
            s.parse::<f64>().map_err(|_| Error::Config {
                path: path.to_path_buf(),
                message: format!("line {}: '{s}' is not a number", record.position().map_or(0, |p| p.line())),
            })
        })
        .collect()
}

/// Numeric rows of a CSV with a header line; `#` lines are skipped.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv_reader(path)?;
    rd.records().map(|r| parse_row(&r?, path)).collect()
}

/// First column of a CSV.
pub fn read_column(path: &Path) -> Result<Vec<f64>> {
    Ok(read_rows(path)?.into_iter().filter_map(|r| r.first().copied()).collect())
}

/// First two columns of a CSV.
pub fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = read_rows(path)?;
    let mut a = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    for r in rows {
        if r.len() < 2 {
            return Err(Error::Config { path: path.to_path_buf(), message: "expected two columns".into() });
        }
        a.push(r[0]);
        b.push(r[1]);
    }
    Ok((a, b))
}

/// Writes a header and rows of floats.
pub struct CsvTable {
    out: BufWriter<File>,
}

impl CsvTable {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out })
    }

    pub fn comment(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "# {text}")?;
        Ok(())
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        let line: Vec<String> = values.iter().map(|x| fmt(*x)).collect();
        writeln!(self.out, "{}", line.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn headers(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("{prefix}_{j}")).collect()
}

/// `trajectory.csv` layout `(t, u_1..u_J, v_1..v_J)` plus a `.meta` sidecar.
pub fn write_trajectory(path: &Path, traj: &Trajectory, seed: u64) -> Result<()> {
    let j = traj.modes();
    let mut header = vec!["t".to_string()];
    header.extend(headers("u", j));
    header.extend(headers("v", j));
    let mut t = CsvTable::create(path, &header)?;
    let mut row = Vec::with_capacity(2 * j + 1);
    for n in 0..traj.len() {
        row.clear();
        row.push(traj.time(n));
        row.extend_from_slice(traj.u(n));
        row.extend_from_slice(traj.v(n));
        t.row(&row)?;
    }
    t.finish()?;
    let meta = format!(
        "kernel = \"{}\"\ndt = {}\nwindow = {}\nframework = \"{}\"\nmodes = {}\nseed = {}\n",
        traj.kernel_id(),
        fmt(traj.dt()),
        fmt(traj.window()),
        traj.framework(),
        j,
        seed
    );
    fs::write(path.with_extension("meta"), meta)?;
    Ok(())
}

/// `(t, u, v)` rows of a trajectory CSV.
pub fn read_trajectory_rows(path: &Path) -> Result<Vec<(f64, Vec<f64>, Vec<f64>)>> {
    read_rows(path)?
        .into_iter()
        .map(|r| {
            if r.len() % 2 == 0 {
                return Err(Error::Config { path: path.to_path_buf(), message: "expected t plus 2J columns".into() });
            }
            let j = (r.len() - 1) / 2;
            Ok((r[0], r[1..=j].to_vec(), r[j + 1..].to_vec()))
        })
        .collect()
}

/// History snapshot as `(node, mode_1..mode_J)` with a header comment
/// recording kernel id, spacing and norm convention.
pub fn write_history_field(path: &Path, eta: &HistoryField) -> Result<()> {
    let mut header = vec!["node".to_string()];
    header.extend(headers("mode", eta.modes()));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "# kernel={} spacing={} rule={:?} norm=modal order iota-1",
        eta.measure().kernel_id(),
        fmt(eta.spacing()),
        eta.measure().rule()
    )?;
    writeln!(out, "{}", header.join(","))?;
    for i in 0..eta.len() {
        let mut line = vec![fmt(eta.node(i))];
        line.extend(eta.value(i).iter().map(|x| fmt(*x)));
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn header_field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split_whitespace().find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

/// Reads a snapshot written by [`write_history_field`] onto the history grid of `kernel`.
pub fn read_history_field(path: &Path, kernel: &MemoryKernel) -> Result<HistoryField> {
    let first = BufReader::new(File::open(path)?).lines().next().transpose()?.unwrap_or_default();
    let bad = |m: String| Error::Config { path: path.to_path_buf(), message: m };
    let spacing: f64 = header_field(&first, "spacing")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing spacing in header comment".into()))?;
    let rule = match header_field(&first, "rule") {
        Some("Simpson") => QuadratureRule::Simpson,
        _ => QuadratureRule::Trapezoid,
    };
    if let Some(id) = first.split("kernel=").nth(1).and_then(|r| r.split(" spacing=").next()) {
        if id != kernel.id() {
            log::warn!("{}: snapshot kernel '{id}' differs from '{}'", path.display(), kernel.id());
        }
    }
    let rows = read_rows(path)?;
    let modes = rows.first().map(|r| r.len().saturating_sub(1)).ok_or_else(|| bad("no rows".into()))?;
    let mut values = Vec::with_capacity(rows.len() * modes);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != modes + 1 {
            return Err(Error::DimensionMismatch { expected: modes + 1, found: r.len() });
        }
        if (r[0] - i as f64 * spacing).abs() > 1e-9 * (1.0 + r[0].abs()) {
            return Err(Error::GridMismatch(format!("node {} is {} but spacing is {spacing}", i, r[0])));
        }
        values.extend_from_slice(&r[1..]);
    }
    let measure = MemoryMeasure::history(kernel, spacing, rows.len(), rule);
    HistoryField::from_values(measure, modes, values)
}

/// Cloud file: one point per row, first column the time stamp.
pub fn write_cloud(path: &Path, rows: &[(f64, Vec<f64>)]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut header = vec!["t".to_string()];
    header.extend(headers("x", dim));
    let mut t = CsvTable::create(path, &header)?;
    for (time, p) in rows {
        let mut row = Vec::with_capacity(dim + 1);
        row.push(*time);
        row.extend_from_slice(p);
        t.row(&row)?;
    }
    t.finish()
}

/// All `*.csv` cloud files of a directory, in name order, as `(t, point)`.
pub fn read_cloud_dir(dir: &Path) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config { path: dir.to_path_buf(), message: "no .csv cloud files".into() });
    }
    let mut out = Vec::new();
    for f in files {
        for r in read_rows(&f)? {
            if r.len() < 2 {
                return Err(Error::Config { path: f.clone(), message: "cloud rows need t and coordinates".into() });
            }
            out.push((r[0], r[1..].to_vec()));
        }
    }
    Ok(out)
}

/// `{ key: value, ... }` summary, one entry per line.
#[derive(Debug, Default, Clone)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new(command: &str) -> Self {
        let mut s = Self::default();
        s.text("command", command);
        s
    }

    pub fn num(&mut self, key: &str, x: f64) -> &mut Self {
        self.entries.push((key.into(), fmt(x)));
        self
    }

    pub fn int(&mut self, key: &str, x: u64) -> &mut Self {
        self.entries.push((key.into(), x.to_string()));
        self
    }

    pub fn flag(&mut self, key: &str, x: bool) -> &mut Self {
        self.entries.push((key.into(), x.to_string()));
        self
    }

    pub fn text(&mut self, key: &str, x: &str) -> &mut Self {
        self.entries.push((key.into(), format!("\"{}\"", x.replace('"', "'"))));
        self
    }

    pub fn render(&self) -> String {
        let body: Vec<String> = self.entries.iter().map(|(k, v)| format!("  \"{k}\": {v}")).collect();
        format!("{{\n{}\n}}\n", body.join(",\n"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.render())?;
        Ok(())
    }
}
