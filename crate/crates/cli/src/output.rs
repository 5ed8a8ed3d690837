//! Series CSV and field snapshots.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mmc_ch::{Field, Grid, Record};

pub const SERIES_HEADER: &str = "step,t,energy,modified_energy,mass_error,min_phi,max_phi,cycles,residual";

/// Per-step time series, flushed after every row so a killed run leaves a
/// valid prefix.
pub struct SeriesWriter {
    out: BufWriter<File>,
}

impl SeriesWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{SERIES_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &Record) -> io::Result<()> {
        writeln!(
            self.out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            r.step,
            r.t,
            r.energy,
            r.modified_energy,
            r.mass_error,
            r.min_phi,
            r.max_phi,
            r.cycles,
            r.residual
        )?;
        self.out.flush()
    }
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("snapshot_{step:08}.txt"))
}

/// First line `N h t`, then `N` rows of `N` values; row `j`, column `i`.
pub fn write_snapshot(path: &Path, phi: &Field, t: f64) -> io::Result<()> {
    let g = phi.grid();
    let n = g.n();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {:.16e} {:.16e}", n, g.h(), t)?;
    for row in phi.values().chunks(n) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()
}

fn bad(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

/// Reads a snapshot back; returns the field and its time.
pub fn read_snapshot(path: &Path) -> io::Result<(Field, f64)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let head = lines.next().ok_or_else(|| bad("empty snapshot".into()))??;
    let parts: Vec<&str> = head.split_whitespace().collect();
    let [n, h, t] = parts[..] else {
        return Err(bad(format!("header `{head}` is not `N h t`")));
    };
    let n: usize = n.parse().map_err(|e| bad(format!("N: {e}")))?;
    let h: f64 = h.parse().map_err(|e| bad(format!("h: {e}")))?;
    let t: f64 = t.parse().map_err(|e| bad(format!("t: {e}")))?;
    let grid = Grid::new(h * n as f64, n).map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::with_capacity(n * n);
    for (j, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| bad(format!("row {j}: {e}"))))
            .collect::<io::Result<_>>()?;
        if row.len() != n {
            return Err(bad(format!("row {j} has {} values, expected {n}", row.len())));
        }
        values.extend(row);
    }
    let field = Field::from_vec(grid, values).map_err(|e| bad(e.to_string()))?;
    Ok((field, t))
}
