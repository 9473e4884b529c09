//! Snapshot and history files.
//!
//! A snapshot starts with one text line `nx ny dx dt t field`, followed by
//! either `ny` text lines of `nx` values each (row `j = 0` first) or, for the
//! binary format, `nx·ny` little-endian IEEE-754 f64 values in the same order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::SolutionHistory;
use crate::domain::Grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dt: f64,
    pub t: f64,
    pub field: String,
    /// Interior values, row-major with `i` fastest.
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn from_padded(grid: &Grid, dt: f64, t: f64, field: &str, data: &[f64]) -> Snapshot {
        Snapshot {
            nx: grid.nx,
            ny: grid.ny,
            dx: grid.h,
            dt,
            t,
            field: field.to_string(),
            values: grid.nodes().map(|k| data[k]).collect(),
        }
    }

    pub fn to_padded(&self, grid: &Grid) -> Vec<f64> {
        let mut out = grid.zeros();
        for (k, v) in grid.nodes().zip(&self.values) {
            out[k] = *v;
        }
        out
    }
}

pub fn write_snapshot(path: &Path, snap: &Snapshot, format: SnapshotFormat) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(
        f,
        "{} {} {:?} {:?} {:?} {}",
        snap.nx, snap.ny, snap.dx, snap.dt, snap.t, snap.field
    )?;
    match format {
        SnapshotFormat::Text => {
            for row in snap.values.chunks(snap.nx) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(f, "{}", line.join(" "))?;
            }
        }
        SnapshotFormat::Binary => {
            for v in &snap.values {
                f.write_all(&v.to_le_bytes())?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let bad = |what: &str| Error::Config(format!("{}: malformed snapshot header ({what})", path.display()));
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(bad("expected 6 fields"));
    }
    let nx: usize = parts[0].parse().map_err(|_| bad("nx"))?;
    let ny: usize = parts[1].parse().map_err(|_| bad("ny"))?;
    let dx: f64 = parts[2].parse().map_err(|_| bad("dx"))?;
    let dt: f64 = parts[3].parse().map_err(|_| bad("dt"))?;
    let t: f64 = parts[4].parse().map_err(|_| bad("t"))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let n = nx * ny;
    let text: Option<Vec<f64>> = std::str::from_utf8(&rest)
        .ok()
        .and_then(|t| t.split_whitespace().map(|w| w.parse::<f64>().ok()).collect());
    let values = match text {
        Some(v) if v.len() == n => v,
        _ if rest.len() == 8 * n => rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        _ => return Err(bad("body does not hold nx*ny values")),
    };
    Ok(Snapshot {
        nx,
        ny,
        dx,
        dt,
        t,
        field: parts[5].to_string(),
        values,
    })
}

/// Write a history into `dir`: `index.txt`, `slab_nodes.txt`, `slabs.bin`
/// (little-endian f64, `[step][node]`) and one binary snapshot per stored
/// time. Returns the paths written.
pub fn write_history(dir: &Path, grid: &Grid, dt: f64, hist: &SolutionHistory) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let nodes_path = dir.join("slab_nodes.txt");
    let mut f = fs::File::create(&nodes_path)?;
    for &k in &hist.slab_nodes {
        let (i, j) = grid.coords(k).unwrap_or((usize::MAX, usize::MAX));
        writeln!(f, "{i} {j}")?;
    }
    written.push(nodes_path);
    let slab_path = dir.join("slabs.bin");
    let mut f = std::io::BufWriter::new(fs::File::create(&slab_path)?);
    for v in &hist.slab_values {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    written.push(slab_path);
    let mut index = format!(
        "steps {}\nslab_nodes {}\nslab_file slabs.bin\n",
        hist.steps(),
        hist.slab_nodes.len()
    );
    for (n, (t, u)) in hist.snapshots.iter().enumerate() {
        let name = format!("snapshot_{n:05}.bin");
        let p = dir.join(&name);
        write_snapshot(&p, &Snapshot::from_padded(grid, dt, *t, "u", u), SnapshotFormat::Binary)?;
        index.push_str(&format!("snapshot {t:?} {name}\n"));
        written.push(p);
    }
    let index_path = dir.join("index.txt");
    fs::write(&index_path, index)?;
    written.push(index_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        Snapshot {
            nx: 3,
            ny: 2,
            dx: 0.1,
            dt: 0.01,
            t: 0.5,
            field: "u".into(),
            values: vec![1.0, -2.5, 1e-300, 0.1, 3.0, f64::MIN_POSITIVE],
        }
    }

    #[test]
    fn snapshot_round_trips_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        for fmt in [SnapshotFormat::Text, SnapshotFormat::Binary] {
            let p = dir.path().join("s");
            write_snapshot(&p, &sample(), fmt).unwrap();
            assert_eq!(read_snapshot(&p).unwrap(), sample());
        }
    }

    #[test]
    fn header_line_is_readable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        write_snapshot(&p, &sample(), SnapshotFormat::Binary).unwrap();
        let bytes = fs::read(&p).unwrap();
        let line = bytes.split(|&b| b == b'\n').next().unwrap();
        assert_eq!(std::str::from_utf8(line).unwrap(), "3 2 0.1 0.01 0.5 u");
    }
}
