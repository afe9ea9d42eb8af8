//! CSV tables, JSON manifests, trajectory dumps and the spectrum cache.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::dynamics::{HittingEvent, TrajectoryRecord};
use crate::error::{Result, SlabError};
use crate::matrix_model::Spectrum;

/// One CSV cell. Floats are written with Rust's shortest round-trip
/// formatting, so parsing them back gives the identical bits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Self::Float(v) => format!("{v}"),
            Self::Int(v) => v.to_string(),
            Self::Bool(v) => v.to_string(),
            Self::Text(s) => s.clone(),
            Self::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Self::Empty, Self::Float)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Self::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

/// A table with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(SlabError::Contract(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        if !p.as_os_str().is_empty() {
            fs::create_dir_all(p).map_err(|e| SlabError::io(p, e))?;
        }
    }
    Ok(())
}

pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    create_parent(path)?;
    let file = File::create(path).map_err(|e| SlabError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    let map = |e: csv::Error| SlabError::Format(format!("{}: {e}", path.display()));
    w.write_record(&table.header).map_err(map)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).map_err(map)?;
    }
    w.flush().map_err(|e| SlabError::io(path, e))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`] back as strings.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| SlabError::Format(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| SlabError::Format(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| SlabError::Format(e.to_string()))?;
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let file = File::create(path).map_err(|e| SlabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| SlabError::Format(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| SlabError::io(path, e))?;
    w.flush().map_err(|e| SlabError::io(path, e))
}

/// Provenance written next to every result file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Effective configuration after defaults were filled in.
    pub config: Value,
    /// Named seeds, e.g. `replica/17 → 1234…`.
    pub seeds: Vec<(String, u64)>,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub errors: Vec<String>,
    pub assertions: Vec<(String, bool)>,
}

impl Manifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_string(),
            version: crate::VERSION.to_string(),
            config,
            seeds: Vec::new(),
            started_unix: unix_now(),
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
            errors: Vec::new(),
            assertions: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.wall_clock_seconds = (unix_now() - self.started_unix).max(0.0);
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Trajectory as CSV `t,m1,h` plus a JSON list of `{label, time, censored}`.
pub fn write_trajectory(csv_path: &Path, events_path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let mut t = Table::new(&["t", "m1", "h"]);
    for i in 0..rec.times.len() {
        t.push(vec![rec.times[i].into(), rec.m1[i].into(), rec.h[i].into()])?;
    }
    write_csv(csv_path, &t)?;
    write_json(events_path, &event_records(&rec.events))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub label: String,
    pub time: Option<f64>,
    pub censored: bool,
}

pub fn event_records(events: &[HittingEvent]) -> Vec<EventRecord> {
    events
        .iter()
        .map(|e| EventRecord { label: e.label.clone(), time: e.time, censored: e.censored() })
        .collect()
}

const SPECTRUM_MAGIC: &[u8; 8] = b"SLABSPEC";
const SPECTRUM_VERSION: u32 = 1;

/// Binary spectrum cache, little-endian: magic, format version, N, θ, seed,
/// spike overlap, then N eigenvalues and the N×N eigenvector matrix
/// (column-major).
pub fn write_spectrum(path: &Path, s: &Spectrum) -> Result<()> {
    create_parent(path)?;
    let file = File::create(path).map_err(|e| SlabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| SlabError::io(path, e);
    w.write_all(SPECTRUM_MAGIC).map_err(io)?;
    w.write_all(&SPECTRUM_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(s.n() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&s.theta().to_le_bytes()).map_err(io)?;
    w.write_all(&s.seed().to_le_bytes()).map_err(io)?;
    w.write_all(&s.spike_overlap().to_le_bytes()).map_err(io)?;
    for v in s.lambdas().iter().chain(s.eigenvectors()) {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let file = File::open(path).map_err(|e| SlabError::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| SlabError::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != SPECTRUM_MAGIC {
        return Err(SlabError::Format(format!("{} is not a spectrum cache", path.display())));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(io)?;
    let version = u32::from_le_bytes(b4);
    if version != SPECTRUM_VERSION {
        return Err(SlabError::Format(format!("unsupported spectrum cache version {version}")));
    }
    let mut next = |r: &mut BufReader<File>| -> Result<[u8; 8]> {
        r.read_exact(&mut b8).map_err(|e| SlabError::io(path, e))?;
        Ok(b8)
    };
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let theta = f64::from_le_bytes(next(&mut r)?);
    let seed = u64::from_le_bytes(next(&mut r)?);
    let overlap = f64::from_le_bytes(next(&mut r)?);
    let mut vals = Vec::with_capacity(n + n * n);
    for _ in 0..n + n * n {
        vals.push(f64::from_le_bytes(next(&mut r)?));
    }
    let vecs = vals.split_off(n);
    Spectrum::from_parts(vals, vecs, overlap, theta, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let vals = [0.1 + 0.2, 1e-310, -2.5e300, std::f64::consts::PI, 1.0 / 3.0];
        let mut t = Table::new(&["x"]);
        for v in vals {
            t.push(vec![v.into()]).unwrap();
        }
        write_csv(&p, &t).unwrap();
        let (h, rows) = read_csv(&p).unwrap();
        assert_eq!(h, vec!["x"]);
        for (r, v) in rows.iter().zip(vals) {
            assert_eq!(r[0].parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        let raw = fs::read(&p).unwrap();
        assert!(!raw.contains(&b'\r'));
    }

    #[test]
    fn empty_table_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_csv(&p, &Table::new(&["a", "b"])).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n");
    }

    #[test]
    fn spectrum_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let s = Spectrum::diagonal(vec![2.0, 1.0, -0.5, -3.0]).unwrap();
        write_spectrum(&p, &s).unwrap();
        assert_eq!(read_spectrum(&p).unwrap(), s);
        fs::write(&p, b"garbage!").unwrap();
        assert!(matches!(read_spectrum(&p), Err(SlabError::Format(_))));
    }
}
