//! File formats.
//!
//! Measures are JSON (`{"dim", "atoms", "weights"}`) or CSV with one atom per row and the
//! weight in the last column; a non-numeric first row is taken as a header. Potentials are
//! JSON (`{"dim", "atoms", "values"}`). Everything else written here is CSV with a header.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cells::CellDecomposition;
use crate::diagnostics::{CheckResult, LedgerRow};
use crate::forward::MomentMeasureEstimate;
use crate::measures::DiscreteMeasure;
use crate::potential::PolyhedralPotential;
use crate::solver::SolveReport;
use crate::{Error, Result};

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Reads a measure from `.json` or `.csv`.
pub fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    if !is_csv(path) {
        return read_json(path);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(Error::InvalidInput(format!("{}: row {}: {e}", path.display(), k + 1))),
        }
    }
    let Some(first) = rows.first() else {
        return Err(Error::InvalidInput(format!("{}: no atoms", path.display())));
    };
    if first.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: rows need coordinates and a weight",
            path.display()
        )));
    }
    let dim = first.len() - 1;
    let mut atoms = Vec::with_capacity(rows.len() * dim);
    let mut weights = Vec::with_capacity(rows.len());
    for row in rows {
        atoms.extend_from_slice(&row[..dim]);
        weights.push(row[dim]);
    }
    DiscreteMeasure::from_flat(dim, atoms, weights)
}

/// Writes a measure as `.csv` (columns `y0.., weight`) or JSON otherwise.
pub fn write_measure(path: &Path, mu: &DiscreteMeasure) -> Result<()> {
    if !is_csv(path) {
        return write_json(path, mu);
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..mu.dim()).map(|k| format!("y{k}")).collect();
    header.push("weight".into());
    w.write_record(&header)?;
    for i in 0..mu.len() {
        let row: Vec<String> = mu
            .atom(i)
            .iter()
            .chain([&mu.weights()[i]])
            .map(f64::to_string)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_potential(path: &Path) -> Result<PolyhedralPotential> {
    read_json(path)
}

pub fn write_potential(path: &Path, p: &PolyhedralPotential) -> Result<()> {
    write_json(path, p)
}

/// Columns `y0.., weight`, then `weight_error` and `atom` when known.
pub fn write_estimate_csv(path: &Path, m: &MomentMeasureEstimate) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..m.dim).map(|k| format!("y{k}")).collect();
    header.push("weight".into());
    if m.weight_errors.is_some() {
        header.push("weight_error".into());
    }
    if m.atom_indices.is_some() {
        header.push("atom".into());
    }
    w.write_record(&header)?;
    for k in 0..m.len() {
        let mut row: Vec<String> = m.point(k).iter().map(f64::to_string).collect();
        row.push(m.weights[k].to_string());
        if let Some(e) = &m.weight_errors {
            row.push(e[k].to_string());
        }
        if let Some(a) = &m.atom_indices {
            row.push(a[k].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the point columns and weights of a file written by [`write_estimate_csv`].
pub fn read_estimate_csv(path: &Path) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let dim = headers.iter().take_while(|h| h.starts_with('y')).count();
    let weight_col = headers
        .iter()
        .position(|h| h == "weight")
        .ok_or_else(|| Error::InvalidInput(format!("{}: no weight column", path.display())))?;
    let (mut points, mut weights) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record?;
        let num = |k: usize| -> Result<f64> {
            record
                .get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("{}: bad number in column {k}", path.display())))
        };
        for k in 0..dim {
            points.push(num(k)?);
        }
        weights.push(num(weight_col)?);
    }
    Ok((dim, points, weights))
}

/// `iteration, objective, gradient_norm, step`.
pub fn write_trace_csv(path: &Path, report: &SolveReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "objective", "gradient_norm", "step"])?;
    for (k, (obj, g)) in report.objective_trace.iter().zip(&report.gradient_trace).enumerate() {
        let step = if k == 0 {
            0.0
        } else {
            report.step_trace.get(k - 1).copied().unwrap_or(f64::NAN)
        };
        w.write_record([k.to_string(), obj.to_string(), g.to_string(), step.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn points_field(points: &[[f64; 2]]) -> String {
    points
        .iter()
        .map(|p| format!("{} {}", p[0], p[1]))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_points(field: &str) -> Result<Vec<[f64; 2]>> {
    field
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let xy: Vec<f64> = pair
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("bad point '{pair}': {e}")))?;
            match xy[..] {
                [x, y] => Ok([x, y]),
                _ => Err(Error::InvalidInput(format!("bad point '{pair}'"))),
            }
        })
        .collect()
}

/// `atom_index, bounded, vertices, rays`; point lists are `"x y;x y;.."`.
pub fn write_cells_csv(path: &Path, dec: &CellDecomposition) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["atom_index", "bounded", "vertices", "rays"])?;
    for c in &dec.cells {
        w.write_record([
            c.atom_index.to_string(),
            c.bounded.to_string(),
            points_field(&c.vertices),
            points_field(&c.rays),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a cells file.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub atom_index: usize,
    pub bounded: bool,
    pub vertices: Vec<[f64; 2]>,
    pub rays: Vec<[f64; 2]>,
}

pub fn read_cells_csv(path: &Path) -> Result<Vec<CellRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record?;
        let field = |k: usize| r.get(k).unwrap_or("");
        out.push(CellRow {
            atom_index: field(0)
                .parse()
                .map_err(|_| Error::InvalidInput("bad atom index".into()))?,
            bounded: field(1) == "true",
            vertices: parse_points(field(2))?,
            rays: parse_points(field(3))?,
        });
    }
    Ok(out)
}

/// `name, seed, margin, pass`.
pub fn write_ledger_csv(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger_csv(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record?;
        let bad = || Error::InvalidInput(format!("{}: malformed ledger row", path.display()));
        out.push(LedgerRow {
            name: r.get(0).ok_or_else(bad)?.to_string(),
            seed: r.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            margin: r.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            pass: r.get(3).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
        });
    }
    Ok(out)
}

/// `name, lhs, rhs, margin, tolerance, pass`.
pub fn write_checks_csv(path: &Path, results: &[CheckResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "lhs", "rhs", "margin", "tolerance", "pass"])?;
    for r in results {
        w.write_record([
            r.name.clone(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.margin.to_string(),
            r.tolerance.to_string(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Lowercase hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
