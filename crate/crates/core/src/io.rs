//! CSV datasets: one point per row, one column per coordinate.
//!
//! A first row that does not parse as numbers is taken as a header. A header
//! column named `weight` holds point weights when reading weighted sets.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::points::{Point, WeightedPointSet};

/// Rows of a CSV file, plus the header if present.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

fn parse_row(rec: &csv::StringRecord) -> Option<Vec<f64>> {
    rec.iter().map(|f| f.trim().parse::<f64>().ok()).collect()
}

pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(reader);
    let mut header = None;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        match parse_row(&rec) {
            Some(r) => {
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite);
                }
                rows.push(r);
            }
            None if i == 0 => header = Some(rec.iter().map(|s| s.trim().to_string()).collect()),
            None => return Err(Error::Csv(format!("row {} is not numeric", i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Table { header, rows })
}

/// Points of a dataset, one per user, in file order.
pub fn read_points<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let t = read_table(reader)?;
    if let Some(h) = &t.header {
        if let Some(w) = h.iter().position(|c| c == "weight") {
            return Ok(t
                .rows
                .into_iter()
                .map(|mut r| {
                    r.remove(w);
                    r
                })
                .collect());
        }
    }
    Ok(t.rows)
}

pub fn read_points_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    read_points(std::fs::File::open(path)?)
}

/// A weighted set; rows without a `weight` column get weight 1 and
/// repeated points merge.
pub fn read_weighted<R: Read>(reader: R) -> Result<WeightedPointSet> {
    let t = read_table(reader)?;
    let wcol = t
        .header
        .as_ref()
        .and_then(|h| h.iter().position(|c| c == "weight"));
    let dim = t.rows[0].len() - wcol.is_some() as usize;
    let mut set = WeightedPointSet::new(dim);
    for mut r in t.rows {
        let w = match wcol {
            Some(c) => r.remove(c),
            None => 1.0,
        };
        set.add(Point(r), w)?;
    }
    Ok(set)
}

fn coord_header(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Write points with a header `x0,...,x{d-1}`. Floats use the shortest
/// representation that round-trips.
pub fn write_points<W: Write>(writer: W, points: &[Vec<f64>]) -> Result<()> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(coord_header(d))?;
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        w.write_record(p.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_points_file(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    write_points(std::fs::File::create(path)?, points)
}

pub fn write_weighted<W: Write>(writer: W, set: &WeightedPointSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut h = coord_header(set.dim());
    h.push("weight".into());
    w.write_record(h)?;
    for (p, wt) in set.iter() {
        let mut rec: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        rec.push(wt.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
