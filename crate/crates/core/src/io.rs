//! Artifact formats: CSV of raw floats, plain PGM images, the binary lead-field
//! cache and JSON documents.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{GridSpec, LeadField};
use crate::solvers::IterationRecord;

/// Shortest decimal that parses back to the same `f64`; exponent form outside
/// `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Row-major CSV without header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::InvalidArgument(format!(
                "ragged CSV matrix in {}",
                path.display()
            )));
        }
        for field in rec.iter() {
            data.push(field.parse::<f64>().map_err(|e| {
                Error::InvalidArgument(format!("bad number `{field}` in {}: {e}", path.display()))
            })?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &data))
}

/// One value per line.
pub fn write_vector_csv(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut w = create(path)?;
    for &x in v.iter() {
        writeln!(w, "{}", fmt_f64(x)).map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() > 1 {
        return Err(Error::InvalidArgument(format!(
            "{} holds a matrix, expected one column",
            path.display()
        )));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

/// Image as CSV with one grid row per line, bottom row (lowest y) first.
pub fn write_image_csv(path: &Path, grid: &GridSpec, values: &DVector<f64>) -> Result<()> {
    let n = grid.n_per_side();
    write_matrix_csv(path, &DMatrix::from_row_slice(n, n, values.as_slice()))
}

/// Plain 8-bit PGM (P2). Top line is the highest-y grid row; pixel value is
/// `round(255·v/n_max)` after clamping `v` into `[0, n_max]`.
pub fn write_pgm(path: &Path, grid: &GridSpec, values: &DVector<f64>, n_max: f64) -> Result<()> {
    let n = grid.n_per_side();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "P2\n{n} {n}\n255").map_err(io)?;
    for iy in (0..n).rev() {
        let line: Vec<String> = (0..n)
            .map(|ix| {
                let v = values[iy * n + ix].clamp(0.0, n_max);
                ((255.0 * v / n_max).round() as u8).to_string()
            })
            .collect();
        writeln!(w, "{}", line.join(" ")).map_err(io)?;
    }
    finish(path, w)
}

pub fn write_trace_csv(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration",
        "objective",
        "relative_change",
        "feasibility_violation",
        "data_step_violation",
    ])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            fmt_f64(r.objective),
            fmt_f64(r.relative_change),
            fmt_f64(r.feasibility_violation),
            fmt_f64(r.data_step_violation),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Two named numeric columns, e.g. for plotting.
pub fn write_columns_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

const CACHE_MAGIC: &[u8; 8] = b"MRXLF01\0";

/// Binary lead-field cache: magic, `n_coils`, `n_sensors`, `n_per_side` (u64 LE),
/// `half_width`, `scale` (f64 LE), then the matrix column-major as f64 LE.
pub fn write_lead_field(path: &Path, lf: &LeadField) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(CACHE_MAGIC).map_err(io)?;
    for v in [lf.n_coils() as u64, lf.n_sensors() as u64, lf.grid().n_per_side() as u64] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for v in [lf.grid().half_width(), lf.scale()] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for v in lf.matrix().iter() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    finish(path, w)
}

pub fn read_lead_field(path: &Path) -> Result<LeadField> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let corrupt = || Error::InvalidArgument(format!("corrupt lead-field cache {}", path.display()));
    if bytes.len() < 48 || &bytes[..8] != CACHE_MAGIC {
        return Err(corrupt());
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap() };
    let n_coils = u64::from_le_bytes(word(0)) as usize;
    let n_sensors = u64::from_le_bytes(word(1)) as usize;
    let n_side = u64::from_le_bytes(word(2)) as usize;
    let half_width = f64::from_le_bytes(word(3));
    let scale = f64::from_le_bytes(word(4));
    let grid = GridSpec::new(half_width, n_side)?;
    let rows = n_coils * n_sensors;
    let cols = grid.n_voxels();
    let body = &bytes[48..];
    if body.len() != rows * cols * 8 {
        return Err(corrupt());
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LeadField::from_parts(
        DMatrix::from_vec(rows, cols, data),
        scale,
        n_coils,
        n_sensors,
        grid,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn float_text_roundtrips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back: f64 = fmt_f64(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn matrix_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5e-300, 0.1, 1e20, 0.0, -7.0]);
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), m);
    }

    #[test]
    fn pgm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.pgm");
        let grid = GridSpec::new(1.0, 2).unwrap();
        let v = DVector::from_vec(vec![0.0, 1.0, 0.5, 2.0]);
        write_pgm(&p, &grid, &v, 1.0).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "P2\n2 2\n255\n128 255\n0 255\n");
    }

    #[test]
    fn lead_field_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lf.bin");
        let grid = GridSpec::new(0.05, 2).unwrap();
        let m = DMatrix::from_fn(6, 4, |i, j| (i * 4 + j) as f64 * 0.013 - 0.1);
        let lf = LeadField::from_parts(m, 3.5e-9, 3, 2, grid).unwrap();
        write_lead_field(&p, &lf).unwrap();
        let back = read_lead_field(&p).unwrap();
        assert_eq!(back.matrix(), lf.matrix());
        assert_eq!(back.scale(), lf.scale());
        assert_eq!(back.grid(), lf.grid());

        fs::write(&p, b"garbage").unwrap();
        assert!(read_lead_field(&p).is_err());
    }
}
