//! Text checkpoints for the two maps and the training-history CSV.
//!
//! Checkpoint layout: a header `LEXALIGN-MAP v1 <d>`, then `d` rows of `d`
//! reals for the forward map, a literal `Z` separator line, then `d` rows for
//! the inverse map. Values are printed with 17 significant digits, which
//! round-trips every finite `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::EpochRecord;
use crate::numerics::Matrix;

const HEADER_TAG: &str = "LEXALIGN-MAP";
const HEADER_VERSION: &str = "v1";
const SEPARATOR: &str = "Z";

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: {line:?}")]
    BadHeader { line: String },
    #[error("expected separator {SEPARATOR:?} between maps, got {line:?}")]
    BadSeparator { line: String },
    #[error("line {line_no}: expected {expected} values, got {got}")]
    WrongFieldCount { line_no: usize, expected: usize, got: usize },
    #[error("line {line_no}: unparseable number {token:?}")]
    InvalidNumber { line_no: usize, token: String },
    #[error("line {line_no}: non-finite value")]
    NonFinite { line_no: usize },
    #[error("checkpoint ends before both maps are complete")]
    Truncated,
    #[error("unexpected content after the second map at line {line_no}")]
    TrailingData { line_no: usize },
    #[error("maps must be square and equally sized, got {w_rows}x{w_cols} and {z_rows}x{z_cols}")]
    ShapeMismatch { w_rows: usize, w_cols: usize, z_rows: usize, z_cols: usize },
}

/// Writes both maps to one checkpoint file.
pub fn write_checkpoint(path: &Path, w: &Matrix, z: &Matrix) -> Result<(), CheckpointError> {
    if w.rows() != w.cols() || z.rows() != z.cols() || w.rows() != z.rows() {
        return Err(CheckpointError::ShapeMismatch {
            w_rows: w.rows(),
            w_cols: w.cols(),
            z_rows: z.rows(),
            z_cols: z.cols(),
        });
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{HEADER_TAG} {HEADER_VERSION} {}", w.rows())?;
    write_rows(&mut out, w)?;
    writeln!(out, "{SEPARATOR}")?;
    write_rows(&mut out, z)?;
    out.flush()?;
    Ok(())
}

fn write_rows(out: &mut impl Write, m: &Matrix) -> Result<(), CheckpointError> {
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads a checkpoint back as `(W, Z)`.
pub fn read_checkpoint(path: &Path) -> Result<(Matrix, Matrix), CheckpointError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or(CheckpointError::Truncated)?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let d = match fields.as_slice() {
        [tag, version, dim] if *tag == HEADER_TAG && *version == HEADER_VERSION => {
            dim.parse::<usize>().ok().filter(|&d| d >= 1)
        }
        _ => None,
    }
    .ok_or(CheckpointError::BadHeader { line: header.clone() })?;

    let w = read_rows(&mut lines, d)?;
    let (_, sep) = lines.next().ok_or(CheckpointError::Truncated)?;
    let sep = sep?;
    if sep.trim() != SEPARATOR {
        return Err(CheckpointError::BadSeparator { line: sep });
    }
    let z = read_rows(&mut lines, d)?;
    for (idx, line) in lines {
        let line = line?;
        if !line.trim().is_empty() {
            return Err(CheckpointError::TrailingData { line_no: idx + 1 });
        }
    }
    Ok((w, z))
}

fn read_rows(
    lines: &mut impl Iterator<Item = (usize, std::io::Result<String>)>,
    d: usize,
) -> Result<Matrix, CheckpointError> {
    let mut m = Matrix::zeros(d, d);
    for i in 0..d {
        let (idx, line) = lines.next().ok_or(CheckpointError::Truncated)?;
        let line = line?;
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != d {
            return Err(CheckpointError::WrongFieldCount { line_no, expected: d, got: fields.len() });
        }
        for (j, token) in fields.iter().enumerate() {
            let v: f64 = token
                .parse()
                .map_err(|_| CheckpointError::InvalidNumber { line_no, token: (*token).to_string() })?;
            if !v.is_finite() {
                return Err(CheckpointError::NonFinite { line_no });
            }
            m.set(i, j, v);
        }
    }
    Ok(m)
}

/// Writes the per-epoch history as CSV with a fixed header.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<(), CheckpointError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "epoch,criterion,d1_loss,d2_loss,w_loss,z_loss")?;
    for rec in history {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            rec.epoch, rec.criterion, rec.d1_loss, rec.d2_loss, rec.w_loss, rec.z_loss
        )?;
    }
    out.flush()?;
    Ok(())
}
