//! File formats.
//!
//! Matrix CSV: a header line `# rows=R cols=C seed=S` (`seed=none` when
//! unknown) followed by `R` lines of `C` comma-separated values, row-major.
//!
//! Matrix binary, little endian:
//!
//! | offset | size  | field                                   |
//! |--------|-------|-----------------------------------------|
//! | 0      | 8     | magic `ATTNSPEC`                        |
//! | 8      | 4     | format version, `u32` = 1               |
//! | 12     | 4     | flags, `u32`; bit 0 set if a seed is present |
//! | 16     | 8     | rows, `u64`                             |
//! | 24     | 8     | cols, `u64`                             |
//! | 32     | 8     | seed, `u64` (0 when absent)             |
//! | 40     | 8·R·C | entries as `f64`, row-major             |
//!
//! Floats in every text format are written with Rust's shortest round-trip
//! representation, so files are bit-exact and reproducible.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freeprob::DensityCurve;
use crate::spectra::{HistogramBin, SpectrumSample};

pub const MAGIC: &[u8; 8] = b"ATTNSPEC";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_matrix_csv<W: Write>(mut out: W, m: &DMatrix<f64>, seed: Option<u64>) -> Result<()> {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    writeln!(out, "# rows={} cols={} seed={}", m.nrows(), m.ncols(), seed)?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<(DMatrix<f64>, Option<u64>)> {
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().ok_or_else(|| Error::Format("missing header".into()))??;
    let (mut rows, mut cols, mut seed) = (None, None, None);
    for field in header.trim_start_matches('#').split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field `{field}`")))?;
        let parse = |v: &str| v.parse::<u64>().map_err(|_| Error::Format(format!("bad {key} `{v}`")));
        match key {
            "rows" => rows = Some(parse(value)? as usize),
            "cols" => cols = Some(parse(value)? as usize),
            "seed" if value != "none" => seed = Some(parse(value)?),
            "seed" => {}
            _ => return Err(Error::Format(format!("unknown header key `{key}`"))),
        }
    }
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) => (r, c),
        _ => return Err(Error::Format("header lacks rows or cols".into())),
    };
    let mut data = Vec::with_capacity(rows * cols);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for v in line.split(',') {
            data.push(
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad value `{v}`")))?,
            );
        }
        if data.len() - before != cols {
            return Err(Error::Format(format!("row with {} values, expected {cols}", data.len() - before)));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Format(format!("{} values for a {rows}x{cols} matrix", data.len())));
    }
    Ok((DMatrix::from_row_slice(rows, cols, &data), seed))
}

pub fn write_matrix_binary<W: Write>(mut out: W, m: &DMatrix<f64>, seed: Option<u64>) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&u32::from(seed.is_some()).to_le_bytes())?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    out.write_all(&seed.unwrap_or(0).to_le_bytes())?;
    for row in m.row_iter() {
        for v in row.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut input: R) -> Result<(DMatrix<f64>, Option<u64>)> {
    let mut header = [0u8; 40];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &header[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    if u32_at(8) != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", u32_at(8))));
    }
    let has_seed = u32_at(12) & 1 == 1;
    let (rows, cols) = (u64_at(16) as usize, u64_at(24) as usize);
    let seed = has_seed.then(|| u64_at(32));
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(Error::Format(format!("payload of {} bytes for {rows}x{cols}", bytes.len())));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((DMatrix::from_row_slice(rows, cols, &data), seed))
}

/// Columns `model,seed,index,value`; `index` is the 1-based rank.
pub fn write_spectra_csv<W: Write>(mut out: W, spectra: &[SpectrumSample]) -> Result<()> {
    writeln!(out, "model,seed,index,value")?;
    for s in spectra {
        let seed = s.sample_index.map_or_else(String::new, |v| v.to_string());
        for (i, v) in s.values.iter().enumerate() {
            writeln!(out, "{},{},{},{}", s.source, seed, i + 1, v)?;
        }
    }
    Ok(())
}

/// Columns `bin_center,mass`.
pub fn write_histogram_csv<W: Write>(mut out: W, bins: &[HistogramBin]) -> Result<()> {
    writeln!(out, "bin_center,mass")?;
    for b in bins {
        writeln!(out, "{},{}", b.center, b.mass)?;
    }
    Ok(())
}

/// Columns `t,density`.
pub fn write_density_csv<W: Write>(mut out: W, curve: &DensityCurve) -> Result<()> {
    writeln!(out, "t,density")?;
    for (t, p) in curve.t.iter().zip(&curve.density) {
        writeln!(out, "{t},{p}")?;
    }
    Ok(())
}

/// Generic CSV writer: a header and rows of already formatted fields.
pub fn write_rows_csv<W: Write>(mut out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    Ok(())
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn with_file<T>(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<T>) -> Result<T> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    let v = f(&mut w)?;
    w.flush()?;
    Ok(v)
}
