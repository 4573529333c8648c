//! fvecs / bvecs vector file reading and writing.
//!
//! Both formats are sequences of records `[int32 LE dim][dim payload]`, with
//! float32 payloads for fvecs and uint8 for bvecs. All records in a file
//! must share one dimensionality.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecsFormat {
    Fvecs,
    Bvecs,
}

impl VecsFormat {
    /// Picks the format from a file extension, defaulting to fvecs.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bvecs") => VecsFormat::Bvecs,
            _ => VecsFormat::Fvecs,
        }
    }
}

/// A raw column-major matrix as read from disk, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub d: usize,
    pub count: usize,
    /// Column-major values upcast to f64.
    pub data: Vec<f64>,
}

pub fn read_vecs(path: &Path, format: VecsFormat) -> Result<RawMatrix> {
    match format {
        VecsFormat::Fvecs => read_fvecs(path),
        VecsFormat::Bvecs => read_bvecs(path),
    }
}

fn read_dim(reader: &mut impl Read, first: bool) -> Result<Option<usize>> {
    let mut buf = [0u8; 4];
    match reader.read_exact(&mut buf) {
        Ok(()) => {
            let dim = i32::from_le_bytes(buf);
            if dim <= 0 {
                return Err(Error::MalformedFile(format!(
                    "record dimension {dim} must be positive"
                )));
            }
            Ok(Some(dim as usize))
        }
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof && !first => Ok(None),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Err(Error::MalformedFile("empty vector file".into()))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn read_fvecs(path: &Path) -> Result<RawMatrix> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut data = Vec::new();
    let mut d = None;
    let mut count = 0usize;
    let mut payload = Vec::new();
    while let Some(dim) = read_dim(&mut reader, d.is_none())? {
        match d {
            None => d = Some(dim),
            Some(expect) if expect != dim => {
                return Err(Error::MalformedFile(format!(
                    "record {count} has dimension {dim}, expected {expect}"
                )))
            }
            _ => {}
        }
        payload.resize(dim * 4, 0);
        reader.read_exact(&mut payload).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::MalformedFile(format!("record {count} is truncated"))
            } else {
                e.into()
            }
        })?;
        data.extend(
            payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64),
        );
        count += 1;
    }
    Ok(RawMatrix {
        d: d.unwrap_or(0),
        count,
        data,
    })
}

pub fn read_bvecs(path: &Path) -> Result<RawMatrix> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut data = Vec::new();
    let mut d = None;
    let mut count = 0usize;
    let mut payload = Vec::new();
    while let Some(dim) = read_dim(&mut reader, d.is_none())? {
        match d {
            None => d = Some(dim),
            Some(expect) if expect != dim => {
                return Err(Error::MalformedFile(format!(
                    "record {count} has dimension {dim}, expected {expect}"
                )))
            }
            _ => {}
        }
        payload.resize(dim, 0);
        reader.read_exact(&mut payload).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::MalformedFile(format!("record {count} is truncated"))
            } else {
                e.into()
            }
        })?;
        data.extend(payload.iter().map(|&b| b as f64));
        count += 1;
    }
    Ok(RawMatrix {
        d: d.unwrap_or(0),
        count,
        data,
    })
}

/// Writes columns as fvecs records (values rounded to f32).
pub fn write_fvecs(path: &Path, d: usize, columns: &[f64]) -> Result<()> {
    if d == 0 || !columns.len().is_multiple_of(d) {
        return Err(Error::ShapeMismatch(format!(
            "{} values do not form columns of length {d}",
            columns.len()
        )));
    }
    let mut writer = BufWriter::new(File::create(path)?);
    for col in columns.chunks_exact(d) {
        writer.write_all(&(d as i32).to_le_bytes())?;
        for &v in col {
            writer.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}
