//! The binary tensor container and the headered CSV form of a magnitude
//! matrix.
//!
//! Binary layout: the magic bytes `GPT1`, a little-endian u32 rank, `rank`
//! little-endian u32 dimensions, then the values as little-endian IEEE-754
//! 32-bit floats in row-major order. Weight tensors are rank 4 with
//! dimensions `[c_out, c_in, k_h, k_w]`. Values are widened to f64 on read,
//! which is exact, so anything that started life as f32 round-trips
//! losslessly. To import weights from a framework checkpoint, dump each
//! layer as a row-major f32 array and prepend this header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{NormMatrix, WeightTensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"GPT1";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Binary tensors
// ---------------------------------------------------------------------------

/// Writes a tensor of any rank. The element count must match the dimension
/// product exactly.
pub fn write_tensor_file(path: &Path, dims: &[usize], values: &[f64]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument(
            "a tensor file needs at least one dimension".into(),
        ));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape("tensor element count overflows".into()))?;
    if count != values.len() {
        return Err(Error::Shape(format!(
            "dimensions {dims:?} describe {count} values, got {}",
            values.len()
        )));
    }
    for &d in dims {
        if u32::try_from(d).is_err() {
            return Err(Error::Shape(format!("dimension {d} does not fit in 32 bits")));
        }
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let write = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
        w.write_all(bytes).map_err(|e| io_err(path, e))
    };
    write(&mut w, TENSOR_MAGIC)?;
    write(&mut w, &(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        write(&mut w, &(d as u32).to_le_bytes())?;
    }
    for &v in values {
        write(&mut w, &(v as f32).to_le_bytes())?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads any tensor back as its dimensions plus f64 values. Rejects bad
/// magic, truncation, trailing bytes, and non-finite values.
pub fn read_tensor_file(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != TENSOR_MAGIC {
        return Err(format_err(path, "not a GPT1 tensor file (bad magic bytes)"));
    }
    let rank = read_u32(&mut r, path)? as usize;
    if rank == 0 || rank > 8 {
        return Err(format_err(path, format!("rank {rank} out of the supported 1..=8 range")));
    }
    let mut dims = Vec::with_capacity(rank);
    let mut count = 1usize;
    for _ in 0..rank {
        let d = read_u32(&mut r, path)? as usize;
        if d == 0 {
            return Err(format_err(path, "zero-sized dimension"));
        }
        count = count
            .checked_mul(d)
            .ok_or_else(|| format_err(path, "element count overflows"))?;
        dims.push(d);
    }
    let mut values = Vec::with_capacity(count);
    let mut buf = [0u8; 4];
    for i in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| format_err(path, format!("truncated at value {i} of {count}")))?;
        let v = f32::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(format_err(path, format!("non-finite value at flat index {i}")));
        }
        values.push(v as f64);
    }
    if r.read(&mut buf[..1]).map_err(|e| io_err(path, e))? != 0 {
        return Err(format_err(path, "trailing bytes after the declared values"));
    }
    Ok((dims, values))
}

fn read_u32(r: &mut BufReader<File>, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| format_err(path, "truncated header"))?;
    Ok(u32::from_le_bytes(buf))
}

/// Writes a weight tensor with dimensions `[c_out, c_in, k_h, k_w]`.
pub fn write_weight_tensor(path: &Path, w: &WeightTensor) -> Result<()> {
    write_tensor_file(path, &[w.c_out(), w.c_in(), w.k_h(), w.k_w()], w.values())
}

/// Reads a rank-4 tensor as layer weights.
pub fn read_weight_tensor(path: &Path) -> Result<WeightTensor> {
    let (dims, values) = read_tensor_file(path)?;
    if dims.len() != 4 {
        return Err(format_err(
            path,
            format!("weights need rank 4 [c_out, c_in, k_h, k_w], found rank {}", dims.len()),
        ));
    }
    WeightTensor::new(dims[0], dims[1], dims[2], dims[3], values)
        .map_err(|e| format_err(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// Norm-matrix CSV
// ---------------------------------------------------------------------------

/// Writes a magnitude matrix as CSV: a header naming the input channels
/// `in_0..`, then one row of values per output channel. Numbers print in
/// the shortest form that parses back to the same f64.
pub fn write_norm_csv(path: &Path, m: &NormMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let header: Vec<String> = (0..m.cols()).map(|c| format!("in_{c}")).collect();
    w.write_record(&header)
        .map_err(|e| format_err(path, e.to_string()))?;
    for f in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|c| m.at(f, c).to_string()).collect();
        w.write_record(&row)
            .map_err(|e| format_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a magnitude matrix back from its headered CSV.
pub fn read_norm_csv(path: &Path) -> Result<NormMatrix> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let cols = r
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in r.records() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        if record.len() != cols {
            return Err(format_err(
                path,
                format!("row {rows} has {} fields, the header names {cols}", record.len()),
            ));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                format_err(path, format!("row {rows}: {field:?} is not a number"))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    NormMatrix::new(rows, cols, values).map_err(|e| format_err(path, e.to_string()))
}
