//! Generic little-endian tensor files.
//!
//! Layout: `ADVTTNSR`, `u32` version, `u8` dtype, `u32` rank, one `u64` per
//! dimension, then the payload in row-major order. Integer dtypes hold labels
//! and must be exactly representable when written.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 8] = b"ADVTTNSR";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    F32,
    U8,
    U32,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F64 => 0,
            DType::F32 => 1,
            DType::U8 => 2,
            DType::U32 => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => DType::F64,
            1 => DType::F32,
            2 => DType::U8,
            3 => DType::U32,
            _ => return Err(Error::Data(format!("unknown tensor dtype code {c}"))),
        })
    }

    pub fn size(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::F32 | DType::U32 => 4,
            DType::U8 => 1,
        }
    }
}

/// Serializes `t` as `dtype`. Values that `dtype` cannot hold exactly are
/// rejected rather than rounded, except for `F32`, which rounds.
pub fn encode_tensor(t: &Tensor<f64>, dtype: DType) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(17 + 8 * t.ndim() + t.len() * dtype.size());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.push(dtype.code());
    out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let exact_int = |v: f64, max: f64| -> Result<f64> {
        if v.fract() == 0.0 && (0.0..=max).contains(&v) {
            Ok(v)
        } else {
            Err(Error::Data(format!("{v} does not fit a {dtype:?} tensor")))
        }
    };
    for &v in t.data() {
        match dtype {
            DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
            DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            DType::U8 => out.push(exact_int(v, 255.0)? as u8),
            DType::U32 => out.extend_from_slice(&(exact_int(v, u32::MAX as f64)? as u32).to_le_bytes()),
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Data(format!("tensor file truncated in {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn decode_tensor(mut bytes: &[u8]) -> Result<(DType, Tensor<f64>)> {
    let b = &mut bytes;
    if take(b, 8, "magic")? != TENSOR_MAGIC {
        return Err(Error::Data("not a tensor file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(b, 4, "version")?.try_into().unwrap());
    if version != TENSOR_VERSION {
        return Err(Error::Data(format!("unsupported tensor file version {version}")));
    }
    let dtype = DType::from_code(take(b, 1, "dtype")?[0])?;
    let rank = u32::from_le_bytes(take(b, 4, "rank")?.try_into().unwrap()) as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::Data(format!("tensor rank {rank} out of range")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = u64::from_le_bytes(take(b, 8, "shape")?.try_into().unwrap());
        shape.push(usize::try_from(d).map_err(|_| Error::Data(format!("dimension {d} too large")))?);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Data("tensor element count overflows".into()))?;
    let payload = take(b, count.saturating_mul(dtype.size()), "payload")?;
    if !b.is_empty() {
        return Err(Error::Data(format!("{} trailing bytes after tensor payload", b.len())));
    }
    let data: Vec<f64> = match dtype {
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        DType::U8 => payload.iter().map(|&v| v as f64).collect(),
        DType::U32 => payload
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Ok((dtype, Tensor::new(shape, data)?))
}

/// Writes under an exclusive lock on the destination file.
pub fn write_tensor(path: &Path, t: &Tensor<f64>, dtype: DType) -> Result<()> {
    let bytes = encode_tensor(t, dtype)?;
    write_locked(path, &bytes)
}

pub fn read_tensor(path: &Path) -> Result<(DType, Tensor<f64>)> {
    decode_tensor(&read_all(path)?)
}

pub(crate) fn write_locked(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = File::options()
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)
        .map_err(io)?;
    file.lock().map_err(io)?;
    file.set_len(0).map_err(io)?;
    let mut w = BufWriter::new(&file);
    w.write_all(bytes).map_err(io)?;
    w.flush().map_err(io)?;
    drop(w);
    file.sync_all().map_err(io)?;
    file.unlock().map_err(io)
}

pub(crate) fn read_all(path: &Path) -> Result<Vec<u8>> {
    let io = |e| Error::io(path, e);
    let file = File::open(path).map_err(io)?;
    file.lock_shared().map_err(io)?;
    let mut bytes = Vec::new();
    BufReader::new(&file).read_to_end(&mut bytes).map_err(io)?;
    file.unlock().map_err(io)?;
    Ok(bytes)
}
