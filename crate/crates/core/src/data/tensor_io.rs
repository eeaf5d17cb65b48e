//! Binary tensor files.
//!
//! Layout, little-endian throughout: magic `HRTG`, version `u16`, dtype `u8`
//! (1 = f32), rank `u8`, `rank` dims as `u32`, row-major payload, then a
//! CRC32 of every preceding byte.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::TensorGrid;

pub const TENSOR_MAGIC: &[u8; 4] = b"HRTG";
pub const TENSOR_VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;
const RANK: u8 = 3;
const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 * RANK as usize;

pub fn encode_tensor(grid: &TensorGrid) -> Vec<u8> {
    let (c, h, w) = grid.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.len() + 4);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(RANK);
    for d in [c, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in grid.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Decodes a tensor file image; `path` only labels errors.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<TensorGrid> {
    let fail = |m: String| Error::format(path, m);
    if bytes.len() < HEADER_LEN + 4 {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != TENSOR_MAGIC {
        return Err(fail(format!("bad magic {:?}, expected HRTG", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TENSOR_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    if bytes[6] != DTYPE_F32 {
        return Err(fail(format!("unsupported dtype {}", bytes[6])));
    }
    if bytes[7] != RANK {
        return Err(fail(format!("unsupported rank {}", bytes[7])));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| fail(format!("dims {c}x{h}x{w} overflow")))?;
    let expected = HEADER_LEN + 4 * n + 4;
    if bytes.len() != expected {
        return Err(fail(format!(
            "length {} does not match header dims {c}x{h}x{w} ({expected} bytes expected)",
            bytes.len()
        )));
    }
    let body = &bytes[..expected - 4];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(fail("CRC mismatch".into()));
    }
    let data = body[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    TensorGrid::from_vec(c, h, w, data).map_err(|e| fail(e.to_string()))
}

pub fn write_tensor(path: impl AsRef<Path>, grid: &TensorGrid) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}
