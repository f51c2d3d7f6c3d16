//! Binary map format.
//!
//! A record is one line of JSON followed by raw little-endian samples:
//!
//! ```text
//! {"height":H,"width":W,"channels":C,"dtype":"f32"}\n
//! <H*W*C samples, row-major, channel-innermost>
//! ```
//!
//! `dtype` is `"f32"` or `"f64"` for real maps and `"u8"` (0/1) for masks.
//! Additional header keys are preserved as metadata. A masked map (depth map,
//! correspondence field) is a real record immediately followed by a
//! single-channel `u8` record of the same size holding the validity mask.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BoolMask, DenseMap};
use crate::error::{Error, Result};

/// Longest header line accepted, newline included.
pub const MAX_HEADER_BYTES: usize = 4096;
/// Largest element count (`H*W*C`) accepted in a record.
pub const MAX_ELEMENTS: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
    U8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapHeader {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub dtype: Dtype,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl MapHeader {
    fn elements(&self) -> Result<usize> {
        self.height
            .checked_mul(self.width)
            .and_then(|n| n.checked_mul(self.channels))
            .filter(|n| *n <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format("record too large".into()))
    }
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Reads and validates one header line.
pub fn read_header<R: BufRead>(r: &mut R) -> Result<MapHeader> {
    let mut line = Vec::new();
    r.take(MAX_HEADER_BYTES as u64)
        .read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(fmt_err(if line.is_empty() {
            "missing header"
        } else {
            "header line is unterminated or too long"
        }));
    }
    let header: MapHeader =
        serde_json::from_slice(&line).map_err(|e| fmt_err(format!("bad header: {e}")))?;
    header.elements()?;
    Ok(header)
}

fn read_payload<R: Read>(r: &mut R, header: &MapHeader) -> Result<Vec<u8>> {
    let len = header.elements()? * header.dtype.size();
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(fmt_err(format!(
            "truncated payload: expected {len} bytes, found {}",
            buf.len()
        )));
    }
    Ok(buf)
}

fn read_map_with_header<R: BufRead>(r: &mut R) -> Result<(MapHeader, DenseMap)> {
    let header = read_header(r)?;
    let raw = read_payload(r, &header)?;
    let values: Vec<f64> = match header.dtype {
        Dtype::F32 => raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        Dtype::F64 => raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect(),
        Dtype::U8 => return Err(fmt_err("expected a real-valued record, found u8")),
    };
    let map = DenseMap::new(header.height, header.width, header.channels, values)
        .map_err(|e| fmt_err(e.to_string()))?;
    Ok((header, map))
}

/// Reads one real-valued record.
pub fn read_dense_map<R: BufRead>(r: &mut R) -> Result<(MapHeader, DenseMap)> {
    read_map_with_header(r)
}

/// Reads one `u8` mask record.
pub fn read_mask<R: BufRead>(r: &mut R) -> Result<BoolMask> {
    let header = read_header(r)?;
    if header.dtype != Dtype::U8 || header.channels != 1 {
        return Err(fmt_err("mask records must be single-channel u8"));
    }
    let raw = read_payload(r, &header)?;
    let bits = raw
        .iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(fmt_err(format!("mask byte {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    BoolMask::new(header.height, header.width, bits)
}

/// Reads a real record followed by its validity mask.
pub fn read_masked_map<R: BufRead>(r: &mut R) -> Result<(MapHeader, DenseMap, BoolMask)> {
    let (header, map) = read_map_with_header(r)?;
    let mask = read_mask(r)?;
    if mask.height() != map.height() || mask.width() != map.width() {
        return Err(fmt_err("validity mask does not match map size"));
    }
    Ok((header, map, mask))
}

pub fn decode_dense_map(bytes: &[u8]) -> Result<(MapHeader, DenseMap)> {
    read_dense_map(&mut &bytes[..])
}

pub fn decode_mask(bytes: &[u8]) -> Result<BoolMask> {
    read_mask(&mut &bytes[..])
}

pub fn decode_masked_map(bytes: &[u8]) -> Result<(MapHeader, DenseMap, BoolMask)> {
    read_masked_map(&mut &bytes[..])
}

fn write_header<W: Write>(w: &mut W, header: &MapHeader) -> Result<()> {
    serde_json::to_writer(&mut *w, header)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes `map` as an `f32` record.
pub fn write_dense_map<W: Write>(w: &mut W, map: &DenseMap) -> Result<()> {
    write_dense_map_with(w, map, Dtype::F32, BTreeMap::new())
}

/// Writes `map` with an explicit sample type and extra header metadata.
pub fn write_dense_map_with<W: Write>(
    w: &mut W,
    map: &DenseMap,
    dtype: Dtype,
    extra: BTreeMap<String, Value>,
) -> Result<()> {
    let header = MapHeader {
        height: map.height(),
        width: map.width(),
        channels: map.channels(),
        dtype,
        extra,
    };
    header.elements()?;
    let mut buf = Vec::with_capacity(map.values().len() * dtype.size());
    match dtype {
        Dtype::F32 => {
            for v in map.values() {
                let f = *v as f32;
                if !f.is_finite() {
                    return Err(Error::InvalidArgument(format!("{v} does not fit in f32")));
                }
                buf.extend_from_slice(&f.to_le_bytes());
            }
        }
        Dtype::F64 => {
            for v in map.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Dtype::U8 => {
            return Err(Error::InvalidArgument(
                "use write_mask for u8 records".into(),
            ))
        }
    }
    write_header(w, &header)?;
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_mask<W: Write>(w: &mut W, mask: &BoolMask) -> Result<()> {
    let header = MapHeader {
        height: mask.height(),
        width: mask.width(),
        channels: 1,
        dtype: Dtype::U8,
        extra: BTreeMap::new(),
    };
    header.elements()?;
    write_header(w, &header)?;
    let bytes: Vec<u8> = mask.bits().iter().map(|b| u8::from(*b)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Writes a real record followed by its validity mask.
pub fn write_masked_map<W: Write>(
    w: &mut W,
    map: &DenseMap,
    valid: &BoolMask,
    dtype: Dtype,
) -> Result<()> {
    if map.height() != valid.height() || map.width() != valid.width() {
        return Err(Error::ShapeMismatch(
            "validity mask does not match map size".into(),
        ));
    }
    write_dense_map_with(w, map, dtype, BTreeMap::new())?;
    write_mask(w, valid)
}
