//! Dense feature file: `"DFM1"`, then `C`, `H`, `W` as little-endian `u32`,
//! then `C*H*W` little-endian `f32` values in channel-major order. No padding.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::DenseFeatureMap;

pub const MAGIC: &[u8; 4] = b"DFM1";
const HEADER_LEN: usize = 16;

pub fn encode(map: &DenseFeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + map.data().len() * 4);
    out.extend_from_slice(MAGIC);
    for d in [map.channels(), map.height(), map.width()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Header fields without validating the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

pub fn decode_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("dfm", "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format("dfm", "bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    Ok(Header {
        channels: word(4),
        height: word(8),
        width: word(12),
    })
}

pub fn decode(bytes: &[u8]) -> Result<DenseFeatureMap> {
    let h = decode_header(bytes)?;
    if h.channels == 0 || h.height == 0 || h.width == 0 {
        return Err(Error::format("dfm", "zero dimension in header"));
    }
    let expected = (h.channels as u64)
        .checked_mul(h.height as u64)
        .and_then(|n| n.checked_mul(h.width as u64))
        .and_then(|n| n.checked_mul(4));
    let payload = &bytes[HEADER_LEN..];
    if expected != Some(payload.len() as u64) {
        return Err(Error::format(
            "dfm",
            format!(
                "payload length mismatch: header {}x{}x{} needs {} bytes, found {}",
                h.channels,
                h.height,
                h.width,
                expected.map_or("overflow".to_string(), |n| n.to_string()),
                payload.len()
            ),
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseFeatureMap::new(
        h.channels as usize,
        h.height as usize,
        h.width as usize,
        data,
    )
}

pub fn read(path: &Path) -> Result<DenseFeatureMap> {
    decode(&super::read_bytes(path)?)
}

pub fn write(map: &DenseFeatureMap, path: &Path) -> Result<()> {
    super::write_bytes(path, &encode(map))
}
