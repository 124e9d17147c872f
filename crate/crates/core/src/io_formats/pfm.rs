//! Portable float maps.
//!
//! Written as single-channel `Pf` with a negative scale (little-endian) and
//! rows stored bottom-up. Three-channel `PF` files are accepted on read and
//! reduced to their first channel only when asked.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::FloatMap;

/// Encodes a map as PFM bytes. NaN samples are rejected.
pub fn encode_pfm(map: &FloatMap) -> Result<Vec<u8>> {
    if let Some(index) = map.data.iter().position(|v| v.is_nan()) {
        return Err(Error::NanSample { index });
    }
    let header = format!("Pf\n{} {}\n-1.0\n", map.width, map.height);
    let mut out = Vec::with_capacity(header.len() + map.data.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for row in (0..map.height).rev() {
        for v in &map.data[row * map.width..(row + 1) * map.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_pfm(map: &FloatMap, path: &Path) -> Result<()> {
    let bytes = encode_pfm(map)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits off one whitespace-delimited header token.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return None;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()
}

/// Decodes PFM bytes. Color files keep only their first channel.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<FloatMap> {
    let bad = |reason: &str| Error::decode(path, reason.to_string());
    let mut pos = 0;
    let channels = match token(bytes, &mut pos) {
        Some("Pf") => 1,
        Some("PF") => 3,
        _ => return Err(bad("missing Pf/PF magic")),
    };
    let width: usize = token(bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad width"))?;
    let height: usize = token(bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad height"))?;
    let scale: f64 = token(bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be nonzero"));
    }
    // exactly one whitespace byte separates the header from the data
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("truncated header"));
    }
    pos += 1;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| bad("dimensions overflow"))?;
    let body = &bytes[pos..];
    if body.len() < count * 4 {
        return Err(bad(&format!(
            "expected {} data bytes, found {}",
            count * 4,
            body.len()
        )));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0f32; width * height];
    for file_row in 0..height {
        let row = height - 1 - file_row;
        for x in 0..width {
            let off = ((file_row * width + x) * channels) * 4;
            let raw = [body[off], body[off + 1], body[off + 2], body[off + 3]];
            data[row * width + x] = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    FloatMap::new(width, height, data)
}

pub fn read_pfm(path: &Path) -> Result<FloatMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}
