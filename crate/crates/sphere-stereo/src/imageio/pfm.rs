//! PFM float maps. Payload is rows of 32-bit floats, bottom row first; the
//! scale's sign selects endianness (negative = little-endian).
//!
//! Invalid pixels (NaN sentinel in memory) are stored as 0 together with a
//! sidecar mask `<stem>.mask.pgm` (255 = valid, 0 = invalid).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geom::{EquirectGrid, ScalarMap, INVALID};
use crate::imageio::pnm;

/// Raw decoded PFM payload, rows already flipped to top-row-first.
#[derive(Debug, Clone)]
pub struct PfmData {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub samples: Vec<f32>,
}

fn read_token<'a>(data: &'a [u8], pos: &mut usize, what: &str) -> Result<&'a str> {
    while *pos < data.len() && data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos == start || *pos - start > 32 {
        return Err(Error::parse(start, format!("expected {what}")));
    }
    std::str::from_utf8(&data[start..*pos]).map_err(|_| Error::parse(start, format!("bad {what}")))
}

pub fn decode_floatmap(data: &[u8]) -> Result<PfmData> {
    if data.len() < 2 {
        return Err(Error::parse(0, "truncated PFM header"));
    }
    let channels = match &data[..2] {
        b"Pf" => 1usize,
        b"PF" => 3usize,
        _ => return Err(Error::parse(0, "bad PFM magic (want Pf or PF)")),
    };
    let mut pos = 2;
    let width: usize = read_token(data, &mut pos, "width")?
        .parse()
        .map_err(|_| Error::parse(pos, "bad width"))?;
    let height: usize = read_token(data, &mut pos, "height")?
        .parse()
        .map_err(|_| Error::parse(pos, "bad height"))?;
    let scale: f32 = read_token(data, &mut pos, "scale")?
        .parse()
        .map_err(|_| Error::parse(pos, "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(pos, "scale must be nonzero and finite"));
    }
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::parse(pos, "expected whitespace before payload"));
    }
    pos += 1;
    if width == 0 || height == 0 || width > 1 << 20 || height > 1 << 20 {
        return Err(Error::parse(2, "unreasonable dimensions"));
    }
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::parse(2, "dimension overflow"))?;
    let expected = count * 4;
    let payload = &data[pos..];
    if payload.len() < expected {
        return Err(Error::parse(
            pos,
            format!("truncated payload: expected {expected} bytes, got {}", payload.len()),
        ));
    }
    let little_endian = scale < 0.0;
    let mut samples = vec![0.0f32; count];
    let row_len = width * channels;
    for file_row in 0..height {
        let mem_row = height - 1 - file_row; // bottom row first on disk
        for k in 0..row_len {
            let off = (file_row * row_len + k) * 4;
            let bytes: [u8; 4] = payload[off..off + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
            samples[mem_row * row_len + k] = v;
        }
    }
    Ok(PfmData {
        width,
        height,
        channels,
        samples,
    })
}

/// Encode a 1-channel map as little-endian "Pf" (scale −1.0); NaN stored as 0.
pub fn encode_floatmap(map: &ScalarMap) -> Vec<u8> {
    let (w, h) = (map.grid.width, map.grid.height);
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for file_row in 0..h {
        let mem_row = h - 1 - file_row;
        for col in 0..w {
            let v = map.at(col, mem_row);
            let stored = if v.is_finite() { v } else { 0.0 };
            out.extend_from_slice(&stored.to_le_bytes());
        }
    }
    out
}

fn mask_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    let stem = s.strip_suffix(".pfm").unwrap_or(&s);
    PathBuf::from(format!("{stem}.mask.pgm"))
}

pub fn write_floatmap(map: &ScalarMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_floatmap(map)).map_err(|e| Error::io(path, e))?;
    let mut mask = format!("P5\n{} {}\n255\n", map.grid.width, map.grid.height).into_bytes();
    mask.extend(map.values.iter().map(|v| if v.is_finite() { 255u8 } else { 0u8 }));
    let mp = mask_path(path);
    std::fs::write(&mp, mask).map_err(|e| Error::io(mp, e))
}

pub fn read_floatmap(path: impl AsRef<Path>) -> Result<ScalarMap> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let pfm = decode_floatmap(&data)?;
    if pfm.channels != 1 {
        return Err(Error::parse(0, "expected 1-channel PFM for a scalar map"));
    }
    let grid = EquirectGrid::new(pfm.width, pfm.height)
        .map_err(|e| Error::parse(2, e.to_string()))?;
    let mut map = ScalarMap {
        grid,
        values: pfm.samples,
    };
    let mp = mask_path(path);
    if mp.exists() {
        let mask = pnm::read_image(&mp)?;
        if mask.grid != grid || mask.channels != 1 {
            return Err(Error::parse(0, "mask dimensions do not match float map"));
        }
        for (v, m) in map.values.iter_mut().zip(&mask.samples) {
            if *m < 0.5 {
                *v = INVALID;
            }
        }
    }
    Ok(map)
}
