//! PPM (P6) / PGM (P5) with maxval 255, plus PNG via the `image` codec.
//! The PNM path is self-contained; 8-bit samples map to [0, 1] by /255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{EquirectGrid, EquirectImage};

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<u64> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start || self.pos - start > 10 {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        let s = std::str::from_utf8(&self.data[start..self.pos]).unwrap();
        s.parse()
            .map_err(|_| Error::parse(start, format!("bad {what}")))
    }
}

/// Decode a PNM (P5/P6) or PNG byte stream.
pub fn decode_image(data: &[u8]) -> Result<EquirectImage> {
    if data.starts_with(b"\x89PNG") {
        return decode_png(data);
    }
    if data.len() < 2 {
        return Err(Error::parse(0, "truncated image header"));
    }
    let channels = match &data[..2] {
        b"P5" => 1usize,
        b"P6" => 3usize,
        _ => return Err(Error::parse(0, "unknown image magic (want P5, P6, or PNG)")),
    };
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.read_uint("width")? as usize;
    let height = cur.read_uint("height")? as usize;
    let maxval = cur.read_uint("maxval")?;
    if maxval != 255 {
        return Err(Error::parse(cur.pos, format!("unsupported maxval {maxval}")));
    }
    if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
        return Err(Error::parse(cur.pos, "expected whitespace before payload"));
    }
    cur.pos += 1;
    let grid = EquirectGrid::new(width, height)
        .map_err(|e| Error::parse(2, format!("bad dimensions: {e}")))?;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::parse(2, "dimension overflow"))?;
    let payload = &data[cur.pos..];
    if payload.len() < expected {
        return Err(Error::parse(
            cur.pos,
            format!(
                "truncated payload: expected {expected} bytes, got {}",
                payload.len()
            ),
        ));
    }
    let samples = payload[..expected]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    EquirectImage::new(grid, channels, samples)
        .map_err(|e| Error::parse(cur.pos, e.to_string()))
}

fn decode_png(data: &[u8]) -> Result<EquirectImage> {
    let img = image::load_from_memory_with_format(data, image::ImageFormat::Png)
        .map_err(|e| Error::parse(0, format!("png: {e}")))?;
    let (channels, raw, w, h) = match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width(), g.height());
            (1usize, g.into_raw(), w, h)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width(), rgb.height());
            (3usize, rgb.into_raw(), w, h)
        }
    };
    let grid = EquirectGrid::new(w as usize, h as usize)
        .map_err(|e| Error::parse(0, format!("png dimensions: {e}")))?;
    let samples = raw.iter().map(|&b| b as f32 / 255.0).collect();
    EquirectImage::new(grid, channels, samples).map_err(|e| Error::parse(0, e.to_string()))
}

/// Encode to P5 (1 channel) or P6 (3 channels); round-half-up quantization.
pub fn encode_image(image: &EquirectImage) -> Result<Vec<u8>> {
    let magic = match image.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::domain(format!("cannot encode {c}-channel image as PNM"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.grid.width, image.grid.height).into_bytes();
    out.extend(
        image
            .samples
            .iter()
            .map(|&s| ((s as f64).clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<EquirectImage> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&data)
}

/// Writes PNG when the extension is `.png`, PNM otherwise.
pub fn write_image(image: &EquirectImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        return write_png(image, path);
    }
    let data = encode_image(image)?;
    std::fs::write(path, data).map_err(|e| Error::io(path, e))
}

fn write_png(image: &EquirectImage, path: &Path) -> Result<()> {
    let quant: Vec<u8> = image
        .samples
        .iter()
        .map(|&s| ((s as f64).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let (w, h) = (image.grid.width as u32, image.grid.height as u32);
    let res = match image.channels {
        1 => image::GrayImage::from_raw(w, h, quant)
            .expect("sizes match")
            .save_with_format(path, image::ImageFormat::Png),
        3 => image::RgbImage::from_raw(w, h, quant)
            .expect("sizes match")
            .save_with_format(path, image::ImageFormat::Png),
        c => return Err(Error::domain(format!("cannot encode {c}-channel image as PNG"))),
    };
    res.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p6_minimal() {
        let data = b"P6\n2 2\n255\n\x00\x00\x00\xff\xff\xff\x10\x20\x30\x40\x50\x60";
        let img = decode_image(data).unwrap();
        assert_eq!(img.grid.width, 2);
        assert_eq!(img.channels, 3);
        assert!((img.at(1, 0, 0) - 1.0).abs() < 1e-6);
        assert!((img.at(0, 1, 2) - 0x30 as f32 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn truncated_payload_names_byte_counts() {
        let data = b"P6\n2 2\n255\n\x00\x00\x00";
        let err = decode_image(data).unwrap_err().to_string();
        assert!(err.contains("expected 12"), "{err}");
        assert!(err.contains("got 3"), "{err}");
    }

    #[test]
    fn header_comments_are_skipped() {
        let data = b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04";
        let img = decode_image(data).unwrap();
        assert_eq!(img.channels, 1);
    }

    #[test]
    fn quantized_round_trip() {
        let grid = EquirectGrid::new(5, 3).unwrap();
        let samples: Vec<f32> = (0..45).map(|i| (i as f32 * 5.3) % 1.0).collect();
        let img = EquirectImage::new(grid, 3, samples).unwrap();
        let encoded = encode_image(&img).unwrap();
        let back = decode_image(&encoded).unwrap();
        let again = decode_image(&encode_image(&back).unwrap()).unwrap();
        assert_eq!(back.samples, again.samples);
    }

    #[test]
    fn bad_magic_is_parse_error() {
        assert!(matches!(
            decode_image(b"P7\n1 1\n255\n\x00"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let grid = EquirectGrid::new(4, 2).unwrap();
        let samples: Vec<f32> = (0..24).map(|i| i as f32 / 24.0).collect();
        let img = EquirectImage::new(grid, 3, samples).unwrap();
        write_image(&img, &path).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.grid, grid);
        assert_eq!(back.channels, 3);
        let reread = decode_image(&encode_image(&back).unwrap()).unwrap();
        assert_eq!(back.samples, reread.samples);
    }
}
