//! PLY point-cloud export (ASCII or binary little-endian) plus a reader
//! limited to the layout this crate writes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::CloudPoint;

pub fn encode_ply(points: &[CloudPoint], binary: bool) -> Vec<u8> {
    let with_color = !points.is_empty() && points.iter().all(|p| p.color.is_some());
    let format = if binary {
        "binary_little_endian"
    } else {
        "ascii"
    };
    let mut header = format!("ply\nformat {format} 1.0\nelement vertex {}\n", points.len());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if with_color {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for p in points {
        if binary {
            for c in p.position {
                out.extend_from_slice(&c.to_le_bytes());
            }
            if with_color {
                out.extend_from_slice(&p.color.unwrap());
            }
        } else {
            let mut line = format!("{} {} {}", fmt(p.position[0]), fmt(p.position[1]), fmt(p.position[2]));
            if with_color {
                let [r, g, b] = p.color.unwrap();
                line.push_str(&format!(" {r} {g} {b}"));
            }
            line.push('\n');
            out.extend_from_slice(line.as_bytes());
        }
    }
    out
}

// print integers without a trailing ".0" so "2 0 0" reads naturally
fn fmt(v: f32) -> String {
    if v == v.trunc() && v.abs() < 1e7 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn write_ply(points: &[CloudPoint], path: impl AsRef<Path>, binary: bool) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ply(points, binary)).map_err(|e| Error::io(path, e))
}

pub fn decode_ply(data: &[u8]) -> Result<Vec<CloudPoint>> {
    let header_end = find_header_end(data)?;
    let header = std::str::from_utf8(&data[..header_end])
        .map_err(|_| Error::parse(0, "header is not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(Error::parse(0, "missing 'ply' magic"));
    }
    let mut binary = None;
    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", "1.0"] => binary = Some(false),
            ["format", "binary_little_endian", "1.0"] => binary = Some(true),
            ["format", ..] => return Err(Error::parse(0, "unsupported PLY format")),
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| Error::parse(0, "bad vertex count"))?)
            }
            ["element", ..] => return Err(Error::parse(0, "unsupported element")),
            ["property", ty, name] => props.push(format!("{ty} {name}")),
            ["end_header"] => break,
            _ => return Err(Error::parse(0, format!("unexpected header line '{line}'"))),
        }
    }
    let binary = binary.ok_or_else(|| Error::parse(0, "missing format line"))?;
    let count = count.ok_or_else(|| Error::parse(0, "missing vertex element"))?;
    let xyz = ["float x", "float y", "float z"];
    let rgb = ["uchar red", "uchar green", "uchar blue"];
    let with_color = if props == xyz {
        false
    } else if props.len() == 6 && props[..3] == xyz && props[3..] == rgb {
        true
    } else {
        return Err(Error::parse(0, "unsupported property layout"));
    };
    if count > 1 << 28 {
        return Err(Error::parse(0, "unreasonable vertex count"));
    }

    let body = &data[header_end..];
    let mut points = Vec::with_capacity(count.min(1 << 16));
    if binary {
        let stride: usize = 12 + if with_color { 3 } else { 0 };
        let need = stride
            .checked_mul(count)
            .ok_or_else(|| Error::parse(header_end, "size overflow"))?;
        if body.len() < need {
            return Err(Error::parse(
                header_end,
                format!("truncated body: expected {need} bytes, got {}", body.len()),
            ));
        }
        for i in 0..count {
            let off = i * stride;
            let mut position = [0.0f32; 3];
            for (k, c) in position.iter_mut().enumerate() {
                *c = f32::from_le_bytes(body[off + k * 4..off + k * 4 + 4].try_into().unwrap());
            }
            let color = with_color.then(|| body[off + 12..off + 15].try_into().unwrap());
            points.push(CloudPoint { position, color });
        }
    } else {
        let text = std::str::from_utf8(body).map_err(|_| Error::parse(header_end, "body is not UTF-8"))?;
        let mut lines = text.lines();
        for i in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(header_end, format!("missing vertex line {i}")))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let expect = if with_color { 6 } else { 3 };
            if fields.len() != expect {
                return Err(Error::parse(header_end, format!("bad vertex line '{line}'")));
            }
            let mut position = [0.0f32; 3];
            for (k, c) in position.iter_mut().enumerate() {
                *c = fields[k]
                    .parse()
                    .map_err(|_| Error::parse(header_end, "bad float"))?;
            }
            let color = if with_color {
                let mut c = [0u8; 3];
                for (k, v) in c.iter_mut().enumerate() {
                    *v = fields[3 + k]
                        .parse()
                        .map_err(|_| Error::parse(header_end, "bad color"))?;
                }
                Some(c)
            } else {
                None
            };
            points.push(CloudPoint { position, color });
        }
    }
    Ok(points)
}

fn find_header_end(data: &[u8]) -> Result<usize> {
    let needle = b"end_header\n";
    data.windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + needle.len())
        .ok_or_else(|| Error::parse(data.len(), "no end_header"))
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<Vec<CloudPoint>> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ply(&data)
}
