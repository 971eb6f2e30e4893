//! Spherical / equirectangular geometry for a vertically stacked camera rig.
//!
//! Conventions used everywhere in this crate:
//! - Polar angle is measured from the south pole: 0 = straight down, π = up.
//! - Longitude lies in [-π, π), zero along +x, increasing toward +y.
//! - The top camera sits at the world origin; the bottom camera at (0, 0, -B).
//! - Integer pixel (i, j) samples at center (i + 0.5, j + 0.5); row 0 touches
//!   the north-pole edge, row H the south-pole edge.

use crate::error::{Error, Result};

pub const INVALID: f32 = f32::NAN;

/// Which camera is the reference view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Top,
}

/// Top-bottom stereo rig with vertical baseline in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub baseline_m: f64,
    pub reference: Reference,
}

impl CameraRig {
    pub fn new(baseline_m: f64) -> Result<Self> {
        if !(baseline_m.is_finite() && baseline_m > 0.0) {
            return Err(Error::domain(format!(
                "baseline must be finite and positive, got {baseline_m}"
            )));
        }
        Ok(CameraRig {
            baseline_m,
            reference: Reference::Top,
        })
    }

    pub fn top_center(&self) -> [f64; 3] {
        [0.0, 0.0, 0.0]
    }

    pub fn bottom_center(&self) -> [f64; 3] {
        [0.0, 0.0, -self.baseline_m]
    }
}

/// Unit direction on the sphere in (longitude, polar-from-south-pole) form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalDirection {
    pub longitude_rad: f64,
    pub polar_rad: f64,
}

impl SphericalDirection {
    pub fn new(longitude_rad: f64, polar_rad: f64) -> Result<Self> {
        if !longitude_rad.is_finite()
            || !polar_rad.is_finite()
            || longitude_rad < -std::f64::consts::PI
            || longitude_rad >= std::f64::consts::PI
            || polar_rad < 0.0
            || polar_rad > std::f64::consts::PI
        {
            return Err(Error::domain(format!(
                "invalid spherical direction ({longitude_rad}, {polar_rad})"
            )));
        }
        Ok(SphericalDirection {
            longitude_rad,
            polar_rad,
        })
    }

    /// Unit vector with the south pole along -z and longitude 0 along +x.
    pub fn to_unit_vector(self) -> [f64; 3] {
        let s = self.polar_rad.sin();
        [
            s * self.longitude_rad.cos(),
            s * self.longitude_rad.sin(),
            -self.polar_rad.cos(),
        ]
    }

    /// Direction of an arbitrary non-zero vector.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::domain("cannot take direction of zero vector"));
        }
        let polar = (-v[2] / norm).clamp(-1.0, 1.0).acos();
        let mut lon = v[1].atan2(v[0]);
        if lon >= std::f64::consts::PI {
            lon -= 2.0 * std::f64::consts::PI;
        }
        if !lon.is_finite() {
            lon = 0.0;
        }
        SphericalDirection::new(lon, polar)
    }
}

/// Raster dimensions plus the raster↔sphere angular mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquirectGrid {
    pub width: usize,
    pub height: usize,
}

impl EquirectGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::domain(format!(
                "grid must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(EquirectGrid { width, height })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Direction seen through continuous pixel coordinate (u, v).
///
/// longitude = 2π·u/W − π, polar = π·(1 − v/H). Row v = 0 is the north-pole
/// edge (polar = π), row v = H the south-pole edge (polar = 0).
pub fn pixel_to_direction(grid: EquirectGrid, u: f64, v: f64) -> Result<SphericalDirection> {
    let w = grid.width as f64;
    let h = grid.height as f64;
    if !(0.0..w).contains(&u) || !(0.0..=h).contains(&v) {
        return Err(Error::domain(format!(
            "pixel ({u}, {v}) outside grid {}x{}",
            grid.width, grid.height
        )));
    }
    let longitude = 2.0 * std::f64::consts::PI * u / w - std::f64::consts::PI;
    let polar = std::f64::consts::PI * (1.0 - v / h);
    SphericalDirection::new(longitude.clamp(-std::f64::consts::PI, std::f64::consts::PI), polar)
}

/// Exact inverse of [`pixel_to_direction`]; longitude wraps into [0, W).
pub fn direction_to_pixel(grid: EquirectGrid, dir: SphericalDirection) -> (f64, f64) {
    let w = grid.width as f64;
    let h = grid.height as f64;
    let mut u = (dir.longitude_rad + std::f64::consts::PI) * w / (2.0 * std::f64::consts::PI);
    u = u.rem_euclid(w);
    if u >= w {
        u = 0.0;
    }
    let v = h * (1.0 - dir.polar_rad / std::f64::consts::PI);
    (u, v)
}

/// Depth along the top-camera ray from angular disparity d = θ_b − θ_t:
/// |r_t| = B·(sin θ_t / tan d + cos θ_t).
///
/// d ≤ 0 signals a point at infinity and yields `f64::INFINITY`.
pub fn disparity_to_depth(rig: &CameraRig, polar_t: f64, d: f64) -> Result<f64> {
    if !(polar_t.is_finite() && polar_t > 0.0 && polar_t < std::f64::consts::PI) {
        return Err(Error::domain(format!(
            "polar angle {polar_t} outside open interval (0, pi)"
        )));
    }
    if !d.is_finite() {
        return Err(Error::domain(format!("disparity {d} is not finite")));
    }
    if d <= 0.0 {
        return Ok(f64::INFINITY);
    }
    if d >= std::f64::consts::PI - polar_t {
        return Err(Error::domain(format!(
            "disparity {d} outside (0, pi - polar) for polar {polar_t}"
        )));
    }
    Ok(rig.baseline_m * (polar_t.sin() / d.tan() + polar_t.cos()))
}

/// Inverse of [`disparity_to_depth`]: the angle under which the bottom camera,
/// displaced by −B along the polar axis, sees the same point.
pub fn depth_to_disparity(rig: &CameraRig, polar_t: f64, depth: f64) -> Result<f64> {
    if !(polar_t.is_finite() && polar_t > 0.0 && polar_t < std::f64::consts::PI) {
        return Err(Error::domain(format!(
            "polar angle {polar_t} on the degenerate pole axis"
        )));
    }
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::domain(format!("depth {depth} must be finite and positive")));
    }
    let b = rig.baseline_m;
    let theta_b = (depth * polar_t.sin()).atan2(depth * polar_t.cos() - b);
    Ok(theta_b - polar_t)
}

/// Polar angle at each row's pixel center, strictly decreasing in the row index.
pub fn polar_angle_map(grid: EquirectGrid) -> Vec<f64> {
    let h = grid.height as f64;
    (0..grid.height)
        .map(|j| std::f64::consts::PI * (1.0 - (j as f64 + 0.5) / h))
        .collect()
}

/// Multi-channel equirectangular raster, row-major, f32 samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EquirectImage {
    pub grid: EquirectGrid,
    pub channels: usize,
    pub samples: Vec<f32>,
}

impl EquirectImage {
    pub fn new(grid: EquirectGrid, channels: usize, samples: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::domain("image must have at least one channel"));
        }
        if samples.len() != grid.len() * channels {
            return Err(Error::domain(format!(
                "sample count {} does not match {}x{}x{}",
                samples.len(),
                grid.width,
                grid.height,
                channels
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::domain("image contains non-finite samples"));
        }
        Ok(EquirectImage {
            grid,
            channels,
            samples,
        })
    }

    pub fn zeros(grid: EquirectGrid, channels: usize) -> Self {
        EquirectImage {
            grid,
            channels,
            samples: vec![0.0; grid.len() * channels],
        }
    }

    #[inline]
    pub fn at(&self, col: usize, row: usize, ch: usize) -> f32 {
        self.samples[(row * self.grid.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn at_mut(&mut self, col: usize, row: usize, ch: usize) -> &mut f32 {
        &mut self.samples[(row * self.grid.width + col) * self.channels + ch]
    }

    /// Rec.601 luma; identity for single-channel images.
    pub fn to_luma(&self) -> EquirectImage {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = EquirectImage::zeros(self.grid, 1);
        for idx in 0..self.grid.len() {
            let base = idx * self.channels;
            out.samples[idx] = 0.299 * self.samples[base]
                + 0.587 * self.samples[base + 1]
                + 0.114 * self.samples[base + 2];
        }
        out
    }
}

/// Per-pixel map with NaN as the invalid sentinel. Shared storage for depth
/// (meters) and disparity (radians); the wrappers below enforce the domain.
#[derive(Debug, Clone)]
pub struct ScalarMap {
    pub grid: EquirectGrid,
    pub values: Vec<f32>,
}

impl ScalarMap {
    pub fn filled(grid: EquirectGrid, value: f32) -> Self {
        ScalarMap {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn invalid(grid: EquirectGrid) -> Self {
        Self::filled(grid, INVALID)
    }

    #[inline]
    pub fn at(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.grid.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: f32) {
        self.values[row * self.grid.width + col] = value;
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }
}

pub type DepthMap = ScalarMap;
pub type DisparityMap = ScalarMap;

#[inline]
pub fn is_valid(v: f32) -> bool {
    v.is_finite()
}

/// Resampling kernel for sphere rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleKernel {
    Nearest,
    Bilinear,
}

fn check_rotation(r: &[[f64; 3]; 3]) -> Result<()> {
    let tol = 1e-9;
    // R Rᵀ = I
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            if (dot - expect).abs() > tol {
                return Err(Error::domain("rotation matrix is not orthonormal"));
            }
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    if (det - 1.0).abs() > tol {
        return Err(Error::domain("rotation matrix determinant is not +1"));
    }
    Ok(())
}

fn mat_t_mul(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        r[0][0] * v[0] + r[1][0] * v[1] + r[2][0] * v[2],
        r[0][1] * v[0] + r[1][1] * v[1] + r[2][1] * v[2],
        r[0][2] * v[0] + r[1][2] * v[1] + r[2][2] * v[2],
    ]
}

/// Bilinear sample at continuous pixel coordinate with longitude wrap and
/// vertical clamp. Positions within 1e-9 of a pixel center snap to it, so
/// pure column shifts and the identity reproduce the raster exactly.
pub fn sample_image(image: &EquirectImage, u: f64, v: f64, kernel: ResampleKernel, out: &mut [f32]) {
    let w = image.grid.width;
    let h = image.grid.height;
    let x = u - 0.5;
    let y = (v - 0.5).clamp(0.0, (h - 1) as f64);

    let mut x0 = x.floor();
    let mut fx = x - x0;
    if fx < 1e-9 {
        fx = 0.0;
    } else if fx > 1.0 - 1e-9 {
        x0 += 1.0;
        fx = 0.0;
    }
    let mut y0 = y.floor();
    let mut fy = y - y0;
    if fy < 1e-9 {
        fy = 0.0;
    } else if fy > 1.0 - 1e-9 {
        y0 += 1.0;
        fy = 0.0;
    }

    let wrap = |c: i64| -> usize { c.rem_euclid(w as i64) as usize };
    let clamp_row = |r: i64| -> usize { r.clamp(0, h as i64 - 1) as usize };

    match kernel {
        ResampleKernel::Nearest => {
            let ci = wrap((x0 + if fx >= 0.5 { 1.0 } else { 0.0 }) as i64);
            let ri = clamp_row((y0 + if fy >= 0.5 { 1.0 } else { 0.0 }) as i64);
            for (ch, o) in out.iter_mut().enumerate() {
                *o = image.at(ci, ri, ch);
            }
        }
        ResampleKernel::Bilinear => {
            let c0 = wrap(x0 as i64);
            let c1 = wrap(x0 as i64 + 1);
            let r0 = clamp_row(y0 as i64);
            let r1 = clamp_row(y0 as i64 + 1);
            for (ch, o) in out.iter_mut().enumerate() {
                let top = image.at(c0, r0, ch) as f64 * (1.0 - fx) + image.at(c1, r0, ch) as f64 * fx;
                let bot = image.at(c0, r1, ch) as f64 * (1.0 - fx) + image.at(c1, r1, ch) as f64 * fx;
                *o = (top * (1.0 - fy) + bot * fy) as f32;
            }
        }
    }
}

/// Rotate the sphere: output pixel at direction ω samples the input at R⁻¹·ω.
pub fn rotate_equirect(
    image: &EquirectImage,
    rotation: &[[f64; 3]; 3],
    kernel: ResampleKernel,
) -> Result<EquirectImage> {
    check_rotation(rotation)?;
    let grid = image.grid;
    let mut out = EquirectImage::zeros(grid, image.channels);
    let channels = image.channels;
    let width = grid.width;

    use rayon::prelude::*;
    out.samples
        .par_chunks_mut(width * channels)
        .enumerate()
        .for_each(|(row, row_samples)| {
            let mut px = vec![0.0f32; channels];
            for col in 0..width {
                let dir = pixel_to_direction(grid, col as f64 + 0.5, row as f64 + 0.5)
                    .expect("pixel center in range");
                let src = mat_t_mul(rotation, dir.to_unit_vector());
                let src_dir = SphericalDirection::from_vector(src).expect("unit vector");
                let (u, v) = direction_to_pixel(grid, src_dir);
                sample_image(image, u, v, kernel, &mut px);
                row_samples[col * channels..(col + 1) * channels].copy_from_slice(&px);
            }
        });
    Ok(out)
}

/// One 3D point per valid-depth pixel, in the rig frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: [f32; 3],
    pub color: Option<[u8; 3]>,
}

pub fn depth_to_pointcloud(
    grid: EquirectGrid,
    depth: &DepthMap,
    color: Option<&EquirectImage>,
) -> Result<Vec<CloudPoint>> {
    if depth.grid != grid {
        return Err(Error::domain("depth map grid does not match"));
    }
    if let Some(img) = color {
        if img.grid != grid {
            return Err(Error::domain("color image grid does not match"));
        }
    }
    let mut points = Vec::new();
    for row in 0..grid.height {
        for col in 0..grid.width {
            let d = depth.at(col, row);
            if !is_valid(d) {
                continue;
            }
            let dir = pixel_to_direction(grid, col as f64 + 0.5, row as f64 + 0.5)?;
            let unit = dir.to_unit_vector();
            let position = [
                (d as f64 * unit[0]) as f32,
                (d as f64 * unit[1]) as f32,
                (d as f64 * unit[2]) as f32,
            ];
            let color = color.map(|img| {
                let mut rgb = [0u8; 3];
                for (ch, c) in rgb.iter_mut().enumerate() {
                    let s = if img.channels >= 3 {
                        img.at(col, row, ch)
                    } else {
                        img.at(col, row, 0)
                    };
                    *c = (s.clamp(0.0, 1.0) * 255.0).round() as u8;
                }
                rgb
            });
            points.push(CloudPoint { position, color });
        }
    }
    Ok(points)
}
