//! Synthetic ground-truth generator: ray-casts primitive scenes to
//! equirectangular RGB + depth from both rig cameras, with exact angular
//! disparity and an occlusion-aware validity mask.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{
    depth_to_disparity, pixel_to_direction, CameraRig, DepthMap, DisparityMap, EquirectGrid,
    EquirectImage, ScalarMap, INVALID,
};

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add_scaled(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

const RAY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Plane { point: Vec3, normal: Vec3 },
    Sphere { center: Vec3, radius: f64 },
    AxisBox { min: Vec3, max: Vec3 },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        match self {
            Primitive::Plane { normal, .. } => {
                if (norm(*normal) - 1.0).abs() > 1e-6 {
                    return Err(Error::domain("plane normal must be unit length"));
                }
            }
            Primitive::Sphere { radius, .. } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::domain("sphere radius must be positive"));
                }
            }
            Primitive::AxisBox { min, max } => {
                if !(0..3).all(|i| min[i] < max[i]) {
                    return Err(Error::domain("box min must be componentwise below max"));
                }
            }
        }
        Ok(())
    }

    /// Nearest intersection distance t > RAY_EPS along a unit-direction ray.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        match *self {
            Primitive::Plane { point, normal } => {
                let denom = dot(dir, normal);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = dot(sub(point, origin), normal) / denom;
                (t > RAY_EPS).then_some(t)
            }
            Primitive::Sphere { center, radius } => {
                let oc = sub(origin, center);
                let b = dot(oc, dir);
                let c = dot(oc, oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = -b - sq;
                if t0 > RAY_EPS {
                    return Some(t0);
                }
                let t1 = -b + sq;
                (t1 > RAY_EPS).then_some(t1)
            }
            Primitive::AxisBox { min, max } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for i in 0..3 {
                    if dir[i].abs() < 1e-15 {
                        if origin[i] < min[i] || origin[i] > max[i] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / dir[i];
                    let (mut t0, mut t1) = ((min[i] - origin[i]) * inv, (max[i] - origin[i]) * inv);
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    t_near = t_near.max(t0);
                    t_far = t_far.min(t1);
                    if t_near > t_far {
                        return None;
                    }
                }
                if t_near > RAY_EPS {
                    Some(t_near)
                } else {
                    (t_far > RAY_EPS).then_some(t_far)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Texture {
    Solid { color: [f32; 3] },
    Checker { scale: f64, color1: [f32; 3], color2: [f32; 3] },
    /// Seeded lattice value noise, trilinear lattice interpolation.
    ValueNoise { seed: u64, scale: f64 },
}

fn lattice_hash(seed: u64, ix: i64, iy: i64, iz: i64) -> f64 {
    let mut h = seed
        ^ (ix as u64).wrapping_mul(0x9e3779b97f4a7c15)
        ^ (iy as u64).wrapping_mul(0xc2b2ae3d27d4eb4f)
        ^ (iz as u64).wrapping_mul(0x165667b19e3779f9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51afd7ed558ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ceb9fe1a85ec53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

impl Texture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Texture::Checker { scale, .. } | Texture::ValueNoise { scale, .. } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::domain("texture scale must be positive"));
                }
            }
            Texture::Solid { .. } => {}
        }
        Ok(())
    }

    pub fn albedo(&self, p: Vec3) -> [f32; 3] {
        match *self {
            Texture::Solid { color } => color,
            Texture::Checker { scale, color1, color2 } => {
                let parity = (p[0] / scale).floor() as i64
                    + (p[1] / scale).floor() as i64
                    + (p[2] / scale).floor() as i64;
                if parity.rem_euclid(2) == 0 {
                    color1
                } else {
                    color2
                }
            }
            Texture::ValueNoise { seed, scale } => {
                let x = p[0] / scale;
                let y = p[1] / scale;
                let z = p[2] / scale;
                let (ix, iy, iz) = (x.floor() as i64, y.floor() as i64, z.floor() as i64);
                let (fx, fy, fz) = (x - ix as f64, y - iy as f64, z - iz as f64);
                let mut v = 0.0;
                for (dz, wz) in [(0i64, 1.0 - fz), (1, fz)] {
                    for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
                        for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                            v += wx * wy * wz * lattice_hash(seed, ix + dx, iy + dy, iz + dz);
                        }
                    }
                }
                let g = v as f32;
                [g, g, g]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub primitive: Primitive,
    pub texture: Texture,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        for o in &self.objects {
            o.primitive.validate()?;
            o.texture.validate()?;
        }
        Ok(())
    }

    fn nearest_hit(&self, origin: Vec3, dir: Vec3) -> Option<(f64, &SceneObject)> {
        let mut best: Option<(f64, &SceneObject)> = None;
        for obj in &self.objects {
            if let Some(t) = obj.primitive.intersect(origin, dir) {
                if best.map_or(true, |(bt, _)| t < bt) {
                    best = Some((t, obj));
                }
            }
        }
        best
    }
}

/// Unlit albedo render plus along-ray depth from one camera center.
pub fn render_equirect(
    scene: &Scene,
    camera_center: Vec3,
    grid: EquirectGrid,
) -> Result<(EquirectImage, DepthMap)> {
    scene.validate()?;
    let w = grid.width;
    let mut rgb = EquirectImage::zeros(grid, 3);
    let mut depth = ScalarMap::invalid(grid);

    let rgb_rows: Vec<_> = rgb.samples.chunks_mut(w * 3).collect();
    let depth_rows: Vec<_> = depth.values.chunks_mut(w).collect();
    rgb_rows
        .into_par_iter()
        .zip(depth_rows)
        .enumerate()
        .for_each(|(row, (rgb_row, depth_row))| {
            for col in 0..w {
                let dir = pixel_to_direction(grid, col as f64 + 0.5, row as f64 + 0.5)
                    .expect("pixel center in range")
                    .to_unit_vector();
                if let Some((t, obj)) = scene.nearest_hit(camera_center, dir) {
                    let p = add_scaled(camera_center, dir, t);
                    let c = obj.texture.albedo(p);
                    rgb_row[col * 3..col * 3 + 3].copy_from_slice(&c);
                    depth_row[col] = t as f32;
                } else {
                    depth_row[col] = INVALID;
                }
            }
        });
    Ok((rgb, depth))
}

/// A rendered stereo pair with exact disparity ground truth.
#[derive(Debug, Clone)]
pub struct RenderedPair {
    pub top_rgb: EquirectImage,
    pub bottom_rgb: EquirectImage,
    pub top_depth: DepthMap,
    pub gt_disparity: DisparityMap,
    /// True where the top-view correspondence is unoccluded in the bottom view.
    pub gt_valid: Vec<bool>,
}

pub fn render_pair(scene: &Scene, rig: &CameraRig, grid: EquirectGrid) -> Result<RenderedPair> {
    let top_center = rig.top_center();
    let bottom_center = rig.bottom_center();
    let (top_rgb, top_depth) = render_equirect(scene, top_center, grid)?;
    let (bottom_rgb, _bottom_depth) = render_equirect(scene, bottom_center, grid)?;

    let w = grid.width;
    let mut gt_disparity = ScalarMap::invalid(grid);
    let mut gt_valid = vec![false; grid.len()];

    let disp_rows: Vec<_> = gt_disparity.values.chunks_mut(w).collect();
    let valid_rows: Vec<_> = gt_valid.chunks_mut(w).collect();
    disp_rows
        .into_par_iter()
        .zip(valid_rows)
        .enumerate()
        .for_each(|(row, (disp_row, valid_row))| {
            for col in 0..w {
                let depth = top_depth.at(col, row);
                if !depth.is_finite() {
                    continue;
                }
                let dir = pixel_to_direction(grid, col as f64 + 0.5, row as f64 + 0.5)
                    .expect("pixel center in range");
                let Ok(d) = depth_to_disparity(rig, dir.polar_rad, depth as f64) else {
                    continue;
                };
                disp_row[col] = d as f32;
                // occlusion check: re-cast from the bottom camera toward the
                // same 3D point and require distance agreement
                let p = add_scaled(top_center, dir.to_unit_vector(), depth as f64);
                let to_p = sub(p, bottom_center);
                let dist = norm(to_p);
                if dist <= 0.0 {
                    continue;
                }
                let bdir = [to_p[0] / dist, to_p[1] / dist, to_p[2] / dist];
                if let Some((t, _)) = scene.nearest_hit(bottom_center, bdir) {
                    if (t - dist).abs() <= 1e-6 * depth as f64 {
                        valid_row[col] = true;
                    }
                }
            }
        });

    Ok(RenderedPair {
        top_rgb,
        bottom_rgb,
        top_depth,
        gt_disparity,
        gt_valid,
    })
}

// ---------------------------------------------------------------------------
// Scene description files: the flat key-value syntax extended with repeated
// "primitive = ..." lines. Each primitive line is
//   primitive = <plane|sphere|box> key=value ...
// with vectors as comma-separated triples, e.g.
//   primitive = sphere center=0,0,1 radius=3 texture=noise seed=7 scale=0.4
// Texture keys: texture=solid|checker|noise, color=, color1=, color2=,
// scale=, seed=.
// ---------------------------------------------------------------------------

pub fn parse_scene(text: &str) -> Result<Scene> {
    let mut scene = Scene::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", lineno + 1), "expected key = value"))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "primitive" => scene.objects.push(parse_primitive_line(value, lineno + 1)?),
            "name" => {}
            other => {
                return Err(Error::config(other, "unknown scene key"));
            }
        }
    }
    scene.validate()?;
    Ok(scene)
}

fn parse_vec3(s: &str, what: &str) -> Result<Vec3> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::config(what, format!("expected x,y,z, got '{s}'")));
    }
    let mut v: Vec3 = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        v[i] = p
            .trim()
            .parse()
            .map_err(|_| Error::config(what, format!("bad number '{p}'")))?;
        if !v[i].is_finite() {
            return Err(Error::config(what, "non-finite component"));
        }
    }
    Ok(v)
}

fn parse_color(s: &str, what: &str) -> Result<[f32; 3]> {
    let v = parse_vec3(s, what)?;
    Ok([v[0] as f32, v[1] as f32, v[2] as f32])
}

fn parse_primitive_line(value: &str, lineno: usize) -> Result<SceneObject> {
    let mut words = value.split_whitespace();
    let kind = words
        .next()
        .ok_or_else(|| Error::config(format!("line {lineno}"), "empty primitive"))?;
    let mut fields = std::collections::BTreeMap::new();
    for w in words {
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {lineno}"), format!("expected key=value, got '{w}'")))?;
        if fields.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::config(k, "duplicate primitive field"));
        }
    }
    let mut take = |k: &str| fields.remove(k);
    let num = |s: Option<String>, k: &str| -> Result<f64> {
        let s = s.ok_or_else(|| Error::config(k, "missing field"))?;
        let v: f64 = s.parse().map_err(|_| Error::config(k, format!("bad number '{s}'")))?;
        if !v.is_finite() {
            return Err(Error::config(k, "non-finite value"));
        }
        Ok(v)
    };

    let primitive = match kind {
        "plane" => {
            let point = parse_vec3(&take("point").ok_or_else(|| Error::config("point", "missing field"))?, "point")?;
            let normal = parse_vec3(&take("normal").ok_or_else(|| Error::config("normal", "missing field"))?, "normal")?;
            let n = norm(normal);
            if n < 1e-12 {
                return Err(Error::config("normal", "zero normal"));
            }
            Primitive::Plane {
                point,
                normal: [normal[0] / n, normal[1] / n, normal[2] / n],
            }
        }
        "sphere" => Primitive::Sphere {
            center: parse_vec3(&take("center").ok_or_else(|| Error::config("center", "missing field"))?, "center")?,
            radius: num(take("radius"), "radius")?,
        },
        "box" => Primitive::AxisBox {
            min: parse_vec3(&take("min").ok_or_else(|| Error::config("min", "missing field"))?, "min")?,
            max: parse_vec3(&take("max").ok_or_else(|| Error::config("max", "missing field"))?, "max")?,
        },
        other => return Err(Error::config("primitive", format!("unknown primitive '{other}'"))),
    };

    let tex_kind = take("texture").unwrap_or_else(|| "solid".into());
    let texture = match tex_kind.as_str() {
        "solid" => Texture::Solid {
            color: take("color")
                .map(|c| parse_color(&c, "color"))
                .transpose()?
                .unwrap_or([0.5, 0.5, 0.5]),
        },
        "checker" => Texture::Checker {
            scale: num(take("scale"), "scale")?,
            color1: take("color1")
                .map(|c| parse_color(&c, "color1"))
                .transpose()?
                .unwrap_or([0.9, 0.9, 0.9]),
            color2: take("color2")
                .map(|c| parse_color(&c, "color2"))
                .transpose()?
                .unwrap_or([0.1, 0.1, 0.1]),
        },
        "noise" => Texture::ValueNoise {
            seed: num(take("seed"), "seed")? as u64,
            scale: num(take("scale"), "scale")?,
        },
        other => return Err(Error::config("texture", format!("unknown texture '{other}'"))),
    };

    if let Some((k, _)) = fields.into_iter().next() {
        return Err(Error::config(k, "unknown primitive field"));
    }

    Ok(SceneObject { primitive, texture })
}

pub fn load_scene(path: impl AsRef<std::path::Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text)
}

// ---------------------------------------------------------------------------
// Built-in test scene suite. Shipped as files under scenes/ in the repo; the
// constructors here are the source of truth for tests and the ablation run.
// ---------------------------------------------------------------------------

pub const SCENE_NAMES: [&str; 5] = ["room", "sphere3", "floorplane", "occluders", "noise-room"];

pub fn builtin_scene(name: &str) -> Option<Scene> {
    let text = builtin_scene_text(name)?;
    Some(parse_scene(text).expect("builtin scenes are valid"))
}

pub fn builtin_scene_text(name: &str) -> Option<&'static str> {
    Some(match name {
        // inward-facing 6x6x3 m box with checker walls
        "room" => {
            "name = room\n\
             primitive = box min=-3,-3,-1.5 max=3,3,1.5 texture=checker scale=0.31 color1=0.9,0.85,0.8 color2=0.15,0.2,0.3\n"
        }
        "sphere3" => {
            "name = sphere3\n\
             primitive = sphere center=0,0,0 radius=3 texture=noise seed=7 scale=0.35\n"
        }
        // checker floor bounded by a textured dome; an unbounded plane has an
        // unmatchable far field at any finite step size
        "floorplane" => {
            "name = floorplane\n\
             primitive = plane point=0,0,-1 normal=0,0,1 texture=checker scale=0.4 color1=0.95,0.9,0.6 color2=0.2,0.25,0.5\n\
             primitive = sphere center=0,0,0 radius=8 texture=noise seed=3 scale=0.45\n"
        }
        "occluders" => {
            "name = occluders\n\
             primitive = box min=-4,-4,-1.5 max=4,4,2 texture=noise seed=11 scale=0.5\n\
             primitive = sphere center=1.6,0.4,0 radius=0.5 texture=checker scale=0.17 color1=0.85,0.3,0.2 color2=0.95,0.9,0.85\n\
             primitive = box min=-1.2,-2.2,-1.0 max=-0.4,-1.4,0.6 texture=noise seed=23 scale=0.21\n"
        }
        "noise-room" => {
            "name = noise-room\n\
             primitive = box min=-3,-3,-1.5 max=3,3,1.5 texture=noise seed=42 scale=0.27\n\
             primitive = sphere center=-1.4,1.2,-0.2 radius=0.6 texture=noise seed=5 scale=0.15\n"
        }
        _ => return None,
    })
}

pub fn builtin_suite() -> Vec<(String, Scene)> {
    SCENE_NAMES
        .iter()
        .map(|&n| (n.to_string(), builtin_scene(n).unwrap()))
        .collect()
}
