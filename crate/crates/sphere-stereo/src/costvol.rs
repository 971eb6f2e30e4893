//! Angular cost volume built by sub-pixel vertical shifting of the
//! non-reference view. Disparity levels advance in degree units; shifting
//! uses a 7-tap interpolating kernel with replicate padding, applied per
//! channel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{EquirectGrid, EquirectImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMetric {
    Sad,
    Zncc,
    Census,
}

impl std::str::FromStr for CostMetric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sad" => Ok(CostMetric::Sad),
            "zncc" => Ok(CostMetric::Zncc),
            "census" => Ok(CostMetric::Census),
            _ => Err(format!("unknown cost metric '{s}' (want sad, zncc, or census)")),
        }
    }
}

impl std::fmt::Display for CostMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CostMetric::Sad => "sad",
            CostMetric::Zncc => "zncc",
            CostMetric::Census => "census",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Degrees of angular disparity per level.
    pub step_deg: f64,
    pub num_levels: usize,
    pub metric: CostMetric,
    pub window_radius: usize,
    /// Widen windows toward the poles to counter equirectangular stretching.
    pub polar_adaptive: bool,
    /// Support of the shifting filter; fixed at 7.
    pub taps: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            step_deg: 1.0 / 3.0,
            num_levels: 192,
            metric: CostMetric::Sad,
            window_radius: 3,
            polar_adaptive: true,
            taps: 7,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_deg.is_finite() && self.step_deg > 0.0) {
            return Err(Error::domain("step_deg must be positive"));
        }
        if self.num_levels == 0 {
            return Err(Error::domain("num_levels must be at least 1"));
        }
        if self.step_deg * self.num_levels as f64 >= 180.0 {
            return Err(Error::domain(format!(
                "disparity range {}° exceeds 180°",
                self.step_deg * self.num_levels as f64
            )));
        }
        if self.window_radius == 0 {
            return Err(Error::domain("window_radius must be at least 1"));
        }
        if self.taps % 2 == 0 || self.taps == 0 {
            return Err(Error::domain("taps must be odd"));
        }
        Ok(())
    }

    pub fn level_rad(&self, k: usize) -> f64 {
        k as f64 * self.step_deg.to_radians()
    }
}

/// D×H×W matching costs at explicit angular disparity levels.
#[derive(Debug, Clone)]
pub struct CostVolume {
    pub grid: EquirectGrid,
    pub levels: Vec<f64>,
    pub step_deg: f64,
    /// [level][row][col], row-major per level.
    pub costs: Vec<f32>,
}

impl CostVolume {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    #[inline]
    pub fn at(&self, level: usize, col: usize, row: usize) -> f32 {
        self.costs[(level * self.grid.height + row) * self.grid.width + col]
    }

    pub fn level_slice(&self, level: usize) -> &[f32] {
        let n = self.grid.len();
        &self.costs[level * n..(level + 1) * n]
    }

    /// Debug dump: "CVOL1 W H D step_deg" header line, then raw LE f32.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!(
            "CVOL1 {} {} {} {}\n",
            self.grid.width,
            self.grid.height,
            self.num_levels(),
            self.step_deg
        )
        .into_bytes();
        for &c in &self.costs {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }
}

/// Interpolation kernel for [`shift_vertical_with_kernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftKernel {
    /// Windowed sinc, 7 taps; the default shifting filter.
    Lanczos3,
    /// 2-tap linear interpolation (testing aid).
    Linear,
}

fn lanczos3(x: f64) -> f64 {
    if x.abs() >= 3.0 {
        return 0.0;
    }
    if x == 0.0 {
        return 1.0;
    }
    let px = std::f64::consts::PI * x;
    3.0 * px.sin() * (px / 3.0).sin() / (px * px)
}

/// Shift image content vertically by `delta_polar` radians: output at
/// row-angle θ samples the input at θ + delta_polar along the same column.
/// Rows beyond the boundary replicate the edge row.
pub fn shift_vertical(image: &EquirectImage, delta_polar: f64) -> Result<EquirectImage> {
    shift_vertical_with_kernel(image, delta_polar, ShiftKernel::Lanczos3)
}

pub fn shift_vertical_with_kernel(
    image: &EquirectImage,
    delta_polar: f64,
    kernel: ShiftKernel,
) -> Result<EquirectImage> {
    if !(delta_polar.is_finite() && delta_polar.abs() < std::f64::consts::PI) {
        return Err(Error::domain(format!(
            "vertical shift {delta_polar} must satisfy |delta| < pi"
        )));
    }
    let h = image.grid.height;
    let w = image.grid.width;
    let channels = image.channels;
    // polar decreases as the row index grows, so +delta pulls from rows above
    let row_offset = delta_polar * h as f64 / std::f64::consts::PI;

    let (weights, base_rows) = kernel_weights(kernel, row_offset, h);

    let mut out = EquirectImage::zeros(image.grid, channels);
    out.samples
        .chunks_mut(w * channels)
        .enumerate()
        .for_each(|(j, row_out)| {
            // source rows, replicate-clamped
            let srcs: Vec<usize> = base_rows
                .iter()
                .map(|&dr| (j as i64 + dr).clamp(0, h as i64 - 1) as usize)
                .collect();
            for col in 0..w {
                for ch in 0..channels {
                    let mut acc = 0.0f64;
                    for (wgt, &sr) in weights.iter().zip(&srcs) {
                        acc += wgt * image.at(col, sr, ch) as f64;
                    }
                    row_out[col * channels + ch] = acc as f32;
                }
            }
        });
    Ok(out)
}

/// Tap weights and relative source rows for a given fractional row offset.
/// Offsets within 1e-9 of an integer collapse to an exact row copy.
fn kernel_weights(kernel: ShiftKernel, row_offset: f64, _height: usize) -> (Vec<f64>, Vec<i64>) {
    // source position in row units relative to the output row
    let y = -row_offset;
    let nearest = y.round();
    if (y - nearest).abs() < 1e-9 {
        return (vec![1.0], vec![nearest as i64]);
    }
    match kernel {
        ShiftKernel::Linear => {
            let base = y.floor();
            let frac = y - base;
            (vec![1.0 - frac, frac], vec![base as i64, base as i64 + 1])
        }
        ShiftKernel::Lanczos3 => {
            let center = nearest as i64;
            let mut weights = Vec::with_capacity(7);
            let mut rows = Vec::with_capacity(7);
            let mut sum = 0.0;
            for t in center - 3..=center + 3 {
                let wgt = lanczos3(y - t as f64);
                weights.push(wgt);
                rows.push(t);
                sum += wgt;
            }
            for wgt in &mut weights {
                *wgt /= sum;
            }
            (weights, rows)
        }
    }
}

/// 5×5 census descriptor per pixel on a single-channel image: bit set when
/// the neighbor is darker than the center. Horizontal wrap, vertical clamp.
pub fn census_transform(image: &EquirectImage) -> Vec<u32> {
    assert_eq!(image.channels, 1);
    let w = image.grid.width;
    let h = image.grid.height;
    let mut out = vec![0u32; w * h];
    for row in 0..h {
        for col in 0..w {
            let center = image.at(col, row, 0);
            let mut bits = 0u32;
            let mut bit = 0;
            for dy in -2i64..=2 {
                let r = (row as i64 + dy).clamp(0, h as i64 - 1) as usize;
                for dx in -2i64..=2 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let c = (col as i64 + dx).rem_euclid(w as i64) as usize;
                    if image.at(c, r, 0) < center {
                        bits |= 1 << bit;
                    }
                    bit += 1;
                }
            }
            out[row * w + col] = bits;
        }
    }
    out
}

/// Horizontal window half-width at each row. With `polar_adaptive`, rows near
/// the poles widen as 1/sin θ, capped at 4r; θ is floored at the 5% crop
/// boundary angle.
pub fn window_half_widths(grid: EquirectGrid, radius: usize, polar_adaptive: bool) -> Vec<usize> {
    let h = grid.height;
    if !polar_adaptive {
        return vec![radius; h];
    }
    let crop_row = (0.05 * h as f64).round() as usize;
    let theta_min = std::f64::consts::PI * (1.0 - (crop_row as f64 + 0.5) / h as f64);
    let sin_floor = theta_min.sin().min((std::f64::consts::PI - theta_min).sin());
    (0..h)
        .map(|j| {
            let theta = std::f64::consts::PI * (1.0 - (j as f64 + 0.5) / h as f64);
            let s = theta.sin().max(sin_floor);
            let hw = (radius as f64 / s).ceil() as usize;
            hw.min(4 * radius)
        })
        .collect()
}

/// Which view is held fixed while the other is shifted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceView {
    /// Reference = top; the bottom view is sampled at θ + d.
    Top,
    /// Reference = bottom; the top view is sampled at θ − d.
    Bottom,
}

/// Per-level matching inputs after shifting and metric-specific preprocessing.
struct LevelInputs<'a> {
    reference: &'a EquirectImage,
    shifted: &'a EquirectImage,
    ref_census: Option<&'a [u32]>,
    shifted_census: Option<&'a [u32]>,
}

pub fn build_cost_volume(
    top: &EquirectImage,
    bottom: &EquirectImage,
    cfg: &MatchConfig,
) -> Result<CostVolume> {
    build_cost_volume_for(top, bottom, cfg, ReferenceView::Top)
}

/// Cost volume with a selectable reference view (the bottom-reference volume
/// backs the top-bottom consistency check).
pub fn build_cost_volume_for(
    top: &EquirectImage,
    bottom: &EquirectImage,
    cfg: &MatchConfig,
    reference: ReferenceView,
) -> Result<CostVolume> {
    cfg.validate()?;
    if top.grid != bottom.grid {
        return Err(Error::domain("top and bottom grids differ"));
    }
    if top.channels != bottom.channels {
        return Err(Error::domain("top and bottom channel counts differ"));
    }
    let grid = top.grid;
    let use_luma = matches!(cfg.metric, CostMetric::Zncc | CostMetric::Census);
    let (ref_img, other_img) = match reference {
        ReferenceView::Top => (top, bottom),
        ReferenceView::Bottom => (bottom, top),
    };
    let ref_proc = if use_luma { ref_img.to_luma() } else { ref_img.clone() };
    let other_proc = if use_luma { other_img.to_luma() } else { other_img.clone() };
    let ref_census = matches!(cfg.metric, CostMetric::Census).then(|| census_transform(&ref_proc));
    let half_widths = window_half_widths(grid, cfg.window_radius, cfg.polar_adaptive);

    let n = grid.len();
    let num_levels = cfg.num_levels;
    let mut costs = vec![0.0f32; n * num_levels];
    let levels: Vec<f64> = (0..num_levels).map(|k| cfg.level_rad(k)).collect();

    costs
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(k, slice)| -> Result<()> {
            let delta = match reference {
                ReferenceView::Top => levels[k],
                ReferenceView::Bottom => -levels[k],
            };
            let shifted = shift_vertical(&other_proc, delta)?;
            let shifted_census =
                matches!(cfg.metric, CostMetric::Census).then(|| census_transform(&shifted));
            let inputs = LevelInputs {
                reference: &ref_proc,
                shifted: &shifted,
                ref_census: ref_census.as_deref(),
                shifted_census: shifted_census.as_deref(),
            };
            fill_level_costs(&inputs, cfg, &half_widths, slice);
            Ok(())
        })?;

    Ok(CostVolume {
        grid,
        levels,
        step_deg: cfg.step_deg,
        costs,
    })
}

fn fill_level_costs(inputs: &LevelInputs, cfg: &MatchConfig, half_widths: &[usize], out: &mut [f32]) {
    let grid = inputs.reference.grid;
    for row in 0..grid.height {
        let hw = half_widths[row];
        for col in 0..grid.width {
            out[row * grid.width + col] = window_cost(inputs, cfg, col, row, hw);
        }
    }
}

/// Matching cost of a single pixel's window; fixed traversal order
/// (rows, then columns, then channels) for bit-determinism.
fn window_cost(inputs: &LevelInputs, cfg: &MatchConfig, col: usize, row: usize, hw: usize) -> f32 {
    let a = inputs.reference;
    let b = inputs.shifted;
    let grid = a.grid;
    let r = cfg.window_radius as i64;
    let hw = hw as i64;
    match cfg.metric {
        CostMetric::Sad => {
            let mut acc = 0.0f64;
            let mut count = 0u32;
            for dy in -r..=r {
                let y = (row as i64 + dy).clamp(0, grid.height as i64 - 1) as usize;
                for dx in -hw..=hw {
                    let x = (col as i64 + dx).rem_euclid(grid.width as i64) as usize;
                    for ch in 0..a.channels {
                        acc += (a.at(x, y, ch) as f64 - b.at(x, y, ch) as f64).abs();
                        count += 1;
                    }
                }
            }
            (acc / count as f64) as f32
        }
        CostMetric::Zncc => {
            let mut sum_a = 0.0f64;
            let mut sum_b = 0.0f64;
            let mut count = 0u32;
            for dy in -r..=r {
                let y = (row as i64 + dy).clamp(0, grid.height as i64 - 1) as usize;
                for dx in -hw..=hw {
                    let x = (col as i64 + dx).rem_euclid(grid.width as i64) as usize;
                    sum_a += a.at(x, y, 0) as f64;
                    sum_b += b.at(x, y, 0) as f64;
                    count += 1;
                }
            }
            let mean_a = sum_a / count as f64;
            let mean_b = sum_b / count as f64;
            let mut cov = 0.0f64;
            let mut var_a = 0.0f64;
            let mut var_b = 0.0f64;
            for dy in -r..=r {
                let y = (row as i64 + dy).clamp(0, grid.height as i64 - 1) as usize;
                for dx in -hw..=hw {
                    let x = (col as i64 + dx).rem_euclid(grid.width as i64) as usize;
                    let da = a.at(x, y, 0) as f64 - mean_a;
                    let db = b.at(x, y, 0) as f64 - mean_b;
                    cov += da * db;
                    var_a += da * da;
                    var_b += db * db;
                }
            }
            let eps = 1e-12;
            if var_a < eps && var_b < eps {
                0.0
            } else if var_a < eps || var_b < eps {
                1.0
            } else {
                let zncc = cov / (var_a.sqrt() * var_b.sqrt());
                ((1.0 - zncc).max(0.0)) as f32
            }
        }
        CostMetric::Census => {
            let ca = inputs.ref_census.expect("census precomputed");
            let cb = inputs.shifted_census.expect("census precomputed");
            let mut acc = 0.0f64;
            let mut count = 0u32;
            for dy in -r..=r {
                let y = (row as i64 + dy).clamp(0, grid.height as i64 - 1) as usize;
                for dx in -hw..=hw {
                    let x = (col as i64 + dx).rem_euclid(grid.width as i64) as usize;
                    let ham = (ca[y * grid.width + x] ^ cb[y * grid.width + x]).count_ones();
                    acc += ham as f64 / 24.0;
                    count += 1;
                }
            }
            (acc / count as f64) as f32
        }
    }
}

/// Exhaustive per-pixel matching used by the brute-force oracle: evaluates the
/// same shifted views and window costs without assembling a volume.
pub fn bruteforce_costs_at(
    top: &EquirectImage,
    bottom: &EquirectImage,
    cfg: &MatchConfig,
) -> Result<Vec<Vec<f32>>> {
    cfg.validate()?;
    if top.grid != bottom.grid {
        return Err(Error::domain("top and bottom grids differ"));
    }
    let grid = top.grid;
    let use_luma = matches!(cfg.metric, CostMetric::Zncc | CostMetric::Census);
    let ref_proc = if use_luma { top.to_luma() } else { top.clone() };
    let other_proc = if use_luma { bottom.to_luma() } else { bottom.clone() };
    let ref_census = matches!(cfg.metric, CostMetric::Census).then(|| census_transform(&ref_proc));
    let half_widths = window_half_widths(grid, cfg.window_radius, cfg.polar_adaptive);

    let mut per_pixel = vec![vec![0.0f32; cfg.num_levels]; grid.len()];
    for k in 0..cfg.num_levels {
        let shifted = shift_vertical(&other_proc, cfg.level_rad(k))?;
        let shifted_census =
            matches!(cfg.metric, CostMetric::Census).then(|| census_transform(&shifted));
        let inputs = LevelInputs {
            reference: &ref_proc,
            shifted: &shifted,
            ref_census: ref_census.as_deref(),
            shifted_census: shifted_census.as_deref(),
        };
        for row in 0..grid.height {
            for col in 0..grid.width {
                per_pixel[row * grid.width + col][k] =
                    window_cost(&inputs, cfg, col, row, half_widths[row]);
            }
        }
    }
    Ok(per_pixel)
}
