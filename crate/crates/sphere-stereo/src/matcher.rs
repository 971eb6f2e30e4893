//! Cost aggregation and disparity selection: SGM-style path aggregation with
//! longitude wrap, winner-take-all with parabola sub-pixel refinement, the
//! top-bottom consistency check, and a brute-force oracle.

use rayon::prelude::*;

use crate::costvol::{self, CostVolume, MatchConfig};
use crate::error::{Error, Result};
use crate::geom::{DisparityMap, EquirectImage, ScalarMap, INVALID};

/// The eight scan directions as (drow, dcol).
pub const ALL_PATHS: [(i32, i32); 8] = [
    (0, 1),
    (0, -1),
    (1, 0),
    (-1, 0),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SgmParams {
    pub p1: f32,
    pub p2: f32,
    pub paths: Vec<(i32, i32)>,
}

impl Default for SgmParams {
    fn default() -> Self {
        SgmParams {
            p1: 0.03,
            p2: 0.5,
            paths: ALL_PATHS.to_vec(),
        }
    }
}

impl SgmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p1 >= 0.0 && self.p2 >= self.p1) {
            return Err(Error::domain("need p2 >= p1 >= 0"));
        }
        if self.paths.is_empty() {
            return Err(Error::domain("need at least one aggregation path"));
        }
        for p in &self.paths {
            if !ALL_PATHS.contains(p) {
                return Err(Error::domain(format!("invalid path direction {p:?}")));
            }
        }
        Ok(())
    }
}

/// One step of the SGM recurrence:
/// L(d) = C(d) + min(Lp(d), Lp(d∓1)+P1, min Lp + P2) − min Lp.
#[inline]
fn sgm_step(prev: &[f32], cost: &[f32], p1: f32, p2: f32, out: &mut [f32]) {
    let d_count = prev.len();
    let mut min_prev = f32::INFINITY;
    for &v in prev {
        min_prev = min_prev.min(v);
    }
    for d in 0..d_count {
        let mut best = prev[d];
        if d > 0 {
            best = best.min(prev[d - 1] + p1);
        }
        if d + 1 < d_count {
            best = best.min(prev[d + 1] + p1);
        }
        best = best.min(min_prev + p2);
        out[d] = cost[d] + best - min_prev;
    }
}

// Horizontal rows are rings: keep scanning around the ring until the state
// stops changing so the result is independent of the seam position.
const MAX_RING_PASSES: usize = 16;

/// Sum of per-path aggregated volumes; same shape as the input.
pub fn aggregate_sgm(vol: &CostVolume, params: &SgmParams) -> Result<CostVolume> {
    params.validate()?;
    let w = vol.grid.width;
    let h = vol.grid.height;
    let d_count = vol.num_levels();
    // transpose to pixel-major [H][W][D] for contiguous per-pixel cost slices
    let mut pixel_costs = vec![0.0f32; w * h * d_count];
    for k in 0..d_count {
        let slice = vol.level_slice(k);
        for (idx, &c) in slice.iter().enumerate() {
            pixel_costs[idx * d_count + k] = c;
        }
    }

    let mut total = vec![0.0f32; w * h * d_count];
    let mut path_buf = vec![0.0f32; w * h * d_count];
    for &(dr, dc) in &params.paths {
        path_buf.iter_mut().for_each(|v| *v = 0.0);
        if dr == 0 {
            aggregate_horizontal(&pixel_costs, w, h, d_count, dc, params, &mut path_buf);
        } else {
            aggregate_scan(&pixel_costs, w, h, d_count, dr, dc, params, &mut path_buf);
        }
        for (t, p) in total.iter_mut().zip(&path_buf) {
            *t += p;
        }
    }

    // back to level-major layout
    let mut costs = vec![0.0f32; w * h * d_count];
    for idx in 0..w * h {
        for k in 0..d_count {
            costs[k * w * h + idx] = total[idx * d_count + k];
        }
    }
    Ok(CostVolume {
        grid: vol.grid,
        levels: vol.levels.clone(),
        step_deg: vol.step_deg,
        costs,
    })
}

fn aggregate_horizontal(
    pixel_costs: &[f32],
    w: usize,
    _h: usize,
    d_count: usize,
    dc: i32,
    params: &SgmParams,
    out: &mut [f32],
) {
    out.par_chunks_mut(w * d_count)
        .enumerate()
        .for_each(|(row, row_out)| {
            let row_costs = &pixel_costs[row * w * d_count..(row + 1) * w * d_count];
            let order: Vec<usize> = if dc > 0 {
                (0..w).collect()
            } else {
                (0..w).rev().collect()
            };
            // first pass: cold start at the first column of the scan order
            let mut state = vec![0.0f32; w * d_count];
            let first = order[0];
            state[first * d_count..(first + 1) * d_count]
                .copy_from_slice(&row_costs[first * d_count..(first + 1) * d_count]);
            for win in order.windows(2) {
                let (prev, cur) = (win[0], win[1]);
                let (a, b) = split_two(&mut state, prev, cur, d_count);
                sgm_step(a, &row_costs[cur * d_count..(cur + 1) * d_count], params.p1, params.p2, b);
            }
            // further passes wrap around the seam until the state is stable
            let mut scratch = vec![0.0f32; d_count];
            for _ in 0..MAX_RING_PASSES {
                let snapshot = state.clone();
                let mut prev = *order.last().unwrap();
                for &cur in &order {
                    sgm_step(
                        &state[prev * d_count..(prev + 1) * d_count],
                        &row_costs[cur * d_count..(cur + 1) * d_count],
                        params.p1,
                        params.p2,
                        &mut scratch,
                    );
                    state[cur * d_count..(cur + 1) * d_count].copy_from_slice(&scratch);
                    prev = cur;
                }
                if state == snapshot {
                    break;
                }
            }
            row_out.copy_from_slice(&state);
        });
}

/// Disjoint mutable views of two column slots in a row state buffer.
fn split_two(state: &mut [f32], a: usize, b: usize, d: usize) -> (&[f32], &mut [f32]) {
    debug_assert_ne!(a, b);
    if a < b {
        let (lo, hi) = state.split_at_mut(b * d);
        (&lo[a * d..(a + 1) * d], &mut hi[..d])
    } else {
        let (lo, hi) = state.split_at_mut(a * d);
        (&hi[..d], &mut lo[b * d..(b + 1) * d])
    }
}

fn aggregate_scan(
    pixel_costs: &[f32],
    w: usize,
    h: usize,
    d_count: usize,
    dr: i32,
    dc: i32,
    params: &SgmParams,
    out: &mut [f32],
) {
    // Starts are every pixel whose predecessor row is outside the raster;
    // columns wrap, so each line has exactly H pixels.
    let start_row = if dr > 0 { 0usize } else { h - 1 };
    let starts: Vec<usize> = (0..w).collect();
    let results: Vec<Vec<f32>> = starts
        .par_iter()
        .map(|&start_col| {
            let mut line = vec![0.0f32; h * d_count];
            let mut row = start_row as i64;
            let mut col = start_col as i64;
            let mut prev: Option<usize> = None;
            for step in 0..h {
                let idx = row as usize * w + col as usize;
                let cost = &pixel_costs[idx * d_count..(idx + 1) * d_count];
                let seg = step * d_count;
                if let Some(p) = prev {
                    let (before, after) = line.split_at_mut(seg);
                    sgm_step(
                        &before[p * d_count..(p + 1) * d_count],
                        cost,
                        params.p1,
                        params.p2,
                        &mut after[..d_count],
                    );
                } else {
                    line[seg..seg + d_count].copy_from_slice(cost);
                }
                prev = Some(step);
                row += dr as i64;
                col = (col + dc as i64).rem_euclid(w as i64);
            }
            line
        })
        .collect();
    for (start_col, line) in starts.iter().map(|&c| c).zip(results) {
        let mut row = start_row as i64;
        let mut col = start_col as i64;
        for step in 0..h {
            let idx = row as usize * w + col as usize;
            out[idx * d_count..(idx + 1) * d_count]
                .copy_from_slice(&line[step * d_count..(step + 1) * d_count]);
            row += dr as i64;
            col = (col + dc as i64).rem_euclid(w as i64);
        }
    }
}

/// Winner-take-all with parabola sub-pixel refinement.
pub fn wta_disparity(vol: &CostVolume) -> DisparityMap {
    wta_disparity_opts(vol, true)
}

pub fn wta_disparity_opts(vol: &CostVolume, subpixel: bool) -> DisparityMap {
    let w = vol.grid.width;
    let h = vol.grid.height;
    let d_count = vol.num_levels();
    let step_rad = vol.step_deg.to_radians();
    let mut map = ScalarMap::filled(vol.grid, 0.0);
    map.values
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, out)| {
            let mut best = 0usize;
            let mut best_cost = vol.costs[idx];
            for k in 1..d_count {
                let c = vol.costs[k * w * h + idx];
                // strict: ties keep the lowest level index
                if c < best_cost {
                    best_cost = c;
                    best = k;
                }
            }
            let mut level = best as f64;
            if subpixel && best > 0 && best + 1 < d_count {
                let cm = vol.costs[(best - 1) * w * h + idx] as f64;
                let c0 = best_cost as f64;
                let cp = vol.costs[(best + 1) * w * h + idx] as f64;
                let denom = cm - 2.0 * c0 + cp;
                if denom > 0.0 {
                    let offset = ((cm - cp) / (2.0 * denom)).clamp(-0.5, 0.5);
                    level += offset;
                }
            }
            *out = (level * step_rad) as f32;
        });
    map
}

/// Invalidate reference pixels whose disparity disagrees with the
/// bottom-reference map at the corresponding polar angle.
pub fn consistency_check(
    disp_ref: &DisparityMap,
    disp_other: &DisparityMap,
    tol_levels: f64,
    step_deg: f64,
) -> Result<DisparityMap> {
    if disp_ref.grid != disp_other.grid {
        return Err(Error::domain("disparity map grids differ"));
    }
    let h = disp_ref.grid.height;
    let w = disp_ref.grid.width;
    let tol = tol_levels * step_deg.to_radians();
    let mut out = disp_ref.clone();
    for row in 0..h {
        for col in 0..w {
            let d = disp_ref.at(col, row) as f64;
            if !d.is_finite() {
                continue;
            }
            // polar θ + d lies 'd · H/π' rows above, same column
            let y = row as f64 - d * h as f64 / std::f64::consts::PI;
            let y = y.clamp(0.0, (h - 1) as f64);
            let r0 = y.floor() as usize;
            let r1 = (r0 + 1).min(h - 1);
            let frac = y - r0 as f64;
            let a = disp_other.at(col, r0) as f64;
            let b = disp_other.at(col, r1) as f64;
            if !a.is_finite() || !b.is_finite() {
                out.set(col, row, INVALID);
                continue;
            }
            let other = a * (1.0 - frac) + b * frac;
            if (d - other).abs() > tol {
                out.set(col, row, INVALID);
            }
        }
    }
    Ok(out)
}

/// Exhaustive per-pixel matching: no aggregation, integer-level output.
/// Bit-identical to `wta_disparity_opts(build_cost_volume(..), false)`.
pub fn match_bruteforce(
    top: &EquirectImage,
    bottom: &EquirectImage,
    cfg: &MatchConfig,
) -> Result<DisparityMap> {
    let per_pixel = costvol::bruteforce_costs_at(top, bottom, cfg)?;
    let step_rad = cfg.step_deg.to_radians();
    let mut map = ScalarMap::filled(top.grid, 0.0);
    for (idx, costs) in per_pixel.iter().enumerate() {
        let mut best = 0usize;
        let mut best_cost = costs[0];
        for (k, &c) in costs.iter().enumerate().skip(1) {
            if c < best_cost {
                best_cost = c;
                best = k;
            }
        }
        map.values[idx] = (best as f64 * step_rad) as f32;
    }
    Ok(map)
}

/// Median over valid neighbors in a (2r+1)² window with longitude wrap;
/// invalid pixels stay invalid.
pub fn median_filter(disp: &DisparityMap, radius: usize) -> DisparityMap {
    let w = disp.grid.width;
    let h = disp.grid.height;
    let r = radius as i64;
    let mut out = disp.clone();
    for row in 0..h {
        for col in 0..w {
            if !disp.at(col, row).is_finite() {
                continue;
            }
            let mut vals: Vec<f32> = Vec::with_capacity((2 * radius + 1) * (2 * radius + 1));
            for dy in -r..=r {
                let y = row as i64 + dy;
                if y < 0 || y >= h as i64 {
                    continue;
                }
                for dx in -r..=r {
                    let x = (col as i64 + dx).rem_euclid(w as i64) as usize;
                    let v = disp.at(x, y as usize);
                    if v.is_finite() {
                        vals.push(v);
                    }
                }
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.set(col, row, vals[(vals.len() - 1) / 2]);
        }
    }
    out
}
