//! Evaluation protocol: MAE/RMSE for disparity and depth over the polar-crop
//! region, plus the step-size ablation harness.

use crate::error::{Error, Result};
use crate::geom::{disparity_to_depth, polar_angle_map, CameraRig, DisparityMap, EquirectGrid};
use crate::imageio::RunConfig;
use crate::pipeline::{match_pair, MatchOptions};
use crate::render::{render_pair, Scene};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Disparity errors in radians.
    pub disp_mae: f64,
    pub disp_rmse: f64,
    /// Depth errors in meters.
    pub depth_mae: f64,
    pub depth_rmse: f64,
    /// Pixels contributing to the disparity metrics.
    pub valid_pixel_count: usize,
    /// Pixels contributing to the depth metrics.
    pub depth_pixel_count: usize,
    /// Pixels whose predicted disparity maps to infinite (or out-of-range)
    /// depth; excluded from depth metrics only.
    pub infinite_pred_count: usize,
    pub crop_fraction: f64,
}

impl EvalReport {
    pub fn text_table(&self) -> String {
        format!(
            "{:<18} {:>12} {:>12}\n{:<18} {:>12.6} {:>12.6}\n{:<18} {:>12.6} {:>12.6}\n\
             valid pixels: {}   depth pixels: {}   infinite-pred: {}   crop: {}\n",
            "", "MAE", "RMSE",
            "disparity (deg)",
            self.disp_mae.to_degrees(),
            self.disp_rmse.to_degrees(),
            "depth (m)",
            self.depth_mae,
            self.depth_rmse,
            self.valid_pixel_count,
            self.depth_pixel_count,
            self.infinite_pred_count,
            self.crop_fraction
        )
    }

    pub fn key_value(&self) -> String {
        format!(
            "disp_mae_rad = {}\ndisp_rmse_rad = {}\ndepth_mae_m = {}\ndepth_rmse_m = {}\n\
             valid_pixel_count = {}\ndepth_pixel_count = {}\ninfinite_pred_count = {}\ncrop_fraction = {}\n",
            self.disp_mae,
            self.disp_rmse,
            self.depth_mae,
            self.depth_rmse,
            self.valid_pixel_count,
            self.depth_pixel_count,
            self.infinite_pred_count,
            self.crop_fraction
        )
    }
}

/// Retained row range [r0, r1) after cropping `fraction` from top and bottom.
/// Rounding is half-away-from-zero.
pub fn crop_mask(grid: EquirectGrid, fraction: f64) -> Result<(usize, usize)> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::domain(format!("crop fraction {fraction} outside [0, 0.5)")));
    }
    let r0 = (fraction * grid.height as f64).round() as usize;
    Ok((r0, grid.height - r0))
}

pub fn compute_metrics(
    pred: &DisparityMap,
    gt: &DisparityMap,
    gt_valid: &[bool],
    rig: &CameraRig,
    fraction: f64,
) -> Result<EvalReport> {
    if pred.grid != gt.grid {
        return Err(Error::domain("prediction and ground-truth grids differ"));
    }
    if gt_valid.len() != gt.grid.len() {
        return Err(Error::domain("validity mask length mismatch"));
    }
    let (r0, r1) = crop_mask(pred.grid, fraction)?;
    let polar = polar_angle_map(pred.grid);
    let w = pred.grid.width;

    let mut disp_abs = 0.0f64;
    let mut disp_sq = 0.0f64;
    let mut depth_abs = 0.0f64;
    let mut depth_sq = 0.0f64;
    let mut valid_count = 0usize;
    let mut depth_count = 0usize;
    let mut infinite_pred = 0usize;

    for row in r0..r1 {
        for col in 0..w {
            let idx = row * w + col;
            if !gt_valid[idx] {
                continue;
            }
            let p = pred.at(col, row) as f64;
            let g = gt.at(col, row) as f64;
            if !p.is_finite() || !g.is_finite() {
                continue;
            }
            valid_count += 1;
            let resid = p - g;
            disp_abs += resid.abs();
            disp_sq += resid * resid;

            let theta = polar[row];
            let max_d = std::f64::consts::PI - theta;
            if p <= 0.0 || p >= max_d {
                infinite_pred += 1;
                continue;
            }
            let (Ok(dp), Ok(dg)) = (
                disparity_to_depth(rig, theta, p),
                disparity_to_depth(rig, theta, g),
            ) else {
                infinite_pred += 1;
                continue;
            };
            if !dp.is_finite() || !dg.is_finite() {
                infinite_pred += 1;
                continue;
            }
            depth_count += 1;
            let dres = dp - dg;
            depth_abs += dres.abs();
            depth_sq += dres * dres;
        }
    }

    if valid_count == 0 {
        return Err(Error::Eval("no valid pixels in the crop region".into()));
    }
    Ok(EvalReport {
        disp_mae: disp_abs / valid_count as f64,
        disp_rmse: (disp_sq / valid_count as f64).sqrt(),
        depth_mae: if depth_count > 0 { depth_abs / depth_count as f64 } else { 0.0 },
        depth_rmse: if depth_count > 0 { (depth_sq / depth_count as f64).sqrt() } else { 0.0 },
        valid_pixel_count: valid_count,
        depth_pixel_count: depth_count,
        infinite_pred_count: infinite_pred,
        crop_fraction: fraction,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub step_deg: f64,
    pub depth_rmse: f64,
    pub disp_rmse: f64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("step_deg,depth_rmse,disp_rmse\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.step_deg, r.depth_rmse, r.disp_rmse));
    }
    out
}

/// Step-size sweep: the total angular range step·num_levels is held constant
/// across steps by adjusting num_levels. Errors are pooled over all scenes.
pub fn ablate_step_size(
    scenes: &[(String, Scene)],
    steps_deg: &[f64],
    cfg: &RunConfig,
) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(Error::domain("no scenes for the ablation run"));
    }
    let range_deg = cfg.step_deg * cfg.num_levels as f64;
    let mut rows = Vec::new();
    for &step in steps_deg {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::config("steps", format!("step {step} must be positive")));
        }
        let levels = (range_deg / step).round() as usize;
        if levels == 0 {
            return Err(Error::config(
                "steps",
                format!("step {step}° too coarse for range {range_deg}°"),
            ));
        }
        let mut run_cfg = cfg.clone();
        run_cfg.step_deg = step;
        run_cfg.num_levels = levels;
        run_cfg.validate()?;

        let mut disp_sq = 0.0f64;
        let mut depth_sq = 0.0f64;
        let mut disp_n = 0usize;
        let mut depth_n = 0usize;
        for (_, scene) in scenes {
            let pair = render_pair(scene, &run_cfg.rig(), run_cfg.grid())?;
            let (disp, _) = match_pair(
                &pair.top_rgb,
                &pair.bottom_rgb,
                &run_cfg,
                MatchOptions::default(),
            )?;
            let report = compute_metrics(
                &disp,
                &pair.gt_disparity,
                &pair.gt_valid,
                &run_cfg.rig(),
                run_cfg.crop_fraction,
            )?;
            disp_sq += report.disp_rmse.powi(2) * report.valid_pixel_count as f64;
            disp_n += report.valid_pixel_count;
            depth_sq += report.depth_rmse.powi(2) * report.depth_pixel_count as f64;
            depth_n += report.depth_pixel_count;
        }
        rows.push(AblationRow {
            step_deg: step,
            depth_rmse: (depth_sq / depth_n.max(1) as f64).sqrt(),
            disp_rmse: (disp_sq / disp_n.max(1) as f64).sqrt(),
        });
    }
    Ok(rows)
}

/// Default sweep: 1°, 1/2°, 1/3°, 1/4°.
pub const DEFAULT_ABLATION_STEPS: [f64; 4] = [1.0, 0.5, 1.0 / 3.0, 0.25];
