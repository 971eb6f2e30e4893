//! Flat key-value run configuration. Unknown keys are rejected; every value
//! is validated against the owning type's invariants at load time.

use std::path::Path;

use crate::costvol::{CostMetric, MatchConfig};
use crate::error::{Error, Result};
use crate::geom::{CameraRig, EquirectGrid};
use crate::matcher::SgmParams;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub baseline_m: f64,
    pub width: usize,
    pub height: usize,
    pub step_deg: f64,
    pub num_levels: usize,
    pub cost_metric: CostMetric,
    pub window_radius: usize,
    pub sgm_p1: f64,
    pub sgm_p2: f64,
    pub polar_adaptive: bool,
    pub crop_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            baseline_m: 0.2,
            width: 1024,
            height: 512,
            step_deg: 1.0 / 3.0,
            num_levels: 192,
            cost_metric: CostMetric::Sad,
            window_radius: 3,
            sgm_p1: 0.3,
            sgm_p2: 3.0,
            polar_adaptive: true,
            crop_fraction: 0.05,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_m.is_finite() && self.baseline_m > 0.0) {
            return Err(Error::config("baseline_m", "must be finite and positive"));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::config("width/height", "must be at least 2"));
        }
        if !(0.0..0.5).contains(&self.crop_fraction) {
            return Err(Error::config("crop_fraction", "must lie in [0, 0.5)"));
        }
        if !(self.sgm_p1 >= 0.0 && self.sgm_p2 >= self.sgm_p1) {
            return Err(Error::config("sgm_p1/sgm_p2", "need p2 >= p1 >= 0"));
        }
        self.match_config()
            .validate()
            .map_err(|e| Error::config("match", e.to_string()))?;
        Ok(())
    }

    pub fn grid(&self) -> EquirectGrid {
        EquirectGrid::new(self.width, self.height).expect("validated")
    }

    pub fn rig(&self) -> CameraRig {
        CameraRig::new(self.baseline_m).expect("validated")
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            step_deg: self.step_deg,
            num_levels: self.num_levels,
            metric: self.cost_metric,
            window_radius: self.window_radius,
            polar_adaptive: self.polar_adaptive,
            taps: 7,
        }
    }

    /// `sgm_p1`/`sgm_p2` are penalties per degree of level spacing, so the
    /// smoothing strength stays comparable across step sizes.
    pub fn sgm_params(&self) -> SgmParams {
        SgmParams {
            p1: (self.sgm_p1 * self.step_deg) as f32,
            p2: (self.sgm_p2 * self.step_deg) as f32,
            ..SgmParams::default()
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
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
        apply_key(&mut cfg, key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| Error::config(key, format!("unparseable value '{value}'")))
    }
    match key {
        "baseline_m" => cfg.baseline_m = num(key, value)?,
        "width" => cfg.width = num(key, value)?,
        "height" => cfg.height = num(key, value)?,
        "step_deg" => cfg.step_deg = num(key, value)?,
        "num_levels" => cfg.num_levels = num(key, value)?,
        "cost_metric" => {
            cfg.cost_metric = value.parse().map_err(|e: String| Error::config(key, e))?
        }
        "window_radius" => cfg.window_radius = num(key, value)?,
        "sgm_p1" => cfg.sgm_p1 = num(key, value)?,
        "sgm_p2" => cfg.sgm_p2 = num(key, value)?,
        "polar_adaptive" => {
            cfg.polar_adaptive = match value {
                "true" | "1" | "yes" => true,
                "false" | "0" | "no" => false,
                _ => return Err(Error::config(key, format!("unparseable bool '{value}'"))),
            }
        }
        "crop_fraction" => cfg.crop_fraction = num(key, value)?,
        other => return Err(Error::config(other, "unknown key")),
    }
    Ok(())
}

pub fn format_config(cfg: &RunConfig) -> String {
    format!(
        "baseline_m = {}\nwidth = {}\nheight = {}\nstep_deg = {}\nnum_levels = {}\n\
         cost_metric = {}\nwindow_radius = {}\nsgm_p1 = {}\nsgm_p2 = {}\n\
         polar_adaptive = {}\ncrop_fraction = {}\n",
        cfg.baseline_m,
        cfg.width,
        cfg.height,
        cfg.step_deg,
        cfg.num_levels,
        cfg.cost_metric,
        cfg.window_radius,
        cfg.sgm_p1,
        cfg.sgm_p2,
        cfg.polar_adaptive,
        cfg.crop_fraction
    )
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn save_config(cfg: &RunConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_config(cfg)).map_err(|e| Error::io(path, e))
}
