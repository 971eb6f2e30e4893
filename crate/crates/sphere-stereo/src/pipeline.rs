//! End-to-end matching: cost volume → optional SGM aggregation → WTA.

use crate::costvol::{build_cost_volume, CostVolume};
use crate::error::Result;
use crate::geom::{DisparityMap, EquirectImage};
use crate::imageio::RunConfig;
use crate::matcher::{aggregate_sgm, wta_disparity_opts};

#[derive(Debug, Clone, Copy)]
pub struct MatchOptions {
    pub use_sgm: bool,
    pub subpixel: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            use_sgm: true,
            subpixel: true,
        }
    }
}

/// Returns the predicted disparity plus the raw (pre-aggregation) cost volume.
pub fn match_pair(
    top: &EquirectImage,
    bottom: &EquirectImage,
    cfg: &RunConfig,
    opts: MatchOptions,
) -> Result<(DisparityMap, CostVolume)> {
    let raw = build_cost_volume(top, bottom, &cfg.match_config())?;
    let disp = if opts.use_sgm {
        let agg = aggregate_sgm(&raw, &cfg.sgm_params())?;
        wta_disparity_opts(&agg, opts.subpixel)
    } else {
        wta_disparity_opts(&raw, opts.subpixel)
    };
    Ok((disp, raw))
}
