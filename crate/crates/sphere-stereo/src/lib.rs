//! Stereo depth estimation for top-bottom 360° equirectangular image pairs.
//!
//! The crate covers the full classical pipeline: spherical disparity
//! geometry, a degree-step angular cost volume built by sub-pixel vertical
//! shifting, SGM-style aggregation with longitude wrap, winner-take-all
//! disparity selection with sub-pixel refinement, a ray-cast ground-truth
//! renderer, and the MAE/RMSE evaluation protocol with polar cropping.

pub mod costvol;
pub mod error;
pub mod eval;
pub mod geom;
pub mod imageio;
pub mod matcher;
pub mod pipeline;
pub mod render;

pub use error::{Error, Result};
