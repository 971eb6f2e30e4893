//! Bit-exact file formats: PNM images, PFM float maps with validity masks,
//! PLY point clouds, and flat key-value run configuration.

pub mod config;
pub mod pfm;
pub mod ply;
pub mod pnm;

pub use config::{format_config, load_config, parse_config, save_config, RunConfig};
pub use pfm::{decode_floatmap, encode_floatmap, read_floatmap, write_floatmap};
pub use ply::{decode_ply, encode_ply, read_ply, write_ply};
pub use pnm::{decode_image, encode_image, read_image, write_image};
