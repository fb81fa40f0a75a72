//! Shared fundamentals: image and mask types, deterministic RNG, and the
//! bit-exact file formats every other module builds on.

mod image;
mod io;
mod rng;

pub use image::{Image2D, Mask2D};
pub use io::{export_pgm, load_raw, save_raw};
pub use rng::{fisher_yates_shuffle, Rng};
