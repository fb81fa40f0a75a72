//! Sparse-view CT toolkit: synthetic head phantoms, parallel-beam projection,
//! filtered back projection, total-variation denoising, a small trainable
//! U-Net and lesion detector, and the statistics used to compare them.

pub mod core;
pub mod error;
pub mod fbp;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod phantom;
pub mod pipeline;
pub mod projector;
pub mod stats;
pub mod tvdenoise;

pub use error::{Error, Result};
