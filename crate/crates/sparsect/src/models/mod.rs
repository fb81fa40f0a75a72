//! The two trainable networks and their training, persistence and
//! interpretation helpers: a residual encoder-decoder that cleans
//! sparse-view reconstructions and a small CNN that flags lesions, plus
//! gradient saliency maps with the in/out-of-mask ratio.

mod checkpoint;
mod detector;
mod saliency;
mod train;
mod unet;

pub use checkpoint::{load_detector, load_unet, save_detector, save_unet};
pub use detector::{Detector, DetectorConfig};
pub use saliency::{normalize_saliency, saliency_map, saliency_ratio};
pub use train::{
    rotate90, train_detector, train_unet, write_log_csv, DetectorOutcome, EpochLog,
};
pub use unet::{UNet, UNetConfig, UNetTrace};
