//! Data preparation and the experiment orchestration layer: dataset
//! splits, reconstruction ladders, TV weight selection, and the three
//! experiment runners (quality, detection, timing). Every run is a pure
//! function of its configuration and seed; reports land as CSV for
//! reading and JSON for machines, figure inputs as plain data files.

mod config;
mod data;
mod detect;
mod prep;
mod quality;
mod saliency;
mod timing;

pub use config::{
    DetectorTrainConfig, ExperimentConfig, Method, TimingConfig, TvGrid, UnetTrainConfig,
};
pub use data::{
    apply_method, detector_artifact, detector_scores, fmt_float, image_to_tensor, json_num,
    load_tv_weights, make_splits, recon_ladder, reference_recon, save_tv_weights,
    select_tv_weights, sparse_sinogram, summarize_cell, tv_weights_artifact, unet_apply,
    unet_artifact, Cell, MethodKit, ReconLadder, SplitManifest, Splits, TvSelection,
};
pub use detect::{
    run_detection_experiment, AucCell, AucSeries, ConfusionCell, DelongComparison,
    DetectionReport, RocPoint, RocSeries,
};
pub use prep::{bilinear_resize, dose_reduction, normalize_12bit, window_hu, REFERENCE_VIEWS};
pub use quality::{
    run_quality_experiment, QualityReport, QualityRow, QualityTest, QUALITY_METRICS,
};
pub use saliency::{run_saliency_experiment, SaliencyReport, SaliencyRow};
pub use timing::{run_timing_harness, TimingReport, TimingRow};
