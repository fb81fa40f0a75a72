//! Shared experiment plumbing: dataset splits, reconstruction ladders,
//! TV weight selection, method application, and report cell summaries.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::{Image2D, Mask2D, Rng};
use crate::error::{Error, Result};
use crate::fbp::reconstruct;
use crate::models::{Detector, UNet};
use crate::nn::Tensor4;
use crate::phantom::{make_dataset, LabeledSample};
use crate::pipeline::config::{ExperimentConfig, Method};
use crate::projector::{radon_forward, subsample_views, ScanGeometry, Sinogram};
use crate::stats::bootstrap_mean_ci;
use crate::tvdenoise::{tv_denoise, tv_weight_sweep, TvParams};

/// JSON representation for f64 fields that may saturate: finite values
/// stay numbers, non-finite ones become the strings "inf", "-inf", "nan"
/// so the document remains valid JSON and round-trips exactly.
pub mod json_num {
    use serde::de::{self, Unexpected};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::invalid_value(
                    Unexpected::Str(other),
                    &"a number or one of inf, -inf, nan",
                )),
            },
        }
    }
}

/// CSV rendering for possibly saturated floats.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// One report cell: sample count, point estimate and 95% bootstrap CI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    #[serde(with = "json_num")]
    pub mean: f64,
    #[serde(with = "json_num")]
    pub ci_lo: f64,
    #[serde(with = "json_num")]
    pub ci_hi: f64,
}

/// Mean with a 1,000-resample bootstrap CI. Saturated metric vectors
/// (any non-finite entry, as at the self-reference row) collapse to the
/// +inf sentinel cell rather than feeding infinities to the resampler.
pub fn summarize_cell(values: &[f64], rng: &mut Rng) -> Result<Cell> {
    if values.iter().any(|v| !v.is_finite()) {
        return Ok(Cell {
            n: values.len(),
            mean: f64::INFINITY,
            ci_lo: f64::INFINITY,
            ci_hi: f64::INFINITY,
        });
    }
    let (mean, ci_lo, ci_hi) = bootstrap_mean_ci(values, 1000, 0.95, rng)?;
    Ok(Cell { n: values.len(), mean, ci_lo, ci_hi })
}

/// Train/val/test phantom sets drawn from disjoint seed streams.
pub struct Splits {
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

fn split(n: usize, fraction: f64, size: usize, seed: u64, stream: u64) -> Result<Vec<LabeledSample>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = Rng::derive(seed, stream);
    make_dataset(n, fraction, size, &mut rng)
}

pub fn make_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    let s = Splits {
        train: split(cfg.n_train, cfg.lesion_fraction, cfg.phantom_size, cfg.seed, 1)?,
        val: split(cfg.n_val, cfg.lesion_fraction, cfg.phantom_size, cfg.seed, 2)?,
        test: split(cfg.n_test, cfg.lesion_fraction, cfg.phantom_size, cfg.seed, 3)?,
    };
    SplitManifest::new(&s).validate_disjoint()?;
    Ok(s)
}

/// Phantom identities per split; the sample seed is the identity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl SplitManifest {
    pub fn new(splits: &Splits) -> Self {
        let ids = |ss: &[LabeledSample]| ss.iter().map(|s| s.seed).collect();
        SplitManifest { train: ids(&splits.train), val: ids(&splits.val), test: ids(&splits.test) }
    }

    pub fn validate_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id) {
                return Err(Error::invalid(format!(
                    "phantom id {id} appears in more than one split"
                )));
            }
        }
        Ok(())
    }
}

/// Dense reference reconstruction plus the sparse FBP reconstructions,
/// one per ladder entry, all from a single dense sinogram.
pub struct ReconLadder {
    pub reference: Image2D,
    pub sparse: Vec<Image2D>,
}

pub fn recon_ladder(image: &Image2D, cfg: &ExperimentConfig) -> Result<ReconLadder> {
    let geo = ScanGeometry::parallel(cfg.reference_views, image.width)?;
    let dense = radon_forward(image, &geo)?;
    let reference = reconstruct(&dense, image.width)?;
    let sparse = cfg
        .view_ladder
        .iter()
        .map(|&v| reconstruct(&subsample_views(&dense, v)?, image.width))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconLadder { reference, sparse })
}

/// Sparse sinogram for one ladder level, subsampled from the dense scan.
pub fn sparse_sinogram(image: &Image2D, cfg: &ExperimentConfig, views: usize) -> Result<Sinogram> {
    let geo = ScanGeometry::parallel(cfg.reference_views, image.width)?;
    let dense = radon_forward(image, &geo)?;
    subsample_views(&dense, views)
}

/// Dense reference reconstruction alone.
pub fn reference_recon(image: &Image2D, cfg: &ExperimentConfig) -> Result<Image2D> {
    let geo = ScanGeometry::parallel(cfg.reference_views, image.width)?;
    reconstruct(&radon_forward(image, &geo)?, image.width)
}

/// Sweep-selected TV weight for one view count, with the full sweep curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TvSelection {
    pub views: usize,
    pub weight: f64,
    pub curve: Vec<(f64, f64)>,
}

/// Run the weight sweep at every ladder level on the leading train pairs.
pub fn select_tv_weights(
    cfg: &ExperimentConfig,
    train: &[LabeledSample],
) -> Result<Vec<TvSelection>> {
    if train.len() < cfg.tv_sweep_pairs {
        return Err(Error::invalid(format!(
            "tv sweep wants {} pairs but got {} train samples",
            cfg.tv_sweep_pairs,
            train.len()
        )));
    }
    let subset = &train[..cfg.tv_sweep_pairs];
    let ladders: Vec<ReconLadder> = subset
        .par_iter()
        .map(|s| recon_ladder(&s.image, cfg))
        .collect::<Result<_>>()?;
    let grid = (cfg.tv_grid.lo, cfg.tv_grid.hi, cfg.tv_grid.step);
    cfg.view_ladder
        .iter()
        .enumerate()
        .map(|(li, &views)| {
            let pairs: Vec<(Image2D, Image2D, Mask2D)> = subset
                .iter()
                .zip(&ladders)
                .map(|(s, l)| (l.sparse[li].clone(), l.reference.clone(), s.skull_mask.clone()))
                .collect();
            let (weight, curve) = tv_weight_sweep(&pairs, grid)?;
            Ok(TvSelection { views, weight, curve })
        })
        .collect()
}

pub fn save_tv_weights(selections: &[TvSelection], path: &Path) -> Result<()> {
    Ok(fs::write(path, serde_json::to_string_pretty(selections)?)?)
}

pub fn load_tv_weights(path: &Path) -> Result<Vec<TvSelection>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Trained artifacts and sweep results a method needs at evaluation time.
pub struct MethodKit<'a> {
    pub tv_weights: &'a [TvSelection],
    pub unet: Option<&'a UNet>,
}

impl<'a> MethodKit<'a> {
    pub fn tv_weight(&self, views: usize) -> Result<f64> {
        self.tv_weights
            .iter()
            .find(|s| s.views == views)
            .map(|s| s.weight)
            .ok_or_else(|| Error::invalid(format!("no swept TV weight for {views} views")))
    }

    pub fn require_unet(&self) -> Result<&'a UNet> {
        self.unet
            .ok_or_else(|| Error::invalid("method unet requested but no trained U-Net was given"))
    }
}

/// Post-process one sparse FBP reconstruction with the chosen method.
pub fn apply_method(
    kit: &MethodKit<'_>,
    method: Method,
    views: usize,
    fbp: &Image2D,
) -> Result<Image2D> {
    match method {
        Method::Fbp => Ok(fbp.clone()),
        Method::Tv => tv_denoise(fbp, &TvParams::new(kit.tv_weight(views)?)),
        Method::Unet => unet_apply(kit.require_unet()?, fbp),
    }
}

pub fn image_to_tensor(image: &Image2D) -> Result<Tensor4> {
    Tensor4::from_data(1, 1, image.height, image.width, image.data.clone())
}

pub fn unet_apply(net: &UNet, image: &Image2D) -> Result<Image2D> {
    let y = net.forward(&image_to_tensor(image)?)?;
    Image2D::new(image.width, image.height, y.data, image.value_range)
}

/// Detector logits for a set of images, batched for the conv kernels.
pub fn detector_scores(det: &Detector, images: &[Image2D]) -> Result<Vec<f64>> {
    let size = det.cfg.input_size;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(16) {
        let mut data = Vec::with_capacity(chunk.len() * size * size);
        for img in chunk {
            if img.width != size || img.height != size {
                return Err(Error::invalid(format!(
                    "detector expects {size}x{size} images, got {}x{}",
                    img.width, img.height
                )));
            }
            data.extend_from_slice(&img.data);
        }
        let x = Tensor4::from_data(chunk.len(), 1, size, size, data)?;
        out.extend(det.forward_logits(&x)?);
    }
    Ok(out)
}

pub fn unet_artifact(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("unet.bin")
}

pub fn detector_artifact(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("detector.bin")
}

pub fn tv_weights_artifact(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("tv_weights.json")
}
