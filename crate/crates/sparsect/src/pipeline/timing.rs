//! Timing harness: wall-clock per-image processing time per
//! (view count, method), measured on a single thread so latencies are
//! not co-scheduled. Every (views, method) pair runs two warmup passes
//! that are discarded, then the configured number of measured repeats.

use std::fs;
use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::core::{Image2D, Rng};
use crate::error::{Error, Result};
use crate::fbp::reconstruct;
use crate::models::UNet;
use crate::phantom::make_dataset;
use crate::pipeline::config::{ExperimentConfig, Method};
use crate::pipeline::data::{
    fmt_float, make_splits, recon_ladder, select_tv_weights, sparse_sinogram, unet_apply,
    MethodKit, TvSelection,
};
use crate::projector::Sinogram;
use crate::stats::bootstrap_mean_ci;
use crate::tvdenoise::{tv_denoise, TvParams};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingRow {
    pub views: usize,
    pub method: Method,
    pub images: usize,
    pub repeats: usize,
    /// Mean per-image seconds with its bootstrap interval.
    pub mean_s: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Per-repeat per-image seconds, warmup already removed.
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingReport {
    pub phantom_size: usize,
    pub reference_views: usize,
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn row(&self, views: usize, method: Method) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.views == views && r.method == method)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("views,method,images,repeats,mean_s,ci_lo,ci_hi\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.views,
                r.method.name(),
                r.images,
                r.repeats,
                fmt_float(r.mean_s),
                fmt_float(r.ci_lo),
                fmt_float(r.ci_hi),
            ));
        }
        out
    }
}

/// Inputs one ladder level needs: the sparse sinogram (timed input for
/// fbp) and its reconstruction (timed input for tv and unet).
struct LevelInputs {
    sinograms: Vec<Sinogram>,
    recons: Vec<Image2D>,
}

pub fn run_timing_harness(
    cfg: &ExperimentConfig,
    unet: Option<&UNet>,
    tv_weights: Option<&[TvSelection]>,
) -> Result<TimingReport> {
    cfg.validate()?;
    if cfg.has_method(Method::Unet) {
        let net = MethodKit { tv_weights: &[], unet }.require_unet()?;
        if net.cfg.input_size != cfg.phantom_size {
            return Err(Error::invalid(format!(
                "U-Net expects {} pixels, config wants {}",
                net.cfg.input_size, cfg.phantom_size
            )));
        }
    }
    let owned_weights;
    let tv_weights: &[TvSelection] = match tv_weights {
        Some(w) => w,
        None if cfg.has_method(Method::Tv) => {
            let splits = make_splits(cfg)?;
            owned_weights = select_tv_weights(cfg, &splits.train)?;
            &owned_weights
        }
        None => &[],
    };
    let kit = MethodKit { tv_weights, unet };

    // Timing subjects come from their own seed stream; the measured loop
    // only ever sees precomputed inputs.
    let mut rng = Rng::derive(cfg.seed, 4);
    let subjects = make_dataset(cfg.timing.images, cfg.lesion_fraction, cfg.phantom_size, &mut rng)?;
    let mut levels: Vec<LevelInputs> = cfg
        .view_ladder
        .iter()
        .map(|_| LevelInputs { sinograms: Vec::new(), recons: Vec::new() })
        .collect();
    for s in &subjects {
        let ladder = recon_ladder(&s.image, cfg)?;
        for (li, &views) in cfg.view_ladder.iter().enumerate() {
            levels[li].sinograms.push(sparse_sinogram(&s.image, cfg, views)?);
            levels[li].recons.push(ladder.sparse[li].clone());
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::invalid(format!("timing thread pool: {e}")))?;

    let mut boot = Rng::derive(cfg.seed, 11);
    let mut rows = Vec::new();
    for (li, &views) in cfg.view_ladder.iter().enumerate() {
        for &method in &cfg.methods {
            let params = if method == Method::Tv {
                Some(TvParams::new(kit.tv_weight(views)?))
            } else {
                None
            };
            let mut samples = Vec::with_capacity(cfg.timing.repeats);
            for run in 0..cfg.timing.repeats + 2 {
                let inputs = &levels[li];
                let start = Instant::now();
                pool.install(|| -> Result<()> {
                    match method {
                        Method::Fbp => {
                            for s in &inputs.sinograms {
                                black_box(reconstruct(s, cfg.phantom_size)?);
                            }
                        }
                        Method::Tv => {
                            let p = params.as_ref().unwrap();
                            for img in &inputs.recons {
                                black_box(tv_denoise(img, p)?);
                            }
                        }
                        Method::Unet => {
                            let net = kit.require_unet()?;
                            for img in &inputs.recons {
                                black_box(unet_apply(net, img)?);
                            }
                        }
                    }
                    Ok(())
                })?;
                let per_image = start.elapsed().as_secs_f64() / cfg.timing.images as f64;
                if run >= 2 {
                    samples.push(per_image);
                }
            }
            let (mean_s, ci_lo, ci_hi) = bootstrap_mean_ci(&samples, 1000, 0.95, &mut boot)?;
            rows.push(TimingRow {
                views,
                method,
                images: cfg.timing.images,
                repeats: cfg.timing.repeats,
                mean_s,
                ci_lo,
                ci_hi,
                samples,
            });
        }
    }

    let report = TimingReport {
        phantom_size: cfg.phantom_size,
        reference_views: cfg.reference_views,
        rows,
    };
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("timing.json"), report.to_json()?)?;
    fs::write(cfg.output_dir.join("timing.csv"), report.csv())?;
    Ok(report)
}
