//! Reconstruction quality experiment: masked SSIM/PSNR/SNR per
//! (view count, method) against the dense reference reconstruction,
//! with bootstrap intervals and paired signed-rank tests.
//!
//! The reference view count contributes a single anchor row (method fbp,
//! the reconstruction scored against itself) whose SSIM is exactly 1 and
//! whose PSNR/SNR saturate to the +inf sentinel. Sparse rows cover every
//! configured method.

use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::Rng;
use crate::error::{Error, Result};
use crate::metrics::{psnr, snr, ssim, MetricConfig};
use crate::models::UNet;
use crate::pipeline::config::{ExperimentConfig, Method};
use crate::pipeline::data::{
    apply_method, fmt_float, make_splits, recon_ladder, select_tv_weights, summarize_cell,
    tv_weights_artifact, Cell, MethodKit, ReconLadder, SplitManifest, TvSelection,
};
use crate::stats::{bonferroni, wilcoxon_signed_rank};

pub const QUALITY_METRICS: [&str; 3] = ["ssim", "psnr", "snr"];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityRow {
    pub views: usize,
    pub method: Method,
    pub ssim: Cell,
    pub psnr: Cell,
    pub snr: Cell,
}

/// One paired signed-rank comparison on a per-phantom metric vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityTest {
    pub views: usize,
    pub metric: String,
    pub method_a: Method,
    pub method_b: Method,
    pub w: f64,
    pub p: f64,
    pub alpha: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityReport {
    pub phantom_size: usize,
    pub reference_views: usize,
    pub manifest: SplitManifest,
    pub tv_weights: Vec<TvSelection>,
    pub rows: Vec<QualityRow>,
    pub tests: Vec<QualityTest>,
}

impl QualityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Strict parse; unknown fields are schema violations.
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn row(&self, views: usize, method: Method) -> Option<&QualityRow> {
        self.rows.iter().find(|r| r.views == views && r.method == method)
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from(
            "views,method,n,ssim,ssim_lo,ssim_hi,psnr,psnr_lo,psnr_hi,snr,snr_lo,snr_hi\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.views,
                r.method.name(),
                r.ssim.n,
                fmt_float(r.ssim.mean),
                fmt_float(r.ssim.ci_lo),
                fmt_float(r.ssim.ci_hi),
                fmt_float(r.psnr.mean),
                fmt_float(r.psnr.ci_lo),
                fmt_float(r.psnr.ci_hi),
                fmt_float(r.snr.mean),
                fmt_float(r.snr.ci_lo),
                fmt_float(r.snr.ci_hi),
            ));
        }
        out
    }

    pub fn tests_csv(&self) -> String {
        let mut out = String::from("views,metric,method_a,method_b,w,p,alpha,significant\n");
        for t in &self.tests {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                t.views,
                t.metric,
                t.method_a.name(),
                t.method_b.name(),
                fmt_float(t.w),
                fmt_float(t.p),
                fmt_float(t.alpha),
                t.significant,
            ));
        }
        out
    }
}

/// Per-sample metric triples for one (views, method) cell.
struct CellValues {
    views: usize,
    method: Method,
    ssim: Vec<f64>,
    psnr: Vec<f64>,
    snr: Vec<f64>,
}

pub fn run_quality_experiment(
    cfg: &ExperimentConfig,
    unet: Option<&UNet>,
    tv_weights: Option<&[TvSelection]>,
) -> Result<QualityReport> {
    cfg.validate()?;
    let kit_check = MethodKit { tv_weights: &[], unet };
    if cfg.has_method(Method::Unet) {
        let net = kit_check.require_unet()?;
        if net.cfg.input_size != cfg.phantom_size {
            return Err(Error::invalid(format!(
                "U-Net expects {} pixels, config wants {}",
                net.cfg.input_size, cfg.phantom_size
            )));
        }
    }

    let splits = make_splits(cfg)?;
    let manifest = SplitManifest::new(&splits);

    let tv_weights: Vec<TvSelection> = match tv_weights {
        Some(w) => w.to_vec(),
        None if cfg.has_method(Method::Tv) => select_tv_weights(cfg, &splits.train)?,
        None => Vec::new(),
    };
    let kit = MethodKit { tv_weights: &tv_weights, unet };

    let ladders: Vec<ReconLadder> = splits
        .test
        .par_iter()
        .map(|s| recon_ladder(&s.image, cfg))
        .collect::<Result<_>>()?;

    let mcfg = MetricConfig::default();
    let mut cells: Vec<CellValues> = Vec::new();

    // Anchor row: the dense reference against itself.
    {
        let triples: Vec<(f64, f64, f64)> = splits
            .test
            .par_iter()
            .zip(&ladders)
            .map(|(s, l)| {
                Ok((
                    ssim(&l.reference, &l.reference, &s.skull_mask, &mcfg)?,
                    psnr(&l.reference, &l.reference, &s.skull_mask, &mcfg)?,
                    snr(&l.reference, &l.reference, &s.skull_mask)?,
                ))
            })
            .collect::<Result<_>>()?;
        cells.push(collect_cell(cfg.reference_views, Method::Fbp, triples));
    }

    for (li, &views) in cfg.view_ladder.iter().enumerate() {
        for &method in &cfg.methods {
            let triples: Vec<(f64, f64, f64)> = splits
                .test
                .par_iter()
                .zip(&ladders)
                .map(|(s, l)| {
                    let img = apply_method(&kit, method, views, &l.sparse[li])?;
                    Ok((
                        ssim(&img, &l.reference, &s.skull_mask, &mcfg)?,
                        psnr(&img, &l.reference, &s.skull_mask, &mcfg)?,
                        snr(&img, &l.reference, &s.skull_mask)?,
                    ))
                })
                .collect::<Result<_>>()?;
            cells.push(collect_cell(views, method, triples));
        }
    }

    let mut boot = Rng::derive(cfg.seed, 10);
    let rows = cells
        .iter()
        .map(|c| {
            Ok(QualityRow {
                views: c.views,
                method: c.method,
                ssim: summarize_cell(&c.ssim, &mut boot)?,
                psnr: summarize_cell(&c.psnr, &mut boot)?,
                snr: summarize_cell(&c.snr, &mut boot)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let alpha = bonferroni(0.001, 3)?;
    let mut tests = Vec::new();
    for &views in &cfg.view_ladder {
        for (ai, &a) in cfg.methods.iter().enumerate() {
            for &b in &cfg.methods[ai + 1..] {
                let ca = find_cell(&cells, views, a);
                let cb = find_cell(&cells, views, b);
                for (metric, va, vb) in [
                    ("ssim", &ca.ssim, &cb.ssim),
                    ("psnr", &ca.psnr, &cb.psnr),
                    ("snr", &ca.snr, &cb.snr),
                ] {
                    let (w, p) = wilcoxon_signed_rank(va, vb)?;
                    tests.push(QualityTest {
                        views,
                        metric: metric.to_string(),
                        method_a: a,
                        method_b: b,
                        w,
                        p,
                        alpha,
                        significant: p < alpha,
                    });
                }
            }
        }
    }

    let report = QualityReport {
        phantom_size: cfg.phantom_size,
        reference_views: cfg.reference_views,
        manifest,
        tv_weights,
        rows,
        tests,
    };

    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("quality.json"), report.to_json()?)?;
    fs::write(cfg.output_dir.join("quality.csv"), report.table_csv())?;
    fs::write(cfg.output_dir.join("quality_tests.csv"), report.tests_csv())?;
    if !report.tv_weights.is_empty() {
        crate::pipeline::data::save_tv_weights(&report.tv_weights, &tv_weights_artifact(cfg))?;
    }
    Ok(report)
}

fn collect_cell(views: usize, method: Method, triples: Vec<(f64, f64, f64)>) -> CellValues {
    let mut c = CellValues {
        views,
        method,
        ssim: Vec::with_capacity(triples.len()),
        psnr: Vec::with_capacity(triples.len()),
        snr: Vec::with_capacity(triples.len()),
    };
    for (s, p, r) in triples {
        c.ssim.push(s);
        c.psnr.push(p);
        c.snr.push(r);
    }
    c
}

fn find_cell(cells: &[CellValues], views: usize, method: Method) -> &CellValues {
    cells
        .iter()
        .find(|c| c.views == views && c.method == method)
        .expect("every configured cell was populated")
}
