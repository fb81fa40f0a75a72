//! Saliency localization experiment: for lesioned test phantoms at the
//! sparsest level, compare how much detector gradient mass falls inside
//! the lesion for raw FBP images versus U-Net processed ones.

use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::export_pgm;
use crate::error::{Error, Result};
use crate::models::{saliency_map, saliency_ratio, Detector, UNet};
use crate::pipeline::config::ExperimentConfig;
use crate::pipeline::data::{fmt_float, json_num, make_splits, recon_ladder, unet_apply};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaliencyRow {
    pub id: u64,
    #[serde(with = "json_num")]
    pub fbp: f64,
    #[serde(with = "json_num")]
    pub unet: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaliencyReport {
    pub views: usize,
    pub n: usize,
    #[serde(with = "json_num")]
    pub mean_fbp: f64,
    #[serde(with = "json_num")]
    pub mean_unet: f64,
    pub w: f64,
    pub p: f64,
    pub rows: Vec<SaliencyRow>,
}

impl SaliencyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("id,ratio_fbp,ratio_unet\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.id, fmt_float(r.fbp), fmt_float(r.unet)));
        }
        out
    }
}

/// Saliency ratios over up to `max_samples` lesioned test phantoms at the
/// sparsest ladder level, with a paired signed-rank test between methods.
/// Also exports the first phantom's saliency maps for inspection.
pub fn run_saliency_experiment(
    cfg: &ExperimentConfig,
    detector: &Detector,
    unet: &UNet,
    max_samples: usize,
) -> Result<SaliencyReport> {
    cfg.validate()?;
    if detector.cfg.input_size != cfg.phantom_size || unet.cfg.input_size != cfg.phantom_size {
        return Err(Error::invalid("model input sizes must match the phantom size"));
    }
    let splits = make_splits(cfg)?;
    let lesioned: Vec<_> = splits.test.iter().filter(|s| s.label).take(max_samples).collect();
    if lesioned.is_empty() {
        return Err(Error::invalid("no lesioned phantoms in the test split"));
    }
    let views = cfg.sparsest_views();

    let rows: Vec<SaliencyRow> = lesioned
        .par_iter()
        .map(|s| {
            let ladder = recon_ladder(&s.image, cfg)?;
            let fbp_img = ladder.sparse.last().expect("ladder is non-empty");
            let map_fbp = saliency_map(detector, fbp_img)?;
            let processed = unet_apply(unet, fbp_img)?;
            let map_unet = saliency_map(detector, &processed)?;
            Ok(SaliencyRow {
                id: s.seed,
                fbp: saliency_ratio(&map_fbp, &s.lesion_mask)?,
                unet: saliency_ratio(&map_unet, &s.lesion_mask)?,
            })
        })
        .collect::<Result<_>>()?;

    let fbp: Vec<f64> = rows.iter().map(|r| r.fbp).collect();
    let unet_r: Vec<f64> = rows.iter().map(|r| r.unet).collect();
    let (w, p) = crate::stats::wilcoxon_signed_rank(&unet_r, &fbp)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let report = SaliencyReport {
        views,
        n: rows.len(),
        mean_fbp: mean(&fbp),
        mean_unet: mean(&unet_r),
        w,
        p,
        rows,
    };

    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("saliency.json"), report.to_json()?)?;
    fs::write(cfg.output_dir.join("saliency.csv"), report.csv())?;
    if let Some(first) = lesioned.first() {
        let ladder = recon_ladder(&first.image, cfg)?;
        let fbp_img = ladder.sparse.last().unwrap();
        let map_fbp = saliency_map(detector, fbp_img)?;
        let map_unet = saliency_map(detector, &unet_apply(unet, fbp_img)?)?;
        export_pgm(&map_fbp, (0.0, 1.0), &cfg.output_dir.join("saliency_fbp.pgm"))?;
        export_pgm(&map_unet, (0.0, 1.0), &cfg.output_dir.join("saliency_unet.pgm"))?;
    }
    Ok(report)
}
