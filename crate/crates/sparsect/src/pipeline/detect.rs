//! Detection experiment: the lesion detector is scored over every
//! (view count, method) cell of the test set, anchored by the full-view
//! reconstructions it was trained against. Emits a three-table bundle
//! (AUC with Wald intervals, gmean-threshold confusion matrices, DeLong
//! comparisons) plus ROC points and an AUC-versus-views series as data.

use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::Image2D;
use crate::error::{Error, Result};
use crate::models::{Detector, UNet};
use crate::pipeline::config::{ExperimentConfig, Method};
use crate::pipeline::data::{
    apply_method, detector_scores, fmt_float, json_num, make_splits, recon_ladder,
    select_tv_weights, MethodKit, ReconLadder, SplitManifest, TvSelection,
};
use crate::stats::{bonferroni, delong_analysis, delong_test, gmean_threshold, roc_curve};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AucCell {
    pub views: usize,
    pub method: Method,
    pub n_pos: usize,
    pub n_neg: usize,
    pub auc: f64,
    pub variance: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Raw detector logits in test-set order, kept so any cell can be
    /// recomputed from the report alone.
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionCell {
    pub views: usize,
    pub method: Method,
    #[serde(with = "json_num")]
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fneg: usize,
    pub tn: usize,
    pub tpr: f64,
    pub tnr: f64,
    pub gmean: f64,
}

/// One DeLong comparison row. `family` is either "vs_full_view" (cell
/// against the full-view anchor) or "between_methods" (two methods at the
/// same sparse level).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelongComparison {
    pub family: String,
    pub views: usize,
    pub method: Method,
    pub baseline_views: usize,
    pub baseline_method: Method,
    #[serde(with = "json_num")]
    pub z: f64,
    pub p: f64,
    pub alpha: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    #[serde(with = "json_num")]
    pub threshold: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RocSeries {
    pub views: usize,
    pub method: Method,
    pub points: Vec<RocPoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AucSeries {
    pub method: Method,
    pub points: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionReport {
    pub phantom_size: usize,
    pub reference_views: usize,
    pub manifest: SplitManifest,
    /// Test labels in the same order as every cell's scores.
    pub labels: Vec<bool>,
    pub auc: Vec<AucCell>,
    pub confusion: Vec<ConfusionCell>,
    pub delong: Vec<DelongComparison>,
    pub roc: Vec<RocSeries>,
    pub auc_vs_views: Vec<AucSeries>,
}

impl DetectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn auc_cell(&self, views: usize, method: Method) -> Option<&AucCell> {
        self.auc.iter().find(|c| c.views == views && c.method == method)
    }

    pub fn auc_csv(&self) -> String {
        let mut out = String::from("views,method,n_pos,n_neg,auc,variance,ci_lo,ci_hi\n");
        for c in &self.auc {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.views,
                c.method.name(),
                c.n_pos,
                c.n_neg,
                fmt_float(c.auc),
                fmt_float(c.variance),
                fmt_float(c.ci_lo),
                fmt_float(c.ci_hi),
            ));
        }
        out
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("views,method,threshold,tp,fp,fn,tn,tpr,tnr,gmean\n");
        for c in &self.confusion {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.views,
                c.method.name(),
                fmt_float(c.threshold),
                c.tp,
                c.fp,
                c.fneg,
                c.tn,
                fmt_float(c.tpr),
                fmt_float(c.tnr),
                fmt_float(c.gmean),
            ));
        }
        out
    }

    pub fn delong_csv(&self) -> String {
        let mut out = String::from(
            "family,views,method,baseline_views,baseline_method,z,p,alpha,significant\n",
        );
        for d in &self.delong {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                d.family,
                d.views,
                d.method.name(),
                d.baseline_views,
                d.baseline_method.name(),
                fmt_float(d.z),
                fmt_float(d.p),
                fmt_float(d.alpha),
                d.significant,
            ));
        }
        out
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("views,method,fpr,tpr,threshold\n");
        for s in &self.roc {
            for p in &s.points {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    s.views,
                    s.method.name(),
                    fmt_float(p.fpr),
                    fmt_float(p.tpr),
                    fmt_float(p.threshold),
                ));
            }
        }
        out
    }

    pub fn auc_vs_views_csv(&self) -> String {
        let mut out = String::from("method,views,auc\n");
        for s in &self.auc_vs_views {
            for &(views, auc) in &s.points {
                out.push_str(&format!("{},{},{}\n", s.method.name(), views, fmt_float(auc)));
            }
        }
        out
    }
}

pub fn run_detection_experiment(
    cfg: &ExperimentConfig,
    detector: &Detector,
    unet: Option<&UNet>,
    tv_weights: Option<&[TvSelection]>,
) -> Result<DetectionReport> {
    cfg.validate()?;
    if detector.cfg.input_size != cfg.phantom_size {
        return Err(Error::invalid(format!(
            "detector expects {} pixels, config wants {}",
            detector.cfg.input_size, cfg.phantom_size
        )));
    }
    if cfg.has_method(Method::Unet) {
        let net = MethodKit { tv_weights: &[], unet }.require_unet()?;
        if net.cfg.input_size != cfg.phantom_size {
            return Err(Error::invalid(format!(
                "U-Net expects {} pixels, config wants {}",
                net.cfg.input_size, cfg.phantom_size
            )));
        }
    }

    let splits = make_splits(cfg)?;
    let manifest = SplitManifest::new(&splits);
    let labels: Vec<bool> = splits.test.iter().map(|s| s.label).collect();

    let owned_weights;
    let tv_weights: &[TvSelection] = match tv_weights {
        Some(w) => w,
        None if cfg.has_method(Method::Tv) => {
            owned_weights = select_tv_weights(cfg, &splits.train)?;
            &owned_weights
        }
        None => &[],
    };
    let kit = MethodKit { tv_weights, unet };

    let ladders: Vec<ReconLadder> = splits
        .test
        .par_iter()
        .map(|s| recon_ladder(&s.image, cfg))
        .collect::<Result<_>>()?;

    // Score grid: the full-view anchor, then ladder x methods.
    let mut grid: Vec<(usize, Method, Vec<f64>)> = Vec::new();
    {
        let full: Vec<Image2D> = ladders.iter().map(|l| l.reference.clone()).collect();
        grid.push((cfg.reference_views, Method::Fbp, detector_scores(detector, &full)?));
    }
    for (li, &views) in cfg.view_ladder.iter().enumerate() {
        for &method in &cfg.methods {
            let images: Vec<Image2D> = ladders
                .par_iter()
                .map(|l| apply_method(&kit, method, views, &l.sparse[li]))
                .collect::<Result<_>>()?;
            grid.push((views, method, detector_scores(detector, &images)?));
        }
    }

    let mut auc = Vec::new();
    let mut confusion = Vec::new();
    let mut roc = Vec::new();
    for (views, method, scores) in &grid {
        let analysis = delong_analysis(scores, &labels)?;
        let (ci_lo, ci_hi) = analysis.wald_ci();
        auc.push(AucCell {
            views: *views,
            method: *method,
            n_pos: analysis.v10.len(),
            n_neg: analysis.v01.len(),
            auc: analysis.auc,
            variance: analysis.variance,
            ci_lo,
            ci_hi,
            scores: scores.clone(),
        });
        let (threshold, cm) = gmean_threshold(scores, &labels)?;
        confusion.push(ConfusionCell {
            views: *views,
            method: *method,
            threshold,
            tp: cm.tp,
            fp: cm.fp,
            fneg: cm.r#fn,
            tn: cm.tn,
            tpr: cm.tpr(),
            tnr: cm.tnr(),
            gmean: cm.gmean(),
        });
        roc.push(RocSeries {
            views: *views,
            method: *method,
            points: roc_curve(scores, &labels)?
                .into_iter()
                .map(|(fpr, tpr, threshold)| RocPoint { fpr, tpr, threshold })
                .collect(),
        });
    }

    let full_scores = &grid[0].2;
    let alpha_full = bonferroni(0.001, 6)?;
    let alpha_pair = bonferroni(0.001, 3)?;
    let mut delong = Vec::new();
    for &views in &cfg.view_ladder {
        for &method in &cfg.methods {
            let scores = cell_scores(&grid, views, method);
            let (z, p) = delong_test(scores, full_scores, &labels)?;
            delong.push(DelongComparison {
                family: "vs_full_view".to_string(),
                views,
                method,
                baseline_views: cfg.reference_views,
                baseline_method: Method::Fbp,
                z,
                p,
                alpha: alpha_full,
                significant: p < alpha_full,
            });
        }
        for (ai, &a) in cfg.methods.iter().enumerate() {
            for &b in &cfg.methods[ai + 1..] {
                let sa = cell_scores(&grid, views, a);
                let sb = cell_scores(&grid, views, b);
                let (z, p) = delong_test(sa, sb, &labels)?;
                delong.push(DelongComparison {
                    family: "between_methods".to_string(),
                    views,
                    method: a,
                    baseline_views: views,
                    baseline_method: b,
                    z,
                    p,
                    alpha: alpha_pair,
                    significant: p < alpha_pair,
                });
            }
        }
    }

    let mut auc_vs_views = Vec::new();
    for &method in &cfg.methods {
        let mut points = Vec::new();
        if method == Method::Fbp {
            points.push((cfg.reference_views, auc[0].auc));
        }
        for &views in &cfg.view_ladder {
            let cell = auc
                .iter()
                .find(|c| c.views == views && c.method == method)
                .expect("every grid cell has an AUC row");
            points.push((views, cell.auc));
        }
        auc_vs_views.push(AucSeries { method, points });
    }

    let report = DetectionReport {
        phantom_size: cfg.phantom_size,
        reference_views: cfg.reference_views,
        manifest,
        labels,
        auc,
        confusion,
        delong,
        roc,
        auc_vs_views,
    };

    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("detect.json"), report.to_json()?)?;
    fs::write(cfg.output_dir.join("detect_auc.csv"), report.auc_csv())?;
    fs::write(cfg.output_dir.join("detect_confusion.csv"), report.confusion_csv())?;
    fs::write(cfg.output_dir.join("detect_delong.csv"), report.delong_csv())?;
    fs::write(cfg.output_dir.join("detect_roc.csv"), report.roc_csv())?;
    fs::write(cfg.output_dir.join("detect_auc_vs_views.csv"), report.auc_vs_views_csv())?;
    Ok(report)
}

fn cell_scores<'a>(grid: &'a [(usize, Method, Vec<f64>)], views: usize, method: Method) -> &'a [f64] {
    &grid
        .iter()
        .find(|(v, m, _)| *v == views && *m == method)
        .expect("every configured cell was scored")
        .2
}
