//! Scratch diagnosis harness for the lesion detector. Not part of the
//! shipped surface; run manually while calibrating training defaults.

use sparsect::core::Rng;
use sparsect::models::{train_detector, Detector, DetectorConfig};
use sparsect::phantom::{add_lesion, make_dataset, make_dataset_with, LabeledSample, LesionParams};
use sparsect::pipeline::{detector_scores, reference_recon, ExperimentConfig};
use sparsect::stats::delong_analysis;
use sparsect::Result;

fn lesion_visibility(cfg: &ExperimentConfig) -> Result<()> {
    let n = cfg.phantom_size;
    let clean = LabeledSample::clean(n, 42)?;
    let mut lesioned = clean.clone();
    let mut rng = Rng::new(43);
    let params = LesionParams::default();
    add_lesion(
        &mut lesioned,
        &mut rng,
        rng_contrast(&params, &mut Rng::new(44)),
        params.radius_px(n),
    )?;
    let rc = reference_recon(&clean.image, cfg)?;
    let rl = reference_recon(&lesioned.image, cfg)?;

    let mut max_diff: f64 = 0.0;
    let mut mean_in = 0.0;
    let mut count_in = 0usize;
    for i in 0..rc.data.len() {
        let d = (rl.data[i] - rc.data[i]).abs();
        if lesioned.lesion_mask.data[i] {
            mean_in += d;
            count_in += 1;
        }
        max_diff = max_diff.max(d);
    }
    mean_in /= count_in.max(1) as f64;

    let mut noise = 0.0;
    let mut count_sk = 0usize;
    for i in 0..rc.data.len() {
        if clean.skull_mask.data[i] {
            let e = rc.data[i] - clean.image.data[i];
            noise += e * e;
            count_sk += 1;
        }
    }
    let rms_noise = (noise / count_sk as f64).sqrt();
    println!(
        "lesion visibility: mean |recon delta| inside lesion {mean_in:.4}, max {max_diff:.4}, recon rms error inside skull {rms_noise:.4}"
    );
    Ok(())
}

fn rng_contrast(params: &LesionParams, rng: &mut Rng) -> f64 {
    rng.range_f64(params.contrast.0, params.contrast.1)
}

fn train_eval(
    tag: &str,
    channels: Vec<usize>,
    train: &[LabeledSample],
    val: &[LabeledSample],
    test: &[LabeledSample],
    epochs: usize,
    batch: usize,
) -> Result<()> {
    let size = train[0].image.width;
    let dcfg = DetectorConfig { input_size: size, channels };
    let mut rng = Rng::derive(7, 6);
    let mut net = Detector::new(dcfg, &mut rng)?;
    let outcome = train_detector(&mut net, train, val, epochs, batch, &mut rng)?;
    let images: Vec<_> = test.iter().map(|s| s.image.clone()).collect();
    let labels: Vec<bool> = test.iter().map(|s| s.label).collect();
    let scores = detector_scores(&net, &images)?;
    let roc = delong_analysis(&scores, &labels)?;
    let last = outcome.log.last().unwrap();
    let best = &outcome.log[outcome.best_epoch];
    println!(
        "{tag}: best epoch {} (val {:.4}), final train/val {:.4}/{:.4}, test auc {:.4}",
        outcome.best_epoch,
        best.val_loss.unwrap_or(f64::NAN),
        last.train_loss,
        last.val_loss.unwrap_or(f64::NAN),
        roc.auc
    );
    Ok(())
}

fn main() -> Result<()> {
    let cfg = ExperimentConfig::default();
    lesion_visibility(&cfg)?;

    let mut rng = Rng::derive(7, 1);
    let train = make_dataset(200, 0.5, 64, &mut rng)?;
    let mut rng = Rng::derive(7, 2);
    let val = make_dataset(50, 0.5, 64, &mut rng)?;
    let mut rng = Rng::derive(7, 3);
    let test = make_dataset(100, 0.5, 64, &mut rng)?;

    let variant = std::env::args().nth(1).unwrap_or_default();
    match variant.as_str() {
        "a" => train_eval("2-stage [8,16] e60 b32", vec![8, 16], &train, &val, &test, 60, 32)?,
        "b" => train_eval("4-stage [8,16,32,64] e60 b32", vec![8, 16, 32, 64], &train, &val, &test, 60, 32)?,
        "c" => train_eval("2-stage [16,32] e60 b32", vec![16, 32], &train, &val, &test, 60, 32)?,
        "d" => train_eval("3-stage [8,16,32] e60 b32", vec![8, 16, 32], &train, &val, &test, 60, 32)?,
        "easy" => {
            let params = LesionParams { contrast: (0.4, 0.5), radius_frac: (0.04, 0.08) };
            let mut rng = Rng::derive(7, 1);
            let tr = make_dataset_with(200, 0.5, 64, &params, &mut rng)?;
            let mut rng = Rng::derive(7, 2);
            let va = make_dataset_with(50, 0.5, 64, &params, &mut rng)?;
            let mut rng = Rng::derive(7, 3);
            let te = make_dataset_with(100, 0.5, 64, &params, &mut rng)?;
            train_eval("easy contrast 0.4-0.5, e30 b32", vec![8, 16, 32, 64], &tr, &va, &te, 30, 32)?
        }
        "mid" => {
            let params = LesionParams { contrast: (0.2, 0.3), radius_frac: (0.04, 0.08) };
            let mut rng = Rng::derive(7, 1);
            let tr = make_dataset_with(200, 0.5, 64, &params, &mut rng)?;
            let mut rng = Rng::derive(7, 2);
            let va = make_dataset_with(50, 0.5, 64, &params, &mut rng)?;
            let mut rng = Rng::derive(7, 3);
            let te = make_dataset_with(100, 0.5, 64, &params, &mut rng)?;
            train_eval("mid contrast 0.2-0.3, e30 b32", vec![8, 16, 32, 64], &tr, &va, &te, 30, 32)?
        }
        _ => train_eval("4-stage [8,16,32,64] e20 b16", vec![8, 16, 32, 64], &train, &val, &test, 20, 16)?,
    }
    Ok(())
}
