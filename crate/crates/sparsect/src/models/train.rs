//! Training loops for the artifact-reduction network and the lesion
//! detector, plus the shared patch augmentation.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::core::{fisher_yates_shuffle, Image2D, Rng};
use crate::error::{Error, Result};
use crate::models::detector::Detector;
use crate::models::unet::UNet;
use crate::nn::{adam_step, bce_loss, lr_at, mse_loss, AdamState, Conv, LrSchedule, Tensor4};
use crate::phantom::LabeledSample;

#[derive(Clone, Copy, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// `epoch,lr,train_loss,val_loss` rows; the last column stays empty for
/// logs without validation.
pub fn write_log_csv(log: &[EpochLog], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "epoch,lr,train_loss,val_loss").unwrap();
    for e in log {
        match e.val_loss {
            Some(v) => writeln!(out, "{},{},{},{}", e.epoch, e.lr, e.train_loss, v).unwrap(),
            None => writeln!(out, "{},{},{},", e.epoch, e.lr, e.train_loss).unwrap(),
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Rotate a square row-major field by k quarter turns.
pub fn rotate90(data: &[f64], n: usize, k: usize) -> Vec<f64> {
    assert_eq!(data.len(), n * n, "rotate90 needs a square field");
    let src = |r: usize, c: usize| data[r * n + c];
    (0..n * n)
        .map(|i| {
            let (r, c) = (i / n, i % n);
            match k % 4 {
                0 => src(r, c),
                1 => src(n - 1 - c, r),
                2 => src(n - 1 - r, n - 1 - c),
                _ => src(c, n - 1 - r),
            }
        })
        .collect()
}

fn crop(img: &Image2D, r0: usize, c0: usize, p: usize) -> Vec<f64> {
    let mut patch = Vec::with_capacity(p * p);
    for r in 0..p {
        let row = (r0 + r) * img.width + c0;
        patch.extend_from_slice(&img.data[row..row + p]);
    }
    patch
}

/// Training patches are half the configured input size when that stays
/// divisible by 2^depth, otherwise full frames.
fn patch_size(net: &UNet) -> usize {
    let half = net.cfg.input_size / 2;
    if half > 0 && half % (1usize << net.cfg.depth) == 0 {
        half
    } else {
        net.cfg.input_size
    }
}

fn gather_params(convs: &[Conv]) -> Vec<f64> {
    let mut flat = Vec::new();
    for c in convs {
        flat.extend_from_slice(&c.weight);
        flat.extend_from_slice(&c.bias);
    }
    flat
}

fn gather_grads(convs: &[Conv]) -> Vec<f64> {
    let mut flat = Vec::new();
    for c in convs {
        flat.extend_from_slice(&c.wgrad);
        flat.extend_from_slice(&c.bgrad);
    }
    flat
}

fn scatter_params(convs: &mut [Conv], flat: &[f64]) {
    let mut at = 0;
    for c in convs {
        let nw = c.weight.len();
        c.weight.copy_from_slice(&flat[at..at + nw]);
        at += nw;
        let nb = c.bias.len();
        c.bias.copy_from_slice(&flat[at..at + nb]);
        at += nb;
    }
    debug_assert_eq!(at, flat.len());
}

/// One epoch = one random patch per pair, each rotated by a random quarter
/// turn, shuffled and consumed in minibatches with MSE + Adam.
pub fn train_unet(
    net: &mut UNet,
    pairs: &[(Image2D, Image2D)],
    epochs: usize,
    batch: usize,
    schedule: &LrSchedule,
    rng: &mut Rng,
) -> Result<Vec<EpochLog>> {
    if pairs.is_empty() {
        return Err(Error::invalid("training requires at least one image pair"));
    }
    if batch == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let p = patch_size(net);
    for (i, (a, b)) in pairs.iter().enumerate() {
        if a.width != b.width || a.height != b.height {
            return Err(Error::invalid(format!("pair {i} images differ in size")));
        }
        if a.width < p || a.height < p {
            return Err(Error::invalid(format!(
                "pair {i} is {}x{}, smaller than the {p}px training patch",
                a.width, a.height
            )));
        }
    }

    let mut state = AdamState::new(gather_params(net.convs()).len());
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lr = lr_at(schedule, epoch);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        fisher_yates_shuffle(&mut order, rng);
        let patches: Vec<(Vec<f64>, Vec<f64>)> = order
            .iter()
            .map(|&i| {
                let (sparse, reference) = &pairs[i];
                let r0 = rng.range_usize(sparse.height - p + 1);
                let c0 = rng.range_usize(sparse.width - p + 1);
                let k = rng.range_usize(4);
                (
                    rotate90(&crop(sparse, r0, c0, p), p, k),
                    rotate90(&crop(reference, r0, c0, p), p, k),
                )
            })
            .collect();

        let mut loss_sum = 0.0;
        for chunk in patches.chunks(batch) {
            let bs = chunk.len();
            let mut x = Tensor4::zeros(bs, 1, p, p);
            let mut t = Tensor4::zeros(bs, 1, p, p);
            for (bi, (sp, re)) in chunk.iter().enumerate() {
                x.data[bi * p * p..(bi + 1) * p * p].copy_from_slice(sp);
                t.data[bi * p * p..(bi + 1) * p * p].copy_from_slice(re);
            }
            let (out, trace) = net.forward_train(&x)?;
            let (loss, dout) = mse_loss(&out, &t)?;
            net.zero_grads();
            net.backward(&trace, &dout)?;
            let mut params = gather_params(net.convs());
            let grads = gather_grads(net.convs());
            adam_step(&mut params, &grads, &mut state, lr);
            scatter_params(net.convs_mut(), &params);
            loss_sum += loss * bs as f64;
        }
        let train_loss = loss_sum / pairs.len() as f64;
        log.push(EpochLog { epoch, lr, train_loss, val_loss: None });
    }
    Ok(log)
}

pub struct DetectorOutcome {
    pub log: Vec<EpochLog>,
    /// Epoch whose weights the returned network carries.
    pub best_epoch: usize,
}

fn batch_images(samples: &[&LabeledSample], size: usize) -> Tensor4 {
    let n = size * size;
    let mut x = Tensor4::zeros(samples.len(), 1, size, size);
    for (bi, s) in samples.iter().enumerate() {
        x.data[bi * n..(bi + 1) * n].copy_from_slice(&s.image.data);
    }
    x
}

fn mean_bce(net: &Detector, samples: &[&LabeledSample], batch: usize, size: usize) -> Result<f64> {
    let mut sum = 0.0;
    for chunk in samples.chunks(batch) {
        let x = batch_images(chunk, size);
        let logits = net.forward_logits(&x)?;
        for (z, s) in logits.iter().zip(chunk) {
            sum += bce_loss(*z, if s.label { 1.0 } else { 0.0 }).0;
        }
    }
    Ok(sum / samples.len() as f64)
}

/// BCE + Adam under the warm-restart cosine schedule (base 5e-4, floor
/// 1e-5, restarts after epochs 1, 3 and 7). Validation runs every epoch
/// and the weights from the best epoch are restored at the end.
pub fn train_detector(
    net: &mut Detector,
    train: &[LabeledSample],
    val: &[LabeledSample],
    epochs: usize,
    batch: usize,
    rng: &mut Rng,
) -> Result<DetectorOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if batch == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if epochs == 0 {
        return Err(Error::invalid("need at least one epoch"));
    }
    let positives = train.iter().filter(|s| s.label).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::invalid("training set has a single class"));
    }
    let size = net.cfg.input_size;
    for s in train.iter().chain(val) {
        if s.image.width != size || s.image.height != size {
            return Err(Error::invalid(format!(
                "sample image {}x{} does not match detector input {size}",
                s.image.width, s.image.height
            )));
        }
    }

    let restarts: Vec<usize> = [1, 3, 7].into_iter().filter(|&r| r < epochs).collect();
    let schedule = LrSchedule::cosine_warm_restarts(5e-4, 1e-5, restarts, epochs)?;

    let mut state = AdamState::new(gather_params(net.convs()).len());
    let mut log = Vec::with_capacity(epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for epoch in 0..epochs {
        let lr = lr_at(&schedule, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        fisher_yates_shuffle(&mut order, rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            let samples: Vec<&LabeledSample> = chunk.iter().map(|&i| &train[i]).collect();
            let x = batch_images(&samples, size);
            let (logits, trace) = net.forward_train(&x)?;
            let bs = samples.len() as f64;
            let mut dlogits = vec![0.0; samples.len()];
            for (i, (z, s)) in logits.iter().zip(&samples).enumerate() {
                let (l, g) = bce_loss(*z, if s.label { 1.0 } else { 0.0 });
                loss_sum += l;
                dlogits[i] = g / bs;
            }
            net.zero_grads();
            net.backward(&trace, &dlogits)?;
            let mut params = gather_params(net.convs());
            let grads = gather_grads(net.convs());
            adam_step(&mut params, &grads, &mut state, lr);
            scatter_params(net.convs_mut(), &params);
        }

        let val_refs: Vec<&LabeledSample> = val.iter().collect();
        let val_loss = mean_bce(net, &val_refs, batch, size)?;
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, gather_params(net.convs())));
        }
        log.push(EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_loss: Some(val_loss),
        });
    }

    let (_, best_epoch, snapshot) = best.unwrap();
    scatter_params(net.convs_mut(), &snapshot);
    Ok(DetectorOutcome { log, best_epoch })
}
