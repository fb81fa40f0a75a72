//! Statistics stack: bootstrap confidence intervals, Wilcoxon signed-rank,
//! fast DeLong AUC analysis and paired test, ROC and confusion tooling,
//! Bonferroni correction and k-fold splitting.
//!
//! Ties are handled with midranks throughout (AUC) and a tie-corrected
//! variance (Wilcoxon). Wilcoxon drops zero differences, the classical
//! treatment; the Pratt variant would change p-values.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::core::{fisher_yates_shuffle, Rng};
use crate::error::{Error, Result};

/// Two-sided tail probability of a standard normal at |z|.
fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / SQRT_2).min(1.0)
}

/// Midranks (1-based, ties averaged). Input must be finite.
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64
}

fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() - 1) as f64
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::invalid("both classes must be present"));
    }
    Ok(())
}

/// Percentile of a sorted slice with linear interpolation between order
/// statistics.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac
    } else {
        sorted[lo]
    }
}

/// Percentile bootstrap CI for the mean. Returns (sample mean, lo, hi).
/// Resamples run on derived per-index streams, so the result is the same
/// for any thread count.
pub fn bootstrap_mean_ci(
    values: &[f64],
    n_resamples: usize,
    level: f64,
    rng: &mut Rng,
) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("bootstrap needs at least one value"));
    }
    if n_resamples == 0 {
        return Err(Error::invalid("bootstrap needs at least one resample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("bootstrap level must be in (0, 1)"));
    }
    let n = values.len();
    let base = rng.next_u64();
    let mut means: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut g = Rng::derive(base, r as u64);
            (0..n).map(|_| values[g.range_usize(n)]).sum::<f64>() / n as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0 * 100.0;
    let mean = values.iter().sum::<f64>() / n as f64;
    Ok((mean, percentile(&means, tail), percentile(&means, 100.0 - tail)))
}

/// Wilcoxon signed-rank test, two-sided. Zero differences are dropped;
/// at least 10 nonzero differences are required for the normal
/// approximation. Returns (W, p) with W = min(W+, W-).
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::invalid("paired samples differ in length"));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("differences must be finite"));
    }
    if d.len() < 10 {
        return Err(Error::invalid(
            "need at least 10 nonzero differences for the normal approximation",
        ));
    }
    let n = d.len() as f64;
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, &v)| v > 0.0)
        .map(|(r, _)| r)
        .sum();
    let w_minus = n * (n + 1.0) / 2.0 - w_plus;
    let w = w_plus.min(w_minus);

    // Tie correction: sum of (t^3 - t) over groups of equal |d|.
    let mut sorted = abs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie / 48.0;
    if var <= 0.0 {
        return Err(Error::invalid("degenerate rank variance"));
    }
    let mean = n * (n + 1.0) / 4.0;
    let diff = w - mean;
    // Continuity correction of one half step toward the mean.
    let corr = if diff > 0.0 {
        0.5
    } else if diff < 0.0 {
        -0.5
    } else {
        0.0
    };
    let z = (diff - corr) / var.sqrt();
    Ok((w, normal_two_sided_p(z)))
}

/// DeLong AUC analysis: midrank AUC plus the structural components that
/// feed its variance estimate.
#[derive(Debug, Clone)]
pub struct RocAnalysis {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub auc: f64,
    /// One entry per positive, in order of appearance.
    pub v10: Vec<f64>,
    /// One entry per negative, in order of appearance.
    pub v01: Vec<f64>,
    pub variance: f64,
}

impl RocAnalysis {
    /// 95% Wald interval auc +- 1.96 sqrt(variance), clipped to [0, 1].
    pub fn wald_ci(&self) -> (f64, f64) {
        let half = 1.96 * self.variance.sqrt();
        ((self.auc - half).max(0.0), (self.auc + half).min(1.0))
    }
}

pub fn delong_analysis(scores: &[f64], labels: &[bool]) -> Result<RocAnalysis> {
    check_scores(scores, labels)?;
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    let m = pos.len() as f64;
    let k = neg.len() as f64;

    let t_all = midranks(scores);
    let t_pos = midranks(&pos);
    let t_neg = midranks(&neg);

    let mut v10 = Vec::with_capacity(pos.len());
    let mut v01 = Vec::with_capacity(neg.len());
    let mut pi = 0;
    let mut ni = 0;
    let mut rank_sum = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l {
            rank_sum += t_all[i];
            v10.push((t_all[i] - t_pos[pi]) / k);
            pi += 1;
        } else {
            v01.push(1.0 - (t_all[i] - t_neg[ni]) / m);
            ni += 1;
        }
    }
    let auc = (rank_sum - m * (m + 1.0) / 2.0) / (m * k);
    let variance = sample_var(&v10) / m + sample_var(&v01) / k;
    Ok(RocAnalysis {
        scores: scores.to_vec(),
        labels: labels.to_vec(),
        auc,
        v10,
        v01,
        variance,
    })
}

/// Paired two-sided DeLong test for correlated ROC curves.
///
/// When the variance of the AUC difference degenerates to zero the test is
/// decided directly: equal AUCs give p = 1, unequal ones give p = 0 with an
/// infinite z.
pub fn delong_test(scores_a: &[f64], scores_b: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    let a = delong_analysis(scores_a, labels)?;
    let b = delong_analysis(scores_b, labels)?;
    let m = a.v10.len() as f64;
    let k = a.v01.len() as f64;
    let cov = sample_cov(&a.v10, &b.v10) / m + sample_cov(&a.v01, &b.v01) / k;
    let var = a.variance + b.variance - 2.0 * cov;
    let delta = a.auc - b.auc;
    if var <= 0.0 {
        if delta == 0.0 {
            return Ok((0.0, 1.0));
        }
        return Ok((delta.signum() * f64::INFINITY, 0.0));
    }
    let z = delta / var.sqrt();
    Ok((z, normal_two_sided_p(z)))
}

/// ROC points (fpr, tpr, threshold) at unique scores descending, classifying
/// score >= threshold as positive; starts at (0, 0, +inf), ends at (1, 1).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    check_scores(scores, labels)?;
    let m = labels.iter().filter(|&&l| l).count() as f64;
    let k = labels.len() as f64 - m;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut curve = vec![(0.0, 0.0, f64::INFINITY)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push((fp as f64 / k, tp as f64 / m, threshold));
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
    pub tn: usize,
    pub threshold: f64,
}

impl ConfusionMatrix {
    pub fn tpr(&self) -> f64 {
        self.tp as f64 / (self.tp + self.r#fn) as f64
    }

    pub fn tnr(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp) as f64
    }

    pub fn gmean(&self) -> f64 {
        (self.tpr() * self.tnr()).sqrt()
    }
}

fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix { tp: 0, fp: 0, r#fn: 0, tn: 0, threshold };
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.r#fn += 1,
            (false, false) => cm.tn += 1,
        }
    }
    cm
}

/// Operating point maximizing sqrt(TPR * TNR). Candidate thresholds are the
/// midpoints between consecutive unique scores plus the two infinities, so
/// "score >= threshold" is unambiguous under ties; ties in the geometric
/// mean go to the smallest threshold. With all scores equal the only
/// candidates are the infinities, both scoring zero, so -inf is returned.
pub fn gmean_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, ConfusionMatrix)> {
    check_scores(scores, labels)?;
    let mut uniq = scores.to_vec();
    uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
    uniq.dedup();
    let mut candidates = vec![f64::NEG_INFINITY];
    for w in uniq.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    candidates.push(f64::INFINITY);

    let mut best: Option<(f64, ConfusionMatrix, f64)> = None;
    for &t in &candidates {
        let cm = confusion_at(scores, labels, t);
        let g = cm.gmean();
        if best.as_ref().map_or(true, |(_, _, bg)| g > *bg) {
            best = Some((t, cm, g));
        }
    }
    let (t, cm, _) = best.unwrap();
    Ok((t, cm))
}

/// Bonferroni-corrected significance level alpha / m.
pub fn bonferroni(alpha: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("bonferroni needs at least one comparison"));
    }
    Ok(alpha / m as f64)
}

/// Shuffled k-fold split of 0..n: k (train, val) index pairs with near-equal
/// validation folds; the first n % k folds take the extra element.
pub fn kfold_split(n: usize, k: usize, rng: &mut Rng) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n {
        return Err(Error::invalid("k-fold needs 2 <= k <= n"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    fisher_yates_shuffle(&mut idx, rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[start..start + size].to_vec());
        start += size;
    }
    let mut splits = Vec::with_capacity(k);
    for f in 0..k {
        let val = folds[f].clone();
        let mut train = Vec::with_capacity(n - val.len());
        for (g, fold) in folds.iter().enumerate() {
            if g != f {
                train.extend_from_slice(fold);
            }
        }
        splits.push((train, val));
    }
    Ok(splits)
}
