//! Isotropic total-variation denoising via Chambolle's projection
//! algorithm, plus the SSIM-driven weight sweep.
//!
//! Solves argmin_u TV(u) + ||u - f||^2 / (2 w) through the dual iteration
//!   p <- (p + tau grad(div p - f/w)) / (1 + tau |grad(div p - f/w)|)
//! with forward-difference gradients, backward-difference divergence and
//! Neumann boundaries; the denoised image is u = f - w div p. Larger weight
//! means stronger smoothing.

use rayon::prelude::*;

use crate::core::{Image2D, Mask2D};
use crate::error::{Error, Result};
use crate::metrics::{ssim, MetricConfig};

/// Dual step size; 1/4 is the 2-D convergence bound.
const TAU: f64 = 0.25;

#[derive(Debug, Clone, Copy)]
pub struct TvParams {
    pub weight: f64,
    pub max_iter: usize,
    /// Stop when the primal-energy change drops below eps times the
    /// starting energy.
    pub eps: f64,
}

impl TvParams {
    pub fn new(weight: f64) -> Self {
        TvParams { weight, max_iter: 200, eps: 2e-4 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0) || !self.weight.is_finite() {
            return Err(Error::invalid("tv weight must be positive and finite"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("tv max_iter must be at least 1"));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::invalid("tv eps must be non-negative"));
        }
        Ok(())
    }
}

/// Backward-difference divergence of the dual field. The update never puts
/// mass in the last column of px or last row of py, so the plain backward
/// stencil telescopes to an exactly conserved sum.
fn divergence(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let mut d = px[i] + py[i];
            if col > 0 {
                d -= px[i - 1];
            }
            if row > 0 {
                d -= py[i - w];
            }
            out[i] = d;
        }
    }
}

fn total_variation_of(data: &[f64], w: usize, h: usize) -> f64 {
    let mut tv = 0.0;
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let gx = if col + 1 < w { data[i + 1] - data[i] } else { 0.0 };
            let gy = if row + 1 < h { data[i + w] - data[i] } else { 0.0 };
            tv += (gx * gx + gy * gy).sqrt();
        }
    }
    tv
}

/// Sum over pixels of the forward-difference gradient magnitude, Neumann
/// boundary (zero difference past the last row and column).
pub fn total_variation(image: &Image2D) -> f64 {
    total_variation_of(&image.data, image.width, image.height)
}

/// Denoise and return the primal energy TV(u) + ||u-f||^2/(2w) after every
/// iteration, starting with the energy of the input itself.
pub fn tv_denoise_traced(image: &Image2D, params: &TvParams) -> Result<(Image2D, Vec<f64>)> {
    params.validate()?;
    if image.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("tv input contains non-finite pixels"));
    }
    let (w, h) = (image.width, image.height);
    let n = w * h;
    let f = &image.data;
    let weight = params.weight;

    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut u = f.clone();

    let energy = |u: &[f64]| {
        let mut fid = 0.0;
        for i in 0..n {
            let d = u[i] - f[i];
            fid += d * d;
        }
        total_variation_of(u, w, h) + fid / (2.0 * weight)
    };

    let e_init = energy(&u);
    let mut trace = vec![e_init];
    let mut e_prev = e_init;

    for _ in 0..params.max_iter {
        divergence(&px, &py, w, h, &mut div);
        for i in 0..n {
            v[i] = div[i] - f[i] / weight;
        }
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                let gx = if col + 1 < w { v[i + 1] - v[i] } else { 0.0 };
                let gy = if row + 1 < h { v[i + w] - v[i] } else { 0.0 };
                let denom = 1.0 + TAU * (gx * gx + gy * gy).sqrt();
                px[i] = (px[i] + TAU * gx) / denom;
                py[i] = (py[i] + TAU * gy) / denom;
            }
        }
        divergence(&px, &py, w, h, &mut div);
        for i in 0..n {
            u[i] = f[i] - weight * div[i];
        }
        let e = energy(&u);
        trace.push(e);
        if (e_prev - e).abs() < params.eps * e_init {
            break;
        }
        e_prev = e;
    }

    Ok((Image2D::new(w, h, u, image.value_range)?, trace))
}

pub fn tv_denoise(image: &Image2D, params: &TvParams) -> Result<Image2D> {
    tv_denoise_traced(image, params).map(|(img, _)| img)
}

/// Mean masked SSIM of the denoised sparse images against their references,
/// for every weight on the grid. Returns the best weight (ties go to the
/// smallest) and the full (weight, score) curve.
pub fn tv_weight_sweep(
    pairs: &[(Image2D, Image2D, Mask2D)],
    grid: (f64, f64, f64),
) -> Result<(f64, Vec<(f64, f64)>)> {
    let (lo, hi, step) = grid;
    if pairs.is_empty() {
        return Err(Error::invalid("weight sweep needs at least one pair"));
    }
    if !(lo > 0.0) || !(step > 0.0) || hi < lo {
        return Err(Error::invalid("weight grid must satisfy 0 < lo <= hi, step > 0"));
    }
    let mut weights = Vec::new();
    let mut k = 0u64;
    loop {
        let wgt = lo + k as f64 * step;
        if wgt > hi + 1e-9 * step {
            break;
        }
        weights.push(wgt);
        k += 1;
    }

    let cfg = MetricConfig::default();
    let curve: Vec<(f64, f64)> = weights
        .par_iter()
        .map(|&wgt| {
            let params = TvParams::new(wgt);
            let mut acc = 0.0;
            for (sparse, reference, mask) in pairs {
                let den = tv_denoise(sparse, &params)?;
                acc += ssim(&den, reference, mask, &cfg)?;
            }
            Ok((wgt, acc / pairs.len() as f64))
        })
        .collect::<Result<_>>()?;

    let mut best = curve[0];
    for &(wgt, score) in &curve[1..] {
        if score > best.1 {
            best = (wgt, score);
        }
    }
    Ok((best.0, curve))
}
