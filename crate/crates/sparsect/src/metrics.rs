//! Masked image-quality metrics: SSIM, PSNR and SNR.
//!
//! SSIM follows the uniform-window formulation (7x7 box, K1 = 0.01,
//! K2 = 0.03, sample covariance). The per-pixel map is defined where the
//! full window fits inside the image; the masked score is the mean of the
//! map over mask pixels inside that valid region, so windows may straddle
//! the mask boundary. PSNR and SNR are plain pixel sums over the mask.

use crate::core::{Image2D, Mask2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct MetricConfig {
    /// Box window side, odd and >= 3.
    pub ssim_window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range L; None takes the reference image's declared range.
    pub data_range: Option<f64>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { ssim_window: 7, k1: 0.01, k2: 0.03, data_range: None }
    }
}

impl MetricConfig {
    fn validate(&self) -> Result<()> {
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(Error::invalid("ssim window must be odd and >= 3"));
        }
        if !(self.k1 > 0.0) || !(self.k2 > 0.0) {
            return Err(Error::invalid("K1 and K2 must be positive"));
        }
        Ok(())
    }

    fn resolve_range(&self, reference: &Image2D) -> Result<f64> {
        let l = self
            .data_range
            .unwrap_or(reference.value_range.1 - reference.value_range.0);
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::invalid("data range must be positive and finite"));
        }
        Ok(l)
    }
}

fn check_shapes(x: &Image2D, reference: &Image2D, mask: &Mask2D) -> Result<()> {
    if !x.same_shape(reference) || x.width != mask.width || x.height != mask.height {
        return Err(Error::invalid("metric inputs must share dimensions"));
    }
    if mask.count() == 0 {
        return Err(Error::invalid("metric mask is empty"));
    }
    Ok(())
}

/// Separable box mean. Each output is a fresh per-pixel sum of `win` terms
/// in both passes, so the result at (r, c) depends on exactly the window
/// around (r, c) and nothing else; only the valid interior (full window in
/// bounds) is written.
fn box_mean(src: &[f64], width: usize, height: usize, win: usize) -> Vec<f64> {
    let pad = win / 2;
    let norm = 1.0 / (win * win) as f64;
    let mut horiz = vec![0.0; src.len()];
    for row in 0..height {
        let base = row * width;
        for col in pad..width - pad {
            let mut s = 0.0;
            for k in 0..win {
                s += src[base + col - pad + k];
            }
            horiz[base + col] = s;
        }
    }
    let mut out = vec![0.0; src.len()];
    for row in pad..height - pad {
        for col in pad..width - pad {
            let mut s = 0.0;
            for k in 0..win {
                s += horiz[(row - pad + k) * width + col];
            }
            out[row * width + col] = s * norm;
        }
    }
    out
}

/// Mean structural similarity between `x` and `reference` over `mask`.
pub fn ssim(x: &Image2D, reference: &Image2D, mask: &Mask2D, cfg: &MetricConfig) -> Result<f64> {
    check_shapes(x, reference, mask)?;
    cfg.validate()?;
    let l = cfg.resolve_range(reference)?;
    let win = cfg.ssim_window;
    let (w, h) = (x.width, x.height);
    if w < win || h < win {
        return Err(Error::invalid("image smaller than the ssim window"));
    }

    let xx: Vec<f64> = x.data.iter().map(|v| v * v).collect();
    let rr: Vec<f64> = reference.data.iter().map(|v| v * v).collect();
    let xr: Vec<f64> = x.data.iter().zip(&reference.data).map(|(a, b)| a * b).collect();
    let mx = box_mean(&x.data, w, h, win);
    let mr = box_mean(&reference.data, w, h, win);
    let mxx = box_mean(&xx, w, h, win);
    let mrr = box_mean(&rr, w, h, win);
    let mxr = box_mean(&xr, w, h, win);

    let np = (win * win) as f64;
    let cov_norm = np / (np - 1.0);
    let c1 = (cfg.k1 * l) * (cfg.k1 * l);
    let c2 = (cfg.k2 * l) * (cfg.k2 * l);
    let pad = win / 2;

    let mut acc = 0.0;
    let mut count = 0u64;
    for row in pad..h - pad {
        for col in pad..w - pad {
            if !mask.get(row, col) {
                continue;
            }
            let i = row * w + col;
            let (ux, ur) = (mx[i], mr[i]);
            let vx = cov_norm * (mxx[i] - ux * ux);
            let vr = cov_norm * (mrr[i] - ur * ur);
            let vxr = cov_norm * (mxr[i] - ux * ur);
            let a1 = 2.0 * ux * ur + c1;
            let a2 = 2.0 * vxr + c2;
            let b1 = ux * ux + ur * ur + c1;
            let b2 = vx + vr + c2;
            acc += (a1 * a2) / (b1 * b2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("mask has no pixels with a full ssim window"));
    }
    Ok(acc / count as f64)
}

/// Peak signal-to-noise ratio in dB over the mask. Zero error gives +inf.
pub fn psnr(x: &Image2D, reference: &Image2D, mask: &Mask2D, cfg: &MetricConfig) -> Result<f64> {
    check_shapes(x, reference, mask)?;
    cfg.validate()?;
    let l = cfg.resolve_range(reference)?;
    let mut err = 0.0;
    let mut n = 0u64;
    for i in 0..x.data.len() {
        if mask.data[i] {
            let d = x.data[i] - reference.data[i];
            err += d * d;
            n += 1;
        }
    }
    let mse = err / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (l * l / mse).log10())
}

/// Signal-to-noise ratio in dB over the mask: reference energy against
/// error energy. Zero error gives +inf.
pub fn snr(x: &Image2D, reference: &Image2D, mask: &Mask2D) -> Result<f64> {
    check_shapes(x, reference, mask)?;
    let mut sig = 0.0;
    let mut err = 0.0;
    for i in 0..x.data.len() {
        if mask.data[i] {
            let r = reference.data[i];
            let d = x.data[i] - r;
            sig += r * r;
            err += d * d;
        }
    }
    if sig == 0.0 {
        return Err(Error::invalid("reference has no energy inside the mask"));
    }
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (sig / err).log10())
}
