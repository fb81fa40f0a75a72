//! Gradient saliency maps and the in/out-of-mask attention ratio.

use crate::core::{Image2D, Mask2D};
use crate::error::{Error, Result};
use crate::models::detector::Detector;

/// |d(logit)/d(pixel)|, min-max normalized to [0, 1]. A constant gradient
/// map has no contrast to normalize and comes back all zero.
pub fn saliency_map(net: &Detector, image: &Image2D) -> Result<Image2D> {
    let raw = net.input_gradient(image)?;
    Ok(normalize_saliency(&raw, image.width, image.height))
}

pub fn normalize_saliency(raw: &[f64], width: usize, height: usize) -> Image2D {
    assert_eq!(raw.len(), width * height, "saliency payload length");
    let abs: Vec<f64> = raw.iter().map(|g| g.abs()).collect();
    let lo = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = abs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = if span > 0.0 {
        abs.iter().map(|a| (a - lo) / span).collect()
    } else {
        vec![0.0; abs.len()]
    };
    Image2D { width, height, data, value_range: (0.0, 1.0) }
}

/// Sum of map values inside the mask over the sum outside. All attention
/// inside the mask gives +inf.
pub fn saliency_ratio(map: &Image2D, mask: &Mask2D) -> Result<f64> {
    if map.width != mask.width || map.height != mask.height {
        return Err(Error::invalid(format!(
            "map {}x{} vs mask {}x{}",
            map.width, map.height, mask.width, mask.height
        )));
    }
    let n_inside = mask.data.iter().filter(|&&m| m).count();
    if n_inside == 0 || n_inside == mask.data.len() {
        return Err(Error::invalid("mask must split the image into inside and outside"));
    }
    if map.data.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("saliency map must be non-negative"));
    }
    let mut inside = 0.0;
    let mut outside = 0.0;
    for (v, &m) in map.data.iter().zip(&mask.data) {
        if m {
            inside += v;
        } else {
            outside += v;
        }
    }
    if outside == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(inside / outside)
}
