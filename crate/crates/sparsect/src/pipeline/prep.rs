//! Image preparation: intensity windowing, 12-bit normalization,
//! bilinear resizing, and dose bookkeeping.

use crate::core::Image2D;
use crate::error::{Error, Result};

/// Clamp values to the [lo, hi] window and map it affinely onto [0, 1].
pub fn window_hu(image: &Image2D, lo: f64, hi: f64) -> Result<Image2D> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!(
            "window bounds must be finite with lo < hi, got [{lo}, {hi}]"
        )));
    }
    let span = hi - lo;
    let data = image
        .data
        .iter()
        .map(|&v| (v.clamp(lo, hi) - lo) / span)
        .collect();
    Image2D::new(image.width, image.height, data, (0.0, 1.0))
}

/// Clamp to the 12-bit detector range [0, 4095] and scale by 1/4095.
pub fn normalize_12bit(image: &Image2D) -> Image2D {
    // window_hu(0, 4095) cannot fail: the bounds are fixed and ordered.
    window_hu(image, 0.0, 4095.0).expect("fixed 12-bit window is valid")
}

/// Corner-aligned sample position: output index `i` of `out_n` maps into
/// an input axis of `in_n` samples. A single output sample sits at the
/// input midpoint.
fn corner_coord(i: usize, out_n: usize, in_n: usize) -> f64 {
    if out_n <= 1 {
        (in_n - 1) as f64 / 2.0
    } else {
        i as f64 * (in_n - 1) as f64 / (out_n - 1) as f64
    }
}

/// Bilinear resize with corner-aligned sampling. Reproduces any image
/// whose values are affine in the pixel coordinates exactly, and returns
/// a bitwise copy when the size does not change.
pub fn bilinear_resize(image: &Image2D, out_w: usize, out_h: usize) -> Result<Image2D> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    let mut out = Image2D::zeros(out_w, out_h, image.value_range);
    for r in 0..out_h {
        let y = corner_coord(r, out_h, image.height);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(image.height - 1);
        let fy = y - y0 as f64;
        for c in 0..out_w {
            let x = corner_coord(c, out_w, image.width);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(image.width - 1);
            let fx = x - x0 as f64;
            let top = image.get(y0, x0) * (1.0 - fx) + image.get(y0, x1) * fx;
            let bot = image.get(y1, x0) * (1.0 - fx) + image.get(y1, x1) * fx;
            out.set(r, c, top * (1.0 - fy) + bot * fy);
        }
    }
    Ok(out)
}

/// Conventional dense reference view count for dose accounting.
pub const REFERENCE_VIEWS: usize = 4096;

/// Fraction of tube load saved by acquiring `views` of `reference_views`.
pub fn dose_reduction(views: usize, reference_views: usize) -> Result<f64> {
    if views == 0 || reference_views == 0 || views > reference_views {
        return Err(Error::invalid(format!(
            "need 0 < views <= reference, got {views} of {reference_views}"
        )));
    }
    Ok(1.0 - views as f64 / reference_views as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::Rng;

    fn image_from(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> f64) -> Image2D {
        let mut data = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                data.push(f(r, c));
            }
        }
        Image2D::new(w, h, data, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn window_clamps_and_rescales() {
        let img = Image2D::new(5, 1, vec![-10.0, 0.0, 40.0, 80.0, 200.0], (-100.0, 300.0)).unwrap();
        let w = window_hu(&img, 0.0, 80.0).unwrap();
        assert_eq!(w.data, vec![0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(w.value_range, (0.0, 1.0));
    }

    #[test]
    fn window_on_unit_range_is_idempotent() {
        let mut rng = Rng::new(11);
        let img = image_from(9, 7, |_, _| rng.range_f64(-0.5, 1.5));
        let once = window_hu(&img, 0.0, 1.0).unwrap();
        let twice = window_hu(&once, 0.0, 1.0).unwrap();
        assert_eq!(once.data, twice.data);
    }

    #[test]
    fn window_rejects_bad_bounds() {
        let img = Image2D::zeros(2, 2, (0.0, 1.0));
        assert!(window_hu(&img, 80.0, 0.0).is_err());
        assert!(window_hu(&img, 1.0, 1.0).is_err());
        assert!(window_hu(&img, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn twelve_bit_endpoints_and_clipping() {
        let img =
            Image2D::new(5, 1, vec![0.0, 4095.0, 5000.0, 2047.5, -3.0], (-100.0, 6000.0)).unwrap();
        let n = normalize_12bit(&img);
        assert_eq!(n.data[0], 0.0);
        assert_eq!(n.data[1], 1.0);
        assert_eq!(n.data[2], 1.0);
        assert_eq!(n.data[3], 0.5);
        assert_eq!(n.data[4], 0.0);
    }

    #[test]
    fn resize_to_same_size_is_identity() {
        let mut rng = Rng::new(12);
        let img = image_from(13, 8, |_, _| rng.next_f64());
        let r = bilinear_resize(&img, 13, 8).unwrap();
        assert_eq!(r.data, img.data);
    }

    #[test]
    fn resize_keeps_constants_constant() {
        let img = image_from(7, 5, |_, _| 0.37);
        for (w, h) in [(13, 3), (1, 1), (2, 9), (64, 64)] {
            let r = bilinear_resize(&img, w, h).unwrap();
            assert!(r.data.iter().all(|&v| (v - 0.37).abs() < 1e-12));
        }
    }

    #[test]
    fn resize_reproduces_linear_ramps_exactly() {
        // f(x, y) = x in input pixel units; the resized image must equal the
        // analytic ramp at the new sample positions.
        let img = image_from(33, 9, |_, c| c as f64);
        for (w, h) in [(17, 9), (65, 5), (9, 3), (41, 21)] {
            let r = bilinear_resize(&img, w, h).unwrap();
            for row in 0..h {
                for col in 0..w {
                    let want = col as f64 * 32.0 / (w - 1) as f64;
                    assert!(
                        (r.get(row, col) - want).abs() < 1e-9,
                        "ramp mismatch at {row},{col} for {w}x{h}"
                    );
                }
            }
        }
    }

    #[test]
    fn resize_rejects_empty_target() {
        let img = Image2D::zeros(4, 4, (0.0, 1.0));
        assert!(bilinear_resize(&img, 0, 3).is_err());
        assert!(bilinear_resize(&img, 3, 0).is_err());
    }

    #[test]
    fn dose_reduction_closed_form() {
        assert_eq!(dose_reduction(512, REFERENCE_VIEWS).unwrap(), 0.875);
        assert_eq!(dose_reduction(256, REFERENCE_VIEWS).unwrap(), 0.9375);
        assert_eq!(dose_reduction(4096, REFERENCE_VIEWS).unwrap(), 0.0);
        assert_eq!(dose_reduction(16, 512).unwrap(), 0.96875);
    }

    #[test]
    fn dose_reduction_rejects_out_of_range_views() {
        assert!(dose_reduction(0, 4096).is_err());
        assert!(dose_reduction(4097, 4096).is_err());
        assert!(dose_reduction(1, 0).is_err());
    }
}
