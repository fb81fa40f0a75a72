use crate::error::{Error, Result};

/// A 2-D scalar image, row-major f64.
///
/// `value_range` is the declared dynamic range used by metrics and exports;
/// pixel values are not forced into it.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub value_range: (f64, f64),
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>, value_range: (f64, f64)) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if !(value_range.0 < value_range.1) {
            return Err(Error::invalid(format!(
                "value range lo {} must be below hi {}",
                value_range.0, value_range.1
            )));
        }
        Ok(Image2D { width, height, data, value_range })
    }

    pub fn zeros(width: usize, height: usize, value_range: (f64, f64)) -> Self {
        Image2D { width, height, data: vec![0.0; width * height], value_range }
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn same_shape(&self, other: &Image2D) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Bilinear sample at pixel-center coordinates (col x, row y); zero
    /// outside the grid, as if the image were embedded in a zero background.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let (w, h) = (self.width as isize, self.height as isize);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let mut acc = 0.0;
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            let yy = y0 + dy;
            if yy < 0 || yy >= h || wy == 0.0 {
                continue;
            }
            let base = yy as usize * self.width;
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let xx = x0 + dx;
                if xx < 0 || xx >= w || wx == 0.0 {
                    continue;
                }
                acc += wy * wx * self.data[base + xx as usize];
            }
        }
        acc
    }
}

/// Boolean mask with the same layout as the image it annotates.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask2D {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Mask2D { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Mask2D { width, height, data: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &Mask2D) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Morphological erosion by a Euclidean disk of radius `r` pixels.
    pub fn erode(&self, r: usize) -> Mask2D {
        self.morph(r, false)
    }

    /// Morphological dilation by a Euclidean disk of radius `r` pixels.
    pub fn dilate(&self, r: usize) -> Mask2D {
        self.morph(r, true)
    }

    fn morph(&self, r: usize, dilate: bool) -> Mask2D {
        let ri = r as isize;
        let r2 = (r * r) as isize;
        let mut offsets = Vec::new();
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if dx * dx + dy * dy <= r2 {
                    offsets.push((dy, dx));
                }
            }
        }
        let mut out = Mask2D::empty(self.width, self.height);
        for row in 0..self.height {
            for col in 0..self.width {
                let mut hit = !dilate;
                for &(dy, dx) in &offsets {
                    let y = row as isize + dy;
                    let x = col as isize + dx;
                    // Outside the grid counts as background.
                    let v = y >= 0
                        && x >= 0
                        && (y as usize) < self.height
                        && (x as usize) < self.width
                        && self.get(y as usize, x as usize);
                    if dilate {
                        if v {
                            hit = true;
                            break;
                        }
                    } else if !v {
                        hit = false;
                        break;
                    }
                }
                out.set(row, col, hit);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_constructor_checks_shape_and_range() {
        assert!(Image2D::new(4, 4, vec![0.0; 15], (0.0, 1.0)).is_err());
        assert!(Image2D::new(4, 4, vec![0.0; 16], (1.0, 1.0)).is_err());
        assert!(Image2D::new(4, 4, vec![0.0; 16], (0.0, 1.0)).is_ok());
    }

    #[test]
    fn bilinear_interpolates_and_zero_pads() {
        let img = Image2D::new(2, 2, vec![0.0, 1.0, 2.0, 3.0], (0.0, 3.0)).unwrap();
        assert_eq!(img.sample_bilinear(0.0, 0.0), 0.0);
        assert_eq!(img.sample_bilinear(1.0, 1.0), 3.0);
        assert!((img.sample_bilinear(0.5, 0.5) - 1.5).abs() < 1e-12);
        assert_eq!(img.sample_bilinear(-5.0, 0.0), 0.0);
        assert_eq!(img.sample_bilinear(0.0, 7.0), 0.0);
    }

    #[test]
    fn erode_shrinks_dilate_grows() {
        let mut m = Mask2D::empty(11, 11);
        for row in 3..8 {
            for col in 3..8 {
                m.set(row, col, true);
            }
        }
        let e = m.erode(1);
        assert!(e.is_subset_of(&m));
        assert_eq!(e.count(), 9);
        let d = m.dilate(1);
        assert!(m.is_subset_of(&d));
        assert_eq!(d.count(), 25 + 4 * 5);
    }
}
