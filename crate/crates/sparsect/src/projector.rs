//! Parallel-beam forward projection and view subsampling.
//!
//! Rays are parameterized through the image center: for view angle theta and
//! detector offset s (pixels), the ray is center + s*(cos t, sin t) +
//! u*(-sin t, cos t). Line integrals are fixed-step (0.5 px) bilinear sums
//! scaled by the step length; samples outside the grid contribute zero.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::Image2D;
use crate::error::{Error, Result};

/// Integration step along each ray, in pixels.
const RAY_STEP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ScanGeometry {
    pub n_views: usize,
    pub n_detectors: usize,
    /// Detector pitch in pixels.
    pub detector_spacing: f64,
    /// View angles in radians, angle[i] = i*pi/n_views.
    pub angles: Vec<f64>,
}

impl ScanGeometry {
    /// Evenly spaced parallel-beam geometry over [0, pi) with 1 px detectors.
    pub fn parallel(n_views: usize, n_detectors: usize) -> Result<Self> {
        if n_views == 0 || n_detectors == 0 {
            return Err(Error::invalid("geometry needs at least one view and one detector"));
        }
        let angles = (0..n_views).map(|i| i as f64 * PI / n_views as f64).collect();
        Ok(ScanGeometry { n_views, n_detectors, detector_spacing: 1.0, angles })
    }

    /// Signed offset of detector k from the center ray, in pixels.
    #[inline]
    pub fn detector_offset(&self, k: usize) -> f64 {
        (k as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }
}

#[derive(Clone, Debug)]
pub struct Sinogram {
    pub geometry: ScanGeometry,
    /// View-major: data[view * n_detectors + detector].
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn new(geometry: ScanGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.n_views * geometry.n_detectors {
            return Err(Error::invalid(format!(
                "sinogram data length {} does not match {} views x {} detectors",
                data.len(),
                geometry.n_views,
                geometry.n_detectors
            )));
        }
        Ok(Sinogram { geometry, data })
    }

    #[inline]
    pub fn view(&self, i: usize) -> &[f64] {
        let n = self.geometry.n_detectors;
        &self.data[i * n..(i + 1) * n]
    }
}

/// Forward-project a square image.
pub fn radon_forward(image: &Image2D, geometry: &ScanGeometry) -> Result<Sinogram> {
    if image.width != image.height {
        return Err(Error::invalid(format!(
            "projection requires a square image, got {}x{}",
            image.width, image.height
        )));
    }
    let n = image.width;
    let center = (n as f64 - 1.0) / 2.0;
    let half_span = n as f64 * std::f64::consts::SQRT_2 / 2.0;
    let n_steps = (2.0 * half_span / RAY_STEP).ceil() as usize;
    let n_det = geometry.n_detectors;

    let mut data = vec![0.0; geometry.n_views * n_det];
    data.par_chunks_mut(n_det)
        .zip(geometry.angles.par_iter())
        .for_each(|(row, &theta)| {
            let (sin_t, cos_t) = theta.sin_cos();
            for (k, out) in row.iter_mut().enumerate() {
                let s = (k as f64 - (n_det as f64 - 1.0) / 2.0) * geometry.detector_spacing;
                let ox = center + s * cos_t;
                let oy = center + s * sin_t;
                let mut acc = 0.0;
                for j in 0..n_steps {
                    let u = -half_span + (j as f64 + 0.5) * RAY_STEP;
                    acc += image.sample_bilinear(ox - u * sin_t, oy + u * cos_t);
                }
                *out = acc * RAY_STEP;
            }
        });
    Sinogram::new(geometry.clone(), data)
}

/// Keep every (n_views/k)-th view starting at index 0.
pub fn subsample_views(s: &Sinogram, k: usize) -> Result<Sinogram> {
    let n_views = s.geometry.n_views;
    if k == 0 || n_views % k != 0 {
        return Err(Error::invalid(format!(
            "view count {k} must divide the dense view count {n_views}"
        )));
    }
    let stride = n_views / k;
    let geometry = ScanGeometry {
        n_views: k,
        n_detectors: s.geometry.n_detectors,
        detector_spacing: s.geometry.detector_spacing,
        angles: (0..k).map(|i| s.geometry.angles[i * stride]).collect(),
    };
    let n_det = s.geometry.n_detectors;
    let mut data = Vec::with_capacity(k * n_det);
    for i in 0..k {
        data.extend_from_slice(s.view(i * stride));
    }
    Sinogram::new(geometry, data)
}

#[derive(Serialize, Deserialize)]
struct SinogramSidecar {
    n_views: usize,
    n_detectors: usize,
    spacing: f64,
}

fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

/// Write a sinogram as raw little-endian f64 plus JSON sidecar.
pub fn save_sinogram(s: &Sinogram, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(s.data.len() * 8);
    for v in &s.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let sidecar = SinogramSidecar {
        n_views: s.geometry.n_views,
        n_detectors: s.geometry.n_detectors,
        spacing: s.geometry.detector_spacing,
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_sinogram(path: &Path) -> Result<Sinogram> {
    let sidecar: SinogramSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let expected = sidecar.n_views * sidecar.n_detectors * 8;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "sinogram payload {} holds {} bytes, sidecar needs {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut geometry = ScanGeometry::parallel(sidecar.n_views, sidecar.n_detectors)?;
    geometry.detector_spacing = sidecar.spacing;
    Sinogram::new(geometry, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::shepp_logan;

    fn disk(n: usize, radius: f64) -> Image2D {
        let mut img = Image2D::zeros(n, n, (0.0, 1.0));
        let c = (n as f64 - 1.0) / 2.0;
        for row in 0..n {
            for col in 0..n {
                let dx = col as f64 - c;
                let dy = row as f64 - c;
                if dx * dx + dy * dy <= radius * radius {
                    img.set(row, col, 1.0);
                }
            }
        }
        img
    }

    #[test]
    fn rejects_non_square_images() {
        let img = Image2D::zeros(8, 9, (0.0, 1.0));
        let geo = ScanGeometry::parallel(4, 8).unwrap();
        assert!(radon_forward(&img, &geo).is_err());
    }

    #[test]
    fn zero_image_projects_to_zero() {
        let img = Image2D::zeros(32, 32, (0.0, 1.0));
        let geo = ScanGeometry::parallel(8, 32).unwrap();
        let sino = radon_forward(&img, &geo).unwrap();
        assert!(sino.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disk_projections_match_chord_lengths() {
        // Analytic oracle: a unit disk of radius r projects to chord length
        // 2*sqrt(r^2 - s^2) at offset s, for every view angle.
        let (n, r) = (256, 80.0);
        let img = disk(n, r);
        let geo = ScanGeometry::parallel(12, n).unwrap();
        let sino = radon_forward(&img, &geo).unwrap();
        for i in 0..geo.n_views {
            let view = sino.view(i);
            for k in 0..geo.n_detectors {
                let s = geo.detector_offset(k);
                if s.abs() < 0.9 * r {
                    let chord = 2.0 * (r * r - s * s).sqrt();
                    let got = view[k];
                    assert!(
                        (got - chord).abs() <= 0.02 * chord,
                        "view {i} offset {s}: got {got}, chord {chord}"
                    );
                }
            }
        }
    }

    #[test]
    fn mass_is_conserved_across_angles() {
        let img = shepp_logan(128).unwrap();
        let geo = ScanGeometry::parallel(64, 128).unwrap();
        let sino = radon_forward(&img, &geo).unwrap();
        let sums: Vec<f64> = (0..geo.n_views)
            .map(|i| sino.view(i).iter().sum::<f64>() * geo.detector_spacing)
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        assert!((max - min) / mean < 0.01, "spread {} of mean {mean}", max - min);
    }

    #[test]
    fn projection_is_linear() {
        let mut rng = crate::core::Rng::new(5);
        let n = 48;
        let a: Vec<f64> = (0..n * n).map(|_| rng.next_f64()).collect();
        let b: Vec<f64> = (0..n * n).map(|_| rng.next_f64()).collect();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.5 * x - 0.75 * y).collect();
        let geo = ScanGeometry::parallel(16, n).unwrap();
        let img_a = Image2D::new(n, n, a, (0.0, 1.0)).unwrap();
        let img_b = Image2D::new(n, n, b, (0.0, 1.0)).unwrap();
        let img_c = Image2D::new(n, n, combo, (-1.0, 3.0)).unwrap();
        let pa = radon_forward(&img_a, &geo).unwrap();
        let pb = radon_forward(&img_b, &geo).unwrap();
        let pc = radon_forward(&img_c, &geo).unwrap();
        let scale = pc.data.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..pc.data.len() {
            let expect = 2.5 * pa.data[i] - 0.75 * pb.data[i];
            assert!((pc.data[i] - expect).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn symmetric_phantom_gives_mirror_symmetric_sinogram() {
        // Centered axis-aligned ellipse: symmetric in x and y, so view theta
        // at offset s matches view pi-theta at offset -s.
        let n = 96;
        let mut img = Image2D::zeros(n, n, (0.0, 1.0));
        let c = (n as f64 - 1.0) / 2.0;
        for row in 0..n {
            for col in 0..n {
                let dx = (col as f64 - c) / 30.0;
                let dy = (row as f64 - c) / 18.0;
                if dx * dx + dy * dy <= 1.0 {
                    img.set(row, col, 1.0);
                }
            }
        }
        let geo = ScanGeometry::parallel(24, n).unwrap();
        let sino = radon_forward(&img, &geo).unwrap();
        let max = sino.data.iter().cloned().fold(0.0f64, f64::max);
        for i in 1..geo.n_views {
            let mirror = geo.n_views - i;
            for k in 0..geo.n_detectors {
                let a = sino.view(i)[k];
                let b = sino.view(mirror)[geo.n_detectors - 1 - k];
                assert!((a - b).abs() <= 1e-3 * max, "view {i} det {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn subsample_identity_and_stride() {
        let img = shepp_logan(64).unwrap();
        let geo = ScanGeometry::parallel(64, 64).unwrap();
        let sino = radon_forward(&img, &geo).unwrap();

        let same = subsample_views(&sino, 64).unwrap();
        assert_eq!(same.data, sino.data);
        assert_eq!(same.geometry, sino.geometry);

        let eighth = subsample_views(&sino, 8).unwrap();
        for j in 0..8 {
            assert_eq!(eighth.view(j), sino.view(8 * j));
            assert_eq!(eighth.geometry.angles[j], sino.geometry.angles[8 * j]);
        }
    }

    #[test]
    fn subsample_composes() {
        let img = shepp_logan(64).unwrap();
        let geo = ScanGeometry::parallel(1024, 64).unwrap();
        let sino = radon_forward(&img, &geo).unwrap();
        let via_two = subsample_views(&subsample_views(&sino, 256).unwrap(), 64).unwrap();
        let direct = subsample_views(&sino, 64).unwrap();
        assert_eq!(via_two.data, direct.data);
        assert_eq!(via_two.geometry, direct.geometry);
    }

    #[test]
    fn subsample_requires_divisor() {
        let img = shepp_logan(32).unwrap();
        let geo = ScanGeometry::parallel(12, 32).unwrap();
        let sino = radon_forward(&img, &geo).unwrap();
        assert!(subsample_views(&sino, 5).is_err());
        assert!(subsample_views(&sino, 0).is_err());
    }

    #[test]
    fn sinogram_file_round_trip() {
        let img = shepp_logan(32).unwrap();
        let geo = ScanGeometry::parallel(8, 32).unwrap();
        let sino = radon_forward(&img, &geo).unwrap();
        let dir = std::env::temp_dir().join("sparsect-projector");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("test.f64");
        save_sinogram(&sino, &path).unwrap();
        let back = load_sinogram(&path).unwrap();
        assert_eq!(back.geometry, sino.geometry);
        for (a, b) in sino.data.iter().zip(&back.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
