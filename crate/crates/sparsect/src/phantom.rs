//! Synthetic head phantoms with ground-truth lesion and intracranial masks.
//!
//! The test object is the standard 10-ellipse Shepp-Logan head phantom with
//! the classic low-contrast intensities, rescaled by 0.25 so brain tissue
//! sits near 0.26 and the skull near 0.5 on a [0,1] scale. Hemorrhage-like
//! lesions are additive elliptical blobs placed fully inside the
//! intracranial mask.

use serde::{Deserialize, Serialize};

use crate::core::{fisher_yates_shuffle, Image2D, Mask2D, Rng};
use crate::error::{Error, Result};

/// One additive ellipse in normalized [-1,1]^2 coordinates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Ellipse {
    /// Center (x, y); x grows rightward, y upward.
    pub center: (f64, f64),
    /// Semi-axes (a along x, b along y) before rotation.
    pub axes: (f64, f64),
    /// Counter-clockwise rotation in radians.
    pub angle: f64,
    /// Additive intensity inside the ellipse.
    pub intensity: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let (s, c) = self.angle.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let a = u / self.axes.0;
        let b = v / self.axes.1;
        a * a + b * b <= 1.0
    }
}

/// Global intensity rescale applied to the classic ellipse table, chosen so
/// the brain interior (2.0 - 0.98 = 1.02) lands near 0.26.
pub const INTENSITY_SCALE: f64 = 0.25;

/// Index into [`shepp_logan_ellipses`] of the ellipse bounding the
/// intracranial cavity (the large ellipse just inside the skull).
pub const INTRACRANIAL_ELLIPSE: usize = 1;

/// The standard Shepp-Logan ellipse table (unscaled intensities).
pub fn shepp_logan_ellipses() -> [Ellipse; 10] {
    let deg = std::f64::consts::PI / 180.0;
    [
        Ellipse { center: (0.0, 0.0), axes: (0.69, 0.92), angle: 0.0, intensity: 2.0 },
        Ellipse { center: (0.0, -0.0184), axes: (0.6624, 0.874), angle: 0.0, intensity: -0.98 },
        Ellipse { center: (0.22, 0.0), axes: (0.11, 0.31), angle: -18.0 * deg, intensity: -0.02 },
        Ellipse { center: (-0.22, 0.0), axes: (0.16, 0.41), angle: 18.0 * deg, intensity: -0.02 },
        Ellipse { center: (0.0, 0.35), axes: (0.21, 0.25), angle: 0.0, intensity: 0.01 },
        Ellipse { center: (0.0, 0.1), axes: (0.046, 0.046), angle: 0.0, intensity: 0.01 },
        Ellipse { center: (0.0, -0.1), axes: (0.046, 0.046), angle: 0.0, intensity: 0.01 },
        Ellipse { center: (-0.08, -0.605), axes: (0.046, 0.023), angle: 0.0, intensity: 0.01 },
        Ellipse { center: (0.0, -0.605), axes: (0.023, 0.023), angle: 0.0, intensity: 0.01 },
        Ellipse { center: (0.06, -0.605), axes: (0.023, 0.046), angle: 0.0, intensity: 0.01 },
    ]
}

/// Pixel-center coordinates of (row, col) on an n-grid, mapped to [-1,1]^2
/// with y up. Mirroring col to n-1-col negates x exactly.
#[inline]
fn grid_coords(n: usize, row: usize, col: usize) -> (f64, f64) {
    let nf = n as f64;
    let x = (2.0 * col as f64 + 1.0 - nf) / nf;
    let y = (nf - 2.0 * row as f64 - 1.0) / nf;
    (x, y)
}

fn render(n: usize, ellipses: &[Ellipse], jitter: &Jitter) -> Image2D {
    let mut img = Image2D::zeros(n, n, (0.0, 1.0));
    let (s, c) = jitter.rotation.sin_cos();
    for row in 0..n {
        for col in 0..n {
            let (x, y) = grid_coords(n, row, col);
            // Evaluate the unjittered table at the inverse-transformed point.
            let xr = (x * c + y * s) / jitter.scale;
            let yr = (-x * s + y * c) / jitter.scale;
            let mut v = 0.0;
            for e in ellipses {
                if e.contains(xr, yr) {
                    v += e.intensity;
                }
            }
            img.set(row, col, (v * INTENSITY_SCALE).clamp(0.0, 1.0));
        }
    }
    img
}

fn render_mask(n: usize, ellipse: &Ellipse, jitter: &Jitter) -> Mask2D {
    let mut mask = Mask2D::empty(n, n);
    let (s, c) = jitter.rotation.sin_cos();
    for row in 0..n {
        for col in 0..n {
            let (x, y) = grid_coords(n, row, col);
            let xr = (x * c + y * s) / jitter.scale;
            let yr = (-x * s + y * c) / jitter.scale;
            mask.set(row, col, ellipse.contains(xr, yr));
        }
    }
    mask
}

#[derive(Clone, Copy, Debug)]
struct Jitter {
    scale: f64,
    rotation: f64,
}

const NO_JITTER: Jitter = Jitter { scale: 1.0, rotation: 0.0 };

/// Pixels eroded off the intracranial ellipse to form the skull mask.
const SKULL_MASK_EROSION_PX: usize = 2;

/// Render the standard Shepp-Logan phantom on an n x n grid.
pub fn shepp_logan(n: usize) -> Result<Image2D> {
    if n < 16 {
        return Err(Error::invalid(format!("phantom size {n} below minimum 16")));
    }
    Ok(render(n, &shepp_logan_ellipses(), &NO_JITTER))
}

/// Intracranial mask matching [`shepp_logan`]: the interior of the brain
/// ellipse eroded by 2 px, mirroring an intracranial segmentation that
/// excludes the skull.
pub fn skull_mask(n: usize) -> Result<Mask2D> {
    if n < 16 {
        return Err(Error::invalid(format!("phantom size {n} below minimum 16")));
    }
    let e = shepp_logan_ellipses()[INTRACRANIAL_ELLIPSE];
    Ok(render_mask(n, &e, &NO_JITTER).erode(SKULL_MASK_EROSION_PX))
}

/// A phantom with its masks and hemorrhage label.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub image: Image2D,
    pub skull_mask: Mask2D,
    pub lesion_mask: Mask2D,
    pub label: bool,
    /// Seed this sample was generated from (jitter and lesion placement).
    pub seed: u64,
}

impl LabeledSample {
    /// Lesion-free sample; jitter defaults to none.
    pub fn clean(n: usize, seed: u64) -> Result<Self> {
        Ok(LabeledSample {
            image: shepp_logan(n)?,
            skull_mask: skull_mask(n)?,
            lesion_mask: Mask2D::empty(n, n),
            label: false,
            seed,
        })
    }
}

/// Insert one additive elliptical lesion fully inside the skull mask.
///
/// Geometry is sampled from `rng`: center uniform over mask pixels, semi-axes
/// uniform in `radius_range` (pixels), orientation uniform. Placement retries
/// up to 100 times before failing.
pub fn add_lesion(
    sample: &mut LabeledSample,
    rng: &mut Rng,
    contrast: f64,
    radius_range: (f64, f64),
) -> Result<()> {
    if contrast <= 0.0 {
        return Err(Error::invalid(format!("lesion contrast {contrast} must be positive")));
    }
    if !(radius_range.0 > 0.0 && radius_range.0 <= radius_range.1) {
        return Err(Error::invalid(format!(
            "lesion radius range ({}, {}) must be positive and ordered",
            radius_range.0, radius_range.1
        )));
    }
    let n = sample.image.width;
    let inside: Vec<usize> = (0..sample.skull_mask.data.len())
        .filter(|&i| sample.skull_mask.data[i])
        .collect();
    if inside.is_empty() {
        return Err(Error::invalid("skull mask is empty; cannot place lesion"));
    }

    for _ in 0..100 {
        let center = inside[rng.range_usize(inside.len())];
        let (cy, cx) = ((center / n) as f64, (center % n) as f64);
        let ra = rng.range_f64(radius_range.0, radius_range.1);
        let rb = rng.range_f64(radius_range.0, radius_range.1);
        let angle = rng.range_f64(0.0, std::f64::consts::PI);
        let (s, c) = angle.sin_cos();

        // Pixels whose centers fall inside the candidate ellipse.
        let r_max = ra.max(rb).ceil() as isize;
        let mut pixels = Vec::new();
        let mut fits = true;
        'scan: for dy in -r_max..=r_max {
            for dx in -r_max..=r_max {
                let u = dx as f64 * c + dy as f64 * s;
                let v = -(dx as f64) * s + dy as f64 * c;
                if (u / ra).powi(2) + (v / rb).powi(2) > 1.0 {
                    continue;
                }
                let y = cy as isize + dy;
                let x = cx as isize + dx;
                if y < 0 || x < 0 || y as usize >= n || x as usize >= n {
                    fits = false;
                    break 'scan;
                }
                let (y, x) = (y as usize, x as usize);
                if !sample.skull_mask.get(y, x) {
                    fits = false;
                    break 'scan;
                }
                pixels.push((y, x));
            }
        }
        if !fits || pixels.is_empty() {
            continue;
        }
        for &(y, x) in &pixels {
            let v = sample.image.get(y, x) + contrast;
            sample.image.set(y, x, v.min(1.0));
            sample.lesion_mask.set(y, x, true);
        }
        sample.label = true;
        return Ok(());
    }
    Err(Error::invalid(format!(
        "could not place a lesion of radius {}..{} px inside the skull mask after 100 attempts",
        radius_range.0, radius_range.1
    )))
}

/// Lesion geometry used by dataset generation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LesionParams {
    /// Additive contrast range; sampled per lesion.
    pub contrast: (f64, f64),
    /// Semi-axis range as a fraction of the image side.
    pub radius_frac: (f64, f64),
}

impl Default for LesionParams {
    fn default() -> Self {
        LesionParams { contrast: (0.05, 0.1), radius_frac: (0.04, 0.08) }
    }
}

impl LesionParams {
    pub fn radius_px(&self, n: usize) -> (f64, f64) {
        let lo = (self.radius_frac.0 * n as f64).max(1.5);
        let hi = (self.radius_frac.1 * n as f64).max(lo + 0.5);
        (lo, hi)
    }
}

/// Generate a labeled dataset with exactly round(n_samples * lesion_fraction)
/// positives. Each sample gets geometric jitter (head scale within 5%,
/// rotation within 0.1 rad) from a per-sample generator derived from `rng`,
/// so generation is order-independent and reproducible.
pub fn make_dataset(
    n_samples: usize,
    lesion_fraction: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<LabeledSample>> {
    make_dataset_with(n_samples, lesion_fraction, n, &LesionParams::default(), rng)
}

pub fn make_dataset_with(
    n_samples: usize,
    lesion_fraction: f64,
    n: usize,
    lesion: &LesionParams,
    rng: &mut Rng,
) -> Result<Vec<LabeledSample>> {
    if !(0.0..=1.0).contains(&lesion_fraction) {
        return Err(Error::invalid(format!(
            "lesion fraction {lesion_fraction} outside [0, 1]"
        )));
    }
    if n < 16 {
        return Err(Error::invalid(format!("phantom size {n} below minimum 16")));
    }
    let n_pos = (n_samples as f64 * lesion_fraction).round() as usize;
    let mut labels = vec![false; n_samples];
    for l in labels.iter_mut().take(n_pos) {
        *l = true;
    }
    let base_seed = rng.next_u64();
    let mut label_rng = Rng::derive(base_seed, 0);
    fisher_yates_shuffle(&mut labels, &mut label_rng);

    let ellipses = shepp_logan_ellipses();
    let cranial = ellipses[INTRACRANIAL_ELLIPSE];
    let radius_px = lesion.radius_px(n);

    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let sample_seed = base_seed.wrapping_add(1 + i as u64);
            let mut srng = Rng::derive(base_seed, 1 + i as u64);
            let jitter = Jitter {
                scale: srng.range_f64(0.95, 1.05),
                rotation: srng.range_f64(-0.1, 0.1),
            };
            let image = render(n, &ellipses, &jitter);
            let skull = render_mask(n, &cranial, &jitter).erode(SKULL_MASK_EROSION_PX);
            let mut sample = LabeledSample {
                image,
                skull_mask: skull,
                lesion_mask: Mask2D::empty(n, n),
                label: false,
                seed: sample_seed,
            };
            if label {
                let contrast = srng.range_f64(lesion.contrast.0, lesion.contrast.1);
                add_lesion(&mut sample, &mut srng, contrast, radius_px)?;
            }
            Ok(sample)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent analytic oracle: sum of scaled intensities of the table
    /// ellipses containing the pixel-center point.
    fn analytic_value(n: usize, row: usize, col: usize) -> f64 {
        let (x, y) = grid_coords(n, row, col);
        let v: f64 = shepp_logan_ellipses()
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.intensity)
            .sum();
        (v * INTENSITY_SCALE).clamp(0.0, 1.0)
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(shepp_logan(15).is_err());
        assert!(shepp_logan(16).is_ok());
    }

    #[test]
    fn rendering_matches_analytic_point_evaluation() {
        let n = 256;
        let img = shepp_logan(n).unwrap();
        // Probe a grid of pixels, including the center, against the oracle.
        for row in (0..n).step_by(7) {
            for col in (0..n).step_by(7) {
                assert_eq!(img.get(row, col), analytic_value(n, row, col));
            }
        }
        let c = n / 2;
        assert_eq!(img.get(c, c), analytic_value(n, c, c));
        // Center of the head: inside the two nested head ellipses only.
        assert!((img.get(c, c) - (2.0 - 0.98) * INTENSITY_SCALE).abs() < 1e-12);
    }

    #[test]
    fn corner_is_outside_the_head() {
        let img = shepp_logan(256).unwrap();
        assert_eq!(img.get(0, 0), 0.0);
    }

    #[test]
    fn values_stay_in_unit_range() {
        for n in [16, 64, 129] {
            let img = shepp_logan(n).unwrap();
            assert!(img.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn x_mirror_symmetry_outside_asymmetric_ellipses() {
        // The table is x-mirror symmetric except for the two ventricle
        // ellipses and the two off-center bottom ellipses; outside those (and
        // their mirror images) the difference must vanish exactly.
        let n = 128;
        let img = shepp_logan(n).unwrap();
        let asymmetric = [2usize, 3, 7, 9];
        let table = shepp_logan_ellipses();
        for row in 0..n {
            for col in 0..n {
                let (x, y) = grid_coords(n, row, col);
                let excluded = asymmetric
                    .iter()
                    .any(|&i| table[i].contains(x, y) || table[i].contains(-x, y));
                if !excluded {
                    assert_eq!(img.get(row, col), img.get(row, n - 1 - col));
                }
            }
        }
    }

    #[test]
    fn skull_mask_is_eroded_cranial_interior() {
        let n = 128;
        let mask = skull_mask(n).unwrap();
        let raw = render_mask(n, &shepp_logan_ellipses()[INTRACRANIAL_ELLIPSE], &NO_JITTER);
        assert_eq!(mask, raw.erode(2));
        assert!(mask.is_subset_of(&raw));
        assert!(mask.count() > 0);
    }

    #[test]
    fn lesion_is_additive_inside_mask() {
        let mut sample = LabeledSample::clean(128, 0).unwrap();
        let before = sample.image.clone();
        let mut rng = Rng::new(17);
        add_lesion(&mut sample, &mut rng, 0.06, (4.0, 8.0)).unwrap();
        assert!(sample.label);
        let count = sample.lesion_mask.count();
        assert!(count > 0);
        let mut delta = 0.0;
        for (i, &m) in sample.lesion_mask.data.iter().enumerate() {
            if m {
                delta += sample.image.data[i] - before.data[i];
            } else {
                assert_eq!(sample.image.data[i], before.data[i]);
            }
        }
        assert!((delta / count as f64 - 0.06).abs() < 1e-12);
        assert!(sample.lesion_mask.is_subset_of(&sample.skull_mask));
    }

    #[test]
    fn oversized_lesion_fails_placement() {
        let mut sample = LabeledSample::clean(64, 0).unwrap();
        let mut rng = Rng::new(3);
        let err = add_lesion(&mut sample, &mut rng, 0.06, (100.0, 120.0));
        assert!(err.is_err());
        assert!(!sample.label);
    }

    #[test]
    fn same_seed_same_lesion() {
        let make = |seed| {
            let mut s = LabeledSample::clean(96, 0).unwrap();
            let mut rng = Rng::new(seed);
            add_lesion(&mut s, &mut rng, 0.08, (3.0, 6.0)).unwrap();
            s
        };
        let a = make(41);
        let b = make(41);
        assert_eq!(a.lesion_mask, b.lesion_mask);
        assert_eq!(a.image.data, b.image.data);
        let c = make(42);
        assert_ne!(a.lesion_mask, c.lesion_mask);
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let mut rng = Rng::new(7);
        let set = make_dataset(10, 0.5, 64, &mut rng).unwrap();
        assert_eq!(set.iter().filter(|s| s.label).count(), 5);

        let mut rng2 = Rng::new(7);
        let set2 = make_dataset(10, 0.5, 64, &mut rng2).unwrap();
        for (a, b) in set.iter().zip(&set2) {
            assert_eq!(a.image.data, b.image.data);
            assert_eq!(a.lesion_mask, b.lesion_mask);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn dataset_positive_count_follows_fraction() {
        let mut rng = Rng::new(1);
        let set = make_dataset(200, 0.5, 128, &mut rng).unwrap();
        assert_eq!(set.iter().filter(|s| s.label).count(), 100);
    }

    #[test]
    fn dataset_without_lesions() {
        let mut rng = Rng::new(2);
        let set = make_dataset(6, 0.0, 64, &mut rng).unwrap();
        assert!(set.iter().all(|s| !s.label && s.lesion_mask.count() == 0));
    }

    #[test]
    fn dataset_lesions_contained_in_skull() {
        let mut rng = Rng::new(3);
        let set = make_dataset(200, 1.0, 64, &mut rng).unwrap();
        for s in &set {
            assert!(s.label);
            assert!(s.lesion_mask.count() > 0);
            assert!(s.lesion_mask.is_subset_of(&s.skull_mask));
            assert!(s.image.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn dataset_samples_are_jittered_differently() {
        let mut rng = Rng::new(4);
        let set = make_dataset(4, 0.0, 64, &mut rng).unwrap();
        assert_ne!(set[0].image.data, set[1].image.data);
        assert_ne!(set[1].image.data, set[2].image.data);
    }
}
