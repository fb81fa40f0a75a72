//! Bit-exact image file formats.
//!
//! Raw format: `<name>.f64` holds the pixels as little-endian 64-bit floats,
//! row-major; `<name>.json` is a sidecar `{width, height, lo, hi}`. PGM
//! export is binary P5, maxval 255.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::core::image::Image2D;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct RawSidecar {
    width: usize,
    height: usize,
    lo: f64,
    hi: f64,
}

fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

/// Write `image` as raw little-endian f64 payload plus JSON sidecar.
pub fn save_raw(image: &Image2D, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(image.data.len() * 8);
    for v in &image.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let sidecar = RawSidecar {
        width: image.width,
        height: image.height,
        lo: image.value_range.0,
        hi: image.value_range.1,
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

/// Read an image written by [`save_raw`]. The round trip is bit-exact,
/// including any non-finite values.
pub fn load_raw(path: &Path) -> Result<Image2D> {
    let sidecar: RawSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let expected = sidecar.width * sidecar.height * 8;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "payload {} holds {} bytes, sidecar {}x{} needs {expected}",
            path.display(),
            bytes.len(),
            sidecar.width,
            sidecar.height
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image2D::new(sidecar.width, sidecar.height, data, (sidecar.lo, sidecar.hi))
}

/// Export as 8-bit binary PGM, windowing values into [lo, hi].
/// Pixel byte = round(255 * clamp((v - lo) / (hi - lo), 0, 1)), halves up.
pub fn export_pgm(image: &Image2D, window: (f64, f64), path: &Path) -> Result<()> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::invalid(format!("pgm window lo {lo} must be below hi {hi}")));
    }
    let mut out = Vec::with_capacity(image.data.len() + 32);
    write!(out, "P5\n{} {}\n255\n", image.width, image.height)?;
    for &v in &image.data {
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        out.push((255.0 * t).round() as u8);
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("sparsect-core-io");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn raw_round_trip_is_bit_exact() {
        let data = vec![0.0, -1.5, f64::NAN, 3.25e-300, 7.0, f64::INFINITY];
        let img = Image2D::new(3, 2, data.clone(), (-2.0, 8.0)).unwrap();
        let path = tmp("roundtrip.f64");
        save_raw(&img, &path).unwrap();
        let back = load_raw(&path).unwrap();
        assert_eq!(back.width, 3);
        assert_eq!(back.height, 2);
        assert_eq!(back.value_range, (-2.0, 8.0));
        for (a, b) in data.iter().zip(&back.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn raw_payload_encoding_is_little_endian_ieee754() {
        let img = Image2D::new(1, 1, vec![3.5], (0.0, 4.0)).unwrap();
        let path = tmp("single.f64");
        save_raw(&img, &path).unwrap();
        // 3.5 == 0x400C000000000000, little-endian on disk.
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes, vec![0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x40]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let img = Image2D::new(4, 4, vec![1.0; 16], (0.0, 2.0)).unwrap();
        let path = tmp("truncated.f64");
        save_raw(&img, &path).unwrap();
        // Drop one value: sidecar still says 4x4.
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(15 * 8);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_raw(&path), Err(Error::Format(_))));
    }

    #[test]
    fn pgm_windowing_and_rounding() {
        let (lo, hi) = (0.25, 0.75);
        let img = Image2D::new(4, 1, vec![lo, hi, lo + 0.5 * (hi - lo), -1.0], (0.0, 1.0)).unwrap();
        let path = tmp("window.pgm");
        export_pgm(&img, (lo, hi), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n4 1\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // lo -> 0, hi -> 255, midpoint 127.5 rounds half-up to 128, below-lo clamps to 0.
        assert_eq!(&bytes[header.len()..], &[0u8, 255, 128, 0]);
    }

    #[test]
    fn pgm_rejects_degenerate_window() {
        let img = Image2D::new(1, 1, vec![0.5], (0.0, 1.0)).unwrap();
        assert!(export_pgm(&img, (1.0, 1.0), &tmp("bad.pgm")).is_err());
    }
}
