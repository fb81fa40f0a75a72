//! Network checkpoints: raw little-endian f64 weight payload at the given
//! path plus a `.json` manifest alongside, naming the model kind, its
//! config and the layer list. Round trips are bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::detector::{Detector, DetectorConfig};
use crate::models::unet::{UNet, UNetConfig};
use crate::nn::{Conv, ConvKind};

const FORMAT: &str = "sparsect-net-v1";

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    kind: ConvKind,
    in_channels: usize,
    out_channels: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum ManifestBody {
    Unet { config: UNetConfig },
    Detector { config: DetectorConfig },
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    #[serde(flatten)]
    body: ManifestBody,
    layers: Vec<LayerEntry>,
}

fn manifest_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

fn save(body: ManifestBody, convs: &[Conv], path: &Path) -> Result<()> {
    let layers = convs
        .iter()
        .map(|c| LayerEntry {
            kind: c.kind,
            in_channels: c.in_channels,
            out_channels: c.out_channels,
        })
        .collect();
    let manifest = Manifest { format: FORMAT.to_string(), body, layers };

    let total: usize = convs.iter().map(|c| c.weight.len() + c.bias.len()).sum();
    let mut bytes = Vec::with_capacity(total * 8);
    for c in convs {
        for v in c.weight.iter().chain(&c.bias) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    fs::write(manifest_path(path), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn load(path: &Path) -> Result<(ManifestBody, Vec<Conv>)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path(path))?)?;
    if manifest.format != FORMAT {
        return Err(Error::format(format!(
            "unsupported checkpoint format {:?}",
            manifest.format
        )));
    }
    let bytes = fs::read(path)?;
    let total: usize = manifest
        .layers
        .iter()
        .map(|l| l.kind.kernel_area() * l.in_channels * l.out_channels + l.out_channels)
        .sum();
    if bytes.len() != total * 8 {
        return Err(Error::format(format!(
            "payload {} holds {} bytes, manifest needs {}",
            path.display(),
            bytes.len(),
            total * 8
        )));
    }

    let mut at = 0;
    let mut next = || {
        let v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        at += 8;
        v
    };
    let convs = manifest
        .layers
        .iter()
        .map(|l| {
            let mut conv = Conv::zeroed(l.kind, l.in_channels, l.out_channels);
            conv.weight.iter_mut().for_each(|w| *w = next());
            conv.bias.iter_mut().for_each(|b| *b = next());
            conv
        })
        .collect();
    Ok((manifest.body, convs))
}

pub fn save_unet(net: &UNet, path: &Path) -> Result<()> {
    save(ManifestBody::Unet { config: net.cfg }, net.convs(), path)
}

pub fn load_unet(path: &Path) -> Result<UNet> {
    match load(path)? {
        (ManifestBody::Unet { config }, convs) => UNet::from_parts(config, convs),
        _ => Err(Error::format("checkpoint does not hold a unet")),
    }
}

pub fn save_detector(net: &Detector, path: &Path) -> Result<()> {
    save(ManifestBody::Detector { config: net.cfg.clone() }, net.convs(), path)
}

pub fn load_detector(path: &Path) -> Result<Detector> {
    match load(path)? {
        (ManifestBody::Detector { config }, convs) => Detector::from_parts(config, convs),
        _ => Err(Error::format("checkpoint does not hold a detector")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::Rng;
    use crate::nn::Tensor4;

    #[test]
    fn unet_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("unet.ckpt");
        let mut rng = Rng::new(1);
        let net = UNet::new(UNetConfig::new(16, 2, 2), &mut rng).unwrap();
        save_unet(&net, &path).unwrap();
        let back = load_unet(&path).unwrap();
        assert_eq!(back.cfg, net.cfg);
        for (a, b) in net.convs().iter().zip(back.convs()) {
            assert!(a.weight.iter().zip(&b.weight).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.bias.iter().zip(&b.bias).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let data: Vec<f64> = (0..256).map(|_| rng.range_f64(0.0, 1.0)).collect();
        let x = Tensor4::from_data(1, 1, 16, 16, data).unwrap();
        assert_eq!(net.forward(&x).unwrap().data, back.forward(&x).unwrap().data);
    }

    #[test]
    fn detector_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.ckpt");
        let mut rng = Rng::new(2);
        let net = Detector::new(DetectorConfig::new(16), &mut rng).unwrap();
        save_detector(&net, &path).unwrap();
        let back = load_detector(&path).unwrap();
        let data: Vec<f64> = (0..256).map(|_| rng.range_f64(0.0, 1.0)).collect();
        let x = Tensor4::from_data(1, 1, 16, 16, data).unwrap();
        let a = net.forward_logits(&x).unwrap()[0];
        let b = back.forward_logits(&x).unwrap()[0];
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn model_kinds_do_not_cross_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.ckpt");
        let mut rng = Rng::new(3);
        let net = Detector::new(DetectorConfig::new(16), &mut rng).unwrap();
        save_detector(&net, &path).unwrap();
        assert!(load_unet(&path).is_err());
    }

    #[test]
    fn corrupt_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("unet.ckpt");
        let mut rng = Rng::new(4);
        let net = UNet::new(UNetConfig::new(16, 2, 1), &mut rng).unwrap();
        save_unet(&net, &path).unwrap();

        let payload = std::fs::read(&path).unwrap();
        std::fs::write(&path, &payload[..payload.len() - 8]).unwrap();
        assert!(load_unet(&path).is_err(), "truncated payload");

        std::fs::write(&path, payload).unwrap();
        std::fs::write(manifest_path(&path), b"not json").unwrap();
        assert!(load_unet(&path).is_err(), "garbage manifest");
    }
}
