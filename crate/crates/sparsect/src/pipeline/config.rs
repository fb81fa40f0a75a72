//! Experiment configuration: one JSON document drives every stage, so a
//! run is reproducible from (config, seed) alone.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reconstruction or post-processing method under evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fbp,
    Tv,
    Unet,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fbp => "fbp",
            Method::Tv => "tv",
            Method::Unet => "unet",
        }
    }
}

/// TV weight sweep grid, inclusive of both endpoints.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TvGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for TvGrid {
    fn default() -> Self {
        TvGrid { lo: 0.005, hi: 0.06, step: 0.005 }
    }
}

/// U-Net shape and training budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnetTrainConfig {
    pub base_channels: usize,
    pub depth: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for UnetTrainConfig {
    fn default() -> Self {
        UnetTrainConfig { base_channels: 8, depth: 3, epochs: 30, batch: 8, lr: 1e-3 }
    }
}

/// Detector shape and training budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorTrainConfig {
    pub channels: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for DetectorTrainConfig {
    fn default() -> Self {
        DetectorTrainConfig { channels: vec![8, 16, 32, 64], epochs: 10, batch: 16 }
    }
}

/// Timing harness shape: per (views, method), `images` per repeat and
/// `repeats` kept measurements after warmup.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub images: usize,
    pub repeats: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig { images: 20, repeats: 5 }
    }
}

/// Everything an experiment run needs. Desk-scale defaults: 64x64
/// phantoms against a 512-view dense reference with the halving ladder
/// below it, the paper's ratios rather than its absolute counts.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub phantom_size: usize,
    pub reference_views: usize,
    /// Sparse view counts, strictly descending, each dividing the reference.
    pub view_ladder: Vec<usize>,
    pub methods: Vec<Method>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub lesion_fraction: f64,
    pub seed: u64,
    pub tv_grid: TvGrid,
    /// Training pairs consumed by the TV weight sweep.
    pub tv_sweep_pairs: usize,
    pub unet: UnetTrainConfig,
    pub detector: DetectorTrainConfig,
    pub timing: TimingConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            phantom_size: 64,
            reference_views: 512,
            view_ladder: vec![128, 64, 32, 16],
            methods: vec![Method::Fbp, Method::Tv, Method::Unet],
            n_train: 200,
            n_val: 50,
            n_test: 100,
            lesion_fraction: 0.5,
            seed: 7,
            tv_grid: TvGrid::default(),
            tv_sweep_pairs: 50,
            unet: UnetTrainConfig::default(),
            detector: DetectorTrainConfig::default(),
            timing: TimingConfig::default(),
            output_dir: PathBuf::from("runs/desk"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn has_method(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }

    /// Sparsest level of the ladder, the one the U-Net trains at.
    pub fn sparsest_views(&self) -> usize {
        *self.view_ladder.last().expect("validated ladder is non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.phantom_size < 16 {
            return Err(Error::invalid(format!(
                "phantom size {} below minimum 16",
                self.phantom_size
            )));
        }
        if self.view_ladder.is_empty() {
            return Err(Error::invalid("view ladder must not be empty"));
        }
        for pair in self.view_ladder.windows(2) {
            if pair[1] >= pair[0] {
                return Err(Error::invalid("view ladder must be strictly descending"));
            }
        }
        for &v in &self.view_ladder {
            if v == 0 || v >= self.reference_views || self.reference_views % v != 0 {
                return Err(Error::invalid(format!(
                    "ladder entry {v} must divide the reference {} and sit below it",
                    self.reference_views
                )));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::invalid(format!("duplicate method {}", m.name())));
            }
        }
        if !(0.0..=1.0).contains(&self.lesion_fraction) {
            return Err(Error::invalid("lesion fraction must lie in [0, 1]"));
        }
        if self.n_test == 0 {
            return Err(Error::invalid("test split must not be empty"));
        }
        if self.methods.len() >= 2 && self.n_test < 10 {
            return Err(Error::invalid(
                "paired method tests need at least 10 test phantoms",
            ));
        }
        if self.has_method(Method::Tv) {
            let g = &self.tv_grid;
            if !(g.lo > 0.0) || g.hi < g.lo || !(g.step > 0.0) {
                return Err(Error::invalid("tv grid must satisfy 0 < lo <= hi, step > 0"));
            }
            if self.tv_sweep_pairs == 0 {
                return Err(Error::invalid("tv sweep needs at least one pair"));
            }
            if self.tv_sweep_pairs > self.n_train {
                return Err(Error::invalid(format!(
                    "tv sweep wants {} pairs but the train split has {}",
                    self.tv_sweep_pairs, self.n_train
                )));
            }
        }
        if self.has_method(Method::Unet) {
            if self.n_train == 0 || self.n_val == 0 {
                return Err(Error::invalid("training methods need train and val splits"));
            }
            let stride = 1usize << self.unet.depth;
            if self.phantom_size % stride != 0 {
                return Err(Error::invalid(format!(
                    "phantom size {} not divisible by 2^depth = {stride}",
                    self.phantom_size
                )));
            }
            if self.unet.base_channels == 0 || self.unet.epochs == 0 || self.unet.batch == 0 {
                return Err(Error::invalid("unet channels, epochs and batch must be positive"));
            }
            if !(self.unet.lr > 0.0) {
                return Err(Error::invalid("unet learning rate must be positive"));
            }
        }
        if self.detector.channels.is_empty() || self.detector.channels.contains(&0) {
            return Err(Error::invalid("detector channels must be positive and non-empty"));
        }
        if self.detector.epochs == 0 || self.detector.batch == 0 {
            return Err(Error::invalid("detector epochs and batch must be positive"));
        }
        let det_stride = 1usize << self.detector.channels.len();
        if self.phantom_size % det_stride != 0 {
            return Err(Error::invalid(format!(
                "phantom size {} not divisible by the detector stride {det_stride}",
                self.phantom_size
            )));
        }
        if self.timing.images == 0 || self.timing.repeats == 0 {
            return Err(Error::invalid("timing needs at least one image and one repeat"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn json_round_trip_preserves_the_config() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_json().unwrap();
        let back = ExperimentConfig::from_json_str(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json_str(r#"{"phantom_size": 128, "seed": 3}"#).unwrap();
        assert_eq!(cfg.phantom_size, 128);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.reference_views, 512);
        assert_eq!(cfg.view_ladder, vec![128, 64, 32, 16]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"phantom_sized": 128}"#).is_err());
    }

    #[test]
    fn ladder_must_divide_the_reference() {
        let mut cfg = ExperimentConfig::default();
        cfg.view_ladder = vec![96];
        assert!(cfg.validate().is_err());
        cfg.view_ladder = vec![512];
        assert!(cfg.validate().is_err());
        cfg.view_ladder = vec![128, 128];
        assert!(cfg.validate().is_err());
        cfg.view_ladder = vec![128, 16];
        cfg.validate().unwrap();
    }

    #[test]
    fn method_list_is_checked() {
        let mut cfg = ExperimentConfig::default();
        cfg.methods = vec![];
        assert!(cfg.validate().is_err());
        cfg.methods = vec![Method::Fbp, Method::Fbp];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unet_size_constraint_only_applies_when_requested() {
        let mut cfg = ExperimentConfig::default();
        cfg.phantom_size = 52;
        cfg.detector.channels = vec![8, 16];
        assert!(cfg.validate().is_err());
        cfg.methods = vec![Method::Fbp, Method::Tv];
        cfg.validate().unwrap();
    }

    #[test]
    fn method_names_serialize_lowercase() {
        assert_eq!(serde_json::to_string(&Method::Unet).unwrap(), r#""unet""#);
        let m: Method = serde_json::from_str(r#""tv""#).unwrap();
        assert_eq!(m, Method::Tv);
    }
}
