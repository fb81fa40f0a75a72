//! Lesion presence classifier: a small conv stack ending in global average
//! pooling and a single logit.

use serde::{Deserialize, Serialize};

use crate::core::{Image2D, Rng};
use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_forward, Conv, ConvKind, Tensor4};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Square input size in pixels; must be divisible by 2^stages.
    pub input_size: usize,
    /// Output channels per stage; each stage halves the spatial size.
    pub channels: Vec<usize>,
}

impl DetectorConfig {
    /// Four-stage stack sized for small phantom images.
    pub fn new(input_size: usize) -> Self {
        DetectorConfig { input_size, channels: vec![8, 16, 32, 64] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::invalid("stage channels must be positive and non-empty"));
        }
        let div = 1usize << self.channels.len();
        if self.input_size == 0 || self.input_size % div != 0 {
            return Err(Error::invalid(format!(
                "input size {} not divisible by 2^{}",
                self.input_size,
                self.channels.len()
            )));
        }
        Ok(())
    }
}

/// Per stage: 3x3 conv + ReLU, then strided 2x2 conv + ReLU. After the last
/// stage the feature maps are averaged per channel and a 1x1 conv produces
/// the logit.
pub struct Detector {
    pub cfg: DetectorConfig,
    convs: Vec<Conv>,
}

fn plan(cfg: &DetectorConfig) -> Vec<(ConvKind, usize, usize)> {
    let mut plans = Vec::new();
    let mut cin = 1;
    for &c in &cfg.channels {
        plans.push((ConvKind::Conv3x3, cin, c));
        plans.push((ConvKind::StridedConv2x2, c, c));
        cin = c;
    }
    plans.push((ConvKind::Conv1x1, cin, 1));
    plans
}

/// Conv inputs and pre-activation maps from a forward pass, plus the
/// spatial size entering the average pool.
pub struct DetectorTrace {
    conv_inputs: Vec<Tensor4>,
    pre_relus: Vec<Tensor4>,
    pooled_from: (usize, usize),
}

impl Detector {
    pub fn new(cfg: DetectorConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let convs = plan(&cfg)
            .iter()
            .map(|&(kind, cin, cout)| Conv::new(kind, cin, cout, rng))
            .collect();
        Ok(Detector { cfg, convs })
    }

    pub(crate) fn from_parts(cfg: DetectorConfig, convs: Vec<Conv>) -> Result<Self> {
        cfg.validate()?;
        let plans = plan(&cfg);
        if convs.len() != plans.len() {
            return Err(Error::format(format!(
                "checkpoint holds {} layers, config needs {}",
                convs.len(),
                plans.len()
            )));
        }
        for (i, (c, &(kind, cin, cout))) in convs.iter().zip(&plans).enumerate() {
            if c.kind != kind || c.in_channels != cin || c.out_channels != cout {
                return Err(Error::format(format!(
                    "layer {i} is {:?} {}->{}, config needs {:?} {}->{}",
                    c.kind, c.in_channels, c.out_channels, kind, cin, cout
                )));
            }
        }
        Ok(Detector { cfg, convs })
    }

    pub fn convs(&self) -> &[Conv] {
        &self.convs
    }

    pub(crate) fn convs_mut(&mut self) -> &mut [Conv] {
        &mut self.convs
    }

    pub fn parameter_count(&self) -> usize {
        self.convs.iter().map(Conv::parameter_count).sum()
    }

    pub fn zero_grads(&mut self) {
        for c in &mut self.convs {
            c.zero_grads();
        }
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.channels != 1 || x.height != self.cfg.input_size || x.width != self.cfg.input_size {
            return Err(Error::invalid(format!(
                "detector expects 1x{0}x{0} inputs, got {1}x{2}x{3}",
                self.cfg.input_size, x.channels, x.height, x.width
            )));
        }
        Ok(())
    }

    /// One logit per batch item.
    pub fn forward_logits(&self, x: &Tensor4) -> Result<Vec<f64>> {
        Ok(self.forward_traced(x)?.0)
    }

    pub fn forward_train(&self, x: &Tensor4) -> Result<(Vec<f64>, DetectorTrace)> {
        self.forward_traced(x)
    }

    fn forward_traced(&self, x: &Tensor4) -> Result<(Vec<f64>, DetectorTrace)> {
        self.check_input(x)?;
        let n_staged = self.convs.len() - 1;
        let mut conv_inputs = Vec::with_capacity(self.convs.len());
        let mut pre_relus = Vec::with_capacity(n_staged);
        let mut z = x.clone();
        for conv in &self.convs[..n_staged] {
            let input = z;
            let pre = conv.forward(&input)?;
            z = relu_forward(&pre);
            conv_inputs.push(input);
            pre_relus.push(pre);
        }
        let pooled_from = (z.height, z.width);
        let pooled = global_average_pool(&z);
        let head = self.convs[n_staged].forward(&pooled)?;
        conv_inputs.push(pooled);
        let trace = DetectorTrace { conv_inputs, pre_relus, pooled_from };
        Ok((head.data, trace))
    }

    /// Accumulate parameter gradients for a batch of logit gradients and
    /// return the gradient with respect to the input tensor.
    pub fn backward(&mut self, trace: &DetectorTrace, dlogits: &[f64]) -> Result<Tensor4> {
        let n_staged = self.convs.len() - 1;
        let pooled = &trace.conv_inputs[n_staged];
        if dlogits.len() != pooled.batch {
            return Err(Error::invalid(format!(
                "{} logit gradients for a batch of {}",
                dlogits.len(),
                pooled.batch
            )));
        }
        let mut dhead = Tensor4::zeros(pooled.batch, 1, 1, 1);
        dhead.data.copy_from_slice(dlogits);
        let dpooled = self.convs[n_staged].backward(pooled, &dhead)?;

        let (h, w) = trace.pooled_from;
        let mut dz = Tensor4::zeros(pooled.batch, pooled.channels, h, w);
        let scale = 1.0 / (h * w) as f64;
        for b in 0..pooled.batch {
            for c in 0..pooled.channels {
                let g = dpooled.data[dpooled.plane(b, c)] * scale;
                let start = dz.plane(b, c);
                dz.data[start..start + h * w].iter_mut().for_each(|v| *v += g);
            }
        }

        for i in (0..n_staged).rev() {
            dz = relu_backward(&trace.pre_relus[i], &dz);
            dz = self.convs[i].backward(&trace.conv_inputs[i], &dz)?;
        }
        Ok(dz)
    }

    /// Raw d(logit)/d(pixel) for one image, row-major. Weight gradients are
    /// computed into a scratch clone, so `self` stays untouched and calls
    /// parallelize over a dataset.
    pub fn input_gradient(&self, image: &Image2D) -> Result<Vec<f64>> {
        let x = Tensor4::from_data(1, 1, image.height, image.width, image.data.clone())?;
        let (_, trace) = self.forward_traced(&x)?;
        let mut scratch = Detector {
            cfg: self.cfg.clone(),
            convs: self.convs.clone(),
        };
        let dx = scratch.backward(&trace, &[1.0])?;
        Ok(dx.data)
    }
}

/// Mean over each (batch, channel) plane, to shape [b, c, 1, 1].
fn global_average_pool(x: &Tensor4) -> Tensor4 {
    let mut out = Tensor4::zeros(x.batch, x.channels, 1, 1);
    let area = (x.height * x.width) as f64;
    for b in 0..x.batch {
        for c in 0..x.channels {
            let start = x.plane(b, c);
            let sum: f64 = x.data[start..start + x.height * x.width].iter().sum();
            let at = out.plane(b, c);
            out.data[at] = sum / area;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_rejects_bad_values() {
        assert!(DetectorConfig::new(64).validate().is_ok());
        assert!(DetectorConfig::new(0).validate().is_err());
        assert!(DetectorConfig::new(24).validate().is_err(), "24 not divisible by 16");
        let empty = DetectorConfig { input_size: 64, channels: vec![] };
        assert!(empty.validate().is_err());
        let zero = DetectorConfig { input_size: 64, channels: vec![8, 0] };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn hand_built_single_stage_has_a_closed_form_logit() {
        // Identity 3x3 conv, 2x2 average strided conv, head weight 2 bias
        // 0.5: for a non-negative input the logit is 2 * mean(x) + 0.5.
        let cfg = DetectorConfig { input_size: 4, channels: vec![1] };
        let mut rng = Rng::new(1);
        let mut net = Detector::new(cfg, &mut rng).unwrap();
        let convs = net.convs_mut();
        convs[0].weight.iter_mut().for_each(|w| *w = 0.0);
        convs[0].weight[4] = 1.0;
        convs[0].bias[0] = 0.0;
        convs[1].weight.iter_mut().for_each(|w| *w = 0.25);
        convs[1].bias[0] = 0.0;
        convs[2].weight[0] = 2.0;
        convs[2].bias[0] = 0.5;

        let data: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let mean = data.iter().sum::<f64>() / 16.0;
        let x = Tensor4::from_data(1, 1, 4, 4, data).unwrap();
        let logit = net.forward_logits(&x).unwrap()[0];
        assert!((logit - (2.0 * mean + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn logits_are_deterministic() {
        let mut rng = Rng::new(3);
        let net = Detector::new(DetectorConfig::new(16), &mut rng).unwrap();
        let data: Vec<f64> = (0..256).map(|_| rng.range_f64(0.0, 1.0)).collect();
        let x = Tensor4::from_data(1, 1, 16, 16, data).unwrap();
        let a = net.forward_logits(&x).unwrap()[0];
        let b = net.forward_logits(&x).unwrap()[0];
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn wrong_input_sizes_are_rejected() {
        let mut rng = Rng::new(5);
        let net = Detector::new(DetectorConfig::new(16), &mut rng).unwrap();
        assert!(net.forward_logits(&Tensor4::zeros(1, 1, 8, 8)).is_err());
        assert!(net.forward_logits(&Tensor4::zeros(1, 2, 16, 16)).is_err());
    }

    #[test]
    fn batch_items_are_independent() {
        let mut rng = Rng::new(7);
        let net = Detector::new(DetectorConfig::new(16), &mut rng).unwrap();
        let a: Vec<f64> = (0..256).map(|_| rng.range_f64(0.0, 1.0)).collect();
        let b: Vec<f64> = (0..256).map(|_| rng.range_f64(0.0, 1.0)).collect();
        let xa = Tensor4::from_data(1, 1, 16, 16, a.clone()).unwrap();
        let xb = Tensor4::from_data(1, 1, 16, 16, b.clone()).unwrap();
        let mut both = a;
        both.extend(b);
        let xab = Tensor4::from_data(2, 1, 16, 16, both).unwrap();
        let single = [
            net.forward_logits(&xa).unwrap()[0],
            net.forward_logits(&xb).unwrap()[0],
        ];
        let batched = net.forward_logits(&xab).unwrap();
        assert_eq!(single[0].to_bits(), batched[0].to_bits());
        assert_eq!(single[1].to_bits(), batched[1].to_bits());
    }

    #[test]
    fn detector_gradients_match_finite_differences() {
        let cfg = DetectorConfig { input_size: 8, channels: vec![2, 3] };
        let mut rng = Rng::new(11);
        let mut net = Detector::new(cfg, &mut rng).unwrap();
        for conv in net.convs_mut() {
            conv.bias.iter_mut().for_each(|b| *b = rng.range_f64(-0.2, 0.2));
        }
        let data: Vec<f64> = (0..2 * 64).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let x = Tensor4::from_data(2, 1, 8, 8, data).unwrap();
        let coef = [0.7, -0.4];
        let objective = |net: &Detector, x: &Tensor4| -> f64 {
            let l = net.forward_logits(x).unwrap();
            l[0] * coef[0] + l[1] * coef[1]
        };

        let (_, trace) = net.forward_train(&x).unwrap();
        net.zero_grads();
        let dx = net.backward(&trace, &coef).unwrap();

        let h = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1.0);
        let mut probe = x.clone();
        for i in 0..probe.data.len() {
            let keep = probe.data[i];
            probe.data[i] = keep + h;
            let hi = objective(&net, &probe);
            probe.data[i] = keep - h;
            let lo = objective(&net, &probe);
            probe.data[i] = keep;
            assert!(rel(dx.data[i], (hi - lo) / (2.0 * h)) < 1e-6, "input pixel {i}");
        }
        for ci in 0..net.convs().len() {
            for wi in 0..net.convs()[ci].weight.len() {
                let keep = net.convs()[ci].weight[wi];
                net.convs_mut()[ci].weight[wi] = keep + h;
                let hi = objective(&net, &x);
                net.convs_mut()[ci].weight[wi] = keep - h;
                let lo = objective(&net, &x);
                net.convs_mut()[ci].weight[wi] = keep;
                let num = (hi - lo) / (2.0 * h);
                assert!(rel(net.convs()[ci].wgrad[wi], num) < 1e-6, "conv {ci} weight {wi}");
            }
            for bi in 0..net.convs()[ci].bias.len() {
                let keep = net.convs()[ci].bias[bi];
                net.convs_mut()[ci].bias[bi] = keep + h;
                let hi = objective(&net, &x);
                net.convs_mut()[ci].bias[bi] = keep - h;
                let lo = objective(&net, &x);
                net.convs_mut()[ci].bias[bi] = keep;
                let num = (hi - lo) / (2.0 * h);
                assert!(rel(net.convs()[ci].bgrad[bi], num) < 1e-6, "conv {ci} bias {bi}");
            }
        }
    }
}
