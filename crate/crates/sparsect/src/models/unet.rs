//! Residual encoder-decoder for sinogram-artifact reduction.
//!
//! The network is stored as a flat conv list plus a step program; forward
//! and backward walk the same program, so the two can not drift apart.
//! Skips are additive and taken from each scale's final pre-activation
//! feature map; the network output is tail + input (global residual).

use serde::{Deserialize, Serialize};

use crate::core::Rng;
use crate::error::{Error, Result};
use crate::nn::{add_forward, relu_backward, relu_forward, Conv, ConvKind, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Nominal square input size in pixels, a power of two.
    pub input_size: usize,
    pub base_channels: usize,
    /// Number of encoder (and decoder) blocks.
    pub depth: usize,
    /// Channel multiplier applied at each encoder level.
    pub growth: usize,
}

impl UNetConfig {
    pub fn new(input_size: usize, base_channels: usize, depth: usize) -> Self {
        UNetConfig { input_size, base_channels, depth, growth: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "input size {} must be a power of two",
                self.input_size
            )));
        }
        if self.base_channels == 0 {
            return Err(Error::invalid("base channel count must be positive"));
        }
        if self.depth == 0 {
            return Err(Error::invalid("depth must be at least 1"));
        }
        if self.growth == 0 {
            return Err(Error::invalid("channel growth must be at least 1"));
        }
        if self.input_size % (1usize << self.depth) != 0 {
            return Err(Error::invalid(format!(
                "input size {} not divisible by 2^{}",
                self.input_size, self.depth
            )));
        }
        Ok(())
    }

    /// Channel count at encoder level `lvl` (0 = stem).
    fn channels_at(&self, lvl: usize) -> usize {
        self.base_channels * self.growth.pow(lvl as u32)
    }

    /// (channels, spatial side) of the deepest feature map.
    pub fn bottleneck_shape(&self) -> (usize, usize) {
        (self.channels_at(self.depth), self.input_size >> self.depth)
    }
}

/// One instruction of the network program. Conv steps index into the flat
/// conv list; skip slots are numbered by encoder level.
#[derive(Clone, Copy, Debug)]
enum Step {
    Conv { idx: usize, relu: bool },
    SaveSkip(usize),
    AddSkip(usize),
}

struct ConvPlan {
    kind: ConvKind,
    cin: usize,
    cout: usize,
}

/// ReLU follows every conv except skip-source and pre-add layers and the
/// output conv, so additions combine pre-activation feature maps.
fn plan(cfg: &UNetConfig) -> (Vec<ConvPlan>, Vec<Step>) {
    struct P {
        plans: Vec<ConvPlan>,
        steps: Vec<Step>,
    }
    impl P {
        fn conv(&mut self, kind: ConvKind, cin: usize, cout: usize, relu: bool) {
            self.steps.push(Step::Conv { idx: self.plans.len(), relu });
            self.plans.push(ConvPlan { kind, cin, cout });
        }
    }
    let mut p = P { plans: Vec::new(), steps: Vec::new() };

    let b = cfg.base_channels;
    p.conv(ConvKind::Conv3x3, 1, b, true);
    p.conv(ConvKind::Conv3x3, b, b, true);
    p.conv(ConvKind::Conv3x3, b, b, true);
    p.conv(ConvKind::Conv3x3, b, b, false);
    p.steps.push(Step::SaveSkip(0));

    for lvl in 1..=cfg.depth {
        let (cin, cout) = (cfg.channels_at(lvl - 1), cfg.channels_at(lvl));
        p.conv(ConvKind::StridedConv2x2, cin, cout, true);
        p.conv(ConvKind::Conv1x1, cout, cout, true);
        p.conv(ConvKind::Conv3x3, cout, cout, true);
        p.conv(ConvKind::Conv3x3, cout, cout, true);
        // The bottleneck block feeds the decoder directly rather than an
        // add, so only there the final conv keeps its activation.
        p.conv(ConvKind::Conv3x3, cout, cout, lvl == cfg.depth);
        if lvl < cfg.depth {
            p.steps.push(Step::SaveSkip(lvl));
        }
    }

    for lvl in (1..=cfg.depth).rev() {
        let (cin, cout) = (cfg.channels_at(lvl), cfg.channels_at(lvl - 1));
        p.conv(ConvKind::Conv3x3, cin, cin, true);
        p.conv(ConvKind::Conv3x3, cin, cin, true);
        p.conv(ConvKind::Conv3x3, cin, cin, true);
        p.conv(ConvKind::TransposedConv2x2, cin, cout, false);
        p.steps.push(Step::AddSkip(lvl - 1));
    }

    p.conv(ConvKind::Conv3x3, b, b, true);
    p.conv(ConvKind::Conv3x3, b, b, true);
    p.conv(ConvKind::Conv3x3, b, b, true);
    p.conv(ConvKind::Conv3x3, b, 1, false);

    (p.plans, p.steps)
}

pub struct UNet {
    pub cfg: UNetConfig,
    convs: Vec<Conv>,
    steps: Vec<Step>,
}

/// Everything backward needs from a forward pass: per conv step its input
/// and, where an activation follows, the pre-activation output.
pub struct UNetTrace {
    entries: Vec<Option<TraceEntry>>,
    input: Tensor4,
}

struct TraceEntry {
    conv_input: Tensor4,
    pre_relu: Option<Tensor4>,
}

impl UNet {
    pub fn new(cfg: UNetConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (plans, steps) = plan(&cfg);
        let convs = plans
            .iter()
            .map(|p| Conv::new(p.kind, p.cin, p.cout, rng))
            .collect();
        Ok(UNet { cfg, convs, steps })
    }

    /// Rebuild from a conv list, checking it matches the config's layout.
    pub(crate) fn from_parts(cfg: UNetConfig, convs: Vec<Conv>) -> Result<Self> {
        cfg.validate()?;
        let (plans, steps) = plan(&cfg);
        if convs.len() != plans.len() {
            return Err(Error::format(format!(
                "checkpoint holds {} layers, config needs {}",
                convs.len(),
                plans.len()
            )));
        }
        for (i, (c, p)) in convs.iter().zip(&plans).enumerate() {
            if c.kind != p.kind || c.in_channels != p.cin || c.out_channels != p.cout {
                return Err(Error::format(format!(
                    "layer {i} is {:?} {}->{}, config needs {:?} {}->{}",
                    c.kind, c.in_channels, c.out_channels, p.kind, p.cin, p.cout
                )));
            }
        }
        Ok(UNet { cfg, convs, steps })
    }

    /// Zero the output conv. The global residual then makes the freshly
    /// built network the exact identity map.
    pub fn identity_init(&mut self) {
        let last = self.convs.last_mut().unwrap();
        last.weight.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|b| *b = 0.0);
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

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.channels != 1 {
            return Err(Error::invalid(format!(
                "network input must be single-channel, got {}",
                x.channels
            )));
        }
        let div = 1usize << self.cfg.depth;
        if x.height == 0 || x.height % div != 0 || x.width % div != 0 {
            return Err(Error::invalid(format!(
                "input {}x{} not divisible by 2^{}",
                x.height, x.width, self.cfg.depth
            )));
        }
        Ok(())
    }

    /// Inference pass. Accepts any spatial size divisible by 2^depth, so
    /// the same network runs on training patches and full frames.
    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        let mut skips: Vec<Option<Tensor4>> = vec![None; self.cfg.depth];
        let mut z = x.clone();
        for step in &self.steps {
            match *step {
                Step::Conv { idx, relu } => {
                    z = self.convs[idx].forward(&z)?;
                    if relu {
                        z = relu_forward(&z);
                    }
                }
                Step::SaveSkip(s) => skips[s] = Some(z.clone()),
                Step::AddSkip(s) => z = add_forward(&z, skips[s].as_ref().unwrap())?,
            }
        }
        add_forward(&z, x)
    }

    /// Forward pass that records what backward will need.
    pub fn forward_train(&self, x: &Tensor4) -> Result<(Tensor4, UNetTrace)> {
        self.check_input(x)?;
        let mut entries = Vec::with_capacity(self.steps.len());
        let mut skips: Vec<Option<Tensor4>> = vec![None; self.cfg.depth];
        let mut z = x.clone();
        for step in &self.steps {
            match *step {
                Step::Conv { idx, relu } => {
                    let conv_input = z;
                    z = self.convs[idx].forward(&conv_input)?;
                    let pre_relu = if relu {
                        let pre = z.clone();
                        z = relu_forward(&z);
                        Some(pre)
                    } else {
                        None
                    };
                    entries.push(Some(TraceEntry { conv_input, pre_relu }));
                }
                Step::SaveSkip(s) => {
                    skips[s] = Some(z.clone());
                    entries.push(None);
                }
                Step::AddSkip(s) => {
                    z = add_forward(&z, skips[s].as_ref().unwrap())?;
                    entries.push(None);
                }
            }
        }
        let out = add_forward(&z, x)?;
        Ok((out, UNetTrace { entries, input: x.clone() }))
    }

    /// Accumulate parameter gradients from `dout` and return the gradient
    /// with respect to the network input.
    pub fn backward(&mut self, trace: &UNetTrace, dout: &Tensor4) -> Result<Tensor4> {
        if dout.shape() != trace.input.shape() {
            return Err(Error::invalid("output gradient shape mismatch"));
        }
        let mut dskips: Vec<Option<Tensor4>> = vec![None; self.cfg.depth];
        let mut dz = dout.clone();
        for (si, step) in self.steps.iter().enumerate().rev() {
            match *step {
                Step::Conv { idx, relu } => {
                    let entry = trace.entries[si].as_ref().unwrap();
                    if relu {
                        dz = relu_backward(entry.pre_relu.as_ref().unwrap(), &dz);
                    }
                    dz = self.convs[idx].backward(&entry.conv_input, &dz)?;
                }
                // Forward branched here: the saved map went both down the
                // chain and into an add, so the two gradients sum.
                Step::SaveSkip(s) => {
                    if let Some(d) = dskips[s].take() {
                        dz = add_forward(&dz, &d)?;
                    }
                }
                Step::AddSkip(s) => dskips[s] = Some(dz.clone()),
            }
        }
        // Global residual: input feeds both the stem and the output add.
        add_forward(&dz, dout)
    }

    pub fn zero_grads(&mut self) {
        for c in &mut self.convs {
            c.zero_grads();
        }
    }
}
