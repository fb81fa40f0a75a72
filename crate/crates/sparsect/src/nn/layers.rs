//! Convolution layers (3x3 zero-padded, 1x1, strided 2x2, transposed 2x2)
//! with exact reverse-mode gradients, plus ReLU and elementwise add.
//!
//! Forward passes parallelize over batch items with a fixed per-item
//! summation order, so outputs are bit-identical at any thread count.
//! Backward passes accumulate parameter gradients single-writer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor4;
use crate::core::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    Conv3x3,
    Conv1x1,
    StridedConv2x2,
    TransposedConv2x2,
}

impl ConvKind {
    pub fn kernel_area(self) -> usize {
        match self {
            ConvKind::Conv3x3 => 9,
            ConvKind::Conv1x1 => 1,
            ConvKind::StridedConv2x2 | ConvKind::TransposedConv2x2 => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub kind: ConvKind,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Flat kernel, [out][in][kh][kw] — except the transposed kind, which
    /// stores [in][out][kh][kw] so a strided conv's weight vector doubles
    /// verbatim as its adjoint.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub wgrad: Vec<f64>,
    pub bgrad: Vec<f64>,
}

impl Conv {
    /// Kaiming-uniform init (fan-in scaling), zero bias.
    pub fn new(kind: ConvKind, in_channels: usize, out_channels: usize, rng: &mut Rng) -> Self {
        let n = in_channels * out_channels * kind.kernel_area();
        let fan_in = (in_channels * kind.kernel_area()) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weight = (0..n).map(|_| rng.range_f64(-bound, bound)).collect();
        Conv {
            kind,
            in_channels,
            out_channels,
            weight,
            bias: vec![0.0; out_channels],
            wgrad: vec![0.0; n],
            bgrad: vec![0.0; out_channels],
        }
    }

    /// All-zero weights and bias; with a zero final conv a residual network
    /// starts as the identity.
    pub fn zeroed(kind: ConvKind, in_channels: usize, out_channels: usize) -> Self {
        let n = in_channels * out_channels * kind.kernel_area();
        Conv {
            kind,
            in_channels,
            out_channels,
            weight: vec![0.0; n],
            bias: vec![0.0; out_channels],
            wgrad: vec![0.0; n],
            bgrad: vec![0.0; out_channels],
        }
    }

    pub fn zero_grads(&mut self) {
        self.wgrad.iter_mut().for_each(|g| *g = 0.0);
        self.bgrad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn out_shape(&self, x: &Tensor4) -> Result<(usize, usize)> {
        if x.channels != self.in_channels {
            return Err(Error::invalid("conv input channel mismatch"));
        }
        if x.height == 0 || x.width == 0 {
            return Err(Error::invalid("conv input has empty spatial dims"));
        }
        match self.kind {
            ConvKind::Conv3x3 | ConvKind::Conv1x1 => Ok((x.height, x.width)),
            ConvKind::StridedConv2x2 => {
                if x.height % 2 != 0 || x.width % 2 != 0 {
                    return Err(Error::invalid("stride-2 conv needs even spatial dims"));
                }
                Ok((x.height / 2, x.width / 2))
            }
            ConvKind::TransposedConv2x2 => Ok((x.height * 2, x.width * 2)),
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        let (oh, ow) = self.out_shape(x)?;
        let mut out = Tensor4::zeros(x.batch, self.out_channels, oh, ow);
        let in_stride = self.in_channels * x.height * x.width;
        let out_stride = self.out_channels * oh * ow;
        out.data
            .par_chunks_mut(out_stride)
            .zip(x.data.par_chunks(in_stride))
            .for_each(|(ob, xb)| match self.kind {
                ConvKind::Conv3x3 => self.fwd_3x3(xb, ob, x.height, x.width),
                ConvKind::Conv1x1 => self.fwd_1x1(xb, ob, x.height * x.width),
                ConvKind::StridedConv2x2 => self.fwd_strided(xb, ob, x.height, x.width),
                ConvKind::TransposedConv2x2 => self.fwd_transposed(xb, ob, x.height, x.width),
            });
        Ok(out)
    }

    /// Gradients w.r.t. input (returned), weights and bias (accumulated
    /// into wgrad/bgrad). `x` must be the forward input, `dy` the gradient
    /// at the forward output.
    pub fn backward(&mut self, x: &Tensor4, dy: &Tensor4) -> Result<Tensor4> {
        let (oh, ow) = self.out_shape(x)?;
        if dy.shape() != (x.batch, self.out_channels, oh, ow) {
            return Err(Error::invalid("conv backward shape mismatch"));
        }
        let mut dx = Tensor4::zeros(x.batch, self.in_channels, x.height, x.width);
        let in_stride = self.in_channels * x.height * x.width;
        let out_stride = self.out_channels * oh * ow;
        for b in 0..x.batch {
            let xb = &x.data[b * in_stride..(b + 1) * in_stride];
            let dyb = &dy.data[b * out_stride..(b + 1) * out_stride];
            let dxb = &mut dx.data[b * in_stride..(b + 1) * in_stride];
            match self.kind {
                ConvKind::Conv3x3 => self.bwd_3x3(xb, dyb, dxb, x.height, x.width),
                ConvKind::Conv1x1 => self.bwd_1x1(xb, dyb, dxb, x.height * x.width),
                ConvKind::StridedConv2x2 => self.bwd_strided(xb, dyb, dxb, x.height, x.width),
                ConvKind::TransposedConv2x2 => {
                    self.bwd_transposed(xb, dyb, dxb, x.height, x.width)
                }
            }
            for oc in 0..self.out_channels {
                let plane = &dyb[oc * oh * ow..(oc + 1) * oh * ow];
                self.bgrad[oc] += plane.iter().sum::<f64>();
            }
        }
        Ok(dx)
    }

    // Column bounds keeping x column c + kc - 1 inside [0, w).
    fn pad1_bounds(kc: usize, w: usize) -> (usize, usize) {
        match kc {
            0 => (1, w),
            1 => (0, w),
            _ => (0, w - 1),
        }
    }

    fn fwd_3x3(&self, xb: &[f64], ob: &mut [f64], h: usize, w: usize) {
        let hw = h * w;
        for oc in 0..self.out_channels {
            let oplane = &mut ob[oc * hw..(oc + 1) * hw];
            oplane.fill(self.bias[oc]);
            for ic in 0..self.in_channels {
                let k = &self.weight[(oc * self.in_channels + ic) * 9..][..9];
                let xplane = &xb[ic * hw..(ic + 1) * hw];
                for r in 0..h {
                    let orow = &mut oplane[r * w..(r + 1) * w];
                    for kr in 0..3 {
                        if r + kr == 0 || r + kr > h {
                            continue;
                        }
                        let xrow = &xplane[(r + kr - 1) * w..(r + kr) * w];
                        for kc in 0..3 {
                            let wv = k[kr * 3 + kc];
                            let (lo, hi) = Self::pad1_bounds(kc, w);
                            for c in lo..hi {
                                orow[c] += wv * xrow[c + kc - 1];
                            }
                        }
                    }
                }
            }
        }
    }

    fn bwd_3x3(&mut self, xb: &[f64], dyb: &[f64], dxb: &mut [f64], h: usize, w: usize) {
        let hw = h * w;
        for oc in 0..self.out_channels {
            let dyplane = &dyb[oc * hw..(oc + 1) * hw];
            for ic in 0..self.in_channels {
                let base = (oc * self.in_channels + ic) * 9;
                let xplane = &xb[ic * hw..(ic + 1) * hw];
                let dxplane = &mut dxb[ic * hw..(ic + 1) * hw];
                for r in 0..h {
                    let dyrow = &dyplane[r * w..(r + 1) * w];
                    for kr in 0..3 {
                        if r + kr == 0 || r + kr > h {
                            continue;
                        }
                        let xrow_start = (r + kr - 1) * w;
                        for kc in 0..3 {
                            let (lo, hi) = Self::pad1_bounds(kc, w);
                            let wv = self.weight[base + kr * 3 + kc];
                            let mut wg = 0.0;
                            for c in lo..hi {
                                let xi = xrow_start + c + kc - 1;
                                dxplane[xi] += wv * dyrow[c];
                                wg += dyrow[c] * xplane[xi];
                            }
                            self.wgrad[base + kr * 3 + kc] += wg;
                        }
                    }
                }
            }
        }
    }

    fn fwd_1x1(&self, xb: &[f64], ob: &mut [f64], hw: usize) {
        for oc in 0..self.out_channels {
            let oplane = &mut ob[oc * hw..(oc + 1) * hw];
            oplane.fill(self.bias[oc]);
            for ic in 0..self.in_channels {
                let wv = self.weight[oc * self.in_channels + ic];
                let xplane = &xb[ic * hw..(ic + 1) * hw];
                for (o, &v) in oplane.iter_mut().zip(xplane) {
                    *o += wv * v;
                }
            }
        }
    }

    fn bwd_1x1(&mut self, xb: &[f64], dyb: &[f64], dxb: &mut [f64], hw: usize) {
        for oc in 0..self.out_channels {
            let dyplane = &dyb[oc * hw..(oc + 1) * hw];
            for ic in 0..self.in_channels {
                let wv = self.weight[oc * self.in_channels + ic];
                let xplane = &xb[ic * hw..(ic + 1) * hw];
                let dxplane = &mut dxb[ic * hw..(ic + 1) * hw];
                let mut wg = 0.0;
                for i in 0..hw {
                    dxplane[i] += wv * dyplane[i];
                    wg += dyplane[i] * xplane[i];
                }
                self.wgrad[oc * self.in_channels + ic] += wg;
            }
        }
    }

    fn fwd_strided(&self, xb: &[f64], ob: &mut [f64], h: usize, w: usize) {
        let (oh, ow) = (h / 2, w / 2);
        let hw = h * w;
        let ohw = oh * ow;
        for oc in 0..self.out_channels {
            let oplane = &mut ob[oc * ohw..(oc + 1) * ohw];
            oplane.fill(self.bias[oc]);
            for ic in 0..self.in_channels {
                let k = &self.weight[(oc * self.in_channels + ic) * 4..][..4];
                let xplane = &xb[ic * hw..(ic + 1) * hw];
                for r in 0..oh {
                    let x0 = &xplane[2 * r * w..(2 * r + 1) * w];
                    let x1 = &xplane[(2 * r + 1) * w..(2 * r + 2) * w];
                    let orow = &mut oplane[r * ow..(r + 1) * ow];
                    for c in 0..ow {
                        orow[c] += k[0] * x0[2 * c]
                            + k[1] * x0[2 * c + 1]
                            + k[2] * x1[2 * c]
                            + k[3] * x1[2 * c + 1];
                    }
                }
            }
        }
    }

    fn bwd_strided(&mut self, xb: &[f64], dyb: &[f64], dxb: &mut [f64], h: usize, w: usize) {
        let (oh, ow) = (h / 2, w / 2);
        let hw = h * w;
        let ohw = oh * ow;
        for oc in 0..self.out_channels {
            let dyplane = &dyb[oc * ohw..(oc + 1) * ohw];
            for ic in 0..self.in_channels {
                let base = (oc * self.in_channels + ic) * 4;
                let k = [
                    self.weight[base],
                    self.weight[base + 1],
                    self.weight[base + 2],
                    self.weight[base + 3],
                ];
                let xplane = &xb[ic * hw..(ic + 1) * hw];
                let dxplane = &mut dxb[ic * hw..(ic + 1) * hw];
                let mut wg = [0.0; 4];
                for r in 0..oh {
                    let dyrow = &dyplane[r * ow..(r + 1) * ow];
                    let row0 = 2 * r * w;
                    let row1 = row0 + w;
                    for c in 0..ow {
                        let g = dyrow[c];
                        dxplane[row0 + 2 * c] += k[0] * g;
                        dxplane[row0 + 2 * c + 1] += k[1] * g;
                        dxplane[row1 + 2 * c] += k[2] * g;
                        dxplane[row1 + 2 * c + 1] += k[3] * g;
                        wg[0] += g * xplane[row0 + 2 * c];
                        wg[1] += g * xplane[row0 + 2 * c + 1];
                        wg[2] += g * xplane[row1 + 2 * c];
                        wg[3] += g * xplane[row1 + 2 * c + 1];
                    }
                }
                for (slot, g) in wg.iter().enumerate() {
                    self.wgrad[base + slot] += g;
                }
            }
        }
    }

    fn fwd_transposed(&self, xb: &[f64], ob: &mut [f64], h: usize, w: usize) {
        let (oh, ow) = (h * 2, w * 2);
        let hw = h * w;
        let ohw = oh * ow;
        for oc in 0..self.out_channels {
            ob[oc * ohw..(oc + 1) * ohw].fill(self.bias[oc]);
        }
        for ic in 0..self.in_channels {
            let xplane = &xb[ic * hw..(ic + 1) * hw];
            for oc in 0..self.out_channels {
                let base = (ic * self.out_channels + oc) * 4;
                let k = [
                    self.weight[base],
                    self.weight[base + 1],
                    self.weight[base + 2],
                    self.weight[base + 3],
                ];
                let oplane = &mut ob[oc * ohw..(oc + 1) * ohw];
                for r in 0..h {
                    let xrow = &xplane[r * w..(r + 1) * w];
                    let row0 = 2 * r * ow;
                    let row1 = row0 + ow;
                    for c in 0..w {
                        let v = xrow[c];
                        oplane[row0 + 2 * c] += k[0] * v;
                        oplane[row0 + 2 * c + 1] += k[1] * v;
                        oplane[row1 + 2 * c] += k[2] * v;
                        oplane[row1 + 2 * c + 1] += k[3] * v;
                    }
                }
            }
        }
    }

    fn bwd_transposed(&mut self, xb: &[f64], dyb: &[f64], dxb: &mut [f64], h: usize, w: usize) {
        let (oh, ow) = (h * 2, w * 2);
        let hw = h * w;
        let ohw = oh * ow;
        for ic in 0..self.in_channels {
            let xplane = &xb[ic * hw..(ic + 1) * hw];
            let dxplane = &mut dxb[ic * hw..(ic + 1) * hw];
            for oc in 0..self.out_channels {
                let base = (ic * self.out_channels + oc) * 4;
                let k = [
                    self.weight[base],
                    self.weight[base + 1],
                    self.weight[base + 2],
                    self.weight[base + 3],
                ];
                let dyplane = &dyb[oc * ohw..(oc + 1) * ohw];
                let mut wg = [0.0; 4];
                for r in 0..h {
                    let row0 = 2 * r * ow;
                    let row1 = row0 + ow;
                    for c in 0..w {
                        let g0 = dyplane[row0 + 2 * c];
                        let g1 = dyplane[row0 + 2 * c + 1];
                        let g2 = dyplane[row1 + 2 * c];
                        let g3 = dyplane[row1 + 2 * c + 1];
                        dxplane[r * w + c] += k[0] * g0 + k[1] * g1 + k[2] * g2 + k[3] * g3;
                        let v = xplane[r * w + c];
                        wg[0] += v * g0;
                        wg[1] += v * g1;
                        wg[2] += v * g2;
                        wg[3] += v * g3;
                    }
                }
                for (slot, g) in wg.iter().enumerate() {
                    self.wgrad[base + slot] += g;
                }
            }
        }
    }
}

pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    let mut out = x.clone();
    out.grad = None;
    out.data.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Subgradient 0 at exactly 0.
pub fn relu_backward(x: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let mut dx = dy.clone();
    dx.grad = None;
    for (g, &v) in dx.data.iter_mut().zip(&x.data) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

pub fn add_forward(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    if a.shape() != b.shape() {
        return Err(Error::invalid("add requires equal shapes"));
    }
    let mut out = a.clone();
    out.grad = None;
    for (o, &v) in out.data.iter_mut().zip(&b.data) {
        *o += v;
    }
    Ok(out)
}

/// The gradient of a sum flows unchanged to both addends.
pub fn add_backward(dy: &Tensor4) -> (Tensor4, Tensor4) {
    let mut dx = dy.clone();
    dx.grad = None;
    (dx.clone(), dx)
}
