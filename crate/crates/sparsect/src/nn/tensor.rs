//! Batched NCHW tensor with an optional gradient buffer.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    /// Same length as data; allocated while the tensor participates in a
    /// backward pass.
    pub grad: Option<Vec<f64>>,
}

impl Tensor4 {
    pub fn zeros(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Tensor4 {
            batch,
            channels,
            height,
            width,
            data: vec![0.0; batch * channels * height * width],
            grad: None,
        }
    }

    pub fn from_data(
        batch: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != batch * channels * height * width {
            return Err(Error::invalid("tensor data length does not match shape"));
        }
        Ok(Tensor4 { batch, channels, height, width, data, grad: None })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.batch, self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat offset of one (batch, channel) plane.
    pub fn plane(&self, b: usize, c: usize) -> usize {
        (b * self.channels + c) * self.height * self.width
    }

    pub fn ensure_grad(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }
}
