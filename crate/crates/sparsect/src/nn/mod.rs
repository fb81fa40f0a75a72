//! Minimal reverse-mode differentiable kernels: exactly the layer set the
//! reconstruction U-Net and the lesion detector need, plus losses, Adam and
//! the two learning-rate schedules.

pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use layers::{add_backward, add_forward, relu_backward, relu_forward, Conv, ConvKind};
pub use loss::{bce_loss, mse_loss};
pub use optim::{adam_step, lr_at, AdamState, LrSchedule};
pub use tensor::Tensor4;
