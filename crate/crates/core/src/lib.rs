//! Joint frequency-space / image-space convolutional networks for Fourier
//! imaging.

pub mod autodiff;
pub mod corruption;
pub mod error;
pub mod fourier;
pub mod gradcheck;
pub mod harness;
pub mod losses;
pub mod models;
pub mod rng;
pub mod tensor;

pub use autodiff::{finite_diff_grad, BatchNormMode, BatchStats, Gradients, Padding, Tape, Var};
pub use error::{Error, Result};
pub use fourier::{dft2_naive, fft2c_tensor, ifft2c_tensor, ComplexField, Domain};
pub use tensor::{Real, Shape, Tensor};
pub use models::{Architecture, Mode, Model, ModelConfig};
pub use losses::{LossKind, LossSpec};
pub use harness::{PhantomSpec, Sample, TrainConfig};
