//! Layer-wise reverse-mode differentiation for a fixed family of networks.
//!
//! There is no general graph: each layer retains what its backward pass needs
//! from the most recent forward, and callers chain backward calls in reverse.

mod adam;
mod dist;
pub mod gradcheck;
pub mod init;
mod layers;
mod real;
mod tensor;

pub use adam::{clip_grad_norm, AdamState};
pub use dist::{
    categorical_entropy, categorical_sample, entropy_from_logs, log_softmax, softmax, validate_probs, NORMALIZATION_TOLERANCE,
};

pub use gradcheck::{finite_difference_check, GradCheckReport, GradProbe, SequentialProbe};
pub use layers::{concat, conv_output_extent, split_columns, Conv2d, Dense, Flatten, Layer, LayerSpec, Relu, Sequential};
pub use real::Real;
pub use tensor::Tensor;
