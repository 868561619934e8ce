//! Minimal differentiable numeric core.

pub mod gradcheck;
pub mod layers;
pub mod loss;
mod param;
mod tensor;

pub use gradcheck::{grad_check, GradCheckCase, GradCheckOptions, GradCheckReport, Objective};
pub use layers::{conv_out_extent, Conv2d, Dense, Flatten, Layer, MaxPool2x2, Relu, Sequential};
pub use loss::{softmax, softmax_cross_entropy, CrossEntropy};
pub use param::{sgd_step, Param};
pub use tensor::Tensor;
