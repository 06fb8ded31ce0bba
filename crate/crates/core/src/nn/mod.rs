//! Layer kernels, losses and the finite-difference gradient checker.

pub mod activation;
pub mod conv;
pub mod dropout;
pub mod gradcheck;
pub(crate) mod kernels;
pub mod linear;
pub mod loss;
pub mod pool;

pub use activation::{relu_backward, relu_forward};
pub use conv::{conv2d_backward, conv2d_backward_grouped, conv2d_forward, conv2d_forward_grouped, ConvGrads};
pub use dropout::{dropout_backward, dropout_forward, Mode};
pub use gradcheck::{check_gradient, check_gradient_with, GradCheck, GradReport};
pub use linear::{fc_backward, fc_forward, FcGrads};
pub use loss::{mse_loss, softmax, softmax_cross_entropy};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, Pooled};
