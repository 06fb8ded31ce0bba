#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::type_complexity
)]

pub mod cli;
pub mod data;
pub mod degrade;
pub mod desk;
pub mod error;
pub mod network;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod transfer;
pub mod video;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
