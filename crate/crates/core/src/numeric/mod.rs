//! Deterministic numeric substrate: dense matrices, vector kernels, losses,
//! parameter storage, and finite-difference gradient verification.

pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod ops;
pub mod params;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use loss::{bce_with_logit, class_weights, focal_loss, FocalLoss};
pub use matrix::Matrix;
pub use ops::{layer_norm, log_sum_exp, sigmoid, softmax};
pub use params::{Adam, ParamId, ParamStore, Parameter};
