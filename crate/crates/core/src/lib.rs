//! Deterministic federated fine-tuning simulator for dual-encoder
//! classifiers, built to measure and compare calibration.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the simulator runs in.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod federation;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod partition;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = numerics::DenseMatrix<f64>;
pub type Model = model::DualEncoder<f64>;
pub type Params = model::ParamSet<f64>;
pub type Probs = calibration::ProbBatch<f64>;
pub type Logits = calibration::LogitBatch<f64>;

pub type Dataset = partition::LabeledDataset<f64>;
pub type Client = federation::ClientState<f64>;
pub type Server = federation::ServerState<f64>;
