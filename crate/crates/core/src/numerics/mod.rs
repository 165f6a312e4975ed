//! Deterministic sampling and the vector/matrix primitives shared by every
//! other module.

pub mod dense;
pub mod ops;
pub mod rng;
pub mod sampling;

pub use dense::{dot, DenseMatrix};
pub use ops::{argmax, l2_norm, l2_normalize, softmax_rows, stable_softmax};
pub use rng::RngStream;
pub use sampling::{dirichlet_sample, gamma_sample, multinomial_split, standard_normal};
