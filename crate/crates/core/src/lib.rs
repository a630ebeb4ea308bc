//! Training and auditing of privacy-preserving feature extractors.
//!
//! A classifier is trained for a consensual task while a co-trained adversary
//! reads one of its intermediate layers and tries to recover a private
//! attribute. A confusion loss pushes that adversary's output toward the
//! uniform distribution. Leakage is then audited by attack classifiers trained
//! from scratch on the frozen network.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod models;
pub mod protocol;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
