//! Reverse-mode differentiation, the Adam optimizer, and a finite-difference checker.

mod adam;
mod gradcheck;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckConfig, GradCheckReport};
pub use tape::{Gradients, OpRecord, Tape, Var};
