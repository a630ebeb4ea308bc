//! Training objectives: cross-entropy on the consensual task, the confusion
//! loss against the adversary, their convex combination, and the
//! adversarial (negated adversary cross-entropy) baseline.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    CrossEntropyOnly,
    Confusion,
    Adversarial,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::CrossEntropyOnly => "ce",
            LossKind::Confusion => "confusion",
            LossKind::Adversarial => "adversarial",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" | "cross_entropy" | "cross_entropy_only" => Ok(LossKind::CrossEntropyOnly),
            "confusion" => Ok(LossKind::Confusion),
            "adversarial" => Ok(LossKind::Adversarial),
            other => Err(Error::config(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Trade-off weight λ ∈ [0, 1] between utility and privacy.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Lambda(f64);

impl Lambda {
    pub const ZERO: Lambda = Lambda(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Lambda(value))
        } else {
            Err(Error::config(format!("lambda {value} is outside [0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn on_tape<F>(input: &Tensor, f: F) -> Result<f64>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let out = f(&mut tape, x)?;
    tape.value(out).item()
}

/// Mean cross-entropy of `logits` (`batch×D`) against `labels`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    on_tape(logits, |tape, z| tape.cross_entropy(z, labels))
}

/// Mean squared distance of each probability row to the uniform vector.
pub fn confusion_loss(probs: &Tensor) -> Result<f64> {
    on_tape(probs, |tape, p| tape.confusion_to_uniform(p))
}

/// `(1 - λ)·ce + λ·con`.
pub fn combined_loss(ce: f64, con: f64, lambda: Lambda) -> f64 {
    (1.0 - lambda.0) * ce + lambda.0 * con
}

/// Negated mean cross-entropy of the adversary on the private labels.
pub fn adversarial_loss(adversary_logits: &Tensor, private_labels: &[usize]) -> Result<f64> {
    on_tape(adversary_logits, |tape, z| adversarial_on(tape, z, private_labels))
}

pub fn adversarial_on(tape: &mut Tape, adversary_logits: Var, private_labels: &[usize]) -> Result<Var> {
    let ce = tape.cross_entropy(adversary_logits, private_labels)?;
    tape.scale(ce, -1.0)
}

pub fn combined_on(tape: &mut Tape, ce: Var, privacy: Var, lambda: Lambda) -> Result<Var> {
    let a = tape.scale(ce, 1.0 - lambda.0)?;
    let b = tape.scale(privacy, lambda.0)?;
    tape.add(a, b)
}

/// Inputs to the classifier's objective, all slots on one tape.
pub struct ObjectiveInputs<'a> {
    pub logits: Var,
    pub labels: &'a [usize],
    pub adversary_logits: Var,
    pub adversary_probs: Var,
    pub private_labels: &'a [usize],
}

/// The classifier's training loss for `kind` at weight `lambda`.
pub fn classifier_objective(
    tape: &mut Tape,
    kind: LossKind,
    lambda: Lambda,
    inputs: &ObjectiveInputs<'_>,
) -> Result<Var> {
    let ce = tape.cross_entropy(inputs.logits, inputs.labels)?;
    let privacy = match kind {
        LossKind::CrossEntropyOnly => return Ok(ce),
        LossKind::Confusion => tape.confusion_to_uniform(inputs.adversary_probs)?,
        LossKind::Adversarial => adversarial_on(tape, inputs.adversary_logits, inputs.private_labels)?,
    };
    combined_on(tape, ce, privacy, lambda)
}
