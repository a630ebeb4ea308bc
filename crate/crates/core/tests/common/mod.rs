#![allow(dead_code)]

use privleak::autodiff::{Tape, Var};
use privleak::losses::{classifier_objective, Lambda, LossKind, ObjectiveInputs};
use privleak::models::{Activation, LayerSpec, Mlp};
use privleak::rng::RngStream;
use privleak::{Result, Tensor};

/// A small classifier + adversary pair with a fixed batch, for gradient checks.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub input: Tensor,
    pub labels: Vec<usize>,
    pub private_labels: Vec<usize>,
    pub classifier: Vec<LayerSpec>,
    pub adversary: Vec<LayerSpec>,
    pub tap: usize,
    pub point: Vec<Tensor>,
}

pub fn random_case(seed: u64) -> GradCase {
    let mut rng = RngStream::derive(seed, "grad-case");
    let input_dim = 1 + rng.below(6);
    let batch = 1 + rng.below(8);
    let num_classes = 2 + rng.below(4);
    let num_private = 2 + rng.below(4);

    // depth counts every affine layer, output included
    let depth = 2 + rng.below(3);
    let mut classifier: Vec<LayerSpec> = (0..depth - 1)
        .map(|_| {
            let width = 1 + rng.below(16);
            if rng.below(4) == 0 {
                LayerSpec::linear(width)
            } else {
                LayerSpec::relu(width)
            }
        })
        .collect();
    classifier.push(LayerSpec::linear(num_classes));
    let tap = 1 + rng.below(depth - 1);

    let adv_depth = 1 + rng.below(4);
    let mut adversary: Vec<LayerSpec> = (0..adv_depth - 1).map(|_| LayerSpec::relu(1 + rng.below(16))).collect();
    adversary.push(LayerSpec::linear(num_private));

    let input = Tensor::new(vec![batch, input_dim], (0..batch * input_dim).map(|_| rng.normal()).collect()).unwrap();
    let labels = (0..batch).map(|_| rng.below(num_classes)).collect();
    let private_labels = (0..batch).map(|_| rng.below(num_private)).collect();

    let cls = Mlp::init(input_dim, &classifier, &mut rng).unwrap();
    let adv = Mlp::init(classifier[tap - 1].width, &adversary, &mut rng).unwrap();
    let mut point: Vec<Tensor> = cls.params().into_iter().cloned().collect();
    point.extend(adv.params().into_iter().cloned());
    // Nonzero biases so every parameter is exercised away from its init.
    for t in point.iter_mut() {
        for v in t.data_mut() {
            *v += 0.1 * rng.normal();
        }
    }
    GradCase { input, labels, private_labels, classifier, adversary, tap, point }
}

fn stack(tape: &mut Tape, mut h: Var, layers: &[LayerSpec], params: &[Var]) -> Result<Vec<Var>> {
    let mut outs = Vec::with_capacity(layers.len());
    for (l, spec) in layers.iter().enumerate() {
        h = tape.affine(h, params[2 * l], params[2 * l + 1])?;
        if spec.activation == Activation::Relu {
            h = tape.relu(h)?;
        }
        outs.push(h);
    }
    Ok(outs)
}

/// Which objective of the case to differentiate.
#[derive(Debug, Clone, Copy)]
pub enum Objective {
    CrossEntropy,
    Confusion,
    Combined(f64),
    Adversarial,
}

impl GradCase {
    pub fn loss(&self, tape: &mut Tape, vars: &[Var], objective: Objective) -> Result<Var> {
        let split = 2 * self.classifier.len();
        let x = tape.constant(self.input.clone());
        let outs = stack(tape, x, &self.classifier, &vars[..split])?;
        let feature = outs[self.tap - 1];
        let logits = *outs.last().unwrap();
        let adv_logits = *stack(tape, feature, &self.adversary, &vars[split..])?.last().unwrap();
        let adv_probs = tape.softmax(adv_logits)?;
        let inputs = ObjectiveInputs {
            logits,
            labels: &self.labels,
            adversary_logits: adv_logits,
            adversary_probs: adv_probs,
            private_labels: &self.private_labels,
        };
        match objective {
            Objective::CrossEntropy => classifier_objective(tape, LossKind::CrossEntropyOnly, Lambda::ZERO, &inputs),
            Objective::Confusion => tape.confusion_to_uniform(adv_probs),
            Objective::Combined(l) => classifier_objective(tape, LossKind::Confusion, Lambda::new(l)?, &inputs),
            Objective::Adversarial => classifier_objective(tape, LossKind::Adversarial, Lambda::new(1.0)?, &inputs),
        }
    }
}

pub const OBJECTIVES: [Objective; 6] = [
    Objective::CrossEntropy,
    Objective::Confusion,
    Objective::Combined(0.25),
    Objective::Combined(0.5),
    Objective::Combined(0.75),
    Objective::Adversarial,
];
