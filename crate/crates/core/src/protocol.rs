//! Training procedures: the utility-only baseline, privacy-preserving training
//! against a co-trained known adversary, and post-hoc attacks by a fresh
//! (unknown) adversary on a frozen classifier.
//!
//! Randomness is drawn from named substreams of the master seed: the
//! classifier's initialization and batch order from `classifier`, the known
//! adversary's initialization from `adversary`, and attackers from `attack`
//! under their own seed. Because the adversary never touches the classifier
//! stream, a private run at λ = 0 retraces the baseline bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{AdamConfig, AdamState, Tape};
use crate::data::{batches, DataSource, DataSplits, LabeledDataset};
use crate::error::{Error, Result};
use crate::evaluation::accuracy;
use crate::losses::{classifier_objective, Lambda, LossKind, ObjectiveInputs};
use crate::models::{format_layer_specs, AdversaryModel, ClassifierModel, LayerSpec, ParamMode};
use crate::rng::{streams, RngStream};
use crate::tensor::Tensor;

/// Layer layout of the consensual classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub layers: Vec<LayerSpec>,
    pub taps: Vec<usize>,
}

impl ClassifierSpec {
    /// Four layers; tap 2 sits mid-network and tap 3 just before the output.
    pub fn default_for(num_classes: usize) -> Self {
        ClassifierSpec {
            layers: vec![LayerSpec::relu(32), LayerSpec::relu(32), LayerSpec::relu(16), LayerSpec::linear(num_classes)],
            taps: vec![2, 3],
        }
    }

    pub fn build(&self, input_dim: usize, num_classes: usize, rng: &mut RngStream) -> Result<ClassifierModel> {
        ClassifierModel::build(input_dim, &self.layers, num_classes, &self.taps, rng)
    }
}

/// Hidden layers of an adversary head; the `K`-wide output layer is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySpec {
    pub hidden: Vec<LayerSpec>,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec { hidden: vec![LayerSpec::relu(16)] }
    }
}

impl AdversarySpec {
    pub fn build(
        &self,
        feature_width: usize,
        num_private: usize,
        tap: usize,
        rng: &mut RngStream,
    ) -> Result<AdversaryModel> {
        AdversaryModel::build(feature_width, &self.hidden, num_private, tap, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub lambda: Lambda,
    pub tap: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adversary_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::CrossEntropyOnly,
            lambda: Lambda::ZERO,
            tap: 2,
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            adversary_steps: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.adversary_steps == 0 {
            return Err(Error::config("adversary steps per classifier step must be at least 1"));
        }
        Ok(())
    }
}

/// Settings for training an unknown adversary on a frozen classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig { epochs: 50, batch_size: 64, lr: 1e-3 }
    }
}

/// One row of the per-epoch training curve. Accuracies are on the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub utility: f64,
    pub known_adv_acc: Option<f64>,
}

/// Identifies a run: every setting that influences its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub loss_kind: String,
    pub lambda: f64,
    pub tap: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adversary_steps: usize,
    pub classifier_layers: String,
    pub taps: Vec<usize>,
    pub adversary_hidden: Option<String>,
    pub input_dim: usize,
    pub num_classes: usize,
    pub num_private: usize,
    pub data: Option<DataSource>,
    pub data_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub classifier: ClassifierModel,
    pub adversary: Option<AdversaryModel>,
    pub curves: Vec<EpochRecord>,
    pub provenance: Provenance,
}

pub const CLASSIFIER_FILE: &str = "classifier.model";
pub const ADVERSARY_FILE: &str = "adversary.model";
pub const CURVES_FILE: &str = "curves.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";

impl RunArtifacts {
    /// Data splits recorded in the provenance.
    pub fn data(&self) -> Result<DataSplits> {
        self.provenance.data.as_ref().ok_or_else(|| Error::contract("run provenance records no data source"))?.load()
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,utility,known_adv_acc\n");
        for r in &self.curves {
            let known = r.known_adv_acc.map(|a| (100.0 * a).to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, 100.0 * r.utility, known);
        }
        out
    }

    /// Writes model files, curves, and provenance into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.classifier.save(dir.join(CLASSIFIER_FILE))?;
        match &self.adversary {
            Some(adv) => adv.save(dir.join(ADVERSARY_FILE))?,
            None => {
                if dir.join(ADVERSARY_FILE).exists() {
                    std::fs::remove_file(dir.join(ADVERSARY_FILE))?;
                }
            }
        }
        std::fs::write(dir.join(CURVES_FILE), self.curves_csv())?;
        let mut json = serde_json::to_string_pretty(&self.provenance)?;
        json.push('\n');
        std::fs::write(dir.join(PROVENANCE_FILE), json)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("run directory {} does not exist", dir.display()),
            )));
        }
        let classifier = ClassifierModel::load(dir.join(CLASSIFIER_FILE))?;
        let adv_path = dir.join(ADVERSARY_FILE);
        let adversary = if adv_path.exists() { Some(AdversaryModel::load(adv_path)?) } else { None };
        let provenance: Provenance = serde_json::from_str(&std::fs::read_to_string(dir.join(PROVENANCE_FILE))?)?;
        let curves = parse_curves(&std::fs::read_to_string(dir.join(CURVES_FILE))?)?;
        Ok(RunArtifacts { classifier, adversary, curves, provenance })
    }
}

fn parse_curves(text: &str) -> Result<Vec<EpochRecord>> {
    let bad = |line: usize| Error::Parse { line, message: "malformed curve row".into() };
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let cells: Vec<&str> = l.split(',').collect();
            if cells.len() != 4 {
                return Err(bad(i + 1));
            }
            let num = |c: &str| c.parse::<f64>().map_err(|_| bad(i + 1));
            Ok(EpochRecord {
                epoch: cells[0].parse().map_err(|_| bad(i + 1))?,
                train_loss: num(cells[1])?,
                utility: num(cells[2])? / 100.0,
                known_adv_acc: if cells[3].is_empty() { None } else { Some(num(cells[3])? / 100.0) },
            })
        })
        .collect()
}

/// Digest of a dataset's exact contents.
pub fn dataset_digest(splits: &DataSplits) -> String {
    let mut hasher = Sha256::new();
    for ds in [&splits.train, &splits.test] {
        hasher.update((ds.len() as u64).to_le_bytes());
        hasher.update((ds.dim() as u64).to_le_bytes());
        for i in 0..ds.len() {
            for v in ds.x(i) {
                hasher.update(v.to_le_bytes());
            }
        }
        for (&y, &s) in ds.consensual_labels().iter().zip(ds.private_labels()) {
            hasher.update((y as u64).to_le_bytes());
            hasher.update((s as u64).to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

fn provenance(
    cls: &ClassifierSpec,
    adv: Option<&AdversarySpec>,
    splits: &DataSplits,
    source: Option<&DataSource>,
    config: &TrainConfig,
) -> Result<Provenance> {
    let mut p = Provenance {
        config_hash: String::new(),
        seed: config.seed,
        loss_kind: config.loss_kind.to_string(),
        lambda: config.lambda.get(),
        tap: config.tap,
        epochs: config.epochs,
        batch_size: config.batch_size,
        lr: config.lr,
        adversary_steps: config.adversary_steps,
        classifier_layers: format_layer_specs(&cls.layers),
        taps: cls.taps.clone(),
        adversary_hidden: adv.map(|a| format_layer_specs(&a.hidden)),
        input_dim: splits.train.dim(),
        num_classes: splits.train.num_classes(),
        num_private: splits.train.num_private(),
        data: source.cloned(),
        data_digest: dataset_digest(splits),
    };
    p.config_hash = hex::encode(Sha256::digest(serde_json::to_vec(&p)?));
    Ok(p)
}

fn check_splits(splits: &DataSplits) -> Result<()> {
    if splits.train.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    if splits.test.is_empty() {
        return Err(Error::contract("test split is empty"));
    }
    if splits.train.dim() != splits.test.dim() {
        return Err(Error::config("train and test splits differ in feature count"));
    }
    Ok(())
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(message) => Error::Divergence { epoch, message },
        other => other,
    }
}

/// Trains the classifier on cross-entropy only.
pub fn train_baseline(cls: &ClassifierSpec, splits: &DataSplits, config: &TrainConfig) -> Result<RunArtifacts> {
    train_baseline_from(cls, splits, None, config)
}

pub fn train_baseline_from(
    cls: &ClassifierSpec,
    splits: &DataSplits,
    source: Option<&DataSource>,
    config: &TrainConfig,
) -> Result<RunArtifacts> {
    if config.loss_kind != LossKind::CrossEntropyOnly {
        return Err(Error::config(format!("baseline training needs loss kind ce, got {}", config.loss_kind)));
    }
    train(cls, None, splits, source, config)
}

/// Trains the classifier on the combined objective while alternately
/// training a known adversary on the tapped features.
pub fn train_private(
    cls: &ClassifierSpec,
    adv: &AdversarySpec,
    splits: &DataSplits,
    config: &TrainConfig,
) -> Result<RunArtifacts> {
    train_private_from(cls, adv, splits, None, config)
}

pub fn train_private_from(
    cls: &ClassifierSpec,
    adv: &AdversarySpec,
    splits: &DataSplits,
    source: Option<&DataSource>,
    config: &TrainConfig,
) -> Result<RunArtifacts> {
    if config.loss_kind == LossKind::CrossEntropyOnly {
        return Err(Error::config("private training needs loss kind confusion or adversarial"));
    }
    train(cls, Some(adv), splits, source, config)
}

fn train(
    cls_spec: &ClassifierSpec,
    adv_spec: Option<&AdversarySpec>,
    splits: &DataSplits,
    source: Option<&DataSource>,
    config: &TrainConfig,
) -> Result<RunArtifacts> {
    config.validate()?;
    check_splits(splits)?;
    let train_set = &splits.train;
    let provenance = provenance(cls_spec, adv_spec, splits, source, config)?;

    let mut cls_rng = RngStream::derive(config.seed, streams::CLASSIFIER);
    let mut classifier = cls_spec.build(train_set.dim(), train_set.num_classes(), &mut cls_rng)?;
    let feature_width = classifier.tap_width(config.tap).map_err(|e| Error::config(e.to_string()))?;

    let mut adversary = match adv_spec {
        Some(spec) => {
            let mut adv_rng = RngStream::derive(config.seed, streams::ADVERSARY);
            Some(spec.build(feature_width, train_set.num_private(), config.tap, &mut adv_rng)?)
        }
        None => None,
    };

    let adam = AdamConfig::with_lr(config.lr);
    let mut cls_opt = AdamState::new(adam, classifier.net().params());
    let mut adv_opt = adversary.as_ref().map(|a| AdamState::new(adam, a.net().params()));

    let mut curves = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let on_numeric = diverged(epoch);
        let mut loss_sum = 0.0;
        for idx in batches(train_set, config.batch_size, &mut cls_rng)? {
            let (x, y, s) = train_set.batch(&idx)?;

            if let (Some(adv), Some(opt)) = (adversary.as_mut(), adv_opt.as_mut()) {
                let feature = classifier.features(&x, config.tap).map_err(&on_numeric)?;
                for _ in 0..config.adversary_steps {
                    adversary_step(adv, opt, &feature, &s).map_err(&on_numeric)?;
                }
            }

            let batch_loss = classifier_step(&mut classifier, &mut cls_opt, adversary.as_ref(), config, &x, &y, &s)
                .map_err(&on_numeric)?;
            loss_sum += batch_loss * idx.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Divergence { epoch, message: "non-finite training loss".into() });
        }
        let utility = utility(&classifier, &splits.test).map_err(&on_numeric)?;
        let known_adv_acc = match &adversary {
            Some(adv) => Some(attack_accuracy(&classifier, adv, &splits.test).map_err(&on_numeric)?),
            None => None,
        };
        curves.push(EpochRecord { epoch, train_loss, utility, known_adv_acc });
    }

    Ok(RunArtifacts { classifier, adversary, curves, provenance })
}

/// Minimizes the adversary's cross-entropy on private labels, treating the
/// features as constants.
fn adversary_step(adv: &mut AdversaryModel, opt: &mut AdamState, feature: &Tensor, s: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let input = tape.constant(feature.clone());
    let pass = adv.forward(&mut tape, input, ParamMode::Trainable)?;
    let loss = tape.cross_entropy(pass.logits, s)?;
    let grads = tape.backward(loss)?;
    let g: Vec<&Tensor> = pass.params.iter().map(|&v| grads.wrt(v)).collect();
    opt.step(&mut adv.net_mut().params_mut(), &g)?;
    tape.value(loss).item()
}

/// Descends the classifier objective with the adversary frozen; gradients
/// flow through the adversary into every layer up to the tap.
fn classifier_step(
    classifier: &mut ClassifierModel,
    opt: &mut AdamState,
    adversary: Option<&AdversaryModel>,
    config: &TrainConfig,
    x: &Tensor,
    y: &[usize],
    s: &[usize],
) -> Result<f64> {
    let mut tape = Tape::new();
    let input = tape.constant(x.clone());
    let loss = match adversary {
        None => {
            let (params, logits) = classifier.forward(&mut tape, input, ParamMode::Trainable)?;
            let loss = tape.cross_entropy(logits, y)?;
            (params, loss)
        }
        Some(adv) => {
            let pass = classifier.forward_with_tap(&mut tape, input, config.tap, ParamMode::Trainable)?;
            let adv_pass = adv.forward(&mut tape, pass.feature, ParamMode::Frozen)?;
            let inputs = ObjectiveInputs {
                logits: pass.logits,
                labels: y,
                adversary_logits: adv_pass.logits,
                adversary_probs: adv_pass.probs,
                private_labels: s,
            };
            let loss = classifier_objective(&mut tape, config.loss_kind, config.lambda, &inputs)?;
            (pass.params, loss)
        }
    };
    let (params, loss) = loss;
    let grads = tape.backward(loss)?;
    let g: Vec<&Tensor> = params.iter().map(|&v| grads.wrt(v)).collect();
    opt.step(&mut classifier.net_mut().params_mut(), &g)?;
    tape.value(loss).item()
}

/// Consensual-task accuracy on `data`.
pub fn utility(classifier: &ClassifierModel, data: &LabeledDataset) -> Result<f64> {
    let predictions = classifier.predict(&data.features()?)?;
    accuracy(&predictions, data.consensual_labels())
}

/// Private-attribute accuracy of `adversary` reading its tap of `classifier`.
pub fn attack_accuracy(classifier: &ClassifierModel, adversary: &AdversaryModel, data: &LabeledDataset) -> Result<f64> {
    let features = classifier.features(&data.features()?, adversary.tap())?;
    accuracy(&adversary.predict(&features)?, data.private_labels())
}

/// Trains a fresh adversary on the features of a frozen classifier.
pub fn train_attack(
    frozen: &ClassifierModel,
    tap: usize,
    adv_spec: &AdversarySpec,
    train_set: &LabeledDataset,
    config: &AttackConfig,
    attack_seed: u64,
) -> Result<AdversaryModel> {
    if config.epochs == 0 || config.batch_size == 0 || !(config.lr.is_finite() && config.lr > 0.0) {
        return Err(Error::config("attack needs positive epochs, batch size, and learning rate"));
    }
    if train_set.is_empty() {
        return Err(Error::config("attack training split is empty"));
    }
    let width = frozen.tap_width(tap).map_err(|e| Error::config(e.to_string()))?;
    let features = frozen.features(&train_set.features()?, tap)?;
    let labels = train_set.private_labels();

    let mut rng = RngStream::derive(attack_seed, streams::ATTACK);
    let mut adversary = adv_spec.build(width, train_set.num_private(), tap, &mut rng)?;
    let mut opt = AdamState::new(AdamConfig::with_lr(config.lr), adversary.net().params());
    for epoch in 1..=config.epochs {
        for idx in batches(train_set, config.batch_size, &mut rng)? {
            let f = features.select_rows(&idx)?;
            let s: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            adversary_step(&mut adversary, &mut opt, &f, &s).map_err(diverged(epoch))?;
        }
    }
    Ok(adversary)
}
