//! Labeled datasets carrying a consensual label `y` and a private label `s`:
//! a deterministic synthetic generator, CSV ingestion, and batching.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{streams, RngStream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: usize,
    pub s: usize,
}

/// Immutable set of examples with `D` consensual and `K` private classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    num_classes: usize,
    num_private: usize,
    features: Vec<f64>,
    y: Vec<usize>,
    s: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(dim: usize, num_classes: usize, num_private: usize, examples: Vec<LabeledExample>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("examples need at least one feature"));
        }
        let mut ds = LabeledDataset {
            dim,
            num_classes,
            num_private,
            features: Vec::with_capacity(dim * examples.len()),
            y: Vec::with_capacity(examples.len()),
            s: Vec::with_capacity(examples.len()),
        };
        for (i, ex) in examples.into_iter().enumerate() {
            if ex.x.len() != dim {
                return Err(Error::dim(format!("example {i} has {} features, expected {dim}", ex.x.len())));
            }
            if ex.y >= num_classes || ex.s >= num_private {
                return Err(Error::contract(format!(
                    "example {i} labels ({}, {}) out of range for D={num_classes}, K={num_private}",
                    ex.y, ex.s
                )));
            }
            if ex.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("example {i} has a non-finite feature")));
            }
            ds.features.extend_from_slice(&ex.x);
            ds.y.push(ex.y);
            ds.s.push(ex.s);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_private(&self) -> usize {
        self.num_private
    }

    pub fn consensual_labels(&self) -> &[usize] {
        &self.y
    }

    pub fn private_labels(&self) -> &[usize] {
        &self.s
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn example(&self, i: usize) -> LabeledExample {
        LabeledExample { x: self.x(i).to_vec(), y: self.y[i], s: self.s[i] }
    }

    /// Widens the label spaces; both must cover the labels already present.
    fn with_label_spaces(mut self, num_classes: usize, num_private: usize) -> Self {
        debug_assert!(num_classes >= self.num_classes && num_private >= self.num_private);
        self.num_classes = num_classes;
        self.num_private = num_private;
        self
    }

    /// Fraction of examples carrying the most common private label.
    pub fn private_majority_rate(&self) -> f64 {
        let mut counts = vec![0usize; self.num_private];
        for &s in &self.s {
            counts[s] += 1;
        }
        counts.into_iter().max().unwrap_or(0) as f64 / self.len().max(1) as f64
    }

    /// All features as an `n×d` matrix.
    pub fn features(&self) -> Result<Tensor> {
        Tensor::new(vec![self.len(), self.dim], self.features.clone())
    }

    /// Features and both label vectors for the given example indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>, Vec<usize>)> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.x(i));
        }
        let x = Tensor::new(vec![indices.len(), self.dim], data)?;
        let y = indices.iter().map(|&i| self.y[i]).collect();
        let s = indices.iter().map(|&i| self.s[i]).collect();
        Ok((x, y, s))
    }

    /// The CSV text: header `x0,…,x{d-1},y,s`, one example per row.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim {
            let _ = write!(out, "x{j},");
        }
        out.push_str("y,s\n");
        for i in 0..self.len() {
            for v in self.x(i) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{},{}", self.y[i], self.s[i]);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Train and test splits of one data source.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Where a run's data comes from; recorded in run provenance so that later
/// commands can rebuild the same splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv { train: PathBuf, test: PathBuf },
}

impl DataSource {
    pub fn load(&self) -> Result<DataSplits> {
        match self {
            DataSource::Synthetic(spec) => generate_synthetic(spec),
            DataSource::Csv { train, test } => {
                let train = load_csv(train)?;
                let test = load_csv(test)?;
                if train.dim() != test.dim() {
                    return Err(Error::config(format!(
                        "train has {} features but test has {}",
                        train.dim(),
                        test.dim()
                    )));
                }
                // label spaces are the union of both splits
                let d = train.num_classes().max(test.num_classes());
                let k = train.num_private().max(test.num_private());
                Ok(DataSplits { train: train.with_label_spaces(d, k), test: test.with_label_spaces(d, k) })
            }
        }
    }
}

/// Parameters of the synthetic two-label generator.
///
/// Each example is `α_y·μ_y + α_s·ν_s + ρ·α_s·m_s + σ·z`: `μ_y` is the unit
/// vector on coordinate `y`, `ν_s` the unit vector on coordinate `D + s`,
/// `z` standard normal noise, and `m_s = c_s·(1,…,1)/√D` copies a centred code
/// `c_s ∈ [-1, 1]` of the private label into the consensual coordinates
/// `[0, D)`. The entangled direction is orthogonal to every difference between
/// consensual class means, so it leaks `s` into task features without helping
/// or hurting the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub num_private: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub alpha_y: f64,
    pub alpha_s: f64,
    pub sigma: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dim: 32,
            num_classes: 3,
            num_private: 2,
            n_train: 6000,
            n_test: 2000,
            alpha_y: 2.0,
            alpha_s: 1.0,
            sigma: 0.5,
            rho: 0.8,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_private < 2 {
            return Err(Error::config("D and K must both be at least 2"));
        }
        if self.dim < self.num_classes + self.num_private {
            return Err(Error::config(format!(
                "d = {} leaves no room for both signal subspaces (needs d >= D + K = {})",
                self.dim,
                self.num_classes + self.num_private
            )));
        }
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.alpha_y) || !nonneg(self.alpha_s) || !nonneg(self.sigma) {
            return Err(Error::config("separations and noise must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config(format!("entanglement rho = {} is outside [0, 1]", self.rho)));
        }
        Ok(())
    }

    /// Noise-free mean of examples labeled `(y, s)`.
    pub fn class_mean(&self, y: usize, s: usize) -> Vec<f64> {
        let d = self.num_classes;
        let mut mean = vec![0.0; self.dim];
        mean[y] += self.alpha_y;
        mean[d + s] += self.alpha_s;
        let code = 2.0 * s as f64 / (self.num_private - 1) as f64 - 1.0;
        let spread = self.rho * self.alpha_s * code / (d as f64).sqrt();
        for v in &mut mean[..d] {
            *v += spread;
        }
        mean
    }

    fn split(&self, n: usize, stream: &str) -> Result<LabeledDataset> {
        let mut rng = RngStream::derive(self.seed, stream);
        let mut examples = Vec::with_capacity(n);
        for _ in 0..n {
            let y = rng.below(self.num_classes);
            let s = rng.below(self.num_private);
            let mut x = self.class_mean(y, s);
            for v in &mut x {
                *v += self.sigma * rng.normal();
            }
            examples.push(LabeledExample { x, y, s });
        }
        LabeledDataset::new(self.dim, self.num_classes, self.num_private, examples)
    }
}

/// Draws the train and test splits from independent seed-derived streams.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DataSplits> {
    spec.validate()?;
    Ok(DataSplits {
        train: spec.split(spec.n_train, streams::TRAIN_SPLIT)?,
        test: spec.split(spec.n_test, streams::TEST_SPLIT)?,
    })
}

/// Reads a CSV dataset, inferring `D` and `K` as one past the largest label.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    load_csv_with(path, None, None)
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    num_classes: Option<usize>,
    num_private: Option<usize>,
) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, num_classes, num_private)
}

pub fn parse_csv(text: &str, num_classes: Option<usize>, num_private: Option<usize>) -> Result<LabeledDataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let n = cols.len();
    if n < 3 || cols[n - 2] != "y" || cols[n - 1] != "s" {
        return Err(Error::Parse { line: 1, message: "header must end with columns y,s".into() });
    }
    let dim = n - 2;
    for (j, c) in cols[..dim].iter().enumerate() {
        if *c != format!("x{j}") {
            return Err(Error::Parse { line: 1, message: format!("expected column x{j}, found {c:?}") });
        }
    }

    let mut examples = Vec::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != n {
            return Err(Error::Parse { line, message: format!("expected {n} columns, found {}", cells.len()) });
        }
        let x = cells[..dim]
            .iter()
            .map(|c| match c.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse { line, message: format!("non-numeric cell {c:?}") }),
            })
            .collect::<Result<Vec<_>>>()?;
        let label = |c: &str, name: &str, limit: Option<usize>| -> Result<usize> {
            let v: usize = c.parse().map_err(|_| Error::Parse {
                line,
                message: format!("{name} label {c:?} is not a non-negative integer"),
            })?;
            match limit {
                Some(k) if v >= k => {
                    Err(Error::Parse { line, message: format!("{name} label {v} out of range (< {k})") })
                }
                _ => Ok(v),
            }
        };
        let y = label(cells[dim], "y", num_classes)?;
        let s = label(cells[dim + 1], "s", num_private)?;
        examples.push(LabeledExample { x, y, s });
    }
    let d_classes = num_classes.unwrap_or_else(|| examples.iter().map(|e| e.y + 1).max().unwrap_or(0));
    let k_classes = num_private.unwrap_or_else(|| examples.iter().map(|e| e.s + 1).max().unwrap_or(0));
    LabeledDataset::new(dim, d_classes, k_classes, examples)
}

/// Index batches covering one epoch: a permutation drawn from `rng`, cut into
/// chunks of `batch_size` with the final short chunk kept.
pub fn batches(dataset: &LabeledDataset, batch_size: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    rng.shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
