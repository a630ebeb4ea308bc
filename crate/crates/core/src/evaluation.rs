//! Leakage, utility, privacy, and robustness metrics, plus the λ sweep.
//!
//! Accuracies are fractions internally and percentages in reports. Emitted
//! JSON rounds percentages to two decimals; in-memory values keep full
//! precision.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::data::{DataSource, DataSplits};
use crate::error::{Error, Result};
use crate::losses::{Lambda, LossKind};
use crate::protocol::{
    attack_accuracy, train_attack, train_baseline_from, train_private_from, utility, AdversarySpec, AttackConfig,
    ClassifierSpec, RunArtifacts, TrainConfig,
};

/// Fraction of positions where `predictions` matches `truth`.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::contract("accuracy of an empty prediction set"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::contract(format!("{} predictions for {} labels", predictions.len(), truth.len())));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Relative percentage difference of an adversary's accuracy on the
/// privacy-preserving network against its accuracy on the original network.
/// More negative means more robust.
pub fn robustness(acc_private_net: f64, acc_original_net: f64) -> Result<f64> {
    if !(acc_original_net > 0.0 && acc_original_net.is_finite()) {
        return Err(Error::contract("robustness needs a positive reference accuracy"));
    }
    Ok(100.0 * (acc_private_net - acc_original_net) / acc_original_net)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn pct<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round2(*v))
}

fn opt_pct<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_some(&round2(*v)),
        None => s.serialize_none(),
    }
}

/// Utility, privacy, and robustness of one trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(serialize_with = "pct")]
    pub utility: f64,
    #[serde(serialize_with = "opt_pct")]
    pub privacy_known: Option<f64>,
    #[serde(serialize_with = "pct")]
    pub privacy_unknown: f64,
    #[serde(serialize_with = "opt_pct")]
    pub robustness_known_pct: Option<f64>,
    #[serde(serialize_with = "opt_pct")]
    pub robustness_unknown_pct: Option<f64>,
    #[serde(serialize_with = "pct")]
    pub chance_level: f64,
    pub lambda: f64,
    pub tap: usize,
    pub loss_kind: String,
    pub seed: u64,
    pub attack_seed: u64,
    pub config_hash: String,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: EvalReport = serde_json::from_str(text)?;
        let in_range = |v: f64| (0.0..=100.0).contains(&v);
        if !in_range(report.utility)
            || !in_range(report.privacy_unknown)
            || report.privacy_known.is_some_and(|v| !in_range(v))
        {
            return Err(Error::format("report percentages must lie in [0, 100]"));
        }
        Ok(report)
    }
}

/// Which adversary supplies the known-adversary privacy figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnownAdversary {
    /// The adversary co-trained with the classifier.
    #[default]
    CoTrained,
    /// A copy of the training-time adversary architecture retrained from
    /// scratch on the final frozen features, seeded with the run's seed.
    Retrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub attack: AttackConfig,
    pub attack_seed: u64,
    /// Architecture of the unknown adversary.
    pub unknown_adversary: AdversarySpec,
    /// Architecture of the known adversary when it is retrained.
    pub known_adversary: AdversarySpec,
    pub known_mode: KnownAdversary,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            attack: AttackConfig::default(),
            attack_seed: 0,
            unknown_adversary: AdversarySpec::default(),
            known_adversary: AdversarySpec::default(),
            known_mode: KnownAdversary::CoTrained,
        }
    }
}

/// Measures a run on the test split.
///
/// `baseline_leakage` is the unknown-adversary accuracy (percent) on the
/// original network at the same tap; when given, both robustness fields are
/// filled against it.
pub fn evaluate(
    run: &RunArtifacts,
    splits: &DataSplits,
    baseline_leakage: Option<f64>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if splits.test.is_empty() {
        return Err(Error::contract("evaluation needs a non-empty test split"));
    }
    let tap = run.provenance.tap;
    let classifier = &run.classifier;
    let utility_pct = 100.0 * utility(classifier, &splits.test)?;

    let privacy_known = match options.known_mode {
        KnownAdversary::CoTrained => match &run.adversary {
            Some(adv) => Some(100.0 * attack_accuracy(classifier, adv, &splits.test)?),
            None => None,
        },
        KnownAdversary::Retrained => {
            let adv = train_attack(
                classifier,
                tap,
                &options.known_adversary,
                &splits.train,
                &options.attack,
                run.provenance.seed,
            )?;
            Some(100.0 * attack_accuracy(classifier, &adv, &splits.test)?)
        }
    };

    let attacker =
        train_attack(classifier, tap, &options.unknown_adversary, &splits.train, &options.attack, options.attack_seed)?;
    let privacy_unknown = 100.0 * attack_accuracy(classifier, &attacker, &splits.test)?;

    let (robustness_known_pct, robustness_unknown_pct) = match baseline_leakage {
        Some(reference) => (
            privacy_known.map(|k| robustness(k, reference)).transpose()?,
            Some(robustness(privacy_unknown, reference)?),
        ),
        None => (None, None),
    };

    Ok(EvalReport {
        utility: utility_pct,
        privacy_known,
        privacy_unknown,
        robustness_known_pct,
        robustness_unknown_pct,
        chance_level: 100.0 / splits.train.num_private() as f64,
        lambda: run.provenance.lambda,
        tap,
        loss_kind: run.provenance.loss_kind.clone(),
        seed: run.provenance.seed,
        attack_seed: options.attack_seed,
        config_hash: run.provenance.config_hash.clone(),
    })
}

/// One point of a λ sweep; accuracies in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub utility: f64,
    /// Absent at λ = 0, where no adversary is co-trained.
    pub known_adv_acc: Option<f64>,
    pub unknown_adv_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// `lambda,utility,known_adv_acc,unknown_adv_acc` with two-decimal
    /// percentages. The unknown-adversary cell is left empty at λ = 1, where
    /// the network was never trained for the task.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,utility,known_adv_acc,unknown_adv_acc\n");
        for r in &self.rows {
            let known = r.known_adv_acc.map(|v| format!("{v:.2}")).unwrap_or_default();
            let unknown = if r.lambda == 1.0 { String::new() } else { format!("{:.2}", r.unknown_adv_acc) };
            let _ = writeln!(out, "{},{:.2},{},{}", r.lambda, r.utility, known, unknown);
        }
        out
    }
}

/// Everything a sweep needs besides the λ grid.
#[derive(Debug, Clone)]
pub struct SweepSetup<'a> {
    pub classifier: &'a ClassifierSpec,
    pub adversary: &'a AdversarySpec,
    pub splits: &'a DataSplits,
    pub source: Option<&'a DataSource>,
    /// Loss kind, tap, epochs, and seed shared by every run; λ is overridden.
    pub base: TrainConfig,
    pub eval: EvalOptions,
}

fn run_sweep_point(setup: &SweepSetup<'_>, lambda: f64) -> Result<SweepRow> {
    let mut config = setup.base.clone();
    config.lambda = Lambda::new(lambda)?;
    let run = if lambda == 0.0 {
        config.loss_kind = LossKind::CrossEntropyOnly;
        train_baseline_from(setup.classifier, setup.splits, setup.source, &config)?
    } else {
        if config.loss_kind == LossKind::CrossEntropyOnly {
            config.loss_kind = LossKind::Confusion;
        }
        train_private_from(setup.classifier, setup.adversary, setup.splits, setup.source, &config)?
    };
    let report = evaluate(&run, setup.splits, None, &setup.eval)?;
    Ok(SweepRow {
        lambda,
        utility: report.utility,
        known_adv_acc: report.privacy_known,
        unknown_adv_acc: report.privacy_unknown,
    })
}

/// Trains and evaluates one network per λ, on up to `jobs` threads. Rows come
/// back sorted by λ and do not depend on `jobs`.
pub fn lambda_sweep(lambdas: &[f64], setup: &SweepSetup<'_>, jobs: usize) -> Result<SweepResult> {
    if lambdas.is_empty() {
        return Err(Error::config("the lambda list is empty"));
    }
    let mut grid = lambdas.to_vec();
    for &l in &grid {
        Lambda::new(l)?;
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("lambdas are finite"));
    if grid.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("lambda values must be distinct"));
    }

    let run = |&lambda: &f64| run_sweep_point(setup, lambda).map_err(|e| Error::Sweep { lambda, source: Box::new(e) });
    let rows: Vec<SweepRow> = if jobs <= 1 {
        grid.iter().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| grid.par_iter().map(run).collect::<Result<_>>())?
    };
    Ok(SweepResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 0], &[1, 2, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[], &[]), Err(Error::Contract(_))));
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn constant_predictor_scores_the_class_ratio() {
        let truth: Vec<usize> = (0..50).map(|i| usize::from(i % 5 < 3)).collect();
        let ratio = truth.iter().filter(|&&t| t == 1).count() as f64 / truth.len() as f64;
        assert_eq!(ratio, 0.6);
        assert_eq!(accuracy(&vec![1; 50], &truth).unwrap(), ratio);
    }

    #[test]
    fn robustness_reference_entries() {
        let cases = [(51.27, 74.97, -31.61), (72.81, 74.97, -2.88), (10.72, 57.20, -81.26)];
        for (private, original, expected) in cases {
            let r = robustness(private, original).unwrap();
            assert!((r - expected).abs() <= 0.01, "{private}/{original}: {r}");
        }
        assert_eq!(robustness(42.0, 42.0).unwrap(), 0.0);
        assert!(matches!(robustness(1.0, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn report_json_rounds_and_keeps_keys() {
        let report = EvalReport {
            utility: 89.98765,
            privacy_known: Some(51.2749),
            privacy_unknown: 72.805,
            robustness_known_pct: None,
            robustness_unknown_pct: Some(-2.8812),
            chance_level: 50.0,
            lambda: 0.625,
            tap: 2,
            loss_kind: "confusion".into(),
            seed: 42,
            attack_seed: 7,
            config_hash: "abc".into(),
        };
        let json = report.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["utility"], serde_json::json!(89.99));
        assert_eq!(v["privacy_known"], serde_json::json!(51.27));
        assert_eq!(v["robustness_known_pct"], serde_json::Value::Null);
        assert_eq!(v["robustness_unknown_pct"], serde_json::json!(-2.88));
        for key in [
            "utility",
            "privacy_known",
            "privacy_unknown",
            "robustness_known_pct",
            "robustness_unknown_pct",
            "chance_level",
            "lambda",
            "tap",
            "loss_kind",
            "seed",
            "attack_seed",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back = EvalReport::from_json(&json).unwrap();
        assert_eq!(back.privacy_known, Some(51.27));
    }

    #[test]
    fn sweep_csv_blanks_unreported_cells() {
        let result = SweepResult {
            rows: vec![
                SweepRow { lambda: 0.0, utility: 91.1, known_adv_acc: None, unknown_adv_acc: 68.224 },
                SweepRow { lambda: 0.5, utility: 89.99, known_adv_acc: Some(20.18), unknown_adv_acc: 61.29 },
                SweepRow { lambda: 1.0, utility: 10.72, known_adv_acc: Some(18.51), unknown_adv_acc: 30.0 },
            ],
        };
        assert_eq!(
            result.to_csv(),
            "lambda,utility,known_adv_acc,unknown_adv_acc\n0,91.10,,68.22\n0.5,89.99,20.18,61.29\n1,10.72,18.51,\n"
        );
    }

    proptest! {
        #[test]
        fn accuracy_is_mean_of_indicators(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let mut hits = 0.0;
            for i in 0..p.len() {
                if p[i] == t[i] {
                    hits += 1.0;
                }
            }
            prop_assert_eq!(accuracy(&p, &t).unwrap(), hits / p.len() as f64);
        }

        #[test]
        fn robustness_sign_and_scale(a in 0.01f64..100.0, b in 0.01f64..100.0, c in 0.01f64..50.0) {
            let r = robustness(a, b).unwrap();
            prop_assert_eq!(r.signum() == (a - b).signum() || a == b, true);
            prop_assert!((robustness(a * c, b * c).unwrap() - r).abs() <= 1e-9 * r.abs().max(1.0));
        }
    }
}
