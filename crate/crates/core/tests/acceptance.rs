//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p privleak --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use privleak::autodiff::grad_check;
use privleak::data::{generate_synthetic, DataSplits, SyntheticSpec};
use privleak::evaluation::{evaluate, lambda_sweep, robustness, EvalOptions, EvalReport, SweepSetup};
use privleak::losses::{combined_loss, confusion_loss, cross_entropy, Lambda, LossKind};
use privleak::protocol::{train_baseline, train_private, AdversarySpec, ClassifierSpec, TrainConfig};
use privleak::Tensor;

/// Unknown-adversary accuracy on the baseline at seed 42, pinned from the
/// first audited run.
const PINNED_BASELINE_LEAKAGE: f64 = 87.75;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn desk_spec() -> SyntheticSpec {
    SyntheticSpec {
        dim: 32,
        num_classes: 3,
        num_private: 2,
        n_train: 6000,
        n_test: 2000,
        rho: 0.8,
        sigma: 0.5,
        seed: 42,
        ..SyntheticSpec::default()
    }
}

fn desk_config(kind: LossKind, lambda: f64) -> TrainConfig {
    TrainConfig { loss_kind: kind, lambda: Lambda::new(lambda).unwrap(), seed: 42, ..TrainConfig::default() }
}

/// Runs shared by the desk-scale criteria.
struct Desk {
    splits: DataSplits,
    classifier: ClassifierSpec,
    adversary: AdversarySpec,
    options: EvalOptions,
    baseline: Option<EvalReport>,
    confusion: Option<EvalReport>,
}

impl Desk {
    fn new() -> Self {
        Desk {
            splits: generate_synthetic(&desk_spec()).unwrap(),
            classifier: ClassifierSpec::default_for(3),
            adversary: AdversarySpec::default(),
            options: EvalOptions::default(),
            baseline: None,
            confusion: None,
        }
    }

    fn baseline(&mut self) -> EvalReport {
        if self.baseline.is_none() {
            let run =
                train_baseline(&self.classifier, &self.splits, &desk_config(LossKind::CrossEntropyOnly, 0.0)).unwrap();
            self.baseline = Some(evaluate(&run, &self.splits, None, &self.options).unwrap());
        }
        self.baseline.clone().unwrap()
    }

    fn private(&mut self, kind: LossKind, lambda: f64) -> EvalReport {
        let reference = self.baseline().privacy_unknown;
        let run = train_private(&self.classifier, &self.adversary, &self.splits, &desk_config(kind, lambda)).unwrap();
        evaluate(&run, &self.splits, Some(reference), &self.options).unwrap()
    }

    fn confusion(&mut self) -> EvalReport {
        if self.confusion.is_none() {
            self.confusion = Some(self.private(LossKind::Confusion, 0.625));
        }
        self.confusion.clone().unwrap()
    }
}

fn criterion_1() -> Outcome {
    let table = [
        (56.47, 74.97, -24.68),
        (51.27, 74.97, -31.61),
        (72.81, 74.97, -2.88),
        (88.50, 74.97, 18.04),
        (10.72, 57.20, -81.26),
        (21.28, 57.20, -62.80),
        (54.17, 57.20, -5.30),
        (56.88, 57.20, -0.56),
        (62.58, 68.20, -8.24),
        (59.29, 68.20, -13.06),
    ];
    let mut worst: f64 = 0.0;
    for (private, original, expected) in table {
        worst = worst.max((robustness(private, original).unwrap() - expected).abs());
    }
    outcome(worst <= 0.01, format!("10 entries, max deviation {worst:.4} pts"))
}

fn criterion_2() -> Outcome {
    let uniform = confusion_loss(&Tensor::new(vec![4, 3], vec![1.0 / 3.0; 12]).unwrap()).unwrap();
    let one_hot2 = confusion_loss(&Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap()).unwrap();
    let one_hot5 = confusion_loss(&Tensor::from_rows(&[vec![0.0, 1.0, 0.0, 0.0, 0.0]]).unwrap()).unwrap();
    let bound_ok = (2..=10).all(|k| {
        let mut row = vec![0.0; k];
        row[k - 1] = 1.0;
        let worst = confusion_loss(&Tensor::from_rows(&[row]).unwrap()).unwrap();
        let bound = (k as f64 - 1.0) / k as f64;
        (worst - bound).abs() < 1e-12
    });
    let ce7 = cross_entropy(&Tensor::zeros(&[5, 7]), &[0, 1, 2, 3, 6]).unwrap();
    let linear = (0..=8).all(|i| {
        let l = i as f64 / 8.0;
        let v = combined_loss(1.7, 0.3, Lambda::new(l).unwrap());
        (v - (1.7 + l * (0.3 - 1.7))).abs() < 1e-12
    });
    let passed = uniform.abs() < 1e-15
        && (one_hot2 - 0.5).abs() < 1e-15
        && (one_hot5 - 0.8).abs() < 1e-15
        && bound_ok
        && (ce7 - 7f64.ln()).abs() <= 1e-12
        && linear;
    outcome(
        passed,
        format!("uniform {uniform:e}, one-hot {one_hot2}/{one_hot5}, CE(0; D=7) - ln 7 = {:e}", ce7 - 7f64.ln()),
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for seed in 0..24 {
        let case = common::random_case(seed);
        for objective in common::OBJECTIVES {
            let report = grad_check(|tape, vars| case.loss(tape, vars, objective), &case.point).unwrap();
            worst = worst.max(report.max_rel_error);
            checks += 1;
        }
    }
    outcome(worst <= 1e-5, format!("24 configurations, {checks} objectives, max rel err {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let splits = generate_synthetic(&SyntheticSpec { n_train: 1000, n_test: 200, ..SyntheticSpec::default() }).unwrap();
    let cls = ClassifierSpec::default_for(3);
    let base_cfg = TrainConfig { epochs: 5, seed: 11, ..TrainConfig::default() };
    let base = train_baseline(&cls, &splits, &base_cfg).unwrap();
    let priv_cfg = TrainConfig { loss_kind: LossKind::Confusion, ..base_cfg };
    let private = train_private(&cls, &AdversarySpec::default(), &splits, &priv_cfg).unwrap();
    let same = base.classifier.to_bytes() == private.classifier.to_bytes();
    outcome(same, format!("5 epochs on 1000 examples, parameters bit-identical: {same}"))
}

/// Bayes-style oracle: nearest of the noise-free joint class means, read off
/// for the consensual label.
fn oracle_accuracy(spec: &SyntheticSpec, splits: &DataSplits) -> f64 {
    let d = spec.num_classes;
    let mut means = Vec::new();
    for y in 0..d {
        for s in 0..spec.num_private {
            let code = 2.0 * s as f64 / (spec.num_private as f64 - 1.0) - 1.0;
            let mut m = vec![0.0; spec.dim];
            m[y] += spec.alpha_y;
            m[d + s] += spec.alpha_s;
            for v in &mut m[..d] {
                *v += spec.rho * spec.alpha_s * code / (d as f64).sqrt();
            }
            means.push((y, m));
        }
    }
    let test = &splits.test;
    let correct = (0..test.len())
        .filter(|&i| {
            let x = test.x(i);
            let (best, _) = means
                .iter()
                .map(|(y, m)| (*y, m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
                .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
            best == test.consensual_labels()[i]
        })
        .count();
    100.0 * correct as f64 / test.len() as f64
}

fn criterion_5(desk: &mut Desk) -> Outcome {
    let oracle = oracle_accuracy(&desk_spec(), &desk.splits);
    let base = desk.baseline();
    let conf = desk.confusion();
    let known = conf.privacy_known.unwrap();
    let a = base.utility >= 0.9 * oracle;
    let b = base.privacy_unknown >= 65.0 && (base.privacy_unknown - PINNED_BASELINE_LEAKAGE).abs() < 1e-9;
    let c = base.utility - conf.utility <= 5.0
        && (known - 50.0).abs() <= 5.0
        && conf.privacy_unknown < base.privacy_unknown;
    outcome(
        a && b && c,
        format!(
            "(a) utility {:.2} vs oracle {oracle:.2} [{}]; (b) leakage {:.2} [{}]; \
             (c) utility {:.2}, known {known:.2}, unknown {:.2} [{}]",
            base.utility,
            verdict(a),
            base.privacy_unknown,
            verdict(b),
            conf.utility,
            conf.privacy_unknown,
            verdict(c)
        ),
    )
}

fn criterion_6(desk: &mut Desk) -> Outcome {
    let conf = desk.confusion();
    let adv = desk.private(LossKind::Adversarial, 0.625);
    let chance = conf.chance_level;
    let adv_known = adv.privacy_known.unwrap();
    let conf_known = conf.privacy_known.unwrap();
    let misclassifies = adv_known < chance - 5.0;
    let confused = (conf_known - chance).abs() <= 5.0;
    let robust = (conf.privacy_unknown - chance).abs() <= (adv.privacy_unknown - chance).abs();
    outcome(
        misclassifies && confused && robust,
        format!(
            "adversarial known {adv_known:.2} [{}]; confusion known {conf_known:.2} [{}]; \
             unknown confusion {:.2} vs adversarial {:.2} [{}]",
            verdict(misclassifies),
            verdict(confused),
            conf.privacy_unknown,
            adv.privacy_unknown,
            verdict(robust)
        ),
    )
}

fn criterion_7(desk: &Desk) -> Outcome {
    let grid: Vec<f64> = (0..8).map(|i| i as f64 * 0.125).collect();
    let setup = SweepSetup {
        classifier: &desk.classifier,
        adversary: &desk.adversary,
        splits: &desk.splits,
        source: None,
        base: desk_config(LossKind::Confusion, 0.0),
        eval: desk.options.clone(),
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let sweep = lambda_sweep(&grid, &setup, jobs).unwrap();
    let rows = &sweep.rows;
    let first = rows.first().unwrap().utility;
    let last = rows.last().unwrap().utility;
    let trend = last <= first && rows.windows(2).all(|w| w[1].utility <= w[0].utility + 1.0);
    let off: Vec<String> = rows
        .iter()
        .filter_map(|r| r.known_adv_acc.map(|k| (r.lambda, k)))
        .filter(|(_, k)| (k - 50.0).abs() > 5.0)
        .map(|(l, k)| format!("λ={l}: {k:.2}"))
        .collect();
    let known_ok = off.is_empty();
    let cells: Vec<String> = rows
        .iter()
        .map(|r| match r.known_adv_acc {
            Some(k) => format!("{}:{:.2}/{k:.2}", r.lambda, r.utility),
            None => format!("{}:{:.2}/-", r.lambda, r.utility),
        })
        .collect();
    let mut detail = format!(
        "utility trend [{}], known within chance±5 [{}]; λ:utility/known {}",
        verdict(trend),
        verdict(known_ok),
        cells.join(" ")
    );
    if !known_ok {
        detail.push_str(&format!("; outside band: {}", off.join(", ")));
    }
    outcome(trend && known_ok, detail)
}

fn criterion_8() -> Outcome {
    let splits = generate_synthetic(&SyntheticSpec { n_train: 800, n_test: 300, ..SyntheticSpec::default() }).unwrap();
    let cls = ClassifierSpec::default_for(3);
    let options = EvalOptions::default();
    let cfg = TrainConfig {
        loss_kind: LossKind::Confusion,
        lambda: Lambda::new(0.5).unwrap(),
        epochs: 5,
        seed: 9,
        ..TrainConfig::default()
    };
    let report = || {
        let run = train_private(&cls, &AdversarySpec::default(), &splits, &cfg).unwrap();
        evaluate(&run, &splits, Some(60.0), &options).unwrap().to_json().unwrap()
    };
    let identical = report() == report();

    let private = train_private(&cls, &AdversarySpec::default(), &splits, &cfg).unwrap();
    let base_cfg = TrainConfig { loss_kind: LossKind::CrossEntropyOnly, lambda: Lambda::ZERO, ..cfg };
    let base = train_baseline(&cls, &splits, &base_cfg).unwrap();
    let x = splits.test.features().unwrap();
    let same_count = base.classifier.parameter_count() == private.classifier.parameter_count();
    let same_trace = base.classifier.inference_trace(&x).unwrap() == private.classifier.inference_trace(&x).unwrap();
    outcome(
        identical && same_count && same_trace,
        format!(
            "byte-identical reports {identical}; parameters {} vs {}; equal op traces {same_trace}",
            base.classifier.parameter_count(),
            private.classifier.parameter_count()
        ),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

type Check = Box<dyn FnOnce(&mut Desk) -> Outcome>;

fn main() -> ExitCode {
    let mut desk = Desk::new();
    let criteria: Vec<(usize, Check)> = vec![
        (1, Box::new(|_| criterion_1())),
        (2, Box::new(|_| criterion_2())),
        (3, Box::new(|_| criterion_3())),
        (4, Box::new(|_| criterion_4())),
        (5, Box::new(criterion_5)),
        (6, Box::new(criterion_6)),
        (7, Box::new(|d: &mut Desk| criterion_7(d))),
        (8, Box::new(|_| criterion_8())),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let start = Instant::now();
        let result = check(&mut desk);
        let status = if result.passed { "PASS" } else { "FAIL" };
        println!("criterion {n}: {status} ({:.1}s) {}", start.elapsed().as_secs_f64(), result.detail);
        failed += usize::from(!result.passed);
    }
    if failed == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
