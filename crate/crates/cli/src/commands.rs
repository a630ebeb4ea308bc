use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::CommandFactory;
use privleak::data::{generate_synthetic, DataSource, SyntheticSpec};
use privleak::evaluation::{evaluate, lambda_sweep, EvalOptions, EvalReport, KnownAdversary, SweepSetup};
use privleak::losses::{Lambda, LossKind};
use privleak::models::LayerSpec;
use privleak::protocol::{
    attack_accuracy, train_attack, train_baseline_from, train_private_from, AdversarySpec, AttackConfig,
    ClassifierSpec, RunArtifacts, TrainConfig,
};
use privleak::{Error, Result};
use sha2::{Digest, Sha256};

use crate::config::{ConfigFile, List};
use crate::{
    AttackArgs, AttackerArgs, Cli, DataArgs, EvalArgs, GenDataArgs, ModelArgs, SweepArgs, SyntheticArgs, TrainArgs,
    TrainingArgs,
};

const SEED_ENV: &str = "PRIVLEAK_SEED";

/// Exits with clap's usage message (status 2) when a required setting is
/// absent from both the flags and the config file.
fn require<T>(value: Option<T>, subcommand: &str, key: &str) -> T {
    value.unwrap_or_else(|| {
        let mut cli = Cli::command();
        cli.build();
        let sub = cli.find_subcommand_mut(subcommand).expect("known subcommand");
        sub.error(ErrorKind::MissingRequiredArgument, format!("--{key} is required (as a flag or config key)")).exit()
    })
}

fn env_seed(fallback: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not a seed"))),
        Err(_) => Ok(fallback),
    }
}

fn pick_seed(cfg: &ConfigFile, flag: Option<u64>, key: &str, fallback: u64) -> Result<u64> {
    match cfg.pick(flag, key)? {
        Some(seed) => Ok(seed),
        None => env_seed(fallback),
    }
}

fn not_found(what: &str, path: &Path) -> Error {
    Error::Io(io::Error::new(io::ErrorKind::NotFound, format!("{what} {} does not exist", path.display())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn synthetic_spec(cfg: &ConfigFile, a: &SyntheticArgs, seed: u64) -> Result<SyntheticSpec> {
    let d = SyntheticSpec::default();
    Ok(SyntheticSpec {
        dim: cfg.pick_or(a.d, "d", d.dim)?,
        num_classes: cfg.pick_or(a.num_classes, "D", d.num_classes)?,
        num_private: cfg.pick_or(a.num_private, "K", d.num_private)?,
        n_train: cfg.pick_or(a.n_train, "n-train", d.n_train)?,
        n_test: cfg.pick_or(a.n_test, "n-test", d.n_test)?,
        alpha_y: cfg.pick_or(a.alpha_y, "alpha-y", d.alpha_y)?,
        alpha_s: cfg.pick_or(a.alpha_s, "alpha-s", d.alpha_s)?,
        sigma: cfg.pick_or(a.sigma, "sigma", d.sigma)?,
        rho: cfg.pick_or(a.rho, "rho", d.rho)?,
        seed,
    })
}

fn data_source(cfg: &ConfigFile, a: &DataArgs) -> Result<DataSource> {
    match cfg.pick(a.data.clone(), "data")? {
        Some(dir) => {
            let train = dir.join("train.csv");
            let test = dir.join("test.csv");
            for p in [&train, &test] {
                if !p.is_file() {
                    return Err(not_found("data file", p));
                }
            }
            Ok(DataSource::Csv { train: train.canonicalize()?, test: test.canonicalize()? })
        }
        None => {
            let seed = cfg.pick_or(a.data_seed, "data-seed", SyntheticSpec::default().seed)?;
            let spec = synthetic_spec(cfg, &a.synthetic, seed)?;
            spec.validate()?;
            Ok(DataSource::Synthetic(spec))
        }
    }
}

fn layer_list(cfg: &ConfigFile, flag: Option<&str>, key: &str) -> Result<Option<Vec<LayerSpec>>> {
    Ok(cfg.pick_parse::<List<LayerSpec>>(flag, key)?.map(|l| l.0))
}

fn model_specs(cfg: &ConfigFile, a: &ModelArgs, num_classes: usize) -> Result<(ClassifierSpec, AdversarySpec)> {
    let mut classifier = ClassifierSpec::default_for(num_classes);
    if let Some(layers) = layer_list(cfg, a.layers.as_deref(), "layers")? {
        classifier.layers = layers;
    }
    if let Some(taps) = cfg.pick_parse::<List<usize>>(a.taps.as_deref(), "taps")? {
        classifier.taps = taps.0;
    }
    let mut adversary = AdversarySpec::default();
    if let Some(hidden) = layer_list(cfg, a.adversary.as_deref(), "adversary")? {
        adversary.hidden = hidden;
    }
    Ok((classifier, adversary))
}

fn train_config(cfg: &ConfigFile, a: &TrainingArgs, default_loss: LossKind) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let config = TrainConfig {
        loss_kind: cfg.pick_parse(a.loss.as_deref(), "loss")?.unwrap_or(default_loss),
        lambda: Lambda::ZERO,
        tap: cfg.pick_or(a.tap, "tap", d.tap)?,
        epochs: cfg.pick_or(a.epochs, "epochs", d.epochs)?,
        batch_size: cfg.pick_or(a.batch_size, "batch-size", d.batch_size)?,
        lr: cfg.pick_or(a.lr, "lr", d.lr)?,
        adversary_steps: cfg.pick_or(a.adversary_steps, "adversary-steps", d.adversary_steps)?,
        seed: pick_seed(cfg, a.seed, "seed", d.seed)?,
    };
    config.validate()?;
    Ok(config)
}

fn attack_config(cfg: &ConfigFile, a: &AttackerArgs) -> Result<AttackConfig> {
    let d = AttackConfig::default();
    Ok(AttackConfig {
        epochs: cfg.pick_or(a.attack_epochs, "attack-epochs", d.epochs)?,
        batch_size: cfg.pick_or(a.attack_batch_size, "attack-batch-size", d.batch_size)?,
        lr: cfg.pick_or(a.attack_lr, "attack-lr", d.lr)?,
    })
}

fn unknown_spec(cfg: &ConfigFile, flag: Option<&str>) -> Result<AdversarySpec> {
    Ok(match layer_list(cfg, flag, "unknown-adversary")? {
        Some(hidden) => AdversarySpec { hidden },
        None => AdversarySpec::default(),
    })
}

fn parse_known(text: &str) -> Result<KnownAdversary> {
    match text {
        "co-trained" | "cotrained" => Ok(KnownAdversary::CoTrained),
        "retrained" => Ok(KnownAdversary::Retrained),
        other => Err(Error::Config(format!("--known must be co-trained or retrained, got {other:?}"))),
    }
}

fn load_run(cfg: &ConfigFile, flag: Option<PathBuf>, subcommand: &str) -> Result<(PathBuf, RunArtifacts)> {
    let dir = require(cfg.pick(flag, "run")?, subcommand, "run");
    if !dir.is_dir() {
        return Err(not_found("run directory", &dir));
    }
    let run = RunArtifacts::load(&dir)?;
    Ok((dir, run))
}

pub fn gen_data(args: GenDataArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.config.config.as_deref())?;
    let seed = pick_seed(&cfg, args.seed, "seed", SyntheticSpec::default().seed)?;
    let spec = synthetic_spec(&cfg, &args.synthetic, seed)?;
    let out = require(cfg.pick(args.out, "out")?, "gen-data", "out");
    let splits = generate_synthetic(&spec)?;
    fs::create_dir_all(&out)?;
    for (name, ds) in [("train.csv", &splits.train), ("test.csv", &splits.test)] {
        let text = ds.to_csv_string();
        fs::write(out.join(name), &text)?;
        println!("{}  {}", sha256_hex(text.as_bytes()), out.join(name).display());
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.config.config.as_deref())?;
    let source = data_source(&cfg, &args.data)?;
    let mut config = train_config(&cfg, &args.training, LossKind::CrossEntropyOnly)?;
    let lambda = cfg.pick_or(args.lambda, "lambda", 0.0)?;
    config.lambda = Lambda::new(lambda)?;
    let out = require(cfg.pick(args.out, "out")?, "train", "out");

    let splits = source.load()?;
    let (classifier, adversary) = model_specs(&cfg, &args.model, splits.train.num_classes())?;
    let run = if config.loss_kind == LossKind::CrossEntropyOnly {
        if lambda != 0.0 {
            return Err(Error::Config("--loss ce trains without a privacy term; lambda must be 0".into()));
        }
        train_baseline_from(&classifier, &splits, Some(&source), &config)?
    } else {
        train_private_from(&classifier, &adversary, &splits, Some(&source), &config)?
    };
    run.save(&out)?;

    let last = run.curves.last().expect("at least one epoch");
    let known = last.known_adv_acc.map(|k| format!(" known-adversary {:.2}%", 100.0 * k)).unwrap_or_default();
    println!(
        "{}: utility {:.2}%{known} after {} epochs (config {})",
        out.display(),
        100.0 * last.utility,
        last.epoch,
        run.provenance.config_hash
    );
    Ok(())
}

pub fn attack(args: AttackArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.config.config.as_deref())?;
    let (dir, run) = load_run(&cfg, args.run, "attack")?;
    let tap = cfg.pick_or(args.tap, "tap", run.provenance.tap)?;
    let attack_seed = cfg.pick_or(args.attacker.attack_seed, "attack-seed", 0)?;
    let spec = unknown_spec(&cfg, args.unknown_adversary.as_deref())?;
    let config = attack_config(&cfg, &args.attacker)?;
    let out =
        cfg.pick(args.out, "out")?.unwrap_or_else(|| dir.join(format!("attack-seed{attack_seed}-tap{tap}.model")));

    let splits = run.data()?;
    let attacker = train_attack(&run.classifier, tap, &spec, &splits.train, &config, attack_seed)?;
    let acc = attack_accuracy(&run.classifier, &attacker, &splits.test)?;
    attacker.save(&out)?;
    println!(
        "accuracy {:.2}% chance {:.2}% tap {tap} attacker {} classifier {}",
        100.0 * acc,
        100.0 / splits.train.num_private() as f64,
        out.display(),
        sha256_hex(&run.classifier.to_bytes())
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.config.config.as_deref())?;
    let (dir, run) = load_run(&cfg, args.run, "eval")?;
    let reference = match cfg.pick(args.baseline, "baseline")? {
        Some(path) => {
            if !path.is_file() {
                return Err(not_found("baseline report", &path));
            }
            let report = EvalReport::from_json(&fs::read_to_string(&path)?)?;
            if report.tap != run.provenance.tap {
                return Err(Error::Contract(format!(
                    "baseline report is for tap {} but the run uses tap {}",
                    report.tap, run.provenance.tap
                )));
            }
            Some(report.privacy_unknown)
        }
        None => None,
    };
    let known_mode = match cfg.pick::<String>(args.known, "known")? {
        Some(text) => parse_known(&text)?,
        None => KnownAdversary::CoTrained,
    };
    let trained_with = run.provenance.adversary_hidden.as_deref().map(|h| h.parse::<List<LayerSpec>>());
    let known_adversary = match layer_list(&cfg, args.adversary.as_deref(), "adversary")? {
        Some(hidden) => AdversarySpec { hidden },
        None => match trained_with {
            Some(Ok(list)) => AdversarySpec { hidden: list.0 },
            Some(Err(e)) => return Err(Error::Format(format!("run provenance: {e}"))),
            None => AdversarySpec::default(),
        },
    };
    let options = EvalOptions {
        attack: attack_config(&cfg, &args.attacker)?,
        attack_seed: cfg.pick_or(args.attacker.attack_seed, "attack-seed", 0)?,
        unknown_adversary: unknown_spec(&cfg, args.unknown_adversary.as_deref())?,
        known_adversary,
        known_mode,
    };
    let out = cfg.pick(args.out, "out")?.unwrap_or_else(|| dir.join("report.json"));

    let splits = run.data()?;
    let report = evaluate(&run, &splits, reference, &options)?;
    let json = report.to_json()?;
    fs::write(&out, &json)?;
    print!("{json}");
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = ConfigFile::load(args.config.config.as_deref())?;
    let source = data_source(&cfg, &args.data)?;
    let base = train_config(&cfg, &args.training, LossKind::Confusion)?;
    let lambdas: List<f64> = require(cfg.pick_parse(args.lambdas.as_deref(), "lambdas")?, "sweep", "lambdas");
    let jobs = cfg.pick_or(args.jobs, "jobs", 1)?;
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let eval = EvalOptions {
        attack: attack_config(&cfg, &args.attacker)?,
        attack_seed: cfg.pick_or(args.attacker.attack_seed, "attack-seed", 0)?,
        unknown_adversary: unknown_spec(&cfg, args.unknown_adversary.as_deref())?,
        ..EvalOptions::default()
    };
    let out = cfg.pick(args.out, "out")?;

    let splits = source.load()?;
    let (classifier, adversary) = model_specs(&cfg, &args.model, splits.train.num_classes())?;
    let setup = SweepSetup {
        classifier: &classifier,
        adversary: &adversary,
        splits: &splits,
        source: Some(&source),
        base,
        eval,
    };
    let csv = lambda_sweep(&lambdas.0, &setup, jobs)?.to_csv();
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, &csv)?;
    }
    print!("{csv}");
    Ok(())
}
