//! `mirinf` — train small models and score training-data influence with
//! forward-pass updates, influence functions, TracIn, or retraining
//! oracles.
//!
//! Exit codes: 0 success, 1 configuration/input error, 2 numerical
//! failure. `MIRINF_THREADS` caps the worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mirinf_core::{
    self as core, forward_inf, harness, if_lissa_detailed, if_pairwise, self_influence,
    tracin_pairwise, Activation, Dataset, DatasetDescriptor, Direction, Error, ForwardInfConfig,
    InfluenceReport, LissaConfig, ModelSpec, OracleConfig, Result, SelfInfluenceMethod, SignMode,
    SourcePartition, TimingBreakdown, TrainerConfig,
};

#[derive(Parser)]
#[command(name = "mirinf", version, about = "Training-data influence estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment pipeline from a JSON config file.
    Run {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Score every training point with one method and write a report.
    Influence(InfluenceArgs),
    /// Measure per-point forward vs backward pass cost.
    Bench {
        /// Dataset descriptor (csv:..., idx:..., blobs:...).
        #[arg(long)]
        data: String,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Pick (K, alpha) for the forward scorer by duplicate retrieval.
    Tune {
        #[arg(long)]
        data: String,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        trainer: TrainerArgs,
        /// Candidate step counts.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,30,100")]
        ks: Vec<usize>,
        /// Candidate step sizes.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.3")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    #[value(name = "forward-inf")]
    ForwardInf,
    #[value(name = "if")]
    If,
    #[value(name = "if-lissa")]
    IfLissa,
    #[value(name = "tracin")]
    Tracin,
    #[value(name = "oracle-t2t")]
    OracleT2t,
    #[value(name = "oracle-tst2trn")]
    OracleTst2trn,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Ascent,
    Descent,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Logistic,
    Mlp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "logistic")]
    model: ModelKind,
    /// Hidden layer widths for the MLP.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    hidden: Vec<usize>,
    #[arg(long, value_enum, default_value = "tanh")]
    activation: ActivationArg,
    #[arg(long, default_value_t = 0.001)]
    l2: f64,
}

#[derive(Args)]
struct TrainerArgs {
    /// SGD epochs (the MLP trainer; the logistic model trains by Newton).
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.001)]
    weight_decay: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    train_seed: u64,
    /// Checkpoints to keep for tracin.
    #[arg(long, default_value_t = 5)]
    checkpoints: usize,
}

#[derive(Args)]
struct InfluenceArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Training dataset descriptor.
    #[arg(long)]
    data: String,
    /// Output directory for scores.csv and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Test dataset descriptor; defaults to holding out the last tenth of
    /// the training rows.
    #[arg(long)]
    test: Option<String>,
    /// Row of the test set used by the pairwise methods.
    #[arg(long, default_value_t = 0)]
    test_index: usize,
    /// Score each point against itself instead of the test set.
    #[arg(long, default_value_t = false)]
    self_influence: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    trainer: TrainerArgs,
    /// Forward scorer steps.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Forward scorer step size.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "ascent")]
    direction: DirectionArg,
    /// Negate ascent scores to match the addition-oracle sign.
    #[arg(long, default_value_t = false)]
    mirrored: bool,
    /// LiSSA recursion depth.
    #[arg(long, default_value_t = 500)]
    depth: usize,
    /// LiSSA scale (the alpha of the contraction condition).
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
    /// LiSSA damping added to the Hessian diagonal.
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Oracle group count (0 scores every point individually).
    #[arg(long, default_value_t = 10)]
    groups: usize,
    /// Oracle averaging seeds for the stochastic trainer.
    #[arg(long, default_value_t = 5)]
    oracle_seeds: usize,
}

fn main() -> ExitCode {
    harness::init_thread_cap();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mirinf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = core::ExperimentConfig::from_json_file(&config)?;
            let manifest = core::run_experiment(&cfg)?;
            println!("wrote {} files under {}", manifest.files.len(), cfg.output_path);
            for f in &manifest.files {
                println!("  {f}");
            }
            Ok(())
        }
        Command::Influence(args) => influence(args),
        Command::Bench { data, model, repeats } => {
            let full = load(&data)?;
            let spec = model.spec(full.dim(), full.n_classes())?;
            let (train, tst) = holdout(&full, full.len() / 10)?;
            let b = core::bench_passes(&spec, &train, &tst, repeats)?;
            println!("{}", serde_json::to_string_pretty(&b)?);
            Ok(())
        }
        Command::Tune { data, model, trainer, ks, alphas, seed } => {
            let full = load(&data)?;
            let spec = model.spec(full.dim(), full.n_classes())?;
            let (params, _) = trainer.fit(&spec, &full)?;
            let result = core::tune_forward_inf(&spec, &params, &full, &ks, &alphas, seed)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
    }
}

impl ModelArgs {
    fn spec(&self, input_dim: usize, n_classes: usize) -> Result<ModelSpec> {
        let spec = match self.model {
            ModelKind::Logistic => ModelSpec::logistic(input_dim, n_classes, self.l2),
            ModelKind::Mlp => {
                let mut widths = vec![input_dim];
                widths.extend(&self.hidden);
                let act = match self.activation {
                    ActivationArg::Relu => Activation::Relu,
                    ActivationArg::Tanh => Activation::Tanh,
                };
                ModelSpec::mlp(widths, act, n_classes, self.l2)
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TrainerArgs {
    fn sgd_config(&self) -> core::SgdConfig {
        core::SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.train_seed,
            checkpoint_every: (self.epochs / self.checkpoints.max(1)).max(1),
        }
    }

    fn trainer_for(&self, spec: &ModelSpec) -> TrainerConfig {
        match spec {
            ModelSpec::MultinomialLogistic { .. } => {
                TrainerConfig::Deterministic(core::DetTrainConfig::default())
            }
            ModelSpec::Mlp { .. } => TrainerConfig::Sgd(self.sgd_config()),
        }
    }

    fn fit(&self, spec: &ModelSpec, data: &Dataset) -> Result<(core::ParamVector, Vec<core::Checkpoint>)> {
        match spec {
            ModelSpec::MultinomialLogistic { .. } => {
                let params =
                    core::train_deterministic(spec, data, &core::DetTrainConfig::default())?;
                // the converged model stands in as the single checkpoint
                let ckpt = core::Checkpoint { params: params.clone(), iter_index: 0, step_size: self.lr };
                Ok((params, vec![ckpt]))
            }
            ModelSpec::Mlp { .. } => core::train_sgd(spec, data, &self.sgd_config()),
        }
    }
}

fn load(descriptor: &str) -> Result<Dataset> {
    let d: DatasetDescriptor = descriptor.parse()?;
    core::load_dataset(&d)
}

fn holdout(full: &Dataset, n_test: usize) -> Result<(Dataset, Dataset)> {
    let n_test = n_test.max(1);
    if n_test >= full.len() {
        return Err(Error::config("holdout: dataset too small"));
    }
    let split = full.len() - n_test;
    let train = full.subset(&(0..split).collect::<Vec<_>>())?;
    let tst = full.subset(&(split..full.len()).collect::<Vec<_>>())?;
    Ok((train, tst))
}

fn influence(args: InfluenceArgs) -> Result<()> {
    let full = load(&args.data)?;
    let (train, tst) = match &args.test {
        Some(t) => (full.clone(), load(t)?),
        None => holdout(&full, full.len() / 10)?,
    };
    let spec = args.model.spec(train.dim(), train.n_classes().max(tst.n_classes()))?;
    let (params, checkpoints) = args.trainer.fit(&spec, &train)?;
    let direction = match args.direction {
        DirectionArg::Ascent => Direction::Ascent,
        DirectionArg::Descent => Direction::Descent,
    };
    let fwd_cfg = ForwardInfConfig {
        k: args.k,
        alpha: args.alpha,
        direction,
        sign_mode: if args.mirrored { SignMode::Mirrored } else { SignMode::Raw },
    };

    let report = if args.self_influence {
        let method = match args.method {
            MethodArg::ForwardInf => SelfInfluenceMethod::ForwardInf { params: &params, cfg: &fwd_cfg },
            MethodArg::Tracin => SelfInfluenceMethod::TracIn { checkpoints: &checkpoints },
            MethodArg::If => SelfInfluenceMethod::InfluenceFunction { params: &params },
            _ => return Err(Error::config("--self-influence supports forward-inf, tracin, if")),
        };
        self_influence(&spec, &train, method)?
    } else {
        match args.method {
            MethodArg::ForwardInf => {
                let part = SourcePartition::singletons(&train);
                forward_inf(&spec, &params, &train, &part, &tst, &fwd_cfg)?
            }
            MethodArg::If | MethodArg::IfLissa | MethodArg::Tracin => {
                pairwise_report(&args, &spec, &params, &checkpoints, &train, &tst)?
            }
            MethodArg::OracleT2t | MethodArg::OracleTst2trn => {
                oracle_report(&args, &spec, &train, &tst)?
            }
        }
    };

    std::fs::create_dir_all(&args.out)?;
    let mut csv = String::from("source_id,method,score\n");
    for (name, score) in report.source_names.iter().zip(&report.scores) {
        csv.push_str(&format!("{name},{},{score}\n", report.method));
    }
    std::fs::write(args.out.join("scores.csv"), csv)?;
    std::fs::write(args.out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    println!(
        "{} scored {} sources -> {}",
        report.method,
        report.scores.len(),
        args.out.display()
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn pairwise_report(
    args: &InfluenceArgs,
    spec: &ModelSpec,
    params: &core::ParamVector,
    checkpoints: &[core::Checkpoint],
    train: &Dataset,
    tst: &Dataset,
) -> Result<InfluenceReport> {
    if args.test_index >= tst.len() {
        return Err(Error::config(format!(
            "--test-index {} out of range for a test set of {}",
            args.test_index,
            tst.len()
        )));
    }
    let target = tst.sample(args.test_index);
    let start = std::time::Instant::now();
    let mut warnings = Vec::new();
    let (method, scores): (&str, Vec<f64>) = match args.method {
        MethodArg::If => (
            "if",
            (0..train.len())
                .map(|i| if_pairwise(spec, params, train, i, &target))
                .collect::<Result<_>>()?,
        ),
        MethodArg::IfLissa => {
            let cfg = LissaConfig {
                depth: args.depth,
                scale: args.scale,
                damping: args.damping,
                repeats: 1,
                seed: 0,
                batch_size: None,
            };
            let mut out = Vec::with_capacity(train.len());
            let mut warned = false;
            for i in 0..train.len() {
                let detail = if_lissa_detailed(spec, params, train, i, &target, &cfg)?;
                if detail.scale_warning && !warned {
                    warnings.push(format!(
                        "scale {} violates the contraction condition; estimates may diverge",
                        args.scale
                    ));
                    warned = true;
                }
                out.push(detail.value);
            }
            ("if-lissa", out)
        }
        MethodArg::Tracin => (
            "tracin",
            (0..train.len())
                .map(|i| tracin_pairwise(spec, checkpoints, train, i, &target))
                .collect::<Result<_>>()?,
        ),
        _ => unreachable!("pairwise_report called for pairwise methods only"),
    };
    Ok(InfluenceReport {
        method: method.to_string(),
        scores,
        source_names: train.ids().to_vec(),
        hyperparams: format!(
            "{{\"test_id\":{:?},\"depth\":{},\"scale\":{},\"damping\":{},\"checkpoints\":{}}}",
            tst.id(args.test_index),
            args.depth,
            args.scale,
            args.damping,
            checkpoints.len()
        ),
        seeds: vec![args.trainer.train_seed],
        timing: TimingBreakdown {
            total_seconds: start.elapsed().as_secs_f64(),
            ..Default::default()
        },
        warnings,
    })
}

fn oracle_report(
    args: &InfluenceArgs,
    spec: &ModelSpec,
    train: &Dataset,
    tst: &Dataset,
) -> Result<InfluenceReport> {
    let part = if args.groups == 0 {
        SourcePartition::singletons(train)
    } else {
        SourcePartition::contiguous_groups(train.len(), args.groups)?
    };
    let trainer = args.trainer.trainer_for(spec);
    let seeds: Vec<u64> = (0..args.oracle_seeds.max(1)).map(|i| i as u64).collect();
    let cfg = OracleConfig {
        trainer,
        seeds: seeds.clone(),
        addition_mode: core::AdditionMode::Scratch,
    };
    let start = std::time::Instant::now();
    let (method, scores) = match args.method {
        MethodArg::OracleT2t => (
            "oracle-t2t",
            core::oracle_train_to_test_all(spec, train, &part, None, tst, &cfg)?,
        ),
        MethodArg::OracleTst2trn => (
            "oracle-tst2trn",
            core::oracle_test_to_train_all(spec, train, &part, None, tst, &cfg)?,
        ),
        _ => unreachable!("oracle_report called for oracle methods only"),
    };
    Ok(InfluenceReport {
        method: method.to_string(),
        scores,
        source_names: part.names().to_vec(),
        hyperparams: format!("{{\"groups\":{}}}", part.len()),
        seeds,
        timing: TimingBreakdown {
            total_seconds: start.elapsed().as_secs_f64(),
            ..Default::default()
        },
        warnings: vec![],
    })
}
