//! Experiment orchestration: configs, deterministic seed plumbing, the
//! hyperparameter tuner, report serialization, and the experiment
//! pipelines behind the CLI.

mod data_io;
mod experiments;

pub use data_io::{
    blobs, inject_leak, inject_mislabels, load_dataset, read_csv, read_idx, write_csv,
    DatasetDescriptor,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimate::{forward_inf, ForwardInfConfig, InfluenceReport, LissaConfig, SignMode};
use crate::model::{Dataset, ModelSpec, ParamVector};
use crate::oracle::SourcePartition;
use crate::stats::{ranking, CorrelationResult, DetectionCurve, PassBench};
use crate::train::{Direction, TrainerConfig};

/// Cap the global worker pool from `MIRINF_THREADS`. Safe to call many
/// times; only the first call can take effect.
pub fn init_thread_cap() {
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| {
        if let Ok(v) = std::env::var("MIRINF_THREADS") {
            if let Ok(k) = v.trim().parse::<usize>() {
                if k >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
                }
            }
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "corr-point")]
    CorrPoint,
    #[serde(rename = "corr-group")]
    CorrGroup,
    #[serde(rename = "leakage")]
    Leakage,
    #[serde(rename = "mislabel")]
    Mislabel,
    #[serde(rename = "fwd-vs-oracle")]
    FwdVsOracle,
    #[serde(rename = "continual-vs-scratch")]
    ContinualVsScratch,
    #[serde(rename = "bench")]
    Bench,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::CorrPoint => "corr-point",
            Experiment::CorrGroup => "corr-group",
            Experiment::Leakage => "leakage",
            Experiment::Mislabel => "mislabel",
            Experiment::FwdVsOracle => "fwd-vs-oracle",
            Experiment::ContinualVsScratch => "continual-vs-scratch",
            Experiment::Bench => "bench",
        }
    }
}

/// Protocol knobs shared by the experiment pipelines. Every field has a
/// default matching the shipped experiment configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolParams {
    /// Held-out rows carved off the end of the loaded dataset.
    pub test_size: usize,
    /// corr-point: how many highest-loss test points to average over.
    pub n_test_points: usize,
    /// Group protocols: number of sources and the mislabel ramp.
    pub n_groups: usize,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Oracle averaging seeds (stochastic trainers only).
    pub n_oracle_seeds: usize,
    /// leakage: points copied into train, and the tuning holdout share.
    pub n_leaks: usize,
    pub tune_fraction: f64,
    /// mislabel: corruption rate and the inspection budget.
    pub mislabel_ratio: f64,
    pub inspect_fraction: f64,
    /// tune/leakage candidate grids.
    pub candidate_ks: Vec<usize>,
    pub candidate_alphas: Vec<f64>,
    /// bench repeats.
    pub bench_repeats: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            test_size: 500,
            n_test_points: 10,
            n_groups: 30,
            ratio_lo: 0.0,
            ratio_hi: 1.0,
            n_oracle_seeds: 5,
            n_leaks: 20,
            tune_fraction: 0.2,
            mislabel_ratio: 0.2,
            inspect_fraction: 0.2,
            candidate_ks: vec![10, 30, 100],
            candidate_alphas: vec![0.1, 0.3],
            bench_repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfigs {
    pub forward_inf: ForwardInfConfig,
    pub lissa: LissaConfig,
}

impl Default for EstimatorConfigs {
    fn default() -> Self {
        EstimatorConfigs {
            forward_inf: ForwardInfConfig::default(),
            lissa: LissaConfig::default(),
        }
    }
}

/// Full description of one experiment run. JSON keys match these field
/// names exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dataset: DatasetDescriptor,
    pub model: ModelSpec,
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub estimators: EstimatorConfigs,
    #[serde(default)]
    pub protocol: ProtocolParams,
    pub root_seed: u64,
    pub output_path: String,
}

impl ExperimentConfig {
    /// The shipped defaults for each experiment; these are the settings
    /// the acceptance suite runs.
    pub fn default_for(experiment: Experiment, root_seed: u64, output_path: &str) -> Self {
        use crate::model::Activation;
        use crate::train::{DetTrainConfig, SgdConfig};
        let (dataset, model, trainer, estimators, protocol) = match experiment {
            Experiment::CorrPoint => (
                DatasetDescriptor::Blobs {
                    n: 1250,
                    dim: 50,
                    n_classes: 5,
                    class_means_scale: 2.0,
                    seed: 11,
                },
                ModelSpec::logistic(50, 5, 0.001),
                TrainerConfig::Deterministic(DetTrainConfig::default()),
                EstimatorConfigs::default(),
                ProtocolParams { test_size: 200, n_test_points: 10, ..Default::default() },
            ),
            Experiment::CorrGroup | Experiment::FwdVsOracle => (
                DatasetDescriptor::Blobs {
                    n: 2000,
                    dim: 20,
                    n_classes: 5,
                    class_means_scale: 0.5,
                    seed: 12,
                },
                ModelSpec::mlp(vec![20, 32], Activation::Relu, 5, 0.001),
                TrainerConfig::Sgd(SgdConfig {
                    lr: 0.005,
                    momentum: 0.9,
                    weight_decay: 0.001,
                    batch_size: 128,
                    epochs: 150,
                    seed: 0,
                    checkpoint_every: 50,
                }),
                EstimatorConfigs {
                    forward_inf: ForwardInfConfig {
                        k: 2,
                        alpha: 0.01,
                        direction: Direction::Ascent,
                        sign_mode: SignMode::Mirrored,
                    },
                    ..Default::default()
                },
                ProtocolParams { test_size: 500, ..Default::default() },
            ),
            Experiment::Leakage => (
                DatasetDescriptor::Blobs {
                    n: 2600,
                    dim: 50,
                    n_classes: 5,
                    class_means_scale: 0.5,
                    seed: 13,
                },
                ModelSpec::mlp(vec![50, 64, 64], Activation::Tanh, 5, 0.001),
                TrainerConfig::Sgd(SgdConfig {
                    lr: 0.01,
                    momentum: 0.9,
                    weight_decay: 0.001,
                    batch_size: 32,
                    epochs: 2,
                    seed: 0,
                    checkpoint_every: 2,
                }),
                EstimatorConfigs::default(),
                ProtocolParams { test_size: 600, n_leaks: 20, ..Default::default() },
            ),
            Experiment::Mislabel => (
                DatasetDescriptor::Blobs {
                    n: 2000,
                    dim: 50,
                    n_classes: 5,
                    class_means_scale: 0.5,
                    seed: 14,
                },
                ModelSpec::logistic(50, 5, 0.01),
                TrainerConfig::Deterministic(DetTrainConfig::default()),
                EstimatorConfigs {
                    forward_inf: ForwardInfConfig {
                        k: 5,
                        alpha: 0.5,
                        direction: Direction::Ascent,
                        sign_mode: SignMode::Mirrored,
                    },
                    ..Default::default()
                },
                ProtocolParams { test_size: 0, ..Default::default() },
            ),
            Experiment::ContinualVsScratch => (
                DatasetDescriptor::Blobs {
                    n: 700,
                    dim: 10,
                    n_classes: 3,
                    class_means_scale: 2.0,
                    seed: 15,
                },
                ModelSpec::logistic(10, 3, 0.01),
                TrainerConfig::Deterministic(DetTrainConfig::default()),
                EstimatorConfigs::default(),
                ProtocolParams { test_size: 100, ..Default::default() },
            ),
            Experiment::Bench => (
                DatasetDescriptor::Blobs {
                    n: 1100,
                    dim: 50,
                    n_classes: 5,
                    class_means_scale: 1.0,
                    seed: 16,
                },
                ModelSpec::mlp(vec![50, 64, 64], Activation::Tanh, 5, 0.0),
                TrainerConfig::Deterministic(DetTrainConfig::default()),
                EstimatorConfigs::default(),
                ProtocolParams { test_size: 100, ..Default::default() },
            ),
        };
        ExperimentConfig {
            experiment,
            dataset,
            model,
            trainer,
            estimators,
            protocol,
            root_seed,
            output_path: output_path.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.trainer.validate()?;
        self.estimators.forward_inf.validate()?;
        self.estimators.lissa.validate()?;
        if self.output_path.is_empty() {
            return Err(Error::config("output_path must be set"));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("config {path:?}: {e}")))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("config {path:?}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything a run wrote, plus the provenance needed to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub derived_seeds: BTreeMap<String, u64>,
    pub corruption_log: Option<String>,
    pub input_hash: String,
    pub wall_clock_seconds: BTreeMap<String, f64>,
    pub files: Vec<String>,
    pub flags: Vec<String>,
}

/// Everything a run measured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub reports: Vec<InfluenceReport>,
    pub correlations: BTreeMap<String, CorrelationResult>,
    pub curves: BTreeMap<String, DetectionCurve>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bench: Option<PassBench>,
}

impl ExperimentReport {
    fn new(experiment: Experiment) -> Self {
        ExperimentReport {
            experiment: experiment.name().to_string(),
            reports: vec![],
            correlations: BTreeMap::new(),
            curves: BTreeMap::new(),
            metrics: BTreeMap::new(),
            bench: None,
        }
    }
}

/// Content hash of the run inputs: config JSON plus the loaded dataset.
fn input_hash(cfg: &ExperimentConfig, data: &Dataset) -> String {
    let mut hasher = Sha256::new();
    // the hash covers inputs only; where the outputs land is not an input
    let mut canonical = cfg.clone();
    canonical.output_path = String::new();
    hasher.update(serde_json::to_string(&canonical).expect("config serializes").as_bytes());
    for v in data.features().iter() {
        hasher.update(v.to_le_bytes());
    }
    for &l in data.labels() {
        hasher.update((l as u64).to_le_bytes());
    }
    for id in data.ids() {
        hasher.update(id.as_bytes());
        hasher.update([0u8]);
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Tuning outcome: the selected configuration plus the retrieval quality
/// it achieved on the planted duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub config: ForwardInfConfig,
    pub retrieval_rate: f64,
    /// Set when no candidate beat the no-signal baseline.
    pub degenerate: bool,
}

/// Pick `(K, α)` by planting up to 10 training points as pseudo-test
/// targets: each point is its own ground-truth most-influential source,
/// so the best candidate maximizes mean top-1 self-retrieval. Ties break
/// toward smaller K, then smaller α.
pub fn tune_forward_inf(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    candidate_ks: &[usize],
    candidate_alphas: &[f64],
    seed_value: u64,
) -> Result<TuneResult> {
    if candidate_ks.is_empty() || candidate_alphas.is_empty() {
        return Err(Error::config("tune: empty candidate grid"));
    }
    let n = data.len();
    if n == 0 {
        return Err(Error::config("tune: empty dataset"));
    }
    let m = 10.min(n);
    let mut rng = crate::seed::rng(crate::seed::derive(seed_value, "tune"));
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let targets = &order[..m];

    let part = SourcePartition::singletons(data);
    let mut best: Option<(f64, ForwardInfConfig)> = None;
    for &k in candidate_ks {
        for &alpha in candidate_alphas {
            let cfg = ForwardInfConfig {
                k,
                alpha,
                direction: Direction::Ascent,
                sign_mode: SignMode::Raw,
            };
            let mut hits = 0usize;
            let mut failed = false;
            for &t in targets {
                let tst = data.subset(&[t])?;
                match forward_inf(spec, params, data, &part, &tst, &cfg) {
                    Ok(report) => {
                        if ranking(&report.scores)[0] == t {
                            hits += 1;
                        }
                    }
                    Err(Error::Numerical(_)) => {
                        failed = true; // diverged: candidate is unusable
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            let rate = if failed { 0.0 } else { hits as f64 / m as f64 };
            // strict > keeps the first (smallest K, then smallest α) on ties
            if best.as_ref().is_none_or(|(r, _)| rate > *r) {
                best = Some((rate, cfg));
            }
        }
    }
    let (retrieval_rate, config) = best.expect("non-empty grid");
    let degenerate = retrieval_rate == 0.0 || config.k == 0;
    Ok(TuneResult { config, retrieval_rate, degenerate })
}

/// Run the named experiment pipeline: writes `scores.csv`, `report.json`,
/// `manifest.json` (and `corruption.json` when labels were touched) under
/// `output_path`, all derived deterministically from `root_seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    init_thread_cap();
    cfg.validate()?;
    let out_dir = PathBuf::from(&cfg.output_path);
    std::fs::create_dir_all(&out_dir)?;
    let total_start = std::time::Instant::now();

    let data = load_dataset(&cfg.dataset)?;
    let mut manifest = RunManifest {
        config: cfg.clone(),
        derived_seeds: BTreeMap::new(),
        corruption_log: None,
        input_hash: input_hash(cfg, &data),
        wall_clock_seconds: BTreeMap::new(),
        files: vec![],
        flags: vec![],
    };

    let outcome = experiments::run(cfg, &data, &mut manifest);
    let (report, corruption) = match outcome {
        Ok(v) => v,
        Err(e) => {
            // abort with the stage name recorded and a partial manifest
            manifest.flags.push(format!("aborted: {e}"));
            let manifest_path = out_dir.join("manifest.json");
            std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
            return Err(e);
        }
    };

    if let Some(log) = &corruption {
        let path = out_dir.join("corruption.json");
        std::fs::write(&path, serde_json::to_string_pretty(log)?)?;
        manifest.corruption_log = Some("corruption.json".into());
        manifest.files.push("corruption.json".into());
    }

    write_scores_csv(&out_dir.join("scores.csv"), &report.reports)?;
    manifest.files.push("scores.csv".into());

    std::fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    manifest.files.push("report.json".into());

    manifest
        .wall_clock_seconds
        .insert("total".into(), total_start.elapsed().as_secs_f64());
    manifest.files.push("manifest.json".into());
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// `source_id,method,score` rows for every report, in report order then
/// source order.
fn write_scores_csv(path: &Path, reports: &[InfluenceReport]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "source_id,method,score")?;
    for r in reports {
        for (name, score) in r.source_names.iter().zip(&r.scores) {
            writeln!(w, "{name},{},{score}", r.method)?;
        }
    }
    Ok(())
}
