//! Training-data influence estimation built around forward passes.
//!
//! The central scorer updates a trained model with a few gradient-ascent
//! steps on the test set and then measures per-source loss differences with
//! forward passes only. Retraining oracles, influence functions (exact and
//! LiSSA), and TracIn are provided alongside for validation, plus the
//! corruption/leakage protocols and correlation analysis used to compare
//! them.

pub mod error;
pub mod estimate;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod seed;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
pub use estimate::{
    forward_inf, if_lissa, if_lissa_detailed, if_pairwise, self_influence, tracin_pairwise,
    ForwardInfConfig, InfluenceReport, LissaConfig, LissaOutcome, SelfInfluenceMethod, SignMode,
    TimingBreakdown,
};
pub use model::{
    grad, grad_one, grad_sample, hessian, hvp, init_params, loss, loss_sample, param_count,
    per_example_losses, Activation, Dataset, LossValue, ModelSpec, ParamVector, Sample,
};
pub use stats::{
    bench_passes, correlate, detection_curve, pearson, spearman, topk_detection,
    CorrelationResult, DetectionCurve, PassBench,
};
pub use oracle::{
    build_noisy_groups, oracle_test_to_train, oracle_test_to_train_all, oracle_train_to_test,
    oracle_train_to_test_all, AdditionMode, CorruptionEntry, CorruptionKind, CorruptionLog,
    OracleConfig, SourcePartition,
};
pub use harness::{
    blobs, inject_leak, inject_mislabels, load_dataset, run_experiment, tune_forward_inf,
    DatasetDescriptor, Experiment, ExperimentConfig, ExperimentReport, RunManifest, TuneResult,
};
pub use train::{
    continual_update, train_deterministic, train_deterministic_from, train_sgd, Checkpoint,
    DetTrainConfig, Direction, SgdConfig, TrainerConfig,
};
