//! Influence score producers: the forward-pass scorer built on a short
//! test-set update, exact and LiSSA influence functions, TracIn, and the
//! self-influence variants used for mislabel screening.

mod influence;
mod tracin;

pub use influence::{if_lissa, if_lissa_detailed, if_pairwise, LissaConfig, LissaOutcome};
pub use tracin::tracin_pairwise;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{per_example_losses, Dataset, ModelSpec, ParamVector};
use crate::oracle::SourcePartition;
use crate::train::{continual_update, Checkpoint, Direction};

/// Wall-clock split of a scoring run: `backward_seconds` covers the K
/// test-set gradient steps, `forward_seconds` the per-source loss
/// evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TimingBreakdown {
    pub forward_seconds: f64,
    pub backward_seconds: f64,
    pub total_seconds: f64,
}

/// Per-source scores plus everything needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub method: String,
    /// Ordered by source index.
    pub scores: Vec<f64>,
    pub source_names: Vec<String>,
    /// Serialized estimator configuration (JSON).
    pub hyperparams: String,
    pub seeds: Vec<u64>,
    pub timing: TimingBreakdown,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl InfluenceReport {
    pub fn validate(&self) -> Result<()> {
        if self.scores.len() != self.source_names.len() {
            return Err(Error::config("report: scores/source_names length mismatch"));
        }
        if self.timing.forward_seconds < 0.0
            || self.timing.backward_seconds < 0.0
            || self.timing.total_seconds < 0.0
        {
            return Err(Error::config("report: negative timing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    /// Algorithm output as-is: higher = more influential under ascent.
    Raw,
    /// Negate ascent scores so the sign matches the addition oracle
    /// (the ε→0⁻ reading of the update).
    Mirrored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardInfConfig {
    pub k: usize,
    pub alpha: f64,
    pub direction: Direction,
    pub sign_mode: SignMode,
}

impl Default for ForwardInfConfig {
    fn default() -> Self {
        ForwardInfConfig {
            k: 2,
            alpha: 0.01,
            direction: Direction::Ascent,
            sign_mode: SignMode::Raw,
        }
    }
}

impl ForwardInfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k > 0 && !(self.alpha > 0.0) {
            return Err(Error::config("forward-inf: alpha must be > 0"));
        }
        Ok(())
    }

    fn maybe_mirror(&self, scores: &mut [f64]) {
        if self.sign_mode == SignMode::Mirrored && self.direction == Direction::Ascent {
            for s in scores.iter_mut() {
                *s = -*s;
            }
        }
    }
}

/// Forward-pass influence: update the trained model on the test set for K
/// steps, then score every source by its mean-loss difference between the
/// updated and original models.
///
/// The update and the scoring both use the pure data loss; the training
/// regularizer plays no part in scoring.
pub fn forward_inf(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    part: &SourcePartition,
    tst: &Dataset,
    cfg: &ForwardInfConfig,
) -> Result<InfluenceReport> {
    cfg.validate()?;
    if cfg.k > 0 && tst.is_empty() {
        return Err(Error::config("forward-inf: empty test set"));
    }
    let t_start = Instant::now();
    let data_spec = spec.with_l2(0.0);

    let t_backward = Instant::now();
    let updated = continual_update(&data_spec, params, tst, cfg.k, cfg.alpha, cfg.direction)?;
    let backward_seconds = t_backward.elapsed().as_secs_f64();

    let t_forward = Instant::now();
    let before = per_example_losses(&data_spec, params, data)?;
    let after = per_example_losses(&data_spec, &updated, data)?;
    // aggregate exactly as a per-source mean-loss call would, so the
    // scores reproduce the two-forward-passes composition bit for bit
    let mut scores: Vec<f64> = part
        .sources()
        .iter()
        .map(|src| {
            let len = src.len() as f64;
            let mean_after = src.iter().map(|&i| after[i]).sum::<f64>() / len;
            let mean_before = src.iter().map(|&i| before[i]).sum::<f64>() / len;
            mean_after - mean_before
        })
        .collect();
    let forward_seconds = t_forward.elapsed().as_secs_f64();

    cfg.maybe_mirror(&mut scores);
    Ok(InfluenceReport {
        method: "forward-inf".into(),
        scores,
        source_names: part.names().to_vec(),
        hyperparams: serde_json::to_string(cfg)?,
        seeds: vec![],
        timing: TimingBreakdown {
            forward_seconds,
            backward_seconds,
            total_seconds: t_start.elapsed().as_secs_f64(),
        },
        warnings: vec![],
    })
}

/// Inputs for the self-influence variants (every training point scored
/// against itself).
pub enum SelfInfluenceMethod<'a> {
    /// One update on the full training set, then per-point loss deltas.
    ForwardInf { params: &'a ParamVector, cfg: &'a ForwardInfConfig },
    /// Σ_c η_c ‖∇ℓ(θ_c, z)‖² over the checkpoints.
    TracIn { checkpoints: &'a [Checkpoint] },
    /// (1/n)·∇ℓᵀ H⁻¹ ∇ℓ, positive for ranking.
    InfluenceFunction { params: &'a ParamVector },
}

pub fn self_influence(
    spec: &ModelSpec,
    data: &Dataset,
    method: SelfInfluenceMethod<'_>,
) -> Result<InfluenceReport> {
    if data.is_empty() {
        return Err(Error::config("self-influence: empty dataset"));
    }
    let t_start = Instant::now();
    match method {
        SelfInfluenceMethod::ForwardInf { params, cfg } => {
            cfg.validate()?;
            let data_spec = spec.with_l2(0.0);
            let t_backward = Instant::now();
            let updated =
                continual_update(&data_spec, params, data, cfg.k, cfg.alpha, cfg.direction)?;
            let backward_seconds = t_backward.elapsed().as_secs_f64();
            let t_forward = Instant::now();
            let before = per_example_losses(&data_spec, params, data)?;
            let after = per_example_losses(&data_spec, &updated, data)?;
            let mut scores: Vec<f64> =
                before.iter().zip(&after).map(|(b, a)| a - b).collect();
            let forward_seconds = t_forward.elapsed().as_secs_f64();
            cfg.maybe_mirror(&mut scores);
            Ok(InfluenceReport {
                method: "forward-inf-self".into(),
                scores,
                source_names: data.ids().to_vec(),
                hyperparams: serde_json::to_string(cfg)?,
                seeds: vec![],
                timing: TimingBreakdown {
                    forward_seconds,
                    backward_seconds,
                    total_seconds: t_start.elapsed().as_secs_f64(),
                },
                warnings: vec![],
            })
        }
        SelfInfluenceMethod::TracIn { checkpoints } => {
            if checkpoints.is_empty() {
                return Err(Error::config("tracin-self: no checkpoints"));
            }
            let scores: Vec<f64> = (0..data.len())
                .into_par_iter()
                .map(|i| {
                    let mut total = 0.0;
                    for c in checkpoints {
                        let g = crate::model::grad_one(spec, &c.params, data, i)?;
                        total += c.step_size * g.values().dot(g.values());
                    }
                    Ok(total)
                })
                .collect::<Result<_>>()?;
            Ok(InfluenceReport {
                method: "tracin-self".into(),
                scores,
                source_names: data.ids().to_vec(),
                hyperparams: format!("{{\"checkpoints\":{}}}", checkpoints.len()),
                seeds: vec![],
                timing: TimingBreakdown {
                    total_seconds: t_start.elapsed().as_secs_f64(),
                    ..Default::default()
                },
                warnings: vec![],
            })
        }
        SelfInfluenceMethod::InfluenceFunction { params } => {
            let h = crate::model::hessian(spec, params, data)?;
            let l = crate::linalg::cholesky(&h)?;
            let n = data.len() as f64;
            let scores: Vec<f64> = (0..data.len())
                .into_par_iter()
                .map(|i| {
                    let g = crate::model::grad_one(spec, params, data, i)?;
                    let x = crate::linalg::cholesky_solve(&l, g.values());
                    Ok(g.values().dot(&x) / n)
                })
                .collect::<Result<_>>()?;
            Ok(InfluenceReport {
                method: "if-self".into(),
                scores,
                source_names: data.ids().to_vec(),
                hyperparams: "{}".into(),
                seeds: vec![],
                timing: TimingBreakdown {
                    total_seconds: t_start.elapsed().as_secs_f64(),
                    ..Default::default()
                },
                warnings: vec![],
            })
        }
    }
}

#[cfg(test)]
mod tests;
