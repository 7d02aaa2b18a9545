//! Trainers: damped Newton to tolerance for the convex setting, seeded
//! mini-batch SGD with checkpoint capture, and the continual-update step
//! that re-fits (or un-fits) a trained model on a new set of points.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{grad, init_params, loss, Dataset, ModelSpec, ParamVector};
use crate::seed;

/// Divergence guard shared by the iterative trainers.
const LOSS_CEILING: f64 = 1e6;

/// Convergence-to-tolerance training for the strictly convex case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetTrainConfig {
    /// Stop once ‖∇‖₂ of the regularized mean loss falls below this value.
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for DetTrainConfig {
    fn default() -> Self {
        DetTrainConfig { grad_tol: 1e-8, max_iters: 200 }
    }
}

impl DetTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::config("grad_tol must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be >= 1"));
        }
        Ok(())
    }
}

/// Seeded mini-batch SGD with momentum.
///
/// `weight_decay` is the L2 coefficient of the objective optimized here;
/// it supersedes the spec's `l2` during stochastic training so a single
/// knob controls the regularizer of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Capture a checkpoint every this many epochs.
    pub checkpoint_every: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        // lr 0.01, weight decay 0.001, momentum 0.9; batch size is not
        // dictated by anything upstream, 32 is the exposed default
        SgdConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.001,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            checkpoint_every: 1,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config("lr must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must be in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.checkpoint_every == 0 {
            return Err(Error::config("batch_size, epochs, checkpoint_every must be >= 1"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}

/// Parameter snapshot captured during SGD.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ParamVector,
    pub iter_index: usize,
    pub step_size: f64,
}

/// Gradient direction for [`continual_update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ascent,
    Descent,
}

/// Either trainer, for configs that accept both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerConfig {
    Deterministic(DetTrainConfig),
    Sgd(SgdConfig),
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            TrainerConfig::Deterministic(c) => c.validate(),
            TrainerConfig::Sgd(c) => c.validate(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, TrainerConfig::Deterministic(_))
    }
}

/// Train the convex model to `‖∇‖₂ ≤ grad_tol` by damped Newton with
/// backtracking, starting from the zero init.
pub fn train_deterministic(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &DetTrainConfig,
) -> Result<ParamVector> {
    train_deterministic_from(spec, data, cfg, &init_params(spec, 0))
}

/// Damped Newton from a warm start. Convergence is to the unique minimizer
/// of the strictly convex objective, so the start only affects cost.
pub fn train_deterministic_from(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &DetTrainConfig,
    start: &ParamVector,
) -> Result<ParamVector> {
    cfg.validate()?;
    if !matches!(spec, ModelSpec::MultinomialLogistic { .. }) {
        return Err(Error::config("train_deterministic requires the logistic spec"));
    }
    if data.is_empty() {
        return Err(Error::config("train_deterministic: empty dataset"));
    }
    let mut params = start.clone();
    let mut current = loss(spec, &params, data, None, false)?.mean;
    for _ in 0..cfg.max_iters {
        let g = grad(spec, &params, data, None)?;
        let gnorm = g.norm();
        if gnorm <= cfg.grad_tol {
            return Ok(params);
        }
        let h = crate::model::hessian(spec, &params, data)?;
        let step = crate::linalg::solve_spd(&h, g.values())?;
        let descent = g.values().dot(&step);
        // backtracking line search on the Newton direction
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = ParamVector::new(params.values() - &(t * &step))?;
            let trial_loss = loss(spec, &trial, data, None, false)?.mean;
            if trial_loss.is_finite() && trial_loss <= current - 1e-4 * t * descent {
                params = trial;
                current = trial_loss;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::numerical(format!(
                "newton line search stalled at grad norm {gnorm:.3e}"
            )));
        }
    }
    let gnorm = grad(spec, &params, data, None)?.norm();
    if gnorm <= cfg.grad_tol {
        Ok(params)
    } else {
        Err(Error::numerical(format!(
            "train_deterministic: max_iters={} exhausted, final grad norm {gnorm:.3e} > tol {:.3e}",
            cfg.max_iters, cfg.grad_tol
        )))
    }
}

/// Mini-batch SGD with one seeded permutation per epoch (stream keyed by
/// `(seed, epoch)`), momentum buffer, and checkpoints every
/// `checkpoint_every` epochs. The short final batch is kept.
pub fn train_sgd(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &SgdConfig,
) -> Result<(ParamVector, Vec<Checkpoint>)> {
    cfg.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::config("train_sgd: empty dataset"));
    }
    let objective = spec.with_l2(cfg.weight_decay);
    let n = data.len();
    let mut params = init_params(spec, seed::derive(cfg.seed, "init"));
    let mut velocity = Array1::<f64>::zeros(params.len());
    let mut checkpoints = Vec::new();
    let mut step_count = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = seed::rng(seed::derive_indexed(cfg.seed, "shuffle", epoch as u64));
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let g = grad(&objective, &params, data, Some(batch))?;
            velocity *= cfg.momentum;
            velocity += g.values();
            let next = params.values() - &(cfg.lr * &velocity);
            params = ParamVector::new(next)
                .map_err(|_| Error::numerical(format!("sgd diverged at step {step_count}")))?;
            step_count += 1;
        }
        let epoch_loss = loss(&objective, &params, data, None, false)?.mean;
        if !epoch_loss.is_finite() || epoch_loss > LOSS_CEILING {
            return Err(Error::numerical(format!(
                "sgd diverged at epoch {epoch}: loss {epoch_loss:.3e}"
            )));
        }
        if (epoch + 1) % cfg.checkpoint_every == 0 {
            checkpoints.push(Checkpoint {
                params: params.clone(),
                iter_index: step_count,
                step_size: cfg.lr,
            });
        }
    }
    Ok((params, checkpoints))
}

/// K full-batch gradient steps on `L(θ, tst)` (regularized mean loss).
/// Ascent adds `+α∇`, descent subtracts. `K = 0` returns the input
/// unchanged.
pub fn continual_update(
    spec: &ModelSpec,
    params: &ParamVector,
    tst: &Dataset,
    k: usize,
    alpha: f64,
    direction: Direction,
) -> Result<ParamVector> {
    if k == 0 {
        return Ok(params.clone());
    }
    if !(alpha > 0.0) {
        return Err(Error::config("continual_update: alpha must be > 0"));
    }
    if tst.is_empty() {
        return Err(Error::config("continual_update: empty test set"));
    }
    let sign = match direction {
        Direction::Ascent => 1.0,
        Direction::Descent => -1.0,
    };
    let mut current = params.clone();
    for step in 0..k {
        let g = grad(spec, &current, tst, None)?;
        let next = current.values() + &((sign * alpha) * g.values());
        current = ParamVector::new(next)
            .map_err(|_| Error::numerical(format!("diverged at step {step}")))?;
        let step_loss = loss(spec, &current, tst, None, false)?.mean;
        if !step_loss.is_finite() || step_loss > LOSS_CEILING {
            return Err(Error::numerical(format!("diverged at step {step}")));
        }
    }
    Ok(current)
}
