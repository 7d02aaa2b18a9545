//! Ground-truth influence by actual retraining, in both directions:
//! removal of a training source (train-to-test) and addition of the test
//! set (test-to-train), plus the linear-ramp group-corruption protocol.
//!
//! Oracle losses are per-example means of the pure data loss; the
//! regularizer belongs to the trainer, so it never enters a score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{per_example_losses, Dataset, ModelSpec, ParamVector};
use crate::train::{
    continual_update, train_deterministic, train_deterministic_from, train_sgd, Direction,
    TrainerConfig,
};

/// Disjoint, non-empty index sets over the training data, one per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePartition {
    sources: Vec<Vec<usize>>,
    names: Vec<String>,
}

impl SourcePartition {
    pub fn new(sources: Vec<Vec<usize>>, names: Vec<String>, n: usize) -> Result<Self> {
        if sources.len() != names.len() {
            return Err(Error::config("partition: sources/names length mismatch"));
        }
        let mut seen = vec![false; n];
        for (k, src) in sources.iter().enumerate() {
            if src.is_empty() {
                return Err(Error::config(format!("partition: source {k} is empty")));
            }
            for &i in src {
                if i >= n {
                    return Err(Error::config(format!("partition: index {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::config(format!("partition: index {i} in two sources")));
                }
                seen[i] = true;
            }
        }
        Ok(SourcePartition { sources, names })
    }

    /// One singleton source per training point, named by dataset id.
    pub fn singletons(data: &Dataset) -> Self {
        SourcePartition {
            sources: (0..data.len()).map(|i| vec![i]).collect(),
            names: data.ids().to_vec(),
        }
    }

    /// `n_groups` contiguous equal-size groups; the remainder goes to the
    /// last group.
    pub fn contiguous_groups(n: usize, n_groups: usize) -> Result<Self> {
        if n_groups == 0 || n_groups > n {
            return Err(Error::config("partition: need 1 <= n_groups <= n"));
        }
        let base = n / n_groups;
        if base == 0 {
            return Err(Error::config("partition: group size 0"));
        }
        let mut sources = Vec::with_capacity(n_groups);
        let mut names = Vec::with_capacity(n_groups);
        for g in 0..n_groups {
            let start = g * base;
            let end = if g + 1 == n_groups { n } else { start + base };
            sources.push((start..end).collect());
            names.push(format!("group-{g:03}"));
        }
        Ok(SourcePartition { sources, names })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn source(&self, i: usize) -> &[usize] {
        &self.sources[i]
    }

    pub fn sources(&self) -> &[Vec<usize>] {
        &self.sources
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// How the test set is added for the test-to-train oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdditionMode {
    /// Retrain on `D ∪ D_tst` from the usual init.
    Scratch,
    /// Warm-update the trained model on the test set only.
    Continual { k: usize, alpha: f64, direction: Direction },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub trainer: TrainerConfig,
    /// Training seeds averaged over; a deterministic trainer uses a single
    /// run regardless.
    pub seeds: Vec<u64>,
    pub addition_mode: AdditionMode,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("oracle: seeds must be non-empty"));
        }
        if let AdditionMode::Continual { alpha, .. } = self.addition_mode {
            if !(alpha > 0.0) {
                return Err(Error::config("oracle: continual alpha must be > 0"));
            }
        }
        Ok(())
    }

    fn run_seeds(&self) -> &[u64] {
        if self.trainer.is_deterministic() {
            &self.seeds[..1]
        } else {
            &self.seeds
        }
    }
}

/// Record of injected corruption, sufficient to reconstruct the original
/// labels exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionLog {
    pub entries: Vec<CorruptionEntry>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionEntry {
    pub index: usize,
    pub original_label: usize,
    pub new_label: usize,
    pub kind: CorruptionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Mislabel,
    LeakDuplicateOf { id: String },
}

impl CorruptionLog {
    pub fn validate(&self, n: usize) -> Result<()> {
        for e in &self.entries {
            if e.index >= n {
                return Err(Error::config(format!("corruption log: index {} out of range", e.index)));
            }
            if matches!(e.kind, CorruptionKind::Mislabel) && e.new_label == e.original_label {
                return Err(Error::config(format!(
                    "corruption log: mislabel at {} keeps its label",
                    e.index
                )));
            }
        }
        Ok(())
    }

    /// Undo recorded label flips, restoring the pre-corruption labels.
    pub fn restore_labels(&self, data: &Dataset) -> Result<Dataset> {
        let mut labels = data.labels().to_vec();
        for e in &self.entries {
            if e.index >= labels.len() {
                return Err(Error::config("corruption log does not match dataset"));
            }
            if matches!(e.kind, CorruptionKind::Mislabel) {
                labels[e.index] = e.original_label;
            }
        }
        data.with_labels(labels)
    }

    /// Indices carrying a mislabel entry, as a mask over `n` points.
    pub fn mislabel_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for e in &self.entries {
            if matches!(e.kind, CorruptionKind::Mislabel) && e.index < n {
                mask[e.index] = true;
            }
        }
        mask
    }
}

/// Train with the configured trainer. Deterministic trainers ignore the
/// seed; SGD reseeds its config with it.
pub fn fit(spec: &ModelSpec, data: &Dataset, trainer: &TrainerConfig, seed: u64) -> Result<ParamVector> {
    match trainer {
        TrainerConfig::Deterministic(cfg) => train_deterministic(spec, data, cfg),
        TrainerConfig::Sgd(cfg) => Ok(train_sgd(spec, data, &cfg.with_seed(seed))?.0),
    }
}

fn fit_warm(
    spec: &ModelSpec,
    data: &Dataset,
    trainer: &TrainerConfig,
    seed: u64,
    warm: &ParamVector,
) -> Result<ParamVector> {
    match trainer {
        TrainerConfig::Deterministic(cfg) => train_deterministic_from(spec, data, cfg, warm),
        TrainerConfig::Sgd(cfg) => Ok(train_sgd(spec, data, &cfg.with_seed(seed))?.0),
    }
}

/// Mean data loss over a whole dataset.
pub fn mean_data_loss(spec: &ModelSpec, params: &ParamVector, data: &Dataset) -> Result<f64> {
    let per = per_example_losses(spec, params, data)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

fn mean_loss_rows(spec: &ModelSpec, params: &ParamVector, data: &Dataset, rows: &[usize]) -> Result<f64> {
    let lv = crate::model::loss(&spec.with_l2(0.0), params, data, Some(rows), false)?;
    Ok(lv.mean)
}

/// Train-to-test influence of source `i`:
/// mean over seeds of `L(A(D), tst) − L(A(D∖Dᵢ), tst)`.
pub fn oracle_train_to_test(
    spec: &ModelSpec,
    data: &Dataset,
    part: &SourcePartition,
    i: usize,
    tst: &Dataset,
    cfg: &OracleConfig,
) -> Result<f64> {
    let all = oracle_train_to_test_all(spec, data, part, Some(&[i]), tst, cfg)?;
    Ok(all[0])
}

/// Train-to-test influence for several sources (all when `which` is None),
/// sharing the full-data model across sources. Retrainings fan out across
/// the thread pool; results are reduced in source order.
pub fn oracle_train_to_test_all(
    spec: &ModelSpec,
    data: &Dataset,
    part: &SourcePartition,
    which: Option<&[usize]>,
    tst: &Dataset,
    cfg: &OracleConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if tst.is_empty() {
        return Err(Error::config("oracle: empty test set"));
    }
    let indices: Vec<usize> = match which {
        Some(w) => w.to_vec(),
        None => (0..part.len()).collect(),
    };
    for &i in &indices {
        if i >= part.len() {
            return Err(Error::config(format!("oracle: source index {i} out of range")));
        }
        if part.source(i).len() >= data.len() {
            return Err(Error::config("oracle: removing source empties the training set"));
        }
    }
    let seeds = cfg.run_seeds();
    let mut totals = vec![0.0; indices.len()];
    for &seed in seeds {
        let full = fit(spec, data, &cfg.trainer, seed)?;
        let full_loss = mean_data_loss(spec, &full, tst)?;
        let per_source: Vec<Result<f64>> = indices
            .par_iter()
            .map(|&i| {
                let reduced = data.without(part.source(i))?;
                let wo = fit_warm(spec, &reduced, &cfg.trainer, seed, &full)?;
                Ok(full_loss - mean_data_loss(spec, &wo, tst)?)
            })
            .collect();
        for (t, r) in totals.iter_mut().zip(per_source) {
            *t += r? / seeds.len() as f64;
        }
    }
    Ok(totals)
}

/// Test-to-train influence of source `i`:
/// mean over seeds of `L(A(D ∪ tst), Dᵢ) − L(A(D), Dᵢ)`, with the union
/// model built per `addition_mode`.
pub fn oracle_test_to_train(
    spec: &ModelSpec,
    data: &Dataset,
    part: &SourcePartition,
    i: usize,
    tst: &Dataset,
    cfg: &OracleConfig,
) -> Result<f64> {
    let all = oracle_test_to_train_all(spec, data, part, Some(&[i]), tst, cfg)?;
    Ok(all[0])
}

/// Test-to-train influence for several sources (all when `which` is None).
pub fn oracle_test_to_train_all(
    spec: &ModelSpec,
    data: &Dataset,
    part: &SourcePartition,
    which: Option<&[usize]>,
    tst: &Dataset,
    cfg: &OracleConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if tst.is_empty() {
        return Err(Error::config("oracle: empty test set"));
    }
    let indices: Vec<usize> = match which {
        Some(w) => w.to_vec(),
        None => (0..part.len()).collect(),
    };
    for &i in &indices {
        if i >= part.len() {
            return Err(Error::config(format!("oracle: source index {i} out of range")));
        }
    }
    let seeds = cfg.run_seeds();
    let mut totals = vec![0.0; indices.len()];
    for &seed in seeds {
        let full = fit(spec, data, &cfg.trainer, seed)?;
        let plus = match &cfg.addition_mode {
            AdditionMode::Scratch => {
                let union = data.concat(tst)?;
                fit_warm(spec, &union, &cfg.trainer, seed, &full)?
            }
            AdditionMode::Continual { k, alpha, direction } => {
                continual_update(spec, &full, tst, *k, *alpha, *direction)?
            }
        };
        for (t, &i) in totals.iter_mut().zip(&indices) {
            let rows = part.source(i);
            let before = mean_loss_rows(spec, &full, data, rows)?;
            let after = mean_loss_rows(spec, &plus, data, rows)?;
            *t += (after - before) / seeds.len() as f64;
        }
    }
    Ok(totals)
}

/// Split `data` into `n_groups` contiguous equal-size groups and flip a
/// linearly increasing fraction of labels per group: group g gets ratio
/// `lo + g·(hi−lo)/(n_groups−1)`, flips uniform over wrong classes.
pub fn build_noisy_groups(
    data: &Dataset,
    n_groups: usize,
    ratio_lo: f64,
    ratio_hi: f64,
    seed: u64,
) -> Result<(Dataset, SourcePartition, CorruptionLog)> {
    if n_groups < 2 {
        return Err(Error::config("build_noisy_groups: need n_groups >= 2"));
    }
    if !(0.0..=1.0).contains(&ratio_lo) || !(0.0..=1.0).contains(&ratio_hi) || ratio_lo > ratio_hi {
        return Err(Error::config("build_noisy_groups: need 0 <= lo <= hi <= 1"));
    }
    if data.n_classes() < 2 {
        return Err(Error::config("build_noisy_groups: need at least 2 classes"));
    }
    let part = SourcePartition::contiguous_groups(data.len(), n_groups)?;
    let mut labels = data.labels().to_vec();
    let mut entries = Vec::new();
    let mut rng = crate::seed::rng(crate::seed::derive(seed, "noisy-groups"));
    let c = data.n_classes();
    for (g, src) in part.sources().iter().enumerate() {
        let ratio = ratio_lo + g as f64 * (ratio_hi - ratio_lo) / (n_groups - 1) as f64;
        let n_flip = (ratio * src.len() as f64).floor() as usize;
        let mut order = src.clone();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for &idx in order.iter().take(n_flip) {
            let original = labels[idx];
            let wrong = rand::Rng::random_range(&mut rng, 0..c - 1);
            let new_label = if wrong >= original { wrong + 1 } else { wrong };
            labels[idx] = new_label;
            entries.push(CorruptionEntry {
                index: idx,
                original_label: original,
                new_label,
                kind: CorruptionKind::Mislabel,
            });
        }
    }
    let mut corrupted = data.with_labels(labels)?;
    let mut group_of = vec![0usize; data.len()];
    for (g, src) in part.sources().iter().enumerate() {
        for &i in src {
            group_of[i] = g;
        }
    }
    corrupted.set_group_tags(group_of)?;
    Ok((corrupted, part, CorruptionLog { entries, seed }))
}
