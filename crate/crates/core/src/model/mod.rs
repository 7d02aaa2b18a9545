//! Differentiable small-model zoo: multinomial logistic regression and a
//! dense MLP, with losses, gradients, and (for the convex case) exact
//! Hessians and Hessian-vector products.
//!
//! All arithmetic is f64. Every operation here is a pure function of its
//! arguments and safe to call concurrently.
//!
//! Parameter layout is flat and fixed:
//! - logistic: weight matrix `W` (C×d, row-major), then biases (C)
//! - MLP: per layer, `W_l` (out×in, row-major) then `b_l` (out),
//!   layers in forward order, with the class layer last
//!
//! Batch means include the `λ/2‖θ‖²` regularizer; per-example losses and
//! per-example gradients are pure data terms. The regularizer belongs to
//! training, not to the influence of a datum.

mod logistic;
mod mlp;

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// A labelled dataset: n feature rows, integer class labels, stable ids,
/// and optional source-group tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    ids: Vec<String>,
    n_classes: usize,
    group_of: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        ids: Vec<String>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || ids.len() != n {
            return Err(Error::config(format!(
                "dataset: {} feature rows, {} labels, {} ids",
                n,
                labels.len(),
                ids.len()
            )));
        }
        if n_classes == 0 {
            return Err(Error::config("dataset: n_classes must be >= 1"));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::config(format!(
                "dataset: label {l} at row {i} out of range [0, {n_classes})"
            )));
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::config(format!("dataset: non-finite feature value {v}")));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::config(format!("dataset: duplicate id {id:?}")));
            }
        }
        Ok(Dataset { features, labels, ids, n_classes, group_of: None })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn group_of(&self) -> Option<&[usize]> {
        self.group_of.as_deref()
    }

    pub fn set_group_tags(&mut self, group_of: Vec<usize>) -> Result<()> {
        if group_of.len() != self.len() {
            return Err(Error::config("group tags: length mismatch"));
        }
        self.group_of = Some(group_of);
        Ok(())
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample { features: self.features.row(i).to_owned(), label: self.labels[i] }
    }

    /// Rows at `indices`, in the given order. Group tags are dropped.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        for &i in indices {
            if i >= self.len() {
                return Err(Error::config(format!("subset: index {i} out of range")));
            }
        }
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        Dataset::new(features, labels, ids, self.n_classes)
    }

    /// All rows except those at `excluded`.
    pub fn without(&self, excluded: &[usize]) -> Result<Dataset> {
        let excluded: HashSet<usize> = excluded.iter().copied().collect();
        let keep: Vec<usize> = (0..self.len()).filter(|i| !excluded.contains(i)).collect();
        self.subset(&keep)
    }

    /// Stack two datasets. Ids must stay pairwise distinct.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dim() != other.dim() {
            return Err(Error::config(format!(
                "concat: dimension mismatch {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let n_classes = self.n_classes.max(other.n_classes);
        let features = ndarray::concatenate(Axis(0), &[self.features(), other.features()])
            .map_err(|e| Error::config(format!("concat: {e}")))?;
        let labels = self.labels.iter().chain(&other.labels).copied().collect();
        let ids = self.ids.iter().chain(&other.ids).cloned().collect();
        Dataset::new(features, labels, ids, n_classes)
    }

    /// Same rows with replacement labels (corruption injection).
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset> {
        let mut out =
            Dataset::new(self.features.clone(), labels, self.ids.clone(), self.n_classes)?;
        if let Some(g) = &self.group_of {
            out.group_of = Some(g.clone());
        }
        Ok(out)
    }
}

/// One labelled point, detached from any dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Array1<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Architecture descriptor. `l2` is the coefficient of the `λ/2‖θ‖²`
/// term in the training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    MultinomialLogistic {
        input_dim: usize,
        n_classes: usize,
        l2: f64,
    },
    Mlp {
        /// Input width followed by hidden widths; the class layer is appended.
        layer_widths: Vec<usize>,
        activation: Activation,
        n_classes: usize,
        l2: f64,
    },
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, n_classes: usize, l2: f64) -> Self {
        ModelSpec::MultinomialLogistic { input_dim, n_classes, l2 }
    }

    pub fn mlp(layer_widths: Vec<usize>, activation: Activation, n_classes: usize, l2: f64) -> Self {
        ModelSpec::Mlp { layer_widths, activation, n_classes, l2 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::MultinomialLogistic { input_dim, n_classes, l2 } => {
                if *input_dim == 0 || *n_classes < 2 {
                    return Err(Error::config("logistic: need input_dim >= 1 and n_classes >= 2"));
                }
                if !(*l2 >= 0.0) {
                    return Err(Error::config("logistic: l2 must be >= 0"));
                }
            }
            ModelSpec::Mlp { layer_widths, n_classes, l2, .. } => {
                if layer_widths.is_empty() || layer_widths.iter().any(|&w| w == 0) {
                    return Err(Error::config("mlp: layer widths must be non-empty and positive"));
                }
                if *n_classes < 2 {
                    return Err(Error::config("mlp: n_classes >= 2"));
                }
                if !(*l2 >= 0.0) {
                    return Err(Error::config("mlp: l2 must be >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::MultinomialLogistic { input_dim, .. } => *input_dim,
            ModelSpec::Mlp { layer_widths, .. } => layer_widths[0],
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            ModelSpec::MultinomialLogistic { n_classes, .. } => *n_classes,
            ModelSpec::Mlp { n_classes, .. } => *n_classes,
        }
    }

    pub fn l2(&self) -> f64 {
        match self {
            ModelSpec::MultinomialLogistic { l2, .. } => *l2,
            ModelSpec::Mlp { l2, .. } => *l2,
        }
    }

    pub fn with_l2(&self, l2: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            ModelSpec::MultinomialLogistic { l2: x, .. } => *x = l2,
            ModelSpec::Mlp { l2: x, .. } => *x = l2,
        }
        s
    }

    /// Exact flat parameter count.
    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::MultinomialLogistic { input_dim, n_classes, .. } => {
                input_dim * n_classes + n_classes
            }
            ModelSpec::Mlp { layer_widths, n_classes, .. } => {
                let mut dims = layer_widths.clone();
                dims.push(*n_classes);
                dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
            }
        }
    }
}

/// Flat real parameter vector for a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Array1<f64>,
}

impl ParamVector {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("param vector: non-finite entry {v}")));
        }
        Ok(ParamVector { values })
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector { values: Array1::zeros(len) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.dot(&self.values).sqrt()
    }
}

/// Loss over a batch. `mean` is the batch mean including the L2 term;
/// `per_example` holds the pure data losses when requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub mean: f64,
    pub per_example: Option<Vec<f64>>,
}

pub fn param_count(spec: &ModelSpec) -> usize {
    spec.param_count()
}

/// Initial parameters: zeros for logistic (deterministic regardless of
/// seed), seeded uniform `[-1/√fan_in, 1/√fan_in]` per layer for the MLP.
pub fn init_params(spec: &ModelSpec, seed_value: u64) -> ParamVector {
    match spec {
        ModelSpec::MultinomialLogistic { .. } => ParamVector::zeros(spec.param_count()),
        ModelSpec::Mlp { layer_widths, n_classes, .. } => {
            let mut dims = layer_widths.clone();
            dims.push(*n_classes);
            let mut rng = seed::rng(seed_value);
            let mut values = Vec::with_capacity(spec.param_count());
            for w in dims.windows(2) {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = rand_distr::Uniform::new_inclusive(-bound, bound).unwrap();
                for _ in 0..fan_out * fan_in + fan_out {
                    values.push(rand::Rng::sample(&mut rng, dist));
                }
            }
            ParamVector { values: Array1::from_vec(values) }
        }
    }
}

fn check_shapes(spec: &ModelSpec, params: &ParamVector, data: &Dataset) -> Result<()> {
    spec.validate()?;
    if params.len() != spec.param_count() {
        return Err(Error::config(format!(
            "params length {} != param_count {}",
            params.len(),
            spec.param_count()
        )));
    }
    if data.dim() != spec.input_dim() {
        return Err(Error::config(format!(
            "data dim {} != model input dim {}",
            data.dim(),
            spec.input_dim()
        )));
    }
    if data.n_classes() > spec.n_classes() {
        return Err(Error::config(format!(
            "data has {} classes, model {}",
            data.n_classes(),
            spec.n_classes()
        )));
    }
    Ok(())
}

/// Gather the batch view: `None` means the whole dataset.
fn batch_rows(data: &Dataset, indices: Option<&[usize]>) -> Result<(Array2<f64>, Vec<usize>)> {
    match indices {
        None => {
            if data.is_empty() {
                return Err(Error::config("empty batch"));
            }
            Ok((data.features().to_owned(), data.labels().to_vec()))
        }
        Some(idx) => {
            if idx.is_empty() {
                return Err(Error::config("empty batch"));
            }
            for &i in idx {
                if i >= data.len() {
                    return Err(Error::config(format!("batch index {i} out of range")));
                }
            }
            let rows = data.features().select(Axis(0), idx);
            let labels = idx.iter().map(|&i| data.label(i)).collect();
            Ok((rows, labels))
        }
    }
}

/// Mean cross-entropy over the selected rows plus the L2 term.
/// Per-example losses (when requested) exclude the L2 term.
pub fn loss(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    indices: Option<&[usize]>,
    want_per_example: bool,
) -> Result<LossValue> {
    check_shapes(spec, params, data)?;
    let (rows, labels) = batch_rows(data, indices)?;
    let logits = forward_logits(spec, params, &rows);
    let per = ce_per_example(&logits, &labels);
    let data_mean = per.iter().sum::<f64>() / per.len() as f64;
    let l2_term = 0.5 * spec.l2() * params.values().dot(params.values());
    Ok(LossValue {
        mean: data_mean + l2_term,
        per_example: want_per_example.then_some(per),
    })
}

/// Per-example data losses over the whole dataset — the forward-pass
/// primitive used by the influence scorers. No L2 term.
pub fn per_example_losses(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
) -> Result<Vec<f64>> {
    check_shapes(spec, params, data)?;
    if data.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let logits = forward_logits_view(spec, params, data.features());
    Ok(ce_per_example(&logits, data.labels()))
}

/// Gradient of the batch-mean loss (including the L2 term).
pub fn grad(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    indices: Option<&[usize]>,
) -> Result<ParamVector> {
    check_shapes(spec, params, data)?;
    let (rows, labels) = batch_rows(data, indices)?;
    let mut g = match spec {
        ModelSpec::MultinomialLogistic { .. } => logistic::grad_batch(spec, params, &rows, &labels),
        ModelSpec::Mlp { .. } => mlp::grad_batch(spec, params, &rows, &labels),
    };
    if spec.l2() > 0.0 {
        g.scaled_add(spec.l2(), params.values());
    }
    ParamVector::new(g)
}

/// Data loss of one detached sample via the single-row (matvec) path.
pub fn loss_sample(spec: &ModelSpec, params: &ParamVector, sample: &Sample) -> Result<f64> {
    spec.validate()?;
    if params.len() != spec.param_count() {
        return Err(Error::config("loss_sample: params length mismatch"));
    }
    if sample.features.len() != spec.input_dim() {
        return Err(Error::config("loss_sample: feature length mismatch"));
    }
    if sample.label >= spec.n_classes() {
        return Err(Error::config("loss_sample: label out of range"));
    }
    let rows = sample
        .features
        .view()
        .into_shape_with_order((1, sample.features.len()))
        .expect("row shape");
    let logits = forward_logits_view(spec, params, rows);
    Ok(ce_per_example(&logits, &[sample.label])[0])
}

/// Per-example gradient of one training row: pure data term, no L2.
pub fn grad_one(spec: &ModelSpec, params: &ParamVector, data: &Dataset, index: usize) -> Result<ParamVector> {
    if index >= data.len() {
        return Err(Error::config(format!("grad_one: index {index} out of range")));
    }
    grad_sample(spec, params, &data.sample(index))
}

/// Per-example gradient of a detached sample: pure data term, no L2.
pub fn grad_sample(spec: &ModelSpec, params: &ParamVector, sample: &Sample) -> Result<ParamVector> {
    spec.validate()?;
    if params.len() != spec.param_count() {
        return Err(Error::config("grad_sample: params length mismatch"));
    }
    if sample.features.len() != spec.input_dim() {
        return Err(Error::config("grad_sample: feature length mismatch"));
    }
    if sample.label >= spec.n_classes() {
        return Err(Error::config("grad_sample: label out of range"));
    }
    let g = match spec {
        ModelSpec::MultinomialLogistic { .. } => logistic::grad_sample(spec, params, sample),
        ModelSpec::Mlp { .. } => mlp::grad_sample(spec, params, sample),
    };
    ParamVector::new(g)
}

/// Exact dense Hessian of the mean loss (including the `λI` contribution).
/// Logistic only.
pub fn hessian(spec: &ModelSpec, params: &ParamVector, data: &Dataset) -> Result<Array2<f64>> {
    match spec {
        ModelSpec::MultinomialLogistic { .. } => {
            check_shapes(spec, params, data)?;
            if data.is_empty() {
                return Err(Error::config("empty batch"));
            }
            Ok(logistic::hessian(spec, params, data))
        }
        ModelSpec::Mlp { .. } => Err(Error::config("hessian unsupported for spec")),
    }
}

/// Hessian-vector product without materializing the Hessian. Logistic only.
pub fn hvp(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    v: &Array1<f64>,
) -> Result<Array1<f64>> {
    match spec {
        ModelSpec::MultinomialLogistic { .. } => {
            check_shapes(spec, params, data)?;
            if data.is_empty() {
                return Err(Error::config("empty batch"));
            }
            if v.len() != spec.param_count() {
                return Err(Error::config("hvp: vector length mismatch"));
            }
            Ok(logistic::hvp(spec, params, data.features(), v))
        }
        ModelSpec::Mlp { .. } => Err(Error::config("hvp unsupported for spec")),
    }
}

/// Batched hvp over a row subset (stochastic LiSSA support).
pub fn hvp_rows(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    rows: &[usize],
    v: &Array1<f64>,
) -> Result<Array1<f64>> {
    match spec {
        ModelSpec::MultinomialLogistic { .. } => {
            check_shapes(spec, params, data)?;
            if rows.is_empty() {
                return Err(Error::config("empty batch"));
            }
            let gathered = data.features().select(Axis(0), rows);
            Ok(logistic::hvp(spec, params, gathered.view(), v))
        }
        ModelSpec::Mlp { .. } => Err(Error::config("hvp unsupported for spec")),
    }
}

fn forward_logits(spec: &ModelSpec, params: &ParamVector, rows: &Array2<f64>) -> Array2<f64> {
    forward_logits_view(spec, params, rows.view())
}

fn forward_logits_view(
    spec: &ModelSpec,
    params: &ParamVector,
    rows: ArrayView2<'_, f64>,
) -> Array2<f64> {
    match spec {
        ModelSpec::MultinomialLogistic { .. } => logistic::logits(spec, params, rows),
        ModelSpec::Mlp { .. } => mlp::logits(spec, params, rows),
    }
}

/// Stable softmax cross-entropy per row.
fn ce_per_example(logits: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(labels.len());
    for (row, &y) in logits.outer_iter().zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
        out.push(lse - row[y]);
    }
    out
}

/// Softmax probabilities per row, numerically stable.
pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.outer_iter_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for z in row.iter_mut() {
            *z = (*z - m).exp();
            s += *z;
        }
        row.mapv_inplace(|z| z / s);
    }
    p
}
