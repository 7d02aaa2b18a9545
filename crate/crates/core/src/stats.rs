//! Correlation statistics, ranking-based detection metrics, and the
//! forward/backward pass timing benchmark.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::InfluenceReport;
use crate::model::{grad_sample, loss_sample, Dataset, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub pearson: f64,
    pub spearman: f64,
    pub n_pairs: usize,
}

/// Compute both correlation coefficients for a pair of score vectors.
pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    Ok(CorrelationResult { pearson: pearson(x, y)?, spearman: spearman(x, y)?, n_pairs: x.len() })
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::config("pearson: need two equal-length vectors, length >= 2"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::numerical("undefined correlation: zero variance"));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Average ranks, with ties receiving the mean of the positions they span.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite scores"));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::config("spearman: need two equal-length vectors, length >= 2"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Descending-score order with ties broken by ascending source index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b))
    });
    order
}

/// Fraction of `truth_ids` ranked within the top `k` of the report.
pub fn topk_detection(report: &InfluenceReport, truth_ids: &[String], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("topk: k must be >= 1"));
    }
    if truth_ids.is_empty() {
        return Err(Error::config("topk: empty truth set"));
    }
    let positions: std::collections::HashMap<&str, usize> = report
        .source_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut truth_indices = HashSet::new();
    for id in truth_ids {
        match positions.get(id.as_str()) {
            Some(&i) => {
                truth_indices.insert(i);
            }
            None => return Err(Error::config(format!("topk: unknown truth id {id:?}"))),
        }
    }
    let order = ranking(&report.scores);
    let hits = order.iter().take(k).filter(|i| truth_indices.contains(i)).count();
    Ok(hits as f64 / truth_ids.len() as f64)
}

/// Cumulative fraction of corrupted sources found while inspecting in
/// descending-score order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCurve {
    pub inspected_fraction: Vec<f64>,
    pub found_fraction: Vec<f64>,
}

impl DetectionCurve {
    /// Found-fraction at the largest inspected fraction <= `frac`.
    pub fn found_at(&self, frac: f64) -> f64 {
        let mut best = 0.0;
        for (x, y) in self.inspected_fraction.iter().zip(&self.found_fraction) {
            if *x <= frac + 1e-12 {
                best = *y;
            }
        }
        best
    }
}

pub fn detection_curve(report: &InfluenceReport, corrupt_mask: &[bool]) -> Result<DetectionCurve> {
    let n = report.scores.len();
    if corrupt_mask.len() != n {
        return Err(Error::config("detection curve: mask length mismatch"));
    }
    let total = corrupt_mask.iter().filter(|&&b| b).count();
    if total == 0 {
        return Err(Error::config("detection curve: no corrupted sources"));
    }
    let order = ranking(&report.scores);
    let mut found = 0usize;
    let mut inspected_fraction = Vec::with_capacity(n);
    let mut found_fraction = Vec::with_capacity(n);
    for (steps, &i) in order.iter().enumerate() {
        if corrupt_mask[i] {
            found += 1;
        }
        inspected_fraction.push((steps + 1) as f64 / n as f64);
        found_fraction.push(found as f64 / total as f64);
    }
    Ok(DetectionCurve { inspected_fraction, found_fraction })
}

/// Median per-point wall time of a forward (loss) pass vs a backward
/// (gradient) pass, both on the single-sample path. Runs single-threaded;
/// one warm-up repeat per side is discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassBench {
    pub forward_per_point_s: f64,
    pub backward_per_point_s: f64,
    pub ratio: f64,
}

pub fn bench_passes(
    spec: &ModelSpec,
    data: &Dataset,
    tst: &Dataset,
    repeats: usize,
) -> Result<PassBench> {
    if repeats < 3 {
        return Err(Error::config("bench: repeats must be >= 3"));
    }
    if data.is_empty() || tst.is_empty() {
        return Err(Error::config("bench: empty dataset"));
    }
    let params = crate::model::init_params(spec, 7);
    // warm-up on the test rows
    for i in 0..tst.len() {
        let s = tst.sample(i);
        let _ = loss_sample(spec, &params, &s)?;
        let _ = grad_sample(spec, &params, &s)?;
    }
    let samples: Vec<_> = (0..data.len()).map(|i| data.sample(i)).collect();
    let mut forward = Vec::with_capacity(repeats);
    let mut backward = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        let mut acc = 0.0;
        for s in &samples {
            acc += loss_sample(spec, &params, s)?;
        }
        forward.push(t.elapsed().as_secs_f64() / samples.len() as f64);
        std::hint::black_box(acc);

        let t = Instant::now();
        let mut acc = 0.0;
        for s in &samples {
            acc += grad_sample(spec, &params, s)?.values()[0];
        }
        backward.push(t.elapsed().as_secs_f64() / samples.len() as f64);
        std::hint::black_box(acc);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let f = median(&mut forward);
    let b = median(&mut backward);
    Ok(PassBench { forward_per_point_s: f, backward_per_point_s: b, ratio: b / f })
}
