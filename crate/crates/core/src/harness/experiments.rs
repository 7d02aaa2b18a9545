//! The experiment pipelines behind `run_experiment`.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::{
    forward_inf, self_influence, tracin_pairwise, InfluenceReport, SelfInfluenceMethod,
    TimingBreakdown,
};
use crate::model::{loss_sample, per_example_losses, Dataset, ModelSpec};
use crate::oracle::{
    build_noisy_groups, fit, oracle_test_to_train_all, oracle_train_to_test_all, AdditionMode,
    CorruptionLog, OracleConfig, SourcePartition,
};
use crate::stats::{bench_passes, correlate, detection_curve, ranking};
use crate::train::{train_deterministic_from, train_sgd, Direction, TrainerConfig};

use super::{inject_leak, inject_mislabels, Experiment, ExperimentConfig, ExperimentReport, RunManifest};

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("stage {name}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("stage {name}: {m}")),
        other => other,
    })
}

pub(super) fn run(
    cfg: &ExperimentConfig,
    data: &Dataset,
    manifest: &mut RunManifest,
) -> Result<(ExperimentReport, Option<CorruptionLog>)> {
    match cfg.experiment {
        Experiment::CorrPoint => corr_point(cfg, data, manifest),
        Experiment::CorrGroup => corr_group(cfg, data, manifest, false),
        Experiment::FwdVsOracle => corr_group(cfg, data, manifest, true),
        Experiment::ContinualVsScratch => continual_vs_scratch(cfg, data, manifest),
        Experiment::Leakage => leakage(cfg, data, manifest),
        Experiment::Mislabel => mislabel(cfg, data, manifest),
        Experiment::Bench => bench(cfg, data, manifest),
    }
}

/// Carve the held-out rows off the end of the loaded dataset.
fn split_train_test(data: &Dataset, test_size: usize) -> Result<(Dataset, Dataset)> {
    if test_size >= data.len() {
        return Err(Error::config("protocol: test_size leaves no training data"));
    }
    let split = data.len() - test_size;
    let train = data.subset(&(0..split).collect::<Vec<_>>())?;
    let test = data.subset(&(split..data.len()).collect::<Vec<_>>())?;
    Ok((train, test))
}

fn record_stage(manifest: &mut RunManifest, name: &str, t: Instant) {
    manifest
        .wall_clock_seconds
        .insert(name.to_string(), t.elapsed().as_secs_f64());
}

fn oracle_seeds(cfg: &ExperimentConfig, manifest: &mut RunManifest) -> Vec<u64> {
    (0..cfg.protocol.n_oracle_seeds.max(1))
        .map(|i| {
            let s = crate::seed::derive_indexed(cfg.root_seed, "oracle-seed", i as u64);
            manifest.derived_seeds.insert(format!("oracle-seed-{i}"), s);
            s
        })
        .collect()
}

fn report_from_scores(
    method: &str,
    scores: Vec<f64>,
    names: &[String],
    hyperparams: String,
    seeds: Vec<u64>,
    total_seconds: f64,
) -> InfluenceReport {
    InfluenceReport {
        method: method.to_string(),
        scores,
        source_names: names.to_vec(),
        hyperparams,
        seeds,
        timing: TimingBreakdown { total_seconds, ..Default::default() },
        warnings: vec![],
    }
}

/// Point-to-point oracles in the convergence-trained setting: every
/// training point is scored against each of the highest-loss test points
/// by actual retraining, in both directions, and the two score vectors
/// are correlated per test point.
fn corr_point(
    cfg: &ExperimentConfig,
    data: &Dataset,
    manifest: &mut RunManifest,
) -> Result<(ExperimentReport, Option<CorruptionLog>)> {
    let TrainerConfig::Deterministic(det) = &cfg.trainer else {
        return Err(Error::config("corr-point: requires the deterministic trainer"));
    };
    let (train, test_pool) = split_train_test(data, cfg.protocol.test_size)?;
    let spec = &cfg.model;
    let mut report = ExperimentReport::new(cfg.experiment);

    let t = Instant::now();
    let theta = stage("train", fit(spec, &train, &cfg.trainer, 0))?;
    record_stage(manifest, "train", t);

    // highest-loss test points, ties broken by index
    let pool_losses = per_example_losses(spec, &theta, &test_pool)?;
    let order = ranking(&pool_losses);
    let chosen: Vec<usize> = order.into_iter().take(cfg.protocol.n_test_points).collect();

    // one leave-one-out model per training point, shared across test points
    let t = Instant::now();
    let loo: Vec<crate::model::ParamVector> = stage(
        "loo-retrain",
        (0..train.len())
            .into_par_iter()
            .map(|i| {
                let reduced = train.without(&[i])?;
                train_deterministic_from(spec, &reduced, det, &theta)
            })
            .collect(),
    )?;
    record_stage(manifest, "loo-retrain", t);

    let t = Instant::now();
    let mut pearsons = Vec::new();
    let mut spearmans = Vec::new();
    for &ti in &chosen {
        let z = test_pool.sample(ti);
        let tst_id = test_pool.id(ti);
        let full_loss = loss_sample(spec, &theta, &z)?;
        let eq1: Vec<f64> = loo
            .par_iter()
            .map(|wo| Ok(full_loss - loss_sample(spec, wo, &z)?))
            .collect::<Result<_>>()?;

        let single = test_pool.subset(&[ti])?;
        let union = train.concat(&single)?;
        let plus = stage("union-retrain", train_deterministic_from(spec, &union, det, &theta))?;
        let before = per_example_losses(spec, &theta, &train)?;
        let after = per_example_losses(spec, &plus, &train)?;
        let eq2: Vec<f64> = before.iter().zip(&after).map(|(b, a)| a - b).collect();

        let c = stage("correlate", correlate(&eq1, &eq2))?;
        pearsons.push(c.pearson);
        spearmans.push(c.spearman);
        report.correlations.insert(format!("eq1_vs_eq2:tst={tst_id}"), c);
        report.reports.push(report_from_scores(
            &format!("oracle-t2t:tst={tst_id}"),
            eq1,
            train.ids(),
            "{}".into(),
            vec![0],
            0.0,
        ));
        report.reports.push(report_from_scores(
            &format!("oracle-tst2trn:tst={tst_id}"),
            eq2,
            train.ids(),
            "{}".into(),
            vec![0],
            0.0,
        ));
    }
    record_stage(manifest, "oracles", t);

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    report.metrics.insert("pearson_mean".into(), mean(&pearsons));
    report.metrics.insert("spearman_mean".into(), mean(&spearmans));
    report.metrics.insert("n_test_points".into(), chosen.len() as f64);
    report.metrics.insert("n_retrainings".into(), (train.len() + chosen.len() + 1) as f64);
    Ok((report, None))
}

/// The linear-ramp group corruption protocol: 30 groups, mislabel ratios
/// 0→1, both retraining oracles at group granularity, seed-averaged.
/// With `with_forward` the forward scorer runs on the same models and is
/// correlated against the addition oracle.
fn corr_group(
    cfg: &ExperimentConfig,
    data: &Dataset,
    manifest: &mut RunManifest,
    with_forward: bool,
) -> Result<(ExperimentReport, Option<CorruptionLog>)> {
    let (train, tst) = split_train_test(data, cfg.protocol.test_size)?;
    let corruption_seed = crate::seed::derive(cfg.root_seed, "corruption");
    manifest.derived_seeds.insert("corruption".into(), corruption_seed);
    let (corrupted, part, log) = stage(
        "corruption",
        build_noisy_groups(
            &train,
            cfg.protocol.n_groups,
            cfg.protocol.ratio_lo,
            cfg.protocol.ratio_hi,
            corruption_seed,
        ),
    )?;
    let seeds = oracle_seeds(cfg, manifest);
    let ocfg = OracleConfig {
        trainer: cfg.trainer.clone(),
        seeds: seeds.clone(),
        addition_mode: AdditionMode::Scratch,
    };
    let spec = &cfg.model;
    let mut report = ExperimentReport::new(cfg.experiment);

    let t = Instant::now();
    let eq1 = stage(
        "oracle-t2t",
        oracle_train_to_test_all(spec, &corrupted, &part, None, &tst, &ocfg),
    )?;
    record_stage(manifest, "oracle-t2t", t);
    let t = Instant::now();
    let eq2 = stage(
        "oracle-tst2trn",
        oracle_test_to_train_all(spec, &corrupted, &part, None, &tst, &ocfg),
    )?;
    record_stage(manifest, "oracle-tst2trn", t);

    let c = stage("correlate", correlate(&eq1, &eq2))?;
    report.correlations.insert("eq1_vs_eq2".into(), c);
    report.metrics.insert("eq1_vs_eq2_pearson".into(), c.pearson);
    report.metrics.insert("eq1_vs_eq2_spearman".into(), c.spearman);
    report.reports.push(report_from_scores(
        "oracle-t2t",
        eq1.clone(),
        part.names(),
        serde_json::to_string(&ocfg)?,
        seeds.clone(),
        0.0,
    ));
    report.reports.push(report_from_scores(
        "oracle-tst2trn",
        eq2.clone(),
        part.names(),
        serde_json::to_string(&ocfg)?,
        seeds.clone(),
        0.0,
    ));

    if with_forward {
        let t = Instant::now();
        let fcfg = &cfg.estimators.forward_inf;
        let mut mean_scores = vec![0.0; part.len()];
        let mut fwd_timing = TimingBreakdown::default();
        for &s in &seeds {
            let theta = stage("train", fit(spec, &corrupted, &cfg.trainer, s))?;
            let r = stage("forward-inf", forward_inf(spec, &theta, &corrupted, &part, &tst, fcfg))?;
            for (acc, v) in mean_scores.iter_mut().zip(&r.scores) {
                *acc += v / seeds.len() as f64;
            }
            fwd_timing.forward_seconds += r.timing.forward_seconds;
            fwd_timing.backward_seconds += r.timing.backward_seconds;
            fwd_timing.total_seconds += r.timing.total_seconds;
        }
        record_stage(manifest, "forward-inf", t);
        let c2 = stage("correlate", correlate(&mean_scores, &eq2))?;
        let c1 = stage("correlate", correlate(&mean_scores, &eq1))?;
        report.correlations.insert("fwd_vs_eq2".into(), c2);
        report.correlations.insert("fwd_vs_eq1".into(), c1);
        report.metrics.insert("fwd_vs_eq2_pearson".into(), c2.pearson);
        report.metrics.insert("fwd_vs_eq1_pearson".into(), c1.pearson);
        report.reports.push(InfluenceReport {
            method: "forward-inf".into(),
            scores: mean_scores,
            source_names: part.names().to_vec(),
            hyperparams: serde_json::to_string(fcfg)?,
            seeds,
            timing: fwd_timing,
            warnings: vec![],
        });
    }
    Ok((report, Some(log)))
}

/// The addition oracle computed both ways on a convex model: scratch
/// retraining versus the warm continual update, correlated over sources.
fn continual_vs_scratch(
    cfg: &ExperimentConfig,
    data: &Dataset,
    manifest: &mut RunManifest,
) -> Result<(ExperimentReport, Option<CorruptionLog>)> {
    let (train, tst) = split_train_test(data, cfg.protocol.test_size)?;
    let corruption_seed = crate::seed::derive(cfg.root_seed, "corruption");
    manifest.derived_seeds.insert("corruption".into(), corruption_seed);
    let (corrupted, part, log) = stage(
        "corruption",
        build_noisy_groups(
            &train,
            cfg.protocol.n_groups,
            cfg.protocol.ratio_lo,
            cfg.protocol.ratio_hi,
            corruption_seed,
        ),
    )?;
    let spec = &cfg.model;
    let scratch = OracleConfig {
        trainer: cfg.trainer.clone(),
        seeds: vec![0],
        addition_mode: AdditionMode::Scratch,
    };
    let continual = OracleConfig {
        addition_mode: AdditionMode::Continual {
            k: 20,
            alpha: 0.1,
            direction: Direction::Descent,
        },
        ..scratch.clone()
    };
    let mut report = ExperimentReport::new(cfg.experiment);
    let t = Instant::now();
    let a = stage(
        "oracle-scratch",
        oracle_test_to_train_all(spec, &corrupted, &part, None, &tst, &scratch),
    )?;
    let b = stage(
        "oracle-continual",
        oracle_test_to_train_all(spec, &corrupted, &part, None, &tst, &continual),
    )?;
    record_stage(manifest, "oracles", t);
    let c = stage("correlate", correlate(&a, &b))?;
    report.correlations.insert("scratch_vs_continual".into(), c);
    report.metrics.insert("scratch_vs_continual_pearson".into(), c.pearson);
    report.reports.push(report_from_scores(
        "oracle-tst2trn",
        a,
        part.names(),
        serde_json::to_string(&scratch)?,
        vec![0],
        0.0,
    ));
    report.reports.push(report_from_scores(
        "oracle-tst2trn-continual",
        b,
        part.names(),
        serde_json::to_string(&continual)?,
        vec![0],
        0.0,
    ));
    Ok((report, Some(log)))
}

/// Leakage detection: copy held-out points into the training set, tune
/// (K, α) on a reserved share of them, and measure top-1 retrieval of
/// each remaining duplicate, against a single-checkpoint TracIn baseline
/// timed on the same queries.
fn leakage(
    cfg: &ExperimentConfig,
    data: &Dataset,
    manifest: &mut RunManifest,
) -> Result<(ExperimentReport, Option<CorruptionLog>)> {
    let TrainerConfig::Sgd(sgd) = &cfg.trainer else {
        return Err(Error::config("leakage: requires the sgd trainer (checkpoints feed tracin)"));
    };
    let (train, pool) = split_train_test(data, cfg.protocol.test_size)?;
    let leak_seed = crate::seed::derive(cfg.root_seed, "leak");
    manifest.derived_seeds.insert("leak".into(), leak_seed);
    let (aug, leaked, log) =
        stage("leak-injection", inject_leak(&train, &pool, cfg.protocol.n_leaks, leak_seed))?;

    let spec = &cfg.model;
    let train_seed = crate::seed::derive(cfg.root_seed, "train");
    manifest.derived_seeds.insert("train".into(), train_seed);
    let t = Instant::now();
    let (theta, checkpoints) =
        stage("train", train_sgd(spec, &aug, &sgd.clone().with_seed(train_seed)))?;
    record_stage(manifest, "train", t);

    let part = SourcePartition::singletons(&aug);
    let n_tune = ((cfg.protocol.n_leaks as f64 * cfg.protocol.tune_fraction).ceil() as usize)
        .min(cfg.protocol.n_leaks.saturating_sub(1));

    // tuning on the reserved leaked points: top-1 retrieval of their own
    // duplicates decides (K, α); ties prefer smaller K then smaller α
    let t = Instant::now();
    let mut best: Option<(f64, crate::estimate::ForwardInfConfig)> = None;
    for &k in &cfg.protocol.candidate_ks {
        for &alpha in &cfg.protocol.candidate_alphas {
            let cand = crate::estimate::ForwardInfConfig {
                k,
                alpha,
                direction: Direction::Ascent,
                sign_mode: crate::estimate::SignMode::Raw,
            };
            let mut hits = 0usize;
            let mut failed = false;
            for entry_k in 0..n_tune {
                let tst = leaked.subset(&[entry_k])?;
                match forward_inf(spec, &theta, &aug, &part, &tst, &cand) {
                    Ok(r) => {
                        if ranking(&r.scores)[0] == log.entries[entry_k].index {
                            hits += 1;
                        }
                    }
                    Err(Error::Numerical(_)) => {
                        failed = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            let rate = if failed || n_tune == 0 { 0.0 } else { hits as f64 / n_tune as f64 };
            if best.as_ref().is_none_or(|(r, _)| rate > *r) {
                best = Some((rate, cand));
            }
        }
    }
    let (tune_rate, tuned) = best.ok_or_else(|| Error::config("leakage: empty candidate grid"))?;
    record_stage(manifest, "tune", t);
    if tune_rate == 0.0 {
        manifest.flags.push("tuning degenerate: no candidate retrieved any duplicate".into());
    }
    manifest
        .flags
        .push(format!("tuning points excluded from detection rate: {n_tune}"));

    // evaluation on the remaining leaked points
    let t_fwd = Instant::now();
    let mut fwd_hits = 0usize;
    let mut fwd_reports = Vec::new();
    for entry_k in n_tune..cfg.protocol.n_leaks {
        let tst = leaked.subset(&[entry_k])?;
        let r = stage("forward-inf", forward_inf(spec, &theta, &aug, &part, &tst, &tuned))?;
        if ranking(&r.scores)[0] == log.entries[entry_k].index {
            fwd_hits += 1;
        }
        fwd_reports.push(r);
    }
    let fwd_seconds = t_fwd.elapsed().as_secs_f64();
    record_stage(manifest, "forward-inf", t_fwd);

    // single-checkpoint tracin on the same queries
    let last = checkpoints
        .last()
        .cloned()
        .ok_or_else(|| Error::config("leakage: sgd produced no checkpoints"))?;
    let single = [last];
    let t_tracin = Instant::now();
    let mut tracin_hits = 0usize;
    let mut tracin_reports = Vec::new();
    for entry_k in n_tune..cfg.protocol.n_leaks {
        let z = leaked.sample(entry_k);
        let scores: Vec<f64> = (0..aug.len())
            .into_par_iter()
            .map(|i| tracin_pairwise(spec, &single, &aug, i, &z))
            .collect::<Result<_>>()?;
        if ranking(&scores)[0] == log.entries[entry_k].index {
            tracin_hits += 1;
        }
        tracin_reports.push(report_from_scores(
            &format!("tracin:tst={}", leaked.id(entry_k)),
            scores,
            aug.ids(),
            "{\"checkpoints\":1}".into(),
            vec![train_seed],
            0.0,
        ));
    }
    let tracin_seconds = t_tracin.elapsed().as_secs_f64();
    record_stage(manifest, "tracin", t_tracin);

    let n_eval = (cfg.protocol.n_leaks - n_tune) as f64;
    let mut report = ExperimentReport::new(cfg.experiment);
    report.metrics.insert("fwd_top1".into(), fwd_hits as f64 / n_eval);
    report.metrics.insert("tracin_top1".into(), tracin_hits as f64 / n_eval);
    report.metrics.insert("fwd_seconds".into(), fwd_seconds);
    report.metrics.insert("tracin_seconds".into(), tracin_seconds);
    report.metrics.insert("tracin_over_fwd_time".into(), tracin_seconds / fwd_seconds);
    report.metrics.insert("n_eval".into(), n_eval);
    report.metrics.insert("n_tune".into(), n_tune as f64);
    report.metrics.insert("tuned_k".into(), tuned.k as f64);
    report.metrics.insert("tuned_alpha".into(), tuned.alpha);
    report.metrics.insert("tune_retrieval_rate".into(), tune_rate);
    for (i, mut r) in fwd_reports.into_iter().enumerate() {
        r.method = format!("forward-inf:tst={}", leaked.id(n_tune + i));
        report.reports.push(r);
    }
    report.reports.extend(tracin_reports);
    Ok((report, Some(log)))
}

/// Self-influence mislabel screening: flip a fraction of labels, train to
/// convergence, run the forward self-influence scorer, and report the
/// detection curve against the known corruption, with the exact influence
/// function as the comparison baseline.
fn mislabel(
    cfg: &ExperimentConfig,
    data: &Dataset,
    manifest: &mut RunManifest,
) -> Result<(ExperimentReport, Option<CorruptionLog>)> {
    let corruption_seed = crate::seed::derive(cfg.root_seed, "corruption");
    manifest.derived_seeds.insert("corruption".into(), corruption_seed);
    let (corrupted, log) = stage(
        "corruption",
        inject_mislabels(data, cfg.protocol.mislabel_ratio, corruption_seed),
    )?;
    let spec = &cfg.model;
    let t = Instant::now();
    let theta = stage("train", fit(spec, &corrupted, &cfg.trainer, 0))?;
    record_stage(manifest, "train", t);

    let t = Instant::now();
    let fwd = stage(
        "forward-inf-self",
        self_influence(
            spec,
            &corrupted,
            SelfInfluenceMethod::ForwardInf { params: &theta, cfg: &cfg.estimators.forward_inf },
        ),
    )?;
    record_stage(manifest, "forward-inf-self", t);

    let mask = log.mislabel_mask(corrupted.len());
    let curve = stage("detection-curve", detection_curve(&fwd, &mask))?;
    let found = curve.found_at(cfg.protocol.inspect_fraction);

    let mut report = ExperimentReport::new(cfg.experiment);
    report.metrics.insert("found_at_inspect_fraction".into(), found);
    report.metrics.insert("inspect_fraction".into(), cfg.protocol.inspect_fraction);
    report.metrics.insert("n_corrupted".into(), log.entries.len() as f64);
    report.curves.insert("forward-inf-self".into(), curve);

    // exact influence-function baseline when the model admits it
    if matches!(spec, ModelSpec::MultinomialLogistic { .. }) && spec.l2() > 0.0 {
        let t = Instant::now();
        let ifr = stage(
            "if-self",
            self_influence(spec, &corrupted, SelfInfluenceMethod::InfluenceFunction {
                params: &theta,
            }),
        )?;
        record_stage(manifest, "if-self", t);
        let if_curve = stage("detection-curve", detection_curve(&ifr, &mask))?;
        report
            .metrics
            .insert("if_self_found_at_inspect_fraction".into(), if_curve.found_at(cfg.protocol.inspect_fraction));
        report.curves.insert("if-self".into(), if_curve);
        report.reports.push(ifr);
    }
    report.reports.insert(0, fwd);
    Ok((report, Some(log)))
}

fn bench(
    cfg: &ExperimentConfig,
    data: &Dataset,
    manifest: &mut RunManifest,
) -> Result<(ExperimentReport, Option<CorruptionLog>)> {
    let (train, tst) = split_train_test(data, cfg.protocol.test_size)?;
    let t = Instant::now();
    let b = stage("bench", bench_passes(&cfg.model, &train, &tst, cfg.protocol.bench_repeats))?;
    record_stage(manifest, "bench", t);
    let mut report = ExperimentReport::new(cfg.experiment);
    report.metrics.insert("forward_per_point_s".into(), b.forward_per_point_s);
    report.metrics.insert("backward_per_point_s".into(), b.backward_per_point_s);
    report.metrics.insert("backward_over_forward".into(), b.ratio);
    report.bench = Some(b);
    Ok((report, None))
}

/// Reassemble the corr-group numbers from the public primitives; used by
/// tests to pin the pipeline to the oracle operations.
#[cfg(test)]
pub(crate) fn corr_group_manual(
    cfg: &ExperimentConfig,
) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let data = super::load_dataset(&cfg.dataset)?;
    let (train, tst) = split_train_test(&data, cfg.protocol.test_size)?;
    let (corrupted, part, _log) = build_noisy_groups(
        &train,
        cfg.protocol.n_groups,
        cfg.protocol.ratio_lo,
        cfg.protocol.ratio_hi,
        crate::seed::derive(cfg.root_seed, "corruption"),
    )?;
    let seeds: Vec<u64> = (0..cfg.protocol.n_oracle_seeds.max(1))
        .map(|i| crate::seed::derive_indexed(cfg.root_seed, "oracle-seed", i as u64))
        .collect();
    let ocfg = OracleConfig {
        trainer: cfg.trainer.clone(),
        seeds,
        addition_mode: AdditionMode::Scratch,
    };
    let eq1 = oracle_train_to_test_all(&cfg.model, &corrupted, &part, None, &tst, &ocfg)?;
    let eq2 = oracle_test_to_train_all(&cfg.model, &corrupted, &part, None, &tst, &ocfg)?;
    let p = crate::stats::pearson(&eq1, &eq2)?;
    let s = crate::stats::spearman(&eq1, &eq2)?;
    Ok((eq1, eq2, p, s))
}
