//! Acceptance suite: one pass/fail line per criterion, all tolerances
//! pinned here. Run with `cargo test --test acceptance -- --nocapture`.

use mirinf_core::*;
use ndarray::Array1;

type Check = (&'static str, fn() -> Result<String>);

fn fail(msg: String) -> Error {
    Error::Numerical(msg)
}

fn blobs_tagged(n: usize, d: usize, c: usize, scale: f64, seed: u64, tag: &str) -> Dataset {
    let base = blobs(n, d, c, scale, seed).expect("blobs");
    Dataset::new(
        base.features().to_owned(),
        base.labels().to_vec(),
        (0..n).map(|i| format!("{tag}{i:05}")).collect(),
        c,
    )
    .expect("retagged blobs")
}

fn out_dir(name: &str) -> String {
    let dir = std::env::temp_dir().join(format!("mirinf-acceptance-{name}-{}", std::process::id()));
    dir.to_str().expect("utf8 tmp path").to_string()
}

/// 1. Exact influence-function mirror symmetry on 100 random pairs.
fn c1_if_mirror_symmetry() -> Result<String> {
    let data = blobs(200, 5, 3, 2.0, 101)?;
    let spec = ModelSpec::logistic(5, 3, 0.1);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default())?;
    let mut rng = seed::rng(seed::derive(101, "pairs"));
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let i = rand::Rng::random_range(&mut rng, 0..data.len());
        let mut j = rand::Rng::random_range(&mut rng, 0..data.len());
        if j == i {
            j = (j + 1) % data.len();
        }
        let a = if_pairwise(&spec, &params, &data, i, &data.sample(j))?;
        let b = if_pairwise(&spec, &params, &data, j, &data.sample(i))?;
        let rel = (a - b).abs() / a.abs().max(1e-12);
        worst = worst.max(rel);
    }
    if worst < 1e-10 {
        Ok(format!("worst relative asymmetry {worst:.2e} < 1e-10 over 100 pairs"))
    } else {
        Err(fail(format!("worst relative asymmetry {worst:.2e} >= 1e-10")))
    }
}

/// 2. TracIn mirror symmetry, exact under a fixed summation order.
fn c2_tracin_mirror_symmetry() -> Result<String> {
    let data = blobs(200, 5, 3, 2.0, 102)?;
    let spec = ModelSpec::logistic(5, 3, 0.1);
    let cfg = SgdConfig { epochs: 10, checkpoint_every: 2, seed: 5, ..Default::default() };
    let (_, checkpoints) = train_sgd(&spec, &data, &cfg)?;
    if checkpoints.len() != 5 {
        return Err(fail(format!("expected 5 checkpoints, got {}", checkpoints.len())));
    }
    let mut rng = seed::rng(seed::derive(102, "pairs"));
    for _ in 0..100 {
        let i = rand::Rng::random_range(&mut rng, 0..data.len());
        let mut j = rand::Rng::random_range(&mut rng, 0..data.len());
        if j == i {
            j = (j + 1) % data.len();
        }
        let a = tracin_pairwise(&spec, &checkpoints, &data, i, &data.sample(j))?;
        let b = tracin_pairwise(&spec, &checkpoints, &data, j, &data.sample(i))?;
        if a != b {
            return Err(fail(format!("pair ({i},{j}): {a} != {b}")));
        }
    }
    Ok("100 pairs bitwise equal across 5 checkpoints".into())
}

/// 3. Near-noiseless point-to-point oracle correlation (table-1 analog).
fn c3_near_noiseless_correlation() -> Result<String> {
    let cfg = ExperimentConfig::default_for(Experiment::CorrPoint, 33, &out_dir("corr-point"));
    let _ = run_experiment(&cfg)?;
    let report: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(
        std::path::Path::new(&cfg.output_path).join("report.json"),
    )?)?;
    let p = report.metrics["pearson_mean"];
    let s = report.metrics["spearman_mean"];
    if p >= 0.95 && s >= 0.70 {
        Ok(format!("pearson {p:.4} >= 0.95, spearman {s:.4} >= 0.70 over 10 test points"))
    } else {
        Err(fail(format!("pearson {p:.4} (need 0.95), spearman {s:.4} (need 0.70)")))
    }
}

/// 4. Noisy-group oracle correlation with the 0→1 mislabel ramp.
fn c4_noisy_group_correlation() -> Result<String> {
    let cfg = ExperimentConfig::default_for(Experiment::CorrGroup, 44, &out_dir("corr-group"));
    let _ = run_experiment(&cfg)?;
    let report: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(
        std::path::Path::new(&cfg.output_path).join("report.json"),
    )?)?;
    let s = report.metrics["eq1_vs_eq2_spearman"];
    if s >= 0.85 {
        Ok(format!("spearman {s:.4} >= 0.85 over 30 groups, 5 seeds"))
    } else {
        Err(fail(format!("spearman {s:.4} < 0.85")))
    }
}

/// 5. Forward scorer vs the addition oracle on the group protocol.
fn c5_forward_vs_oracle() -> Result<String> {
    let cfg = ExperimentConfig::default_for(Experiment::FwdVsOracle, 55, &out_dir("fwd-vs-oracle"));
    let _ = run_experiment(&cfg)?;
    let report: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(
        std::path::Path::new(&cfg.output_path).join("report.json"),
    )?)?;
    let p = report.metrics["fwd_vs_eq2_pearson"];
    if p >= 0.85 {
        Ok(format!("pearson {p:.4} >= 0.85 (mirrored sign mode)"))
    } else {
        Err(fail(format!("pearson {p:.4} < 0.85")))
    }
}

/// 6. Scratch vs continual addition oracle on the convex model.
fn c6_continual_vs_scratch() -> Result<String> {
    let cfg = ExperimentConfig::default_for(
        Experiment::ContinualVsScratch,
        66,
        &out_dir("continual-vs-scratch"),
    );
    let _ = run_experiment(&cfg)?;
    let report: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(
        std::path::Path::new(&cfg.output_path).join("report.json"),
    )?)?;
    let p = report.metrics["scratch_vs_continual_pearson"];
    if p >= 0.8 {
        Ok(format!("pearson {p:.4} >= 0.8 over 30 sources"))
    } else {
        Err(fail(format!("pearson {p:.4} < 0.8")))
    }
}

/// 7. Leakage detection with tuned (K, α), plus the wall-time edge over
/// single-checkpoint TracIn.
fn c7_leakage_detection() -> Result<String> {
    let cfg = ExperimentConfig::default_for(Experiment::Leakage, 77, &out_dir("leakage"));
    let _ = run_experiment(&cfg)?;
    let report: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(
        std::path::Path::new(&cfg.output_path).join("report.json"),
    )?)?;
    let top1 = report.metrics["fwd_top1"];
    let time_ratio = report.metrics["tracin_over_fwd_time"];
    // per query the full training set is scored against a single test
    // point, so |D_trn|/|D_tst| = 2020 >= 100 for the timing claim
    if top1 >= 0.9 && time_ratio >= 2.0 {
        Ok(format!(
            "top-1 {top1:.3} >= 0.9 (K={}, α={}), tracin/forward time {time_ratio:.1}x >= 2x",
            report.metrics["tuned_k"], report.metrics["tuned_alpha"]
        ))
    } else {
        Err(fail(format!(
            "top-1 {top1:.3} (need 0.9), tracin/forward time {time_ratio:.2}x (need 2x)"
        )))
    }
}

/// 8. Mislabel screening by forward self-influence.
fn c8_mislabel_detection() -> Result<String> {
    let cfg = ExperimentConfig::default_for(Experiment::Mislabel, 88, &out_dir("mislabel"));
    let _ = run_experiment(&cfg)?;
    let report: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(
        std::path::Path::new(&cfg.output_path).join("report.json"),
    )?)?;
    let found = report.metrics["found_at_inspect_fraction"];
    if found >= 0.70 {
        Ok(format!("{:.1}% of mislabels in the first 20% inspected (need 70%)", found * 100.0))
    } else {
        Err(fail(format!("only {:.1}% found in the first 20% inspected", found * 100.0)))
    }
}

/// 9. Exact influence function vs brute-force leave-one-out retraining.
fn c9_if_vs_loo() -> Result<String> {
    let data = blobs_tagged(100, 4, 2, 2.0, 909, "trn");
    let spec = ModelSpec::logistic(4, 2, 1.0);
    let det = DetTrainConfig { grad_tol: 1e-10, max_iters: 200 };
    let params = train_deterministic(&spec, &data, &det)?;
    // highest-loss held-out probe point
    let pool = blobs_tagged(50, 4, 2, 2.0, 910, "tst");
    let losses = per_example_losses(&spec, &params, &pool)?;
    let probe_idx = (0..pool.len())
        .max_by(|&a, &b| losses[a].partial_cmp(&losses[b]).expect("finite"))
        .expect("non-empty pool");
    let probe = pool.sample(probe_idx);

    // brute-force oracle: retrain without each point
    let tst = pool.subset(&[probe_idx])?;
    let part = SourcePartition::singletons(&data);
    let ocfg = OracleConfig {
        trainer: TrainerConfig::Deterministic(det.clone()),
        seeds: vec![0],
        addition_mode: AdditionMode::Scratch,
    };
    let loo = oracle_train_to_test_all(&spec, &data, &part, None, &tst, &ocfg)?;
    let ifv: Vec<f64> = (0..data.len())
        .map(|i| if_pairwise(&spec, &params, &data, i, &probe))
        .collect::<Result<_>>()?;
    let p = pearson(&ifv, &loo)?;
    if p >= 0.9 {
        Ok(format!("pearson(if, loo) {p:.4} >= 0.9 over 100 points"))
    } else {
        Err(fail(format!("pearson(if, loo) {p:.4} < 0.9")))
    }
}

/// 10. LiSSA matches the exact solve at depth 500 and detects divergence
/// when the contraction condition is violated.
fn c10_lissa_convergence_and_divergence() -> Result<String> {
    let data = blobs(150, 4, 3, 1.5, 1010)?;
    let spec = ModelSpec::logistic(4, 3, 1.0);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default())?;
    let target = data.sample(3);
    let exact = if_pairwise(&spec, &params, &data, 11, &target)?;
    let cfg = LissaConfig { depth: 500, scale: 0.3, ..Default::default() };
    let got = if_lissa(&spec, &params, &data, 11, &target, &cfg)?;
    let rel = (got - exact).abs() / exact.abs();
    if rel >= 1e-3 {
        return Err(fail(format!("relative error {rel:.2e} >= 1e-3 at depth 500")));
    }
    // violating scale: a deep run must fail loudly, a shallow run must warn
    let bad = LissaConfig { depth: 5000, scale: 60.0, ..Default::default() };
    let Err(e) = if_lissa(&spec, &params, &data, 11, &target, &bad) else {
        return Err(fail("divergent configuration returned a value".into()));
    };
    if !e.to_string().contains("lissa diverged at depth") {
        return Err(fail(format!("unexpected divergence error: {e}")));
    }
    let shallow = LissaConfig { depth: 3, scale: 60.0, ..Default::default() };
    let outcome = if_lissa_detailed(&spec, &params, &data, 11, &target, &shallow)?;
    if !outcome.scale_warning {
        return Err(fail("contraction violation not reported".into()));
    }
    Ok(format!("relative error {rel:.2e} < 1e-3; divergence detected and warned"))
}

/// 11. Module invariants: gradient checks, nulls, determinism under
/// parallelism, tie handling, symmetry bounds, LiSSA contraction rate.
/// Results that exist only at cluster scale (ViT timing, diffusion,
/// memorization, language-model tracing) are excluded by design; their
/// stand-ins are the timing property in criterion 7 and the detection
/// properties above.
fn c11_invariant_suite() -> Result<String> {
    use rand_distr::Distribution;
    let mut notes = Vec::new();

    // gradient finite-difference check across both model kinds
    for seed_v in 0..20u64 {
        let spec = match seed_v % 4 {
            0 => ModelSpec::logistic(4, 3, 0.1),
            1 => ModelSpec::logistic(3, 2, 0.0),
            2 => ModelSpec::mlp(vec![4, 5], Activation::Relu, 3, 0.05),
            _ => ModelSpec::mlp(vec![3, 4, 3], Activation::Tanh, 2, 0.0),
        };
        let data = blobs(12, spec.input_dim(), spec.n_classes(), 1.0, 1100 + seed_v)?;
        let mut rng = seed::rng(1200 + seed_v);
        let normal = rand_distr::Normal::new(0.0, 0.3).expect("normal");
        let params = ParamVector::new(Array1::from_shape_fn(spec.param_count(), |_| {
            normal.sample(&mut rng)
        }))?;
        let g = grad(&spec, &params, &data, None)?;
        for i in 0..params.len() {
            let h = 1e-5;
            let mut plus = params.values().clone();
            plus[i] += h;
            let mut minus = params.values().clone();
            minus[i] -= h;
            let lp = loss(&spec, &ParamVector::new(plus)?, &data, None, false)?.mean;
            let lm = loss(&spec, &ParamVector::new(minus)?, &data, None, false)?.mean;
            let fd = (lp - lm) / (2.0 * h);
            let a = g.values()[i];
            if (a - fd).abs() / (1.0 + a.abs()) >= 1e-5 {
                return Err(fail(format!(
                    "gradient check failed: seed {seed_v}, coord {i}: {a} vs fd {fd}"
                )));
            }
        }
    }
    notes.push("gradient fd x20");

    // hessian symmetry and PD shift
    {
        let data = blobs(30, 4, 3, 1.0, 1300)?;
        let spec = ModelSpec::logistic(4, 3, 1.0);
        let params = train_deterministic(&spec, &data, &DetTrainConfig::default())?;
        let h = hessian(&spec, &params, &data)?;
        if linalg::asymmetry(&h) >= 1e-12 {
            return Err(fail("hessian asymmetry >= 1e-12".into()));
        }
        let mut shifted = h.clone();
        for i in 0..shifted.nrows() {
            shifted[[i, i]] -= 1.0 - 1e-8;
        }
        if linalg::cholesky(&shifted).is_err() {
            return Err(fail("hessian eigenvalue bound λmin >= λ_l2 - 1e-8 violated".into()));
        }
        notes.push("hessian symmetry+PD");
    }

    // loss non-negativity and margin monotonicity
    {
        let data = blobs(20, 3, 2, 1.0, 1400)?;
        let spec = ModelSpec::logistic(3, 2, 0.0);
        let mut rng = seed::rng(1401);
        let normal = rand_distr::Normal::new(0.0, 1.0).expect("normal");
        let params = ParamVector::new(Array1::from_shape_fn(spec.param_count(), |_| {
            normal.sample(&mut rng)
        }))?;
        let lv = loss(&spec, &params, &data, None, true)?;
        if lv.per_example.expect("requested").iter().any(|&l| l < 0.0) {
            return Err(fail("negative cross-entropy".into()));
        }
        // perfect logits: loss decreases monotonically with the margin
        let sample = data.sample(0);
        let mut previous = f64::INFINITY;
        for scale_f in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let mut w = Array1::zeros(spec.param_count());
            for (j, &x) in sample.features.iter().enumerate() {
                w[sample.label * 3 + j] = scale_f * x;
                w[(1 - sample.label) * 3 + j] = -scale_f * x;
            }
            let l = loss_sample(&spec, &ParamVector::new(w)?, &sample)?;
            if l >= previous {
                return Err(fail("loss not monotone in the logit margin".into()));
            }
            previous = l;
        }
        notes.push("loss bounds");
    }

    // batch-mean consistency at nonzero l2
    {
        let data = blobs(25, 4, 3, 1.0, 1500)?;
        let spec = ModelSpec::logistic(4, 3, 0.7);
        let params = init_params(&spec, 0);
        let lv = loss(&spec, &params, &data, None, true)?;
        let per = lv.per_example.expect("requested");
        let expect = per.iter().sum::<f64>() / per.len() as f64
            + 0.35 * params.values().dot(params.values());
        if (lv.mean - expect).abs() / expect.abs().max(1e-300) >= 1e-12 {
            return Err(fail("batch mean != mean(per-example) + l2 term".into()));
        }
        notes.push("batch-mean consistency");
    }

    // forward scorer null at K = 0
    {
        let data = blobs(40, 3, 2, 1.0, 1600)?;
        let tst = blobs_tagged(10, 3, 2, 1.0, 1601, "t");
        let spec = ModelSpec::logistic(3, 2, 0.1);
        let params = init_params(&spec, 0);
        let part = SourcePartition::contiguous_groups(40, 4)?;
        let cfg = ForwardInfConfig { k: 0, ..Default::default() };
        let r = forward_inf(&spec, &params, &data, &part, &tst, &cfg)?;
        if r.scores.iter().any(|&s| s != 0.0) {
            return Err(fail("K=0 produced a nonzero score".into()));
        }
        notes.push("K=0 null");
    }

    // score determinism under a different worker count
    {
        let data = blobs(120, 4, 3, 1.0, 1700)?;
        let tst = blobs_tagged(20, 4, 3, 1.0, 1701, "t");
        let spec = ModelSpec::logistic(4, 3, 0.05);
        let params = train_deterministic(&spec, &data, &DetTrainConfig::default())?;
        let part = SourcePartition::singletons(&data);
        let cfg = ForwardInfConfig { k: 2, alpha: 0.05, ..Default::default() };
        let a = forward_inf(&spec, &params, &data, &part, &tst, &cfg)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(2)
            .build()
            .map_err(|e| Error::config(format!("pool: {e}")))?;
        let b = pool.install(|| forward_inf(&spec, &params, &data, &part, &tst, &cfg))?;
        if a.scores != b.scores {
            return Err(fail("scores changed under a different thread count".into()));
        }
        // timing accounting sanity on a real report
        if a.timing.forward_seconds < 0.0
            || a.timing.backward_seconds < 0.0
            || a.timing.total_seconds < a.timing.forward_seconds
        {
            return Err(fail("timing breakdown inconsistent".into()));
        }
        notes.push("parallel determinism");
    }

    // trainer determinism and continual-update chaining
    {
        let data = blobs(80, 4, 2, 1.5, 1800)?;
        let spec = ModelSpec::mlp(vec![4, 8], Activation::Tanh, 2, 0.0);
        let cfg = SgdConfig { epochs: 5, seed: 9, ..Default::default() };
        let (p1, _) = train_sgd(&spec, &data, &cfg)?;
        let (p2, _) = train_sgd(&spec, &data, &cfg)?;
        if p1.values() != p2.values() {
            return Err(fail("sgd trajectory not reproducible".into()));
        }
        let chained = {
            let one = continual_update(&spec, &p1, &data, 1, 0.05, Direction::Ascent)?;
            continual_update(&spec, &one, &data, 1, 0.05, Direction::Ascent)?
        };
        let direct = continual_update(&spec, &p1, &data, 2, 0.05, Direction::Ascent)?;
        if chained.values() != direct.values() {
            return Err(fail("K steps != K chained single steps".into()));
        }
        notes.push("trainer determinism");
    }

    // spearman tie handling and the hand-computed cases
    {
        let rho = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0])?;
        if (rho - 0.866_025_403_784_438_6).abs() >= 1e-9 {
            return Err(fail(format!("tied-rank spearman {rho} != 0.866025")));
        }
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0])?;
        if (r - 0.981_980_506_061_965_8).abs() >= 1e-9 {
            return Err(fail(format!("pearson {r} != 0.981981")));
        }
        if spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_ok() {
            return Err(fail("all-tied vector must be rejected".into()));
        }
        notes.push("correlation ties");
    }

    // oracle remove-then-re-add consistency (magnitudes match within slack)
    {
        let data = blobs(60, 3, 2, 2.0, 1900)?;
        let spec = ModelSpec::logistic(3, 2, 0.2);
        let det = DetTrainConfig { grad_tol: 1e-9, max_iters: 200 };
        let ocfg = OracleConfig {
            trainer: TrainerConfig::Deterministic(det),
            seeds: vec![0],
            addition_mode: AdditionMode::Scratch,
        };
        let removed: Vec<usize> = (0..6).collect();
        let probe: Vec<usize> = (6..12).collect();
        let part = SourcePartition::new(
            vec![removed.clone(), probe.clone()],
            vec!["removed".into(), "probe".into()],
            60,
        )?;
        let probe_data = data.subset(&probe)?;
        let v1 = oracle_train_to_test(&spec, &data, &part, 0, &probe_data, &ocfg)?;
        let reduced = data.without(&removed)?;
        let part_reduced =
            SourcePartition::new(vec![(0..6).collect()], vec!["probe".into()], reduced.len())?;
        let readd = data.subset(&removed)?;
        let v2 = oracle_test_to_train(&spec, &reduced, &part_reduced, 0, &readd, &ocfg)?;
        if (v1.abs() - v2.abs()).abs() > 1e-6 {
            return Err(fail(format!("remove/re-add magnitudes diverge: {v1} vs {v2}")));
        }
        notes.push("remove/re-add oracle");
    }

    // LiSSA linear convergence rate between depth snapshots
    {
        let data = blobs(50, 3, 2, 1.0, 2000)?;
        let spec = ModelSpec::logistic(3, 2, 0.5);
        let params = train_deterministic(&spec, &data, &DetTrainConfig::default())?;
        let v = grad_one(&spec, &params, &data, 0)?.into_values();
        let h = hessian(&spec, &params, &data)?;
        let exact = linalg::solve_spd(&h, &v)?;
        let scale = 0.3;
        let top = linalg::spectral_norm_sym(v.len(), |u| h.dot(u), 100);
        if scale * top >= 1.0 {
            return Err(fail("test instance violates the contraction condition".into()));
        }
        let mut iterate = v.clone();
        let mut errors = Vec::new();
        for depth in 1..=300usize {
            let hv = hvp(&spec, &params, &data, &iterate)?;
            let mut next = &v + &iterate;
            next.scaled_add(-scale, &hv);
            iterate = next;
            if depth % 100 == 0 {
                let estimate = scale * &iterate;
                let diff = &estimate - &exact;
                errors.push(diff.dot(&diff).sqrt());
            }
        }
        // λmin(H) >= l2, so the slowest mode contracts at most this fast
        let rho_bound = (1.0 - scale * 0.5f64).powi(100) + 0.05;
        for w in errors.windows(2) {
            if w[1] / w[0] > rho_bound {
                return Err(fail(format!(
                    "lissa error ratio {} exceeds contraction bound {rho_bound}",
                    w[1] / w[0]
                )));
            }
        }
        notes.push("lissa contraction");
    }

    Ok(notes.join(", "))
}

#[test]
fn acceptance_criteria() {
    let checks: Vec<Check> = vec![
        ("mirror symmetry, influence function", c1_if_mirror_symmetry),
        ("mirror symmetry, tracin", c2_tracin_mirror_symmetry),
        ("near-noiseless point-to-point correlation", c3_near_noiseless_correlation),
        ("noisy group correlation", c4_noisy_group_correlation),
        ("forward scorer vs addition oracle", c5_forward_vs_oracle),
        ("continual vs scratch addition", c6_continual_vs_scratch),
        ("leakage detection + timing edge", c7_leakage_detection),
        ("mislabel detection", c8_mislabel_detection),
        ("influence function vs leave-one-out", c9_if_vs_loo),
        ("lissa convergence + divergence detection", c10_lissa_convergence_and_divergence),
        ("module invariant suite", c11_invariant_suite),
    ];
    let mut failures = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = std::time::Instant::now();
        match check() {
            Ok(detail) => {
                println!(
                    "criterion {:2} PASS [{:6.1}s] {name}: {detail}",
                    i + 1,
                    t.elapsed().as_secs_f64()
                );
            }
            Err(e) => {
                println!(
                    "criterion {:2} FAIL [{:6.1}s] {name}: {e}",
                    i + 1,
                    t.elapsed().as_secs_f64()
                );
                failures.push(format!("criterion {} ({name}): {e}", i + 1));
            }
        }
    }
    assert!(failures.is_empty(), "failed acceptance criteria:\n{}", failures.join("\n"));
}
