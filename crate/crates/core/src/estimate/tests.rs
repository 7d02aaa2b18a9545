use approx::assert_relative_eq;
use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};

use super::*;
use crate::model::{grad_one, grad_sample, loss, ModelSpec};
use crate::oracle::SourcePartition;
use crate::train::{train_deterministic, train_sgd, Checkpoint, DetTrainConfig, SgdConfig};

fn blobs(n: usize, d: usize, c: usize, scale: f64, seed_value: u64) -> Dataset {
    let mut rng = crate::seed::rng(seed_value);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let means = Array2::from_shape_fn((c, d), |_| scale * normal.sample(&mut rng));
    let mut feats = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % c;
        for j in 0..d {
            feats[[i, j]] = means[[y, j]] + normal.sample(&mut rng);
        }
        labels.push(y);
    }
    Dataset::new(feats, labels, (0..n).map(|i| format!("b{i}")).collect(), c).unwrap()
}

#[test]
fn forward_inf_zero_steps_zero_scores() {
    let data = blobs(40, 3, 2, 2.0, 1);
    let tst = blobs(10, 3, 2, 2.0, 2);
    let spec = ModelSpec::logistic(3, 2, 0.1);
    let params = crate::model::init_params(&spec, 0);
    let part = SourcePartition::contiguous_groups(40, 4).unwrap();
    let cfg = ForwardInfConfig { k: 0, ..Default::default() };
    let report = forward_inf(&spec, &params, &data, &part, &tst, &cfg).unwrap();
    assert!(report.scores.iter().all(|&s| s == 0.0));
    report.validate().unwrap();
}

#[test]
fn forward_inf_matches_manual_composition() {
    let data = blobs(60, 4, 3, 2.0, 3);
    let tst = blobs(12, 4, 3, 2.0, 4);
    let spec = ModelSpec::logistic(4, 3, 0.05);
    let params =
        train_deterministic(&spec, &data, &DetTrainConfig::default()).unwrap();
    let part = SourcePartition::contiguous_groups(60, 6).unwrap();
    let cfg = ForwardInfConfig { k: 3, alpha: 0.1, ..Default::default() };
    let report = forward_inf(&spec, &params, &data, &part, &tst, &cfg).unwrap();

    // manual: same update, then two per-source mean data losses
    let data_spec = spec.with_l2(0.0);
    let updated =
        continual_update(&data_spec, &params, &tst, 3, 0.1, Direction::Ascent).unwrap();
    for (k, src) in part.sources().iter().enumerate() {
        let before = loss(&data_spec, &params, &data, Some(src), false).unwrap().mean;
        let after = loss(&data_spec, &updated, &data, Some(src), false).unwrap().mean;
        assert_eq!(report.scores[k], after - before, "source {k}");
    }
}

#[test]
fn forward_inf_mirrored_negates_ascent() {
    let data = blobs(30, 3, 2, 2.0, 5);
    let tst = blobs(6, 3, 2, 2.0, 6);
    let spec = ModelSpec::logistic(3, 2, 0.1);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default()).unwrap();
    let part = SourcePartition::contiguous_groups(30, 3).unwrap();
    let raw = ForwardInfConfig { k: 2, alpha: 0.05, ..Default::default() };
    let mirrored = ForwardInfConfig { sign_mode: SignMode::Mirrored, ..raw.clone() };
    let a = forward_inf(&spec, &params, &data, &part, &tst, &raw).unwrap();
    let b = forward_inf(&spec, &params, &data, &part, &tst, &mirrored).unwrap();
    for (x, y) in a.scores.iter().zip(&b.scores) {
        assert_eq!(*x, -*y);
    }
}

#[test]
fn if_pairwise_swap_symmetry() {
    let data = blobs(50, 4, 3, 2.0, 7);
    let spec = ModelSpec::logistic(4, 3, 0.3);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default()).unwrap();
    for (i, j) in [(0usize, 1usize), (5, 17), (20, 44)] {
        let a = if_pairwise(&spec, &params, &data, i, &data.sample(j)).unwrap();
        let b = if_pairwise(&spec, &params, &data, j, &data.sample(i)).unwrap();
        let denom = a.abs().max(1e-12);
        assert!((a - b).abs() / denom < 1e-10, "pair ({i},{j}): {a} vs {b}");
    }
}

#[test]
fn if_pairwise_zero_gradient_point() {
    // saturated margin: per-example gradient vanishes, so does the value
    let feats = Array2::from_shape_vec((2, 1), vec![1.0, -1.0]).unwrap();
    let data = Dataset::new(feats, vec![0, 1], vec!["a".into(), "b".into()], 2).unwrap();
    let spec = ModelSpec::logistic(1, 2, 0.5);
    let params =
        ParamVector::new(Array1::from_vec(vec![25.0, -25.0, 0.0, 0.0])).unwrap();
    let v = if_pairwise(&spec, &params, &data, 0, &data.sample(1)).unwrap();
    assert!(v.abs() < 1e-8, "saturated-point influence should vanish, got {v}");
}

#[test]
fn if_pairwise_requires_regularization() {
    let data = blobs(20, 3, 2, 2.0, 8);
    let spec = ModelSpec::logistic(3, 2, 0.0);
    let params = crate::model::init_params(&spec, 0);
    assert!(if_pairwise(&spec, &params, &data, 0, &data.sample(1)).is_err());
}

#[test]
fn lissa_depth_zero_is_scaled_gradient_product() {
    let data = blobs(30, 3, 2, 2.0, 9);
    let spec = ModelSpec::logistic(3, 2, 1.0);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default()).unwrap();
    let tst = data.sample(3);
    let cfg = LissaConfig { depth: 0, scale: 0.25, ..Default::default() };
    let v = if_lissa(&spec, &params, &data, 0, &tst, &cfg).unwrap();
    let g_z = grad_one(&spec, &params, &data, 0).unwrap();
    let g_t = grad_sample(&spec, &params, &tst).unwrap();
    let expect = -0.25 * g_t.values().dot(g_z.values()) / data.len() as f64;
    assert_relative_eq!(v, expect, max_relative = 1e-12);
}

#[test]
fn lissa_converges_to_exact_solve() {
    let data = blobs(40, 3, 2, 1.5, 10);
    let spec = ModelSpec::logistic(3, 2, 1.0);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default()).unwrap();
    let tst = data.sample(7);
    let exact = if_pairwise(&spec, &params, &data, 2, &tst).unwrap();
    let cfg = LissaConfig { depth: 500, scale: 0.3, ..Default::default() };
    let out = if_lissa_detailed(&spec, &params, &data, 2, &tst, &cfg).unwrap();
    assert!(!out.scale_warning);
    assert!(
        (out.value - exact).abs() / exact.abs() < 1e-3,
        "lissa {} vs exact {exact}",
        out.value
    );
}

#[test]
fn lissa_detects_divergence_and_warns() {
    let data = blobs(40, 3, 2, 1.5, 11);
    let spec = ModelSpec::logistic(3, 2, 1.0);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default()).unwrap();
    let tst = data.sample(1);
    // scale far beyond 1/λmax: iterates blow up well before depth 5000
    let cfg = LissaConfig { depth: 5000, scale: 50.0, ..Default::default() };
    let err = if_lissa(&spec, &params, &data, 0, &tst, &cfg).unwrap_err();
    assert!(err.to_string().contains("lissa diverged at depth"));
    // shallow run with the same scale completes but carries the warning
    let shallow = LissaConfig { depth: 3, scale: 50.0, ..Default::default() };
    let out = if_lissa_detailed(&spec, &params, &data, 0, &tst, &shallow).unwrap();
    assert!(out.scale_warning);
}

#[test]
fn lissa_stochastic_deterministic_per_seed() {
    let data = blobs(60, 3, 2, 1.5, 12);
    let spec = ModelSpec::logistic(3, 2, 1.0);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default()).unwrap();
    let tst = data.sample(5);
    let cfg = LissaConfig {
        depth: 50,
        scale: 0.2,
        repeats: 3,
        seed: 9,
        batch_size: Some(8),
        ..Default::default()
    };
    let a = if_lissa(&spec, &params, &data, 4, &tst, &cfg).unwrap();
    let b = if_lissa(&spec, &params, &data, 4, &tst, &cfg).unwrap();
    assert_eq!(a, b);
    let c = if_lissa(&spec, &params, &data, 4, &tst, &LissaConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn tracin_swap_symmetry_and_composition() {
    let data = blobs(50, 4, 2, 2.0, 13);
    let spec = ModelSpec::mlp(vec![4, 6], crate::model::Activation::Tanh, 2, 0.0);
    let (_, ckpts) =
        train_sgd(&spec, &data, &SgdConfig { epochs: 4, checkpoint_every: 2, ..Default::default() })
            .unwrap();
    assert_eq!(ckpts.len(), 2);
    let a = tracin_pairwise(&spec, &ckpts, &data, 3, &data.sample(8)).unwrap();
    let b = tracin_pairwise(&spec, &ckpts, &data, 8, &data.sample(3)).unwrap();
    assert_eq!(a, b, "dot products commute bitwise under the same order");

    // single checkpoint equals η·⟨g(tst), g(z)⟩ built from the grad op
    let single = &ckpts[..1];
    let v = tracin_pairwise(&spec, single, &data, 3, &data.sample(8)).unwrap();
    let g_z = grad_one(&spec, &single[0].params, &data, 3).unwrap();
    let g_t = grad_sample(&spec, &single[0].params, &data.sample(8)).unwrap();
    assert_eq!(v, single[0].step_size * g_t.values().dot(g_z.values()));

    // zero step sizes kill the sum
    let zeroed: Vec<Checkpoint> = ckpts
        .iter()
        .map(|c| Checkpoint { params: c.params.clone(), iter_index: c.iter_index, step_size: 0.0 })
        .collect();
    assert_eq!(tracin_pairwise(&spec, &zeroed, &data, 0, &data.sample(1)).unwrap(), 0.0);
}

#[test]
fn tracin_self_scores_nonnegative() {
    let data = blobs(40, 3, 2, 2.0, 14);
    let spec = ModelSpec::logistic(3, 2, 0.05);
    let (_, ckpts) =
        train_sgd(&spec, &data, &SgdConfig { epochs: 4, checkpoint_every: 1, ..Default::default() })
            .unwrap();
    let report =
        self_influence(&spec, &data, SelfInfluenceMethod::TracIn { checkpoints: &ckpts }).unwrap();
    assert!(report.scores.iter().all(|&s| s >= 0.0));
}

#[test]
fn if_self_positive_and_forward_self_flags_singleton() {
    // ten copies of one point plus one mislabeled singleton: the singleton
    // outranks every duplicate under the forward self-influence score
    let base = blobs(100, 4, 2, 2.0, 15);
    let mut feats = base.features().to_owned();
    let mut labels = base.labels().to_vec();
    // duplicate row 0 ten times
    let row0: Vec<f64> = base.feature_row(0).to_vec();
    let mut extra = Array2::zeros((10, 4));
    for r in 0..10 {
        for j in 0..4 {
            extra[[r, j]] = row0[j];
        }
    }
    feats = ndarray::concatenate(ndarray::Axis(0), &[feats.view(), extra.view()]).unwrap();
    for _ in 0..10 {
        labels.push(base.label(0));
    }
    // mislabel one ordinary point
    labels[50] = 1 - labels[50];
    let ids = (0..110).map(|i| format!("p{i}")).collect();
    let data = Dataset::new(feats, labels, ids, 2).unwrap();

    let spec = ModelSpec::logistic(4, 2, 0.01);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default()).unwrap();

    let cfg = ForwardInfConfig {
        k: 5,
        alpha: 0.5,
        direction: Direction::Ascent,
        sign_mode: SignMode::Mirrored,
    };
    let fwd =
        self_influence(&spec, &data, SelfInfluenceMethod::ForwardInf { params: &params, cfg: &cfg })
            .unwrap();
    let singleton = fwd.scores[50];
    for dup in (0..1).chain(100..110) {
        assert!(
            singleton > fwd.scores[dup],
            "singleton {singleton} vs duplicate {}",
            fwd.scores[dup]
        );
    }

    let ifr =
        self_influence(&spec, &data, SelfInfluenceMethod::InfluenceFunction { params: &params })
            .unwrap();
    assert!(ifr.scores.iter().all(|&s| s >= 0.0));
}

#[test]
fn forward_inf_deterministic_under_parallel_scoring() {
    let data = blobs(120, 4, 3, 1.5, 16);
    let tst = blobs(20, 4, 3, 1.5, 17);
    let spec = ModelSpec::logistic(4, 3, 0.05);
    let params = train_deterministic(&spec, &data, &DetTrainConfig::default()).unwrap();
    let part = SourcePartition::singletons(&data);
    let cfg = ForwardInfConfig { k: 2, alpha: 0.05, ..Default::default() };
    let a = forward_inf(&spec, &params, &data, &part, &tst, &cfg).unwrap();
    // run inside a constrained pool; scores must be bit-identical
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let b = pool
        .install(|| forward_inf(&spec, &params, &data, &part, &tst, &cfg))
        .unwrap();
    assert_eq!(a.scores, b.scores);
}
