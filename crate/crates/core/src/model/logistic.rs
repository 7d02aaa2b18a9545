//! Multinomial logistic regression: analytic gradient, exact Hessian,
//! and Hessian-vector products.
//!
//! With C classes and d input features the flat layout is `W` (C×d,
//! row-major) followed by the C biases. Internally most formulas use the
//! augmented feature x̃ = (x, 1) so the bias behaves as one more weight
//! column.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{softmax_rows, ModelSpec, ParamVector, Sample};

fn dims(spec: &ModelSpec) -> (usize, usize) {
    match spec {
        ModelSpec::MultinomialLogistic { input_dim, n_classes, .. } => (*input_dim, *n_classes),
        _ => unreachable!("logistic ops called with non-logistic spec"),
    }
}

fn weight_view<'a>(params: &'a ParamVector, d: usize, c: usize) -> ArrayView2<'a, f64> {
    params
        .values()
        .slice(s![..c * d])
        .into_shape_with_order((c, d))
        .expect("weight block shape")
}

fn bias_view<'a>(params: &'a ParamVector, d: usize, c: usize) -> ArrayView1<'a, f64> {
    params.values().slice(s![c * d..c * d + c])
}

/// Batch logits: X Wᵀ + b.
pub(super) fn logits(
    spec: &ModelSpec,
    params: &ParamVector,
    rows: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let (d, c) = dims(spec);
    let w = weight_view(params, d, c);
    let b = bias_view(params, d, c);
    let mut z = rows.dot(&w.t());
    z += &b;
    z
}

/// Gradient of the batch-mean data loss: ((P − Y)ᵀ X / B, column means).
pub(super) fn grad_batch(
    spec: &ModelSpec,
    params: &ParamVector,
    rows: &Array2<f64>,
    labels: &[usize],
) -> Array1<f64> {
    let (d, c) = dims(spec);
    let batch = labels.len() as f64;
    let mut delta = softmax_rows(&logits(spec, params, rows.view()));
    for (mut row, &y) in delta.outer_iter_mut().zip(labels) {
        row[y] -= 1.0;
    }
    delta /= batch;
    let gw = delta.t().dot(rows); // C×d
    let gb = delta.sum_axis(Axis(0)); // C
    let mut g = Array1::zeros(c * d + c);
    g.slice_mut(s![..c * d]).assign(
        &gw.into_shape_with_order(c * d).expect("grad shape"),
    );
    g.slice_mut(s![c * d..]).assign(&gb);
    g
}

/// Per-example gradient (no L2): (softmax − onehot) ⊗ x̃.
pub(super) fn grad_sample(spec: &ModelSpec, params: &ParamVector, sample: &Sample) -> Array1<f64> {
    let (d, c) = dims(spec);
    let w = weight_view(params, d, c);
    let b = bias_view(params, d, c);
    let mut z = w.dot(&sample.features);
    z += &b;
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    z.mapv_inplace(|v| (v - m).exp());
    let sum: f64 = z.sum();
    z.mapv_inplace(|v| v / sum);
    z[sample.label] -= 1.0;
    let mut g = Array1::zeros(c * d + c);
    for ci in 0..c {
        let coeff = z[ci];
        let mut block = g.slice_mut(s![ci * d..(ci + 1) * d]);
        block.assign(&sample.features);
        block.mapv_inplace(|v| v * coeff);
    }
    g.slice_mut(s![c * d..]).assign(&z);
    g
}

/// Exact Hessian of the mean loss including the λI shift:
/// H = (1/B) Σᵢ (diag(sᵢ) − sᵢsᵢᵀ) ⊗ x̃ᵢx̃ᵢᵀ + λI, assembled block-wise so
/// symmetry is exact.
pub(super) fn hessian(spec: &ModelSpec, params: &ParamVector, data: &super::Dataset) -> Array2<f64> {
    let (d, c) = dims(spec);
    let n = data.len() as f64;
    let p = c * d + c;
    let probs = softmax_rows(&logits(spec, params, data.features()));
    let x = data.features();

    let mut h = Array2::<f64>::zeros((p, p));
    // flat index of augmented coordinate j (j == d is the bias) for class ci
    let flat = |ci: usize, j: usize| if j == d { c * d + ci } else { ci * d + j };

    let mut weighted = Array2::<f64>::zeros(x.raw_dim());
    for c1 in 0..c {
        for c2 in c1..c {
            // k_i = s_{i,c1} (δ_{c1 c2} − s_{i,c2}) / n
            let mut k = Array1::<f64>::zeros(x.nrows());
            for (i, ki) in k.iter_mut().enumerate() {
                let s1 = probs[[i, c1]];
                let s2 = probs[[i, c2]];
                *ki = if c1 == c2 { s1 * (1.0 - s2) } else { -s1 * s2 } / n;
            }
            weighted.assign(&x);
            for (mut row, &ki) in weighted.outer_iter_mut().zip(k.iter()) {
                row.mapv_inplace(|v| v * ki);
            }
            let m_ww = weighted.t().dot(&x); // d×d
            let m_wb = weighted.sum_axis(Axis(0)); // d — weight-vs-bias column
            let m_bb: f64 = k.sum();
            for j1 in 0..d {
                for j2 in 0..d {
                    h[[flat(c1, j1), flat(c2, j2)]] = m_ww[[j1, j2]];
                }
                h[[flat(c1, j1), flat(c2, d)]] = m_wb[j1];
                h[[flat(c1, d), flat(c2, j1)]] = m_wb[j1];
            }
            h[[flat(c1, d), flat(c2, d)]] = m_bb;
            if c1 != c2 {
                for j1 in 0..=d {
                    for j2 in 0..=d {
                        h[[flat(c2, j2), flat(c1, j1)]] = h[[flat(c1, j1), flat(c2, j2)]];
                    }
                }
            }
        }
    }
    // mirror the upper block triangle within c1 == c2 (m_ww is symmetric up
    // to float assembly; assign exactly)
    for i in 0..p {
        for j in 0..i {
            h[[i, j]] = h[[j, i]];
        }
    }
    let l2 = spec.l2();
    if l2 > 0.0 {
        for i in 0..p {
            h[[i, i]] += l2;
        }
    }
    h
}

/// H·v without materializing H:
/// per row, a = Ṽ x̃; out += ((s ⊙ a) − (sᵀa) s) ⊗ x̃ / n; plus λv.
pub(super) fn hvp(
    spec: &ModelSpec,
    params: &ParamVector,
    x: ArrayView2<'_, f64>,
    v: &Array1<f64>,
) -> Array1<f64> {
    let (d, c) = dims(spec);
    let n = x.nrows() as f64;
    let probs = softmax_rows(&logits(spec, params, x));

    let vw = v
        .slice(s![..c * d])
        .into_shape_with_order((c, d))
        .expect("hvp weight shape");
    let vb = v.slice(s![c * d..]);

    // a = X Vwᵀ + vb : n×C
    let mut a = x.dot(&vw.t());
    a += &vb;

    // u = s ⊙ a − (Σ_c s_c a_c) s, row-wise
    let mut u = &probs * &a;
    let r = u.sum_axis(Axis(1));
    for ((mut row, &ri), prow) in u.outer_iter_mut().zip(r.iter()).zip(probs.outer_iter()) {
        for (uc, &pc) in row.iter_mut().zip(prow.iter()) {
            *uc -= ri * pc;
        }
    }
    u /= n;

    let out_w = u.t().dot(&x); // C×d
    let out_b = u.sum_axis(Axis(0));
    let mut out = Array1::zeros(c * d + c);
    out.slice_mut(s![..c * d])
        .assign(&out_w.into_shape_with_order(c * d).expect("hvp shape"));
    out.slice_mut(s![c * d..]).assign(&out_b);
    if spec.l2() > 0.0 {
        out.scaled_add(spec.l2(), v);
    }
    out
}
