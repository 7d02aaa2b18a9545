//! Dense MLP with reverse-accumulation gradients.
//!
//! The batched paths keep every layer as a matrix product so a full-dataset
//! forward pass stays a handful of GEMMs; the per-sample path is
//! matvec-based.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{softmax_rows, Activation, ModelSpec, ParamVector, Sample};

struct Arch {
    dims: Vec<usize>, // input, hidden..., classes
    activation: Activation,
}

fn arch(spec: &ModelSpec) -> Arch {
    match spec {
        ModelSpec::Mlp { layer_widths, activation, n_classes, .. } => {
            let mut dims = layer_widths.clone();
            dims.push(*n_classes);
            Arch { dims, activation: *activation }
        }
        _ => unreachable!("mlp ops called with non-mlp spec"),
    }
}

struct LayerView<'a> {
    w: ArrayView2<'a, f64>, // out×in
    b: ArrayView1<'a, f64>,
}

fn layers<'a>(params: &'a ParamVector, arch: &Arch) -> Vec<LayerView<'a>> {
    let mut out = Vec::with_capacity(arch.dims.len() - 1);
    let mut offset = 0;
    for w in arch.dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let wv = params
            .values()
            .slice(s![offset..offset + fan_out * fan_in])
            .into_shape_with_order((fan_out, fan_in))
            .expect("layer weight shape");
        offset += fan_out * fan_in;
        let bv = params.values().slice(s![offset..offset + fan_out]);
        offset += fan_out;
        out.push(LayerView { w: wv, b: bv });
    }
    out
}

fn apply_activation(z: &mut Array2<f64>, act: Activation) {
    match act {
        Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        Activation::Tanh => z.mapv_inplace(f64::tanh),
    }
}

/// Batch logits.
pub(super) fn logits(
    spec: &ModelSpec,
    params: &ParamVector,
    rows: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let arch = arch(spec);
    let layers = layers(params, &arch);
    let mut h = rows.to_owned();
    for (li, layer) in layers.iter().enumerate() {
        let mut z = h.dot(&layer.w.t());
        z += &layer.b;
        if li + 1 < layers.len() {
            apply_activation(&mut z, arch.activation);
        }
        h = z;
    }
    h
}

/// Gradient of the batch-mean data loss by reverse accumulation.
pub(super) fn grad_batch(
    spec: &ModelSpec,
    params: &ParamVector,
    rows: &Array2<f64>,
    labels: &[usize],
) -> Array1<f64> {
    let arch = arch(spec);
    let layer_views = layers(params, &arch);
    let batch = labels.len() as f64;

    // forward, keeping post-activation values per layer
    let mut activations: Vec<Array2<f64>> = Vec::with_capacity(layer_views.len() + 1);
    activations.push(rows.clone());
    for (li, layer) in layer_views.iter().enumerate() {
        let mut z = activations[li].dot(&layer.w.t());
        z += &layer.b;
        if li + 1 < layer_views.len() {
            apply_activation(&mut z, arch.activation);
        }
        activations.push(z);
    }

    let mut delta = softmax_rows(activations.last().expect("logits"));
    for (mut row, &y) in delta.outer_iter_mut().zip(labels) {
        row[y] -= 1.0;
    }
    delta /= batch;

    let mut g = Array1::zeros(params.len());
    let mut offset = params.len();
    for li in (0..layer_views.len()).rev() {
        let fan_out = arch.dims[li + 1];
        let fan_in = arch.dims[li];
        let gw = delta.t().dot(&activations[li]); // out×in
        let gb = delta.sum_axis(Axis(0));
        offset -= fan_out;
        g.slice_mut(s![offset..offset + fan_out]).assign(&gb);
        offset -= fan_out * fan_in;
        g.slice_mut(s![offset..offset + fan_out * fan_in])
            .assign(&gw.into_shape_with_order(fan_out * fan_in).expect("grad shape"));
        if li > 0 {
            let mut dh = delta.dot(&layer_views[li].w); // B×in
            match arch.activation {
                Activation::Relu => {
                    ndarray::Zip::from(&mut dh).and(&activations[li]).for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                }
                Activation::Tanh => {
                    ndarray::Zip::from(&mut dh).and(&activations[li]).for_each(|d, &a| {
                        *d *= 1.0 - a * a;
                    });
                }
            }
            delta = dh;
        }
    }
    g
}

/// Per-example gradient of one sample via matvec-based backprop. No L2.
pub(super) fn grad_sample(spec: &ModelSpec, params: &ParamVector, sample: &Sample) -> Array1<f64> {
    let arch = arch(spec);
    let layer_views = layers(params, &arch);

    let mut activations: Vec<Array1<f64>> = Vec::with_capacity(layer_views.len() + 1);
    activations.push(sample.features.clone());
    for (li, layer) in layer_views.iter().enumerate() {
        let mut z = layer.w.dot(&activations[li]);
        z += &layer.b;
        if li + 1 < layer_views.len() {
            match arch.activation {
                Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
                Activation::Tanh => z.mapv_inplace(f64::tanh),
            }
        }
        activations.push(z);
    }

    let logits = activations.last().expect("logits");
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut delta = logits.mapv(|z| (z - m).exp());
    let sum = delta.sum();
    delta.mapv_inplace(|v| v / sum);
    delta[sample.label] -= 1.0;

    let mut g = Array1::zeros(params.len());
    let mut offset = params.len();
    for li in (0..layer_views.len()).rev() {
        let fan_out = arch.dims[li + 1];
        let fan_in = arch.dims[li];
        offset -= fan_out;
        g.slice_mut(s![offset..offset + fan_out]).assign(&delta);
        offset -= fan_out * fan_in;
        {
            // outer product delta ⊗ activation, written in place
            let mut gw = g.slice_mut(s![offset..offset + fan_out * fan_in]);
            for (r, &dr) in delta.iter().enumerate() {
                if dr == 0.0 {
                    continue;
                }
                let mut row = gw.slice_mut(s![r * fan_in..(r + 1) * fan_in]);
                row.assign(&activations[li]);
                row.mapv_inplace(|v| v * dr);
            }
        }
        if li > 0 {
            let mut dh = layer_views[li].w.t().dot(&delta);
            match arch.activation {
                Activation::Relu => {
                    for (d, &a) in dh.iter_mut().zip(activations[li].iter()) {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                Activation::Tanh => {
                    for (d, &a) in dh.iter_mut().zip(activations[li].iter()) {
                        *d *= 1.0 - a * a;
                    }
                }
            }
            delta = dh;
        }
    }
    g
}
