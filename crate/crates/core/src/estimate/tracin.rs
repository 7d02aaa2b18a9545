//! TracIn: step-size-weighted gradient dot products summed over training
//! checkpoints, with per-example gradients.

use crate::error::{Error, Result};
use crate::model::{grad_one, grad_sample, Dataset, ModelSpec, Sample};
use crate::train::Checkpoint;

/// `Σ_c η_c ⟨∇ℓ(θ_c, z_tst), ∇ℓ(θ_c, z)⟩` over the given checkpoints, in
/// their given order.
pub fn tracin_pairwise(
    spec: &ModelSpec,
    checkpoints: &[Checkpoint],
    data: &Dataset,
    z_index: usize,
    tst_point: &Sample,
) -> Result<f64> {
    if checkpoints.is_empty() {
        return Err(Error::config("tracin: no checkpoints"));
    }
    let mut total = 0.0;
    for c in checkpoints {
        let g_z = grad_one(spec, &c.params, data, z_index)?;
        let g_t = grad_sample(spec, &c.params, tst_point)?;
        total += c.step_size * g_t.values().dot(g_z.values());
    }
    Ok(total)
}
