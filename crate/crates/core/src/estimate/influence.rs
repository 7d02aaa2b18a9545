//! Influence functions for the convex model: exact dense solve and the
//! truncated Neumann-series (LiSSA) approximation.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{grad_one, grad_sample, hessian, hvp, hvp_rows, Dataset, ModelSpec, ParamVector, Sample};

/// Exact first-order removal influence of training point `z_index` on
/// `tst_point`: `−(1/n)·∇ℓ(z_tst)ᵀ H⁻¹ ∇ℓ(z)` with per-example gradients
/// and the regularized Hessian.
pub fn if_pairwise(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    z_index: usize,
    tst_point: &Sample,
) -> Result<f64> {
    if spec.l2() <= 0.0 {
        return Err(Error::config("if_pairwise: needs l2 > 0 for an invertible Hessian"));
    }
    let h = hessian(spec, params, data)?;
    let g_z = grad_one(spec, params, data, z_index)?;
    let g_t = grad_sample(spec, params, tst_point)?;
    let solved = linalg::solve_spd(&h, g_z.values())?;
    Ok(-g_t.values().dot(&solved) / data.len() as f64)
}

/// LiSSA settings. `scale` is the α of the convergence condition
/// `α(H+λI) ⪯ I`; `damping` the λ added to the Hessian diagonal;
/// `batch_size: None` requests exact full-batch Hessian-vector products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LissaConfig {
    pub depth: usize,
    pub scale: f64,
    pub damping: f64,
    pub repeats: usize,
    pub seed: u64,
    pub batch_size: Option<usize>,
}

impl Default for LissaConfig {
    fn default() -> Self {
        LissaConfig { depth: 500, scale: 0.1, damping: 0.0, repeats: 1, seed: 0, batch_size: None }
    }
}

impl LissaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) {
            return Err(Error::config("lissa: scale must be > 0"));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::config("lissa: damping must be >= 0"));
        }
        if self.repeats == 0 {
            return Err(Error::config("lissa: repeats must be >= 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("lissa: batch_size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LissaOutcome {
    pub value: f64,
    /// Set when `scale·(‖H‖₂ + damping) > 1`, the regime where the
    /// iteration is no longer a contraction.
    pub scale_warning: bool,
}

/// LiSSA influence with diagnostics. Recursion `h₀ = v`,
/// `h_t = v + h_{t−1} − scale·(H + damping·I)h_{t−1}`, estimate
/// `scale·h_depth ≈ (H + damping·I)⁻¹v`, applied to `v = ∇ℓ(z_tst)` and
/// contracted with `−(1/n)·∇ℓ(z)`.
pub fn if_lissa_detailed(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    z_index: usize,
    tst_point: &Sample,
    cfg: &LissaConfig,
) -> Result<LissaOutcome> {
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::config("lissa: empty dataset"));
    }
    let v = grad_sample(spec, params, tst_point)?.into_values();
    let g_z = grad_one(spec, params, data, z_index)?;

    // contraction check against the exact (full-batch) operator
    let top = linalg::spectral_norm_sym(v.len(), |u| hvp(spec, params, data, u).expect("hvp"), 60);
    let scale_warning = cfg.scale * (top + cfg.damping) > 1.0;

    let mut acc = 0.0;
    for repeat in 0..cfg.repeats {
        let mut h = v.clone();
        let mut rng = crate::seed::rng(crate::seed::derive_indexed(cfg.seed, "lissa", repeat as u64));
        for depth in 0..cfg.depth {
            let hv = match cfg.batch_size {
                None => hvp(spec, params, data, &h)?,
                Some(b) => {
                    let rows: Vec<usize> =
                        (0..b.min(n)).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
                    hvp_rows(spec, params, data, &rows, &h)?
                }
            };
            let mut next = &v + &h;
            next.scaled_add(-cfg.scale, &hv);
            if cfg.damping > 0.0 {
                next.scaled_add(-cfg.scale * cfg.damping, &h);
            }
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::numerical(format!("lissa diverged at depth {depth}")));
            }
            h = next;
        }
        let estimate: Array1<f64> = cfg.scale * &h;
        acc += -g_z.values().dot(&estimate) / n as f64;
    }
    Ok(LissaOutcome { value: acc / cfg.repeats as f64, scale_warning })
}

/// LiSSA influence value only.
pub fn if_lissa(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    z_index: usize,
    tst_point: &Sample,
    cfg: &LissaConfig,
) -> Result<f64> {
    Ok(if_lissa_detailed(spec, params, data, z_index, tst_point, cfg)?.value)
}
