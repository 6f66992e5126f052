//! Biased (V-statistic) MMD² between two patch samples under `k(h(·), h(·))`.
//!
//! ```text
//! MMD² = 1/m² ΣΣ k(xᵢ,xᵢ') + 1/n² ΣΣ k(yⱼ,yⱼ') − 2/(mn) ΣΣ k(xᵢ,yⱼ)
//! ```
//!
//! Diagonal terms are included. Block sums use compensated accumulation.

use crate::encoders::Encoder;
use crate::error::{invalid, Error, Result};
use crate::grid::PatchSample;
use crate::kernels::{median_heuristic, KernelSpec, Resolved};
use crate::sum::KahanSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdResult {
    pub value: f64,
    pub gram_xx_mean: f64,
    pub gram_yy_mean: f64,
    pub gram_xy_mean: f64,
    /// Length scale the kernel was evaluated with; `None` for scale-free
    /// families (linear, polynomial) or a fixed-γ RBF kernel.
    pub length_scale_used: Option<f64>,
}

fn encode_all(enc: &Encoder, patches: &[Vec<f64>], what: &str) -> Result<Vec<Vec<f64>>> {
    if patches.is_empty() {
        return invalid(format!("{what} sample is empty"));
    }
    patches.iter().map(|p| enc.encode(p)).collect()
}

fn resolve(kernel: &KernelSpec, cx: &[Vec<f64>], cy: &[Vec<f64>]) -> Result<(Resolved, Option<f64>)> {
    if kernel.uses_median() {
        let l = median_heuristic(cx, cy)?;
        Ok((kernel.with_length_scale(l).resolve()?, Some(l)))
    } else {
        Ok((kernel.resolve()?, kernel.length_scale.filter(|_| kernel.family.is_radial())))
    }
}

fn self_block(k: &Resolved, c: &[Vec<f64>]) -> f64 {
    let mut diag = KahanSum::default();
    let mut off = KahanSum::default();
    for i in 0..c.len() {
        diag.add(k.eval(&c[i], &c[i]));
        for j in i + 1..c.len() {
            off.add(k.eval(&c[i], &c[j]));
        }
    }
    (diag.value() + 2.0 * off.value()) / (c.len() * c.len()) as f64
}

fn finish(xx: f64, yy: f64, xy: f64, l: Option<f64>) -> Result<MmdResult> {
    let value = xx + yy - 2.0 * xy;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("mmd² = {value}")));
    }
    Ok(MmdResult { value, gram_xx_mean: xx, gram_yy_mean: yy, gram_xy_mean: xy, length_scale_used: l })
}

pub fn mmd2(kernel: &KernelSpec, enc: &Encoder, x: &PatchSample, y: &PatchSample) -> Result<MmdResult> {
    mmd2_vectors(kernel, enc, &x.patches, &y.patches)
}

/// [`mmd2`] on raw vectors.
pub fn mmd2_vectors(kernel: &KernelSpec, enc: &Encoder, x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<MmdResult> {
    let cx = encode_all(enc, x, "first")?;
    let cy = encode_all(enc, y, "second")?;
    mmd2_codes(kernel, &cx, &cy)
}

/// MMD² on already-encoded samples.
pub fn mmd2_codes(kernel: &KernelSpec, cx: &[Vec<f64>], cy: &[Vec<f64>]) -> Result<MmdResult> {
    if cx.is_empty() || cy.is_empty() {
        return invalid("mmd² needs two non-empty samples");
    }
    let (k, l) = resolve(kernel, cx, cy)?;
    let xx = self_block(&k, cx);
    let yy = self_block(&k, cy);
    let mut cross = KahanSum::default();
    for a in cx {
        for b in cy {
            cross.add(k.eval(a, b));
        }
    }
    finish(xx, yy, cross.value() / (cx.len() * cy.len()) as f64, l)
}

/// Value and gradient with respect to every patch of the first sample.
///
/// `Y` and the resolved length scale are treated as constants.
pub fn mmd2_grad(
    kernel: &KernelSpec,
    enc: &Encoder,
    x: &PatchSample,
    y: &PatchSample,
) -> Result<(MmdResult, Vec<Vec<f64>>)> {
    mmd2_grad_vectors(kernel, enc, &x.patches, &y.patches)
}

pub fn mmd2_grad_vectors(
    kernel: &KernelSpec,
    enc: &Encoder,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
) -> Result<(MmdResult, Vec<Vec<f64>>)> {
    let cx = encode_all(enc, x, "first")?;
    let cy = encode_all(enc, y, "second")?;
    let (k, l) = resolve(kernel, &cx, &cy)?;
    let (m, n) = (cx.len() as f64, cy.len() as f64);
    let c = enc.code_dim();

    // ∂/∂cᵢ = 2/m² Σᵢ' ∇₁k(cᵢ,cᵢ') − 2/(mn) Σⱼ ∇₁k(cᵢ,yⱼ), using symmetry of k.
    let mut code_grads = vec![vec![0.0; c]; cx.len()];
    let mut diag = KahanSum::default();
    let mut off = KahanSum::default();
    let mut cross = KahanSum::default();
    let sxx = 2.0 / (m * m);
    let sxy = -2.0 / (m * n);
    for i in 0..cx.len() {
        let (_, tail) = code_grads.split_at_mut(i);
        let (gi, rest) = tail.split_first_mut().expect("row i");
        diag.add(k.eval_grad_into(&cx[i], &cx[i], sxx, gi));
        for (jj, gj) in rest.iter_mut().enumerate() {
            let j = i + 1 + jj;
            let kij = k.eval_grad_into(&cx[i], &cx[j], sxx, gi);
            k.eval_grad_into(&cx[j], &cx[i], sxx, gj);
            off.add(kij);
        }
        for b in &cy {
            cross.add(k.eval_grad_into(&cx[i], b, sxy, gi));
        }
    }
    let xx = (diag.value() + 2.0 * off.value()) / (m * m);
    let yy = self_block(&k, &cy);
    let result = finish(xx, yy, cross.value() / (m * n), l)?;

    let grads = x
        .iter()
        .zip(&code_grads)
        .map(|(patch, g)| enc.vjp_unchecked(patch, g))
        .collect();
    Ok((result, grads))
}
