//! Kernels on encoded patches, their gradients, and the median heuristic.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sum::{dot, sq_dist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `(1 + ‖x−y‖²/(2αl²))^(−α)`
    RationalQuadratic,
    /// `exp(−γ‖x−y‖²)`
    GaussianRbf,
    /// `xᵀy`
    Linear,
    /// `(xᵀy + 1)²`
    Polynomial2,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::RationalQuadratic => "rational_quadratic",
            KernelFamily::GaussianRbf => "gaussian_rbf",
            KernelFamily::Linear => "linear",
            KernelFamily::Polynomial2 => "polynomial2",
        }
    }

    pub fn is_radial(self) -> bool {
        matches!(self, KernelFamily::RationalQuadratic | KernelFamily::GaussianRbf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthScaleMode {
    Fixed,
    #[default]
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub length_scale: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub length_scale_mode: LengthScaleMode,
}

fn default_alpha() -> f64 {
    0.5
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::rational_quadratic(0.5, None)
    }
}

impl KernelSpec {
    /// RQ kernel; `None` selects the median heuristic.
    pub fn rational_quadratic(alpha: f64, length_scale: Option<f64>) -> Self {
        Self {
            family: KernelFamily::RationalQuadratic,
            alpha,
            length_scale,
            gamma: None,
            length_scale_mode: if length_scale.is_some() {
                LengthScaleMode::Fixed
            } else {
                LengthScaleMode::MedianHeuristic
            },
        }
    }

    pub fn gaussian_rbf(gamma: f64) -> Self {
        Self {
            family: KernelFamily::GaussianRbf,
            alpha: default_alpha(),
            length_scale: None,
            gamma: Some(gamma),
            length_scale_mode: LengthScaleMode::Fixed,
        }
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            alpha: default_alpha(),
            length_scale: None,
            gamma: None,
            length_scale_mode: LengthScaleMode::Fixed,
        }
    }

    pub fn polynomial2() -> Self {
        Self { family: KernelFamily::Polynomial2, ..Self::linear() }
    }

    /// Whether a length scale has to be resolved from data before use.
    pub fn uses_median(&self) -> bool {
        self.family.is_radial() && self.length_scale_mode == LengthScaleMode::MedianHeuristic
    }

    /// Copy with a concrete length scale; for the RBF family `γ = 1/(2l²)`.
    pub fn with_length_scale(&self, l: f64) -> Self {
        let mut out = *self;
        out.length_scale = Some(l);
        out.length_scale_mode = LengthScaleMode::Fixed;
        if self.family == KernelFamily::GaussianRbf {
            out.gamma = Some(1.0 / (2.0 * l * l));
        }
        out
    }

    /// Check parameters, ignoring the length scale when it is data-driven.
    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::RationalQuadratic => {
                if !(self.alpha > 0.0 && self.alpha.is_finite()) {
                    return invalid(format!("rational quadratic needs alpha > 0, got {}", self.alpha));
                }
                if !self.uses_median() {
                    match self.length_scale {
                        Some(l) if l > 0.0 && l.is_finite() => {}
                        other => return invalid(format!("fixed length scale must be > 0, got {other:?}")),
                    }
                }
            }
            KernelFamily::GaussianRbf => {
                if !self.uses_median() && self.gamma.is_none() {
                    match self.length_scale {
                        Some(l) if l > 0.0 && l.is_finite() => {}
                        _ => return invalid("gaussian rbf needs gamma > 0 or a length scale"),
                    }
                }
                if let Some(g) = self.gamma {
                    if !(g > 0.0 && g.is_finite()) {
                        return invalid(format!("gamma must be > 0, got {g}"));
                    }
                }
            }
            KernelFamily::Linear | KernelFamily::Polynomial2 => {}
        }
        Ok(())
    }

    pub(crate) fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        if self.uses_median() {
            return invalid("kernel length scale not resolved (median heuristic mode)");
        }
        Ok(match self.family {
            KernelFamily::RationalQuadratic => {
                let l = self.length_scale.expect("validated");
                Resolved::RationalQuadratic {
                    alpha: self.alpha,
                    inv_2al2: 1.0 / (2.0 * self.alpha * l * l),
                    inv_l2: 1.0 / (l * l),
                }
            }
            KernelFamily::GaussianRbf => {
                let gamma = self.gamma.unwrap_or_else(|| {
                    let l = self.length_scale.expect("validated");
                    1.0 / (2.0 * l * l)
                });
                Resolved::GaussianRbf { gamma }
            }
            KernelFamily::Linear => Resolved::Linear,
            KernelFamily::Polynomial2 => Resolved::Polynomial2,
        })
    }
}

/// Kernel with every parameter fixed, ready for evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Resolved {
    RationalQuadratic { alpha: f64, inv_2al2: f64, inv_l2: f64 },
    GaussianRbf { gamma: f64 },
    Linear,
    Polynomial2,
}

impl Resolved {
    #[inline]
    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Resolved::RationalQuadratic { alpha, inv_2al2, .. } => {
                (1.0 + sq_dist(x, y) * inv_2al2).powf(-alpha)
            }
            Resolved::GaussianRbf { gamma } => (-gamma * sq_dist(x, y)).exp(),
            Resolved::Linear => dot(x, y),
            Resolved::Polynomial2 => {
                let t = dot(x, y) + 1.0;
                t * t
            }
        }
    }

    /// Return `k(x,y)` and add `scale · ∂k/∂x` into `out`.
    #[inline]
    pub(crate) fn eval_grad_into(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) -> f64 {
        match *self {
            Resolved::RationalQuadratic { alpha, inv_2al2, inv_l2 } => {
                let base = 1.0 + sq_dist(x, y) * inv_2al2;
                let k = base.powf(-alpha);
                // ∂k/∂x = base^(−α−1) · (y − x) / l²
                let c = scale * k / base * inv_l2;
                for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
                    *o += c * (yi - xi);
                }
                k
            }
            Resolved::GaussianRbf { gamma } => {
                let k = (-gamma * sq_dist(x, y)).exp();
                let c = scale * 2.0 * gamma * k;
                for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
                    *o += c * (yi - xi);
                }
                k
            }
            Resolved::Linear => {
                for (o, yi) in out.iter_mut().zip(y) {
                    *o += scale * yi;
                }
                dot(x, y)
            }
            Resolved::Polynomial2 => {
                let t = dot(x, y) + 1.0;
                let c = scale * 2.0 * t;
                for (o, yi) in out.iter_mut().zip(y) {
                    *o += c * yi;
                }
                t * t
            }
        }
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return invalid(format!("kernel inputs differ in length: {} vs {}", x.len(), y.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel input".into()));
    }
    Ok(())
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    Ok(spec.resolve()?.eval(x, y))
}

/// Closed-form `∂k(x, y)/∂x`.
pub fn kernel_grad_x(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    let mut out = vec![0.0; x.len()];
    spec.resolve()?.eval_grad_into(x, y, 1.0, &mut out);
    Ok(out)
}

/// Median of all nonzero pairwise Euclidean distances in the pooled sample
/// `codes_a ∪ codes_b`, over unordered pairs.
pub fn median_heuristic(codes_a: &[Vec<f64>], codes_b: &[Vec<f64>]) -> Result<f64> {
    let pooled: Vec<&[f64]> = codes_a.iter().chain(codes_b).map(Vec::as_slice).collect();
    if pooled.len() < 2 {
        return invalid(format!("median heuristic needs at least 2 codes, got {}", pooled.len()));
    }
    let mut d2 = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            let d = sq_dist(pooled[i], pooled[j]);
            if d > 0.0 {
                d2.push(d);
            }
        }
    }
    if d2.is_empty() {
        return Err(Error::DegenerateSample("all pairwise distances are zero".into()));
    }
    if d2.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("pairwise distance".into()));
    }
    let n = d2.len();
    let mid = n / 2;
    let (_, upper, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = upper.sqrt();
    if n % 2 == 1 {
        return Ok(upper);
    }
    let lower = d2[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max).sqrt();
    Ok(0.5 * (lower + upper))
}
