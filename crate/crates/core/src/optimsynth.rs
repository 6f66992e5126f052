//! Optimization-based synthesis: minimize MMD² between patches of the
//! realization and patches of the exemplar, directly over the pixels.
//!
//! Pixels are reparametrized as `X = tanh(X')` and Adam runs on `X'`. Each
//! iteration redraws patch origins from reflect-padded copies of both images.

use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use crate::adam::{AdamConfig, AdamState};
use crate::encoders::Encoder;
use crate::error::{invalid, Error, Result};
use crate::grid::{patches_at, reflect_pad, sample_origins, sample_patches_padded, scatter_add_patches, Grid};
use crate::kernels::KernelSpec;
use crate::mmd::{mmd2_grad_vectors, MmdResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub out_height: usize,
    pub out_width: usize,
    pub patch_size: usize,
    pub patches_per_iter: usize,
    /// Exemplar patches drawn per iteration; defaults to `patches_per_iter`.
    pub exemplar_patches_per_iter: Option<usize>,
    /// Reflection padding; defaults to half a patch.
    pub pad: Option<usize>,
    pub iterations: usize,
    pub kernel: KernelSpec,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Standard deviation of the initial `X'`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            out_height: 64,
            out_width: 64,
            patch_size: 16,
            patches_per_iter: 128,
            exemplar_patches_per_iter: None,
            pad: None,
            iterations: 2000,
            kernel: KernelSpec::default(),
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            init_scale: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn pad(&self) -> usize {
        self.pad.unwrap_or(self.patch_size / 2)
    }

    pub fn exemplar_count(&self) -> usize {
        self.exemplar_patches_per_iter.unwrap_or(self.patches_per_iter)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<()> {
        let pad = self.pad();
        if self.out_height == 0 || self.out_width == 0 || self.patch_size == 0 {
            return invalid("output size and patch size must be positive");
        }
        if self.patches_per_iter == 0 || self.exemplar_count() == 0 {
            return invalid("patches_per_iter must be at least 1");
        }
        if self.patch_size > self.out_height.min(self.out_width) + 2 * pad {
            return invalid(format!(
                "patch size {} exceeds padded output {}x{}",
                self.patch_size,
                self.out_height + 2 * pad,
                self.out_width + 2 * pad
            ));
        }
        if pad > 0 && pad >= self.out_height.min(self.out_width) {
            return invalid(format!("pad {pad} too large for output"));
        }
        if !(self.lr > 0.0 && self.init_scale > 0.0) {
            return invalid("lr and init_scale must be positive");
        }
        self.kernel.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub mmd2: f64,
    pub length_scale_used: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthResult {
    pub grid: Grid,
    pub trace: Vec<TraceRow>,
}

/// MMD² of the realization `tanh(raw)` against fixed exemplar patches, and its
/// gradient with respect to `raw`, for given patch origins in the padded
/// realization.
pub fn pixel_objective_grad(
    kernel: &KernelSpec,
    enc: &Encoder,
    raw: &Grid,
    pad: usize,
    patch_size: usize,
    origins: &[(usize, usize)],
    exemplar_patches: &[Vec<f64>],
) -> Result<(MmdResult, Grid)> {
    let image = raw.map(f64::tanh);
    let padded = reflect_pad(&image, pad)?;
    let sample = patches_at(&padded, origins, patch_size, pad)?;
    let (res, patch_grads) = mmd2_grad_vectors(kernel, enc, &sample.patches, exemplar_patches)?;
    let mut grad = scatter_add_patches(&patch_grads, origins, sample.padded_shape, pad, patch_size)?;
    for (g, x) in grad.values_mut().iter_mut().zip(image.values()) {
        *g *= 1.0 - x * x;
    }
    Ok((res, grad))
}

pub fn synthesize(exemplar: &Grid, enc: &Encoder, cfg: &SynthConfig) -> Result<SynthResult> {
    synthesize_with(exemplar, enc, cfg, |_| {})
}

/// [`synthesize`] with a per-iteration callback on the trace row.
pub fn synthesize_with(
    exemplar: &Grid,
    enc: &Encoder,
    cfg: &SynthConfig,
    mut on_iter: impl FnMut(&TraceRow),
) -> Result<SynthResult> {
    cfg.validate()?;
    let (p, pad) = (cfg.patch_size, cfg.pad());
    if enc.input_dim() != p * p {
        return invalid(format!("encoder input {} does not match patch size {p}", enc.input_dim()));
    }
    let exemplar_padded = reflect_pad(exemplar, pad)?;
    if p > exemplar_padded.height().min(exemplar_padded.width()) {
        return invalid("patch larger than padded exemplar");
    }
    let mut rng = crate::seeded_rng(cfg.seed);
    let init = Normal::new(0.0, cfg.init_scale).expect("positive init scale");
    let mut raw = Grid::new(
        cfg.out_height,
        cfg.out_width,
        (0..cfg.out_height * cfg.out_width).map(|_| init.sample(&mut rng)).collect(),
    )?;
    let padded_shape = (cfg.out_height + 2 * pad, cfg.out_width + 2 * pad);
    let mut adam = AdamState::new(raw.len(), cfg.adam());
    let mut trace = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let origins = sample_origins(padded_shape, cfg.patches_per_iter, p, &mut rng)?;
        let target = sample_patches_padded(&exemplar_padded, cfg.exemplar_count(), p, pad, &mut rng)?;
        let (res, grad) = pixel_objective_grad(&cfg.kernel, enc, &raw, pad, p, &origins, &target.patches)?;
        if !res.value.is_finite() {
            return Err(Error::NonFinite(format!("mmd² at iteration {iteration}")));
        }
        adam.step(raw.values_mut(), grad.values())?;
        let row = TraceRow { iteration, mmd2: res.value, length_scale_used: res.length_scale_used };
        on_iter(&row);
        trace.push(row);
    }
    Ok(SynthResult { grid: raw.map(f64::tanh), trace })
}

/// Medians of consecutive non-overlapping windows; a trailing partial window
/// is dropped unless it is the only one.
pub fn windowed_medians(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut chunks: Vec<&[f64]> = values.chunks_exact(window).collect();
    if chunks.is_empty() && !values.is_empty() {
        chunks.push(values);
    }
    chunks
        .into_iter()
        .map(|c| {
            let mut s = c.to_vec();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            if n % 2 == 1 {
                s[n / 2]
            } else {
                0.5 * (s[n / 2 - 1] + s[n / 2])
            }
        })
        .collect()
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TraceRow]) -> Result<()> {
    let mut out = String::from("iteration,mmd2,length_scale_used\n");
    for r in trace {
        let l = r.length_scale_used.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.iteration, r.mmd2, l));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}
