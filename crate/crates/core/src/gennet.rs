//! Dense generator `g(z)` and its training on the tempered KL objective
//!
//! ```text
//! E[L] − λĤ = 1/N Σᵢ MMD²[patches(Xᵢ), patches(X₀)] − λ/N Σᵢ c·log ρ(Xᵢ)
//! ```
//!
//! with `Xᵢ = g(Zᵢ)`, `Zᵢ ~ N(0, I)` and `ρ` the k-NN distance within the
//! batch. Derivatives are hand-written (see [`GeneratorModel::generate_vjp`]).

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::encoders::Encoder;
use crate::entropy::{default_k, knn_entropy_grad};
use crate::error::{invalid, Error, Result};
use crate::grid::{patches_at, reflect_pad, sample_origins, sample_patches_padded, scatter_add_patches, Grid};
use crate::kernels::KernelSpec;
use crate::mmd::mmd2_grad_vectors;
use crate::nn::{Activation, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorModel {
    latent_dim: usize,
    output_height: usize,
    output_width: usize,
    network: Mlp,
}

/// `(out_h/p)·(out_w/p)·code_dim`, capped at 256.
pub fn default_latent_dim(out_h: usize, out_w: usize, patch: usize, code_dim: usize) -> usize {
    ((out_h / patch.max(1)) * (out_w / patch.max(1)) * code_dim).clamp(1, 256)
}

/// Dense generator with ReLU hidden layers and a `tanh` output layer;
/// weights `N(0, 1/fan_in)`, zero biases.
pub fn init_generator<R: Rng + ?Sized>(
    latent_dim: usize,
    hidden_dims: &[usize],
    out_h: usize,
    out_w: usize,
    rng: &mut R,
) -> Result<GeneratorModel> {
    if latent_dim == 0 || out_h == 0 || out_w == 0 || hidden_dims.contains(&0) {
        return invalid("generator dimensions must be positive");
    }
    let mut dims = vec![latent_dim];
    dims.extend_from_slice(hidden_dims);
    dims.push(out_h * out_w);
    let mut acts = vec![Activation::Relu; hidden_dims.len()];
    acts.push(Activation::Tanh);
    Ok(GeneratorModel {
        latent_dim,
        output_height: out_h,
        output_width: out_w,
        network: Mlp::init(dims, acts, rng),
    })
}

impl GeneratorModel {
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn output_shape(&self) -> (usize, usize) {
        (self.output_height, self.output_width)
    }

    pub fn layer_dims(&self) -> &[usize] {
        self.network.dims()
    }

    pub fn params(&self) -> &[f64] {
        self.network.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.network.params_mut()
    }

    pub fn param_count(&self) -> usize {
        self.network.params().len()
    }

    /// Upper bound on `‖g(z) − g(z')‖ / ‖z − z'‖`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.network.lipschitz_bound()
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.latent_dim {
            return invalid(format!("latent has {} entries, model expects {}", z.len(), self.latent_dim));
        }
        Ok(())
    }

    pub fn generate(&self, z: &[f64]) -> Result<Grid> {
        self.check_latent(z)?;
        Grid::new(self.output_height, self.output_width, self.network.forward(z))
    }

    /// Gradient of `⟨generate(z), cotangent⟩` w.r.t. all parameters, in the
    /// layout of [`GeneratorModel::params`].
    pub fn generate_vjp(&self, z: &[f64], cotangent: &Grid) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        if (cotangent.height(), cotangent.width()) != self.output_shape() {
            return invalid("cotangent shape does not match generator output");
        }
        let trace = self.network.forward_trace(z);
        let mut grad = vec![0.0; self.param_count()];
        self.network.backward(&trace, cotangent.values(), Some(&mut grad));
        Ok(grad)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: GeneratorModel = serde_json::from_str(text)?;
        let dims = m.network.dims();
        if dims[0] != m.latent_dim || *dims.last().unwrap() != m.output_height * m.output_width {
            return Err(Error::Config("generator dimensions inconsistent with network".into()));
        }
        if Mlp::from_parts(dims.to_vec(), m.network.activations().to_vec(), m.params().to_vec()).is_none() {
            return Err(Error::Config("generator parameter count mismatch".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenTrainConfig {
    pub batch_size: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub patches_per_image: usize,
    /// Exemplar patches per batch member; defaults to `patches_per_image`.
    pub exemplar_patches_per_image: Option<usize>,
    pub patch_size: usize,
    pub pad: Option<usize>,
    pub kernel: KernelSpec,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Defaults to `⌊√N⌋`.
    pub k_nn: Option<usize>,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 4,
            lambda: 1e-7,
            iterations: 5000,
            patches_per_image: 64,
            exemplar_patches_per_image: None,
            patch_size: 8,
            pad: None,
            kernel: KernelSpec::default(),
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seed: 0,
            k_nn: None,
        }
    }
}

impl GenTrainConfig {
    pub fn pad(&self) -> usize {
        self.pad.unwrap_or(self.patch_size / 2)
    }

    pub fn k(&self) -> usize {
        self.k_nn.unwrap_or_else(|| default_k(self.batch_size))
    }

    pub fn exemplar_count(&self) -> usize {
        self.exemplar_patches_per_image.unwrap_or(self.patches_per_image)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return invalid(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return invalid(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.patches_per_image == 0 || self.exemplar_count() == 0 || self.patch_size == 0 {
            return invalid("patch counts and size must be positive");
        }
        let k = self.k();
        if k == 0 || k >= self.batch_size {
            return invalid(format!("k_nn must lie in 1..{}, got {k}", self.batch_size));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return invalid("lr must be positive");
        }
        self.kernel.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenTraceRow {
    pub iteration: usize,
    pub expected_loss: f64,
    pub lambda_entropy: f64,
}

/// Objective value and parameter gradient for one batch with frozen latents,
/// patch origins and exemplar patches.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub expected_loss: f64,
    pub lambda_entropy: f64,
    pub grad: Vec<f64>,
}

impl BatchObjective {
    /// `E[L] − λĤ`.
    pub fn value(&self) -> f64 {
        self.expected_loss - self.lambda_entropy
    }
}

/// Evaluate `E[L] − λĤ` and `∇_θ` for a fully specified batch.
///
/// `origins[i]` are patch origins in the padded realization `i` and
/// `exemplar_patches[i]` the exemplar sample it is compared against.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective_grad(
    model: &GeneratorModel,
    enc: &Encoder,
    kernel: &KernelSpec,
    lambda: f64,
    k_nn: usize,
    latents: &[Vec<f64>],
    origins: &[Vec<(usize, usize)>],
    exemplar_patches: &[Vec<Vec<f64>>],
    patch_size: usize,
    pad: usize,
) -> Result<BatchObjective> {
    let n = latents.len();
    if origins.len() != n || exemplar_patches.len() != n || n == 0 {
        return invalid("latents, origins and exemplar samples must align");
    }
    let nf = n as f64;
    let traces: Vec<_> = latents
        .iter()
        .map(|z| model.check_latent(z).map(|_| model.network.forward_trace(z)))
        .collect::<Result<_>>()?;
    let (h, w) = model.output_shape();

    let mut cotangents = Vec::with_capacity(n);
    let mut expected_loss = 0.0;
    for i in 0..n {
        let image = Grid::new(h, w, traces[i].output().to_vec())?;
        let padded = reflect_pad(&image, pad)?;
        let sample = patches_at(&padded, &origins[i], patch_size, pad)?;
        let (res, pg) = mmd2_grad_vectors(kernel, enc, &sample.patches, &exemplar_patches[i])?;
        expected_loss += res.value / nf;
        let mut g = scatter_add_patches(&pg, &origins[i], sample.padded_shape, pad, patch_size)?;
        g.values_mut().iter_mut().for_each(|v| *v /= nf);
        cotangents.push(g.into_values());
    }

    let mut lambda_entropy = 0.0;
    if lambda > 0.0 {
        let images: Vec<Vec<f64>> = traces.iter().map(|t| t.output().to_vec()).collect();
        let (ent, eg) = knn_entropy_grad(&images, k_nn)?;
        lambda_entropy = lambda * ent.rho_term;
        for (cot, e) in cotangents.iter_mut().zip(&eg) {
            for (c, ei) in cot.iter_mut().zip(e) {
                *c -= lambda * ei;
            }
        }
    }
    if !(expected_loss.is_finite() && lambda_entropy.is_finite()) {
        return Err(Error::NonFinite(format!(
            "generator objective: E[L]={expected_loss}, λĤ={lambda_entropy}"
        )));
    }

    let mut grad = vec![0.0; model.param_count()];
    for (tr, cot) in traces.iter().zip(&cotangents) {
        model.network.backward(tr, cot, Some(&mut grad));
    }
    Ok(BatchObjective { expected_loss, lambda_entropy, grad })
}

pub fn standard_normal_latent<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Train `model` by Adam on `E[L] − λĤ`. Exemplar patches are redrawn for
/// every batch member.
pub fn train_generator(
    exemplar: &Grid,
    model: GeneratorModel,
    enc: &Encoder,
    cfg: &GenTrainConfig,
) -> Result<(GeneratorModel, Vec<GenTraceRow>)> {
    train_generator_with(exemplar, model, enc, cfg, |_| {})
}

pub fn train_generator_with(
    exemplar: &Grid,
    mut model: GeneratorModel,
    enc: &Encoder,
    cfg: &GenTrainConfig,
    mut on_iter: impl FnMut(&GenTraceRow),
) -> Result<(GeneratorModel, Vec<GenTraceRow>)> {
    cfg.validate()?;
    let (p, pad) = (cfg.patch_size, cfg.pad());
    if enc.input_dim() != p * p {
        return invalid(format!("encoder input {} does not match patch size {p}", enc.input_dim()));
    }
    let (h, w) = model.output_shape();
    if pad > 0 && pad >= h.min(w) || p > h.min(w) + 2 * pad {
        return invalid("patch/pad incompatible with generator output");
    }
    let exemplar_padded = reflect_pad(exemplar, pad)?;
    let padded_shape = (h + 2 * pad, w + 2 * pad);
    let mut rng = crate::seeded_rng(cfg.seed);
    let mut adam = AdamState::new(
        model.param_count(),
        AdamConfig { lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps },
    );
    let mut trace = Vec::with_capacity(cfg.iterations);
    let k = cfg.k();

    for iteration in 0..cfg.iterations {
        let latents: Vec<Vec<f64>> =
            (0..cfg.batch_size).map(|_| standard_normal_latent(model.latent_dim, &mut rng)).collect();
        let mut origins = Vec::with_capacity(cfg.batch_size);
        let mut targets = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            origins.push(sample_origins(padded_shape, cfg.patches_per_image, p, &mut rng)?);
            targets.push(sample_patches_padded(&exemplar_padded, cfg.exemplar_count(), p, pad, &mut rng)?.patches);
        }
        let obj = batch_objective_grad(&model, enc, &cfg.kernel, cfg.lambda, k, &latents, &origins, &targets, p, pad)
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("{m} at iteration {iteration}")),
                other => other,
            })?;
        adam.step(model.params_mut(), &obj.grad)?;
        let row = GenTraceRow { iteration, expected_loss: obj.expected_loss, lambda_entropy: obj.lambda_entropy };
        on_iter(&row);
        trace.push(row);
    }
    Ok((model, trace))
}

/// Sweep of one latent coordinate, all others fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolation {
    pub coordinate: usize,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

/// Draw `count` realizations, or in interpolation mode `steps` realizations
/// from a single base latent with one coordinate swept linearly.
pub fn sample<R: Rng + ?Sized>(
    model: &GeneratorModel,
    count: usize,
    rng: &mut R,
    interpolate: Option<Interpolation>,
) -> Result<Vec<Grid>> {
    match interpolate {
        None => (0..count)
            .map(|_| model.generate(&standard_normal_latent(model.latent_dim, rng)))
            .collect(),
        Some(it) => {
            if it.coordinate >= model.latent_dim {
                return invalid(format!("coordinate {} out of range for latent {}", it.coordinate, model.latent_dim));
            }
            if it.steps == 0 {
                return invalid("interpolation needs at least one step");
            }
            let base = standard_normal_latent(model.latent_dim, rng);
            (0..it.steps)
                .map(|s| {
                    let t = if it.steps == 1 { 0.0 } else { s as f64 / (it.steps - 1) as f64 };
                    let mut z = base.clone();
                    z[it.coordinate] = it.from + t * (it.to - it.from);
                    model.generate(&z)
                })
                .collect()
        }
    }
}

/// Pick the candidate whose late-training `|λĤ| / E[L]` is closest to 1 on a
/// log scale. Each candidate is `(λ, late E[L], late λĤ)`.
pub fn pick_lambda(candidates: &[(f64, f64, f64)]) -> Option<f64> {
    candidates
        .iter()
        .filter(|c| c.1 > 0.0 && c.2 != 0.0)
        .min_by(|a, b| {
            let ra = (a.2.abs() / a.1).log10().abs();
            let rb = (b.2.abs() / b.1).log10().abs();
            ra.total_cmp(&rb)
        })
        .map(|c| c.0)
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[GenTraceRow]) -> Result<()> {
    let mut out = String::from("iteration,expected_loss,lambda_entropy\n");
    for r in trace {
        out.push_str(&format!("{},{},{}\n", r.iteration, r.expected_loss, r.lambda_entropy));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}
