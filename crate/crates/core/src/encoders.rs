//! Patch encoders `h(·)` applied before a distance-based kernel.
//!
//! Every encoder exposes a forward map ([`Encoder::encode`]) and its
//! vector-Jacobian product ([`Encoder::encode_vjp`]) so that kernel gradients
//! in code space can be pulled back to pixel space.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::error::{invalid, Error, Result};
use crate::grid::PatchSample;
use crate::nn::{Activation, Mlp};

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Identity,
    RandomProjection,
    Pca,
    Autoencoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Encoder {
    kind: EncoderKind,
    input_dim: usize,
    code_dim: usize,
    /// `code_dim x input_dim`, row-major.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    projection: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    network: Option<Mlp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    retained_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    final_loss: Option<f64>,
}

impl Encoder {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: EncoderKind::Identity,
            input_dim: dim,
            code_dim: dim,
            projection: Vec::new(),
            mean: Vec::new(),
            network: None,
            retained_variance: None,
            final_loss: None,
        }
    }

    /// Linear encoder `x ↦ A x` with an explicit `code_dim x input_dim` matrix.
    pub fn linear(matrix: Vec<f64>, code_dim: usize, input_dim: usize) -> Result<Self> {
        if matrix.len() != code_dim * input_dim || code_dim == 0 {
            return invalid(format!(
                "projection needs {code_dim}x{input_dim} entries, got {}",
                matrix.len()
            ));
        }
        Ok(Self {
            kind: EncoderKind::RandomProjection,
            projection: matrix,
            code_dim,
            ..Self::identity(input_dim)
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn code_dim(&self) -> usize {
        self.code_dim
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn retained_variance(&self) -> Option<f64> {
        self.retained_variance
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.final_loss
    }

    pub fn is_linear(&self) -> bool {
        self.kind != EncoderKind::Autoencoder
    }

    fn check_input(&self, patch: &[f64]) -> Result<()> {
        if patch.len() != self.input_dim {
            return invalid(format!(
                "encoder expects {} inputs, got {}",
                self.input_dim,
                patch.len()
            ));
        }
        Ok(())
    }

    pub fn encode(&self, patch: &[f64]) -> Result<Vec<f64>> {
        self.check_input(patch)?;
        Ok(self.encode_unchecked(patch))
    }

    pub(crate) fn encode_unchecked(&self, patch: &[f64]) -> Vec<f64> {
        match self.kind {
            EncoderKind::Identity => patch.to_vec(),
            EncoderKind::RandomProjection | EncoderKind::Pca => {
                let d = self.input_dim;
                (0..self.code_dim)
                    .map(|k| {
                        let row = &self.projection[k * d..(k + 1) * d];
                        if self.mean.is_empty() {
                            crate::sum::dot(row, patch)
                        } else {
                            row.iter()
                                .zip(patch.iter().zip(&self.mean))
                                .map(|(a, (x, m))| a * (x - m))
                                .sum()
                        }
                    })
                    .collect()
            }
            EncoderKind::Autoencoder => self.network.as_ref().expect("autoencoder network").forward(patch),
        }
    }

    /// `Jᵀ · cotangent`, with `J` the Jacobian of [`Encoder::encode`] at `patch`.
    pub fn encode_vjp(&self, patch: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        self.check_input(patch)?;
        if cotangent.len() != self.code_dim {
            return invalid(format!(
                "cotangent has {} entries, encoder code_dim is {}",
                cotangent.len(),
                self.code_dim
            ));
        }
        Ok(self.vjp_unchecked(patch, cotangent))
    }

    pub(crate) fn vjp_unchecked(&self, patch: &[f64], cotangent: &[f64]) -> Vec<f64> {
        match self.kind {
            EncoderKind::Identity => cotangent.to_vec(),
            EncoderKind::RandomProjection | EncoderKind::Pca => {
                let d = self.input_dim;
                let mut out = vec![0.0; d];
                for (k, &c) in cotangent.iter().enumerate() {
                    if c != 0.0 {
                        for (o, a) in out.iter_mut().zip(&self.projection[k * d..(k + 1) * d]) {
                            *o += c * a;
                        }
                    }
                }
                out
            }
            EncoderKind::Autoencoder => {
                let net = self.network.as_ref().expect("autoencoder network");
                let trace = net.forward_trace(patch);
                net.backward(&trace, cotangent, None)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let enc: Encoder = serde_json::from_str(text)?;
        enc.validate()?;
        Ok(enc)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("encoder: {m}")));
        if self.input_dim == 0 || self.code_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        match self.kind {
            EncoderKind::Identity if self.code_dim != self.input_dim => {
                bad("identity encoder needs code_dim == input_dim".into())
            }
            EncoderKind::RandomProjection | EncoderKind::Pca
                if self.projection.len() != self.code_dim * self.input_dim =>
            {
                bad(format!("projection has {} entries", self.projection.len()))
            }
            EncoderKind::Pca if self.mean.len() != self.input_dim => bad("pca mean has wrong length".into()),
            EncoderKind::Autoencoder => match &self.network {
                Some(net) if net.input_dim() == self.input_dim && net.output_dim() == self.code_dim => Ok(()),
                _ => bad("autoencoder network missing or mismatched".into()),
            },
            _ => Ok(()),
        }
    }
}

/// Gaussian random projection with entries `N(0, 1/code_dim)`.
///
/// With `identity_when_square` set and `code_dim == input_dim`, the identity
/// encoder is returned instead.
pub fn fit_random_projection<R: Rng + ?Sized>(
    input_dim: usize,
    code_dim: usize,
    identity_when_square: bool,
    rng: &mut R,
) -> Result<Encoder> {
    if code_dim == 0 || code_dim > input_dim {
        return invalid(format!("code_dim {code_dim} must lie in 1..={input_dim}"));
    }
    if identity_when_square && code_dim == input_dim {
        return Ok(Encoder::identity(input_dim));
    }
    let normal = Normal::new(0.0, (1.0 / code_dim as f64).sqrt()).expect("valid std");
    let matrix = (0..code_dim * input_dim).map(|_| normal.sample(rng)).collect();
    Encoder::linear(matrix, code_dim, input_dim)
}

pub fn fit_pca(patches: &PatchSample, code_dim: usize) -> Result<Encoder> {
    fit_pca_vectors(&patches.patches, code_dim)
}

/// Principal components of arbitrary equal-length vectors.
///
/// Directions come out in descending eigenvalue order, each with its
/// largest-magnitude entry positive.
pub fn fit_pca_vectors(data: &[Vec<f64>], code_dim: usize) -> Result<Encoder> {
    let n = data.len();
    if n < 2 {
        return invalid(format!("pca needs at least 2 samples, got {n}"));
    }
    let d = data[0].len();
    if data.iter().any(|v| v.len() != d) {
        return invalid("pca samples differ in length");
    }
    if code_dim == 0 || code_dim > d.min(n) {
        return invalid(format!("code_dim {code_dim} must lie in 1..={}", d.min(n)));
    }
    let mut mean = vec![0.0; d];
    for v in data {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let scale: f64 = data.iter().flatten().map(|x| x * x).sum::<f64>() / (n * d) as f64;
    let total_ss = centered.norm_squared();
    if !total_ss.is_finite() {
        return Err(Error::NonFinite("pca input".into()));
    }
    if total_ss <= 1e-24 * (scale * (n * d) as f64).max(f64::MIN_POSITIVE) {
        return Err(Error::ZeroVariance);
    }

    // (eigenvalue of the sum-of-squares matrix, unit direction in R^d)
    let mut pairs: Vec<(f64, Vec<f64>)> = if d <= n {
        let eig = SymmetricEigen::new(centered.transpose() * &centered);
        (0..d)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
            .collect()
    } else {
        let eig = SymmetricEigen::new(&centered * centered.transpose());
        (0..n)
            .map(|k| {
                let mu = eig.eigenvalues[k];
                let dir = centered.transpose() * eig.eigenvectors.column(k);
                (mu, dir.iter().copied().collect())
            })
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let max_eig = pairs[0].0;

    // Orthonormalize in order; directions with negligible variance (rank
    // deficiency in the Gram route) are completed from the canonical basis.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(code_dim);
    let mut eigvals = Vec::with_capacity(code_dim);
    let mut canonical = 0usize;
    for (ev, dir) in pairs.into_iter() {
        if basis.len() == code_dim {
            break;
        }
        let candidate = if ev > 1e-12 * max_eig { Some(dir) } else { None };
        let mut v = match candidate.and_then(|c| orthonormalize(c, &basis)) {
            Some(v) => v,
            None => loop {
                if canonical >= d {
                    return invalid("could not complete pca basis");
                }
                let mut e = vec![0.0; d];
                e[canonical] = 1.0;
                canonical += 1;
                if let Some(v) = orthonormalize(e, &basis) {
                    break v;
                }
            },
        };
        let (imax, _) = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
        if v[imax] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigvals.push(ev.max(0.0));
        basis.push(v);
    }
    let retained = (eigvals.iter().sum::<f64>() / total_ss).min(1.0);
    Ok(Encoder {
        kind: EncoderKind::Pca,
        input_dim: d,
        code_dim,
        projection: basis.concat(),
        mean,
        network: None,
        retained_variance: Some(retained),
        final_loss: None,
    })
}

/// Two passes of modified Gram-Schmidt; `None` if `v` is (numerically) in
/// the span of `basis`.
fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm0 == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let c = crate::sum::dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, bi)| *x -= c * bi);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-10 * norm0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderConfig {
    pub hidden_dim: usize,
    pub code_dim: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub noise_sigma: f64,
    pub augment_flips: bool,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            code_dim: 8,
            iterations: 2000,
            batch_size: 32,
            learning_rate: 1e-3,
            noise_sigma: 0.05,
            augment_flips: true,
        }
    }
}

impl AutoencoderConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.code_dim == 0 || self.iterations == 0 || self.batch_size == 0 {
            return invalid("autoencoder dimensions, iterations and batch size must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return invalid("autoencoder needs learning_rate > 0 and noise_sigma >= 0");
        }
        Ok(())
    }
}

/// Result of autoencoder training: the encoder half and the per-iteration
/// batch losses.
#[derive(Debug, Clone)]
pub struct TrainedAutoencoder {
    pub encoder: Encoder,
    pub loss_trace: Vec<f64>,
}

pub fn train_autoencoder<R: Rng + ?Sized>(
    patches: &PatchSample,
    cfg: &AutoencoderConfig,
    rng: &mut R,
) -> Result<TrainedAutoencoder> {
    train_autoencoder_vectors(&patches.patches, Some(patches.patch_size), cfg, rng)
}

/// Flip a square patch. `horizontal` mirrors columns, `vertical` mirrors rows.
pub fn flip_patch(patch: &[f64], p: usize, horizontal: bool, vertical: bool) -> Vec<f64> {
    let mut out = vec![0.0; p * p];
    for r in 0..p {
        let sr = if vertical { p - 1 - r } else { r };
        for c in 0..p {
            let sc = if horizontal { p - 1 - c } else { c };
            out[r * p + c] = patch[sr * p + sc];
        }
    }
    out
}

fn autoencoder_layout(input: usize, cfg: &AutoencoderConfig) -> (Vec<usize>, Vec<Activation>) {
    (
        vec![input, cfg.hidden_dim, cfg.code_dim, cfg.hidden_dim, input],
        vec![Activation::LeakyRelu(LEAKY_SLOPE), Activation::Tanh, Activation::Relu, Activation::Tanh],
    )
}

#[cfg(test)]
/// Mean squared reconstruction error of a full autoencoder network over `batch`.
fn reconstruction_loss(net: &Mlp, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let d = net.input_dim() as f64;
    inputs
        .iter()
        .zip(targets)
        .map(|(x, t)| net.forward(x).iter().zip(t).map(|(o, ti)| (o - ti) * (o - ti)).sum::<f64>() / d)
        .sum::<f64>()
        / inputs.len() as f64
}

/// Train a dense autoencoder (`affine → leaky-ReLU → affine → tanh` encoder,
/// `affine → ReLU → affine → tanh` decoder) with Adam on the mean squared
/// reconstruction error. Each batch is augmented with random flips (when
/// `patch_size` is known) and additive Gaussian input noise.
pub fn train_autoencoder_vectors<R: Rng + ?Sized>(
    data: &[Vec<f64>],
    patch_size: Option<usize>,
    cfg: &AutoencoderConfig,
    rng: &mut R,
) -> Result<TrainedAutoencoder> {
    cfg.validate()?;
    if data.len() < cfg.batch_size {
        return invalid(format!(
            "autoencoder needs at least batch_size={} samples, got {}",
            cfg.batch_size,
            data.len()
        ));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|v| v.len() != d) {
        return invalid("autoencoder samples must share a positive length");
    }
    let flip_side = match (cfg.augment_flips, patch_size) {
        (false, _) => None,
        (true, Some(p)) if p * p == d => Some(p),
        (true, _) => return invalid("flip augmentation needs square patches of known size"),
    };
    let (dims, acts) = autoencoder_layout(d, cfg);
    let mut net = Mlp::init(dims.clone(), acts.clone(), rng);
    let mut adam = AdamState::new(
        net.params().len(),
        AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() },
    );
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut grad = vec![0.0; net.params().len()];
    let mut trace = Vec::with_capacity(cfg.iterations);
    let scale = 2.0 / (cfg.batch_size * d) as f64;

    for it in 0..cfg.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..data.len());
            let target = match flip_side {
                Some(p) => {
                    let h: bool = rng.random();
                    let v: bool = rng.random();
                    flip_patch(&data[idx], p, h, v)
                }
                None => data[idx].clone(),
            };
            let input: Vec<f64> = if cfg.noise_sigma > 0.0 {
                target.iter().map(|t| t + noise.sample(rng)).collect()
            } else {
                target.clone()
            };
            let tr = net.forward_trace(&input);
            let cot: Vec<f64> = tr
                .output()
                .iter()
                .zip(&target)
                .map(|(o, t)| {
                    loss += (o - t) * (o - t);
                    scale * (o - t)
                })
                .collect();
            net.backward(&tr, &cot, Some(&mut grad));
        }
        loss /= (cfg.batch_size * d) as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("autoencoder loss {loss} at iteration {it}")));
        }
        trace.push(loss);
        adam.step(net.params_mut(), &grad)?;
    }

    let enc_dims = dims[..3].to_vec();
    let enc_params = net.params()[..crate::nn::param_count(&enc_dims)].to_vec();
    let network = Mlp::from_parts(enc_dims, acts[..2].to_vec(), enc_params).expect("consistent split");
    let encoder = Encoder {
        kind: EncoderKind::Autoencoder,
        input_dim: d,
        code_dim: cfg.code_dim,
        projection: Vec::new(),
        mean: Vec::new(),
        network: Some(network),
        retained_variance: None,
        final_loss: trace.last().copied(),
    };
    Ok(TrainedAutoencoder { encoder, loss_trace: trace })
}
