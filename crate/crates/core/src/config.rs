//! JSON run configuration shared by all CLI subcommands.
//!
//! Every section has defaults, so `{}` is a valid config. Unknown keys are
//! rejected and every referenced path must exist when the file is loaded.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adam::AdamConfig;
use crate::encoders::{AutoencoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::gennet::GenTrainConfig;
use crate::kernels::KernelSpec;
use crate::optimsynth::SynthConfig;
use crate::stats::{EvalConfig, DEFAULT_BINS, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExemplarSection {
    /// PGM to load; when absent a procedural channel image is generated.
    pub path: Option<PathBuf>,
    pub height: usize,
    pub width: usize,
    pub channel_fraction: f64,
    /// Seed of the procedural generator; defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for ExemplarSection {
    fn default() -> Self {
        Self { path: None, height: 64, width: 64, channel_fraction: 0.3, seed: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchSection {
    pub size: usize,
    pub per_iter: usize,
    /// Reflection padding; defaults to half a patch.
    pub pad: Option<usize>,
}

impl Default for PatchSection {
    fn default() -> Self {
        Self { size: 16, per_iter: 128, pad: None }
    }
}

impl PatchSection {
    pub fn pad(&self) -> usize {
        self.pad.unwrap_or(self.size / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    pub code_dim: usize,
    /// Exemplar patches used to fit PCA or train the autoencoder.
    pub fit_patches: usize,
    /// Previously fitted encoder; overrides `kind`.
    pub model_path: Option<PathBuf>,
    /// Training settings; its `code_dim` is replaced by the section's.
    pub autoencoder: AutoencoderConfig,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Pca,
            code_dim: 16,
            fit_patches: 4096,
            model_path: None,
            autoencoder: AutoencoderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub out_height: usize,
    pub out_width: usize,
    pub iterations: usize,
    pub exemplar_patches_per_iter: Option<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub init_scale: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            out_height: s.out_height,
            out_width: s.out_width,
            iterations: s.iterations,
            exemplar_patches_per_iter: None,
            lr: s.lr,
            beta1: s.beta1,
            beta2: s.beta2,
            eps: s.eps,
            init_scale: s.init_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub out_height: usize,
    pub out_width: usize,
    pub hidden_dims: Vec<usize>,
    /// Defaults to the tiles-times-code heuristic of [`crate::gennet::default_latent_dim`].
    pub latent_dim: Option<usize>,
    pub batch_size: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub k_nn: Option<usize>,
    pub exemplar_patches_per_image: Option<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            out_height: 32,
            out_width: 32,
            hidden_dims: vec![128],
            latent_dim: None,
            batch_size: 4,
            lambda: 1e-7,
            iterations: 5000,
            k_nn: None,
            exemplar_patches_per_image: None,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub crop_size: usize,
    pub max_lag: usize,
    pub bins: usize,
    pub threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { crop_size: 60, max_lag: 16, bins: DEFAULT_BINS, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub exemplar: ExemplarSection,
    pub patch: PatchSection,
    pub encoder: EncoderSection,
    pub kernel: KernelSpec,
    pub synth: SynthSection,
    pub generator: GeneratorSection,
    pub eval: EvalSection,
}

/// Independent seed for one consumer of the run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub const STREAM_ENCODER: u64 = 1;
pub const STREAM_SYNTH: u64 = 2;
pub const STREAM_GENERATOR_INIT: u64 = 3;
pub const STREAM_GENERATOR_TRAIN: u64 = 4;
pub const STREAM_SAMPLE: u64 = 5;
pub const STREAM_EVAL: u64 = 6;
pub const STREAM_MMD: u64 = 7;

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn check_paths(&self) -> Result<()> {
        for p in [&self.exemplar.path, &self.encoder.model_path].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("referenced path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn exemplar_seed(&self) -> u64 {
        self.exemplar.seed.unwrap_or(self.seed)
    }

    pub fn autoencoder(&self) -> AutoencoderConfig {
        AutoencoderConfig { code_dim: self.encoder.code_dim, ..self.encoder.autoencoder }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            out_height: s.out_height,
            out_width: s.out_width,
            patch_size: self.patch.size,
            patches_per_iter: self.patch.per_iter,
            exemplar_patches_per_iter: s.exemplar_patches_per_iter,
            pad: Some(self.patch.pad()),
            iterations: s.iterations,
            kernel: self.kernel,
            lr: s.lr,
            beta1: s.beta1,
            beta2: s.beta2,
            eps: s.eps,
            init_scale: s.init_scale,
            seed: derive_seed(self.seed, STREAM_SYNTH),
        }
    }

    pub fn gen_train_config(&self) -> GenTrainConfig {
        let g = &self.generator;
        GenTrainConfig {
            batch_size: g.batch_size,
            lambda: g.lambda,
            iterations: g.iterations,
            patches_per_image: self.patch.per_iter,
            exemplar_patches_per_image: g.exemplar_patches_per_image,
            patch_size: self.patch.size,
            pad: Some(self.patch.pad()),
            kernel: self.kernel,
            lr: g.lr,
            beta1: g.beta1,
            beta2: g.beta2,
            eps: g.eps,
            seed: derive_seed(self.seed, STREAM_GENERATOR_TRAIN),
            k_nn: g.k_nn,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.eval;
        EvalConfig {
            crop_size: e.crop_size,
            patch_size: self.patch.size,
            max_lag: e.max_lag,
            bins: e.bins,
            threshold: e.threshold,
        }
    }
}
