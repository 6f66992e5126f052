//! # geommd
//!
//! Exemplar-based synthesis of 2D geological images. A realization is made to
//! reproduce the *patch distribution* of an exemplar (training image) by
//! minimizing the kernel maximum mean discrepancy (MMD²) between patches of the
//! realization and patches of the exemplar.
//!
//! Two synthesis routes are provided:
//!
//! - [`optimsynth::synthesize`]: direct Adam optimization of the pixels in a
//!   `tanh`-reparametrized space.
//! - [`gennet::train_generator`]: training a dense generator `g(z)` on the
//!   tempered KL objective `E[MMD²] - λ·Ĥ`, where `Ĥ` is a k-nearest-neighbour
//!   entropy estimate over the batch.
//!
//! Patches are compared through an [`encoders::Encoder`] (identity, random
//! projection, PCA or a dense autoencoder) followed by a
//! [`kernels::KernelSpec`]. Results are evaluated with [`stats`]: pixel
//! histograms and directional two-point probability functions.
//!
//! All randomness flows through explicitly seeded streams; identical seeds give
//! bitwise-identical results.

pub mod adam;
pub mod cli;
pub mod config;
pub mod encoders;
pub mod entropy;
pub mod error;
pub mod gennet;
pub mod grid;
pub mod kernels;
pub mod mmd;
mod nn;
pub mod optimsynth;
pub mod pgm;
pub mod stats;
mod sum;

pub use error::{Error, Result};
pub use grid::{Grid, PatchSample};

/// Seeded random stream used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Build the crate's random stream from a seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
