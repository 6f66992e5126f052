//! Kozachenko–Leonenko k-nearest-neighbour entropy estimate
//!
//! ```text
//! Ĥ = (c/N) Σᵢ log ρᵢ + log V_c + ψ(N) − ψ(k)
//! ```
//!
//! where `ρᵢ` is the distance from sample `i` to its `k`-th nearest neighbour,
//! `c` the sample dimension and `V_c` the volume of the unit `c`-ball.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::sum::sq_dist;

/// Substitute for `ρ = 0` inside the logarithm.
pub const RHO_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyResult {
    /// Full estimate in nats.
    pub value: f64,
    /// `(c/N) Σ log ρᵢ`, the only data-dependent part of the estimate.
    pub rho_term: f64,
    pub knn_index: Vec<usize>,
    pub rho: Vec<f64>,
}

/// `max(1, ⌊√N⌋)`.
pub fn default_k(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(1)
}

/// `log` of the volume of the unit ball in `c` dimensions.
pub fn log_unit_ball_volume(c: usize) -> f64 {
    let half = c as f64 / 2.0;
    half * std::f64::consts::PI.ln() - ln_gamma(half + 1.0)
}

fn validate(samples: &[Vec<f64>], k: usize) -> Result<usize> {
    let n = samples.len();
    if n < 2 {
        return invalid(format!("entropy needs at least 2 samples, got {n}"));
    }
    if k == 0 || k >= n {
        return invalid(format!("k_nn must lie in 1..={}, got {k}", n - 1));
    }
    let c = samples[0].len();
    if c == 0 || samples.iter().any(|s| s.len() != c) {
        return invalid("entropy samples must share a positive dimension");
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("entropy sample".into()));
    }
    Ok(c)
}

/// Index of the `k`-th nearest neighbour of every sample (ties broken by
/// smaller index) and the corresponding distance.
fn kth_neighbours(samples: &[Vec<f64>], k: usize) -> (Vec<usize>, Vec<f64>) {
    let n = samples.len();
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(&samples[i], &samples[j]);
            d2[i * n + j] = d;
            d2[j * n + i] = d;
        }
    }
    let mut index = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    let mut cand: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i));
        let row = &d2[i * n..(i + 1) * n];
        let (_, &mut j, _) =
            cand.select_nth_unstable_by(k - 1, |&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        index.push(j);
        rho.push(row[j].sqrt());
    }
    (index, rho)
}

pub fn knn_entropy(samples: &[Vec<f64>], k_nn: usize) -> Result<EntropyResult> {
    let c = validate(samples, k_nn)?;
    let n = samples.len();
    let (knn_index, rho) = kth_neighbours(samples, k_nn);
    if rho.iter().all(|&r| r == 0.0) {
        return Err(Error::DegenerateSample("all entropy samples are identical".into()));
    }
    let mean_log: f64 = rho.iter().map(|&r| r.max(RHO_FLOOR).ln()).sum::<f64>() / n as f64;
    let rho_term = c as f64 * mean_log;
    let value = rho_term + log_unit_ball_volume(c) + digamma(n as f64) - digamma(k_nn as f64);
    Ok(EntropyResult { value, rho_term, knn_index, rho })
}

/// Estimate and the gradient of `rho_term` w.r.t. every sample, holding the
/// neighbour assignment fixed. Samples with `ρ = 0` contribute nothing.
pub fn knn_entropy_grad(samples: &[Vec<f64>], k_nn: usize) -> Result<(EntropyResult, Vec<Vec<f64>>)> {
    let res = knn_entropy(samples, k_nn)?;
    let n = samples.len();
    let c = samples[0].len();
    let scale = c as f64 / n as f64;
    let mut grads = vec![vec![0.0; c]; n];
    for i in 0..n {
        let r = res.rho[i];
        if r == 0.0 {
            continue;
        }
        let j = res.knn_index[i];
        let s = scale / (r * r);
        for t in 0..c {
            let g = s * (samples[i][t] - samples[j][t]);
            grads[i][t] += g;
            grads[j][t] -= g;
        }
    }
    Ok((res, grads))
}
