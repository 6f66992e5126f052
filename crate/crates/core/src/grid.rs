//! Pixel grids, patch extraction and the patch adjoint.
//!
//! A patch of a realization is a linear projection of the (reflect-padded)
//! pixel grid. [`scatter_add_patches`] is its exact transpose and is what
//! carries patch-space gradients back onto pixels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Rectangular field of real pixel values, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid(format!("grid dimensions must be positive, got {height}x{width}"));
        }
        if values.len() != height * width {
            return invalid(format!(
                "grid {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            ));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0.0)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Apply `f` to every pixel.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy out the `rows x cols` window starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, rows: usize, cols: usize) -> Result<Grid> {
        if rows == 0 || cols == 0 || row + rows > self.height || col + cols > self.width {
            return invalid(format!(
                "crop {rows}x{cols} at ({row},{col}) exceeds {}x{} grid",
                self.height, self.width
            ));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for r in row..row + rows {
            let start = r * self.width + col;
            values.extend_from_slice(&self.values[start..start + cols]);
        }
        Grid::new(rows, cols, values)
    }
}

/// Ordered set of square patches and their origins in the source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub patch_size: usize,
    pub origins: Vec<(usize, usize)>,
    pub patches: Vec<Vec<f64>>,
    pub source_padded: bool,
    /// Padding applied to the source before extraction.
    pub pad: usize,
    /// (height, width) of the padded grid the origins refer to.
    pub padded_shape: (usize, usize),
}

impl PatchSample {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Map a padded coordinate onto the source axis of length `n` by mirroring
/// about the boundary pixel (edge pixel not repeated).
#[inline]
fn reflect_index(padded: usize, pad: usize, n: usize) -> usize {
    let i = padded as isize - pad as isize;
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Mirror-reflect `grid` by `width` pixels on every side.
pub fn reflect_pad(grid: &Grid, width: usize) -> Result<Grid> {
    if width == 0 {
        return Ok(grid.clone());
    }
    if width >= grid.height.min(grid.width) {
        return invalid(format!(
            "reflection width {width} must be smaller than grid extent {}x{}",
            grid.height, grid.width
        ));
    }
    let (ph, pw) = (grid.height + 2 * width, grid.width + 2 * width);
    let cols: Vec<usize> = (0..pw).map(|j| reflect_index(j, width, grid.width)).collect();
    let mut values = Vec::with_capacity(ph * pw);
    for i in 0..ph {
        let src = reflect_index(i, width, grid.height);
        let row = &grid.values[src * grid.width..(src + 1) * grid.width];
        values.extend(cols.iter().map(|&c| row[c]));
    }
    Grid::new(ph, pw, values)
}

/// Read the `p x p` window at `origin`, flattened row-major.
pub fn extract_patch(grid: &Grid, origin: (usize, usize), p: usize) -> Result<Vec<f64>> {
    let (r0, c0) = origin;
    if p == 0 || r0 + p > grid.height || c0 + p > grid.width {
        return invalid(format!(
            "patch of size {p} at ({r0},{c0}) does not fit in {}x{} grid",
            grid.height, grid.width
        ));
    }
    let mut out = Vec::with_capacity(p * p);
    for r in r0..r0 + p {
        let start = r * grid.width + c0;
        out.extend_from_slice(&grid.values[start..start + p]);
    }
    Ok(out)
}

/// Draw `count` top-left origins uniformly, with replacement, over every
/// stride-1 position that fits a `p x p` patch in a `shape` grid.
pub fn sample_origins<R: Rng + ?Sized>(
    shape: (usize, usize),
    count: usize,
    p: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if p == 0 || p > shape.0 || p > shape.1 {
        return invalid(format!(
            "patch size {p} larger than padded grid {}x{}",
            shape.0, shape.1
        ));
    }
    let (nr, nc) = (shape.0 - p + 1, shape.1 - p + 1);
    Ok((0..count)
        .map(|_| (rng.random_range(0..nr), rng.random_range(0..nc)))
        .collect())
}

/// Extract patches at fixed origins from an already padded grid.
pub fn patches_at(
    padded: &Grid,
    origins: &[(usize, usize)],
    p: usize,
    pad: usize,
) -> Result<PatchSample> {
    let patches = origins
        .iter()
        .map(|&o| extract_patch(padded, o, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchSample {
        patch_size: p,
        origins: origins.to_vec(),
        patches,
        source_padded: pad > 0,
        pad,
        padded_shape: (padded.height, padded.width),
    })
}

/// Pad `grid` by `pad` and draw `count` random `p x p` patches from it.
pub fn sample_patches<R: Rng + ?Sized>(
    grid: &Grid,
    count: usize,
    p: usize,
    pad: usize,
    rng: &mut R,
) -> Result<PatchSample> {
    let padded = reflect_pad(grid, pad)?;
    sample_patches_padded(&padded, count, p, pad, rng)
}

/// As [`sample_patches`], for a grid that was padded by `pad` beforehand.
pub fn sample_patches_padded<R: Rng + ?Sized>(
    padded: &Grid,
    count: usize,
    p: usize,
    pad: usize,
    rng: &mut R,
) -> Result<PatchSample> {
    let origins = sample_origins((padded.height, padded.width), count, p, rng)?;
    patches_at(padded, &origins, p, pad)
}

/// Transpose of `extract ∘ reflect_pad`.
///
/// Accumulates every patch gradient into a padded buffer at its origin, then
/// folds the border back onto the interior pixels it mirrors. Accumulation
/// order is fixed (patch index, then row-major), so the result is
/// deterministic.
pub fn scatter_add_patches(
    patch_grads: &[Vec<f64>],
    origins: &[(usize, usize)],
    padded_shape: (usize, usize),
    pad: usize,
    p: usize,
) -> Result<Grid> {
    if patch_grads.len() != origins.len() {
        return invalid(format!(
            "{} patch gradients for {} origins",
            patch_grads.len(),
            origins.len()
        ));
    }
    let (ph, pw) = padded_shape;
    if ph <= 2 * pad || pw <= 2 * pad {
        return invalid(format!("padded shape {ph}x{pw} too small for pad {pad}"));
    }
    let mut acc = vec![0.0; ph * pw];
    for (g, &(r0, c0)) in patch_grads.iter().zip(origins) {
        if g.len() != p * p {
            return invalid(format!("patch gradient has {} entries, expected {}", g.len(), p * p));
        }
        if r0 + p > ph || c0 + p > pw {
            return invalid(format!("origin ({r0},{c0}) invalid for padded shape {ph}x{pw}"));
        }
        for dr in 0..p {
            let row = &mut acc[(r0 + dr) * pw + c0..(r0 + dr) * pw + c0 + p];
            for (a, v) in row.iter_mut().zip(&g[dr * p..(dr + 1) * p]) {
                *a += v;
            }
        }
    }
    let (h, w) = (ph - 2 * pad, pw - 2 * pad);
    if pad > 0 && pad >= h.min(w) {
        return invalid(format!("pad {pad} not a valid reflection for {h}x{w} grid"));
    }
    let mut out = vec![0.0; h * w];
    let cols: Vec<usize> = (0..pw).map(|j| reflect_index(j, pad, w)).collect();
    for i in 0..ph {
        let src = reflect_index(i, pad, h);
        for j in 0..pw {
            out[src * w + cols[j]] += acc[i * pw + j];
        }
    }
    Grid::new(h, w, out)
}

/// Procedural binary exemplar: sinuous, horizontally running channels of `+1`
/// on a `-1` background, covering roughly `channel_fraction` of the pixels.
pub fn make_channel_exemplar<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    channel_fraction: f64,
    rng: &mut R,
) -> Result<Grid> {
    if !(channel_fraction > 0.0 && channel_fraction < 1.0) {
        return invalid(format!("channel_fraction must lie in (0,1), got {channel_fraction}"));
    }
    if height < 4 || width < 4 {
        return invalid(format!("exemplar must be at least 4x4, got {height}x{width}"));
    }
    let (hf, wf) = (height as f64, width as f64);
    let total = (height * width) as f64;
    let mut mask = vec![false; height * width];
    let mut covered = 0usize;

    for _ in 0..(4 * height) {
        let center = rng.random_range(0.0..hf);
        let amp = rng.random_range(0.04..0.12) * hf;
        let wavelength = rng.random_range(0.6..1.4) * wf;
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let amp2 = rng.random_range(0.0..0.5) * amp;
        let phase2 = rng.random_range(0.0..std::f64::consts::TAU);
        let half = rng.random_range(1.0 / 24.0..1.0 / 12.0) * hf;

        let mut candidate = mask.clone();
        let mut added = 0usize;
        for c in 0..width {
            let x = c as f64;
            let t = std::f64::consts::TAU * x / wavelength;
            let yc = center + amp * (t + phase).sin() + amp2 * (2.0 * t + phase2).sin();
            let lo = (yc - half).ceil().max(0.0) as usize;
            let hi = (yc + half).floor().min(hf - 1.0);
            if hi < 0.0 {
                continue;
            }
            for r in lo..=(hi as usize) {
                let idx = r * width + c;
                if !candidate[idx] {
                    candidate[idx] = true;
                    added += 1;
                }
            }
        }
        let before = covered as f64 / total - channel_fraction;
        let after = (covered + added) as f64 / total - channel_fraction;
        if before >= 0.0 {
            break;
        }
        if after.abs() <= before.abs() {
            mask = candidate;
            covered += added;
        } else if after > 0.0 {
            break;
        }
    }

    let values = mask.iter().map(|&m| if m { 1.0 } else { -1.0 }).collect();
    Grid::new(height, width, values)
}
