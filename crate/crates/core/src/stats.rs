//! Evaluation statistics: pixel histograms and directional two-point
//! probability functions.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{reflect_pad, Grid};

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_THRESHOLD: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Along a row (column index increases).
    X,
    /// Down a column (row index increases).
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` equal-width edges spanning `[-1, 1]`.
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfCurve {
    pub direction: Direction,
    /// Value at lag `r` is stored at index `r`.
    pub values: Vec<f64>,
}

impl PfCurve {
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }
}

/// Normalized histogram over `[-1, 1]`. Values outside the range are clamped
/// into the end bins; the last bin is closed on the right.
pub fn histogram(grid: &Grid, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return invalid("histogram needs at least one bin");
    }
    let width = 2.0 / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| -1.0 + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &v in grid.values() {
        let idx = (((v + 1.0) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let total = grid.len() as f64;
    Ok(Histogram { edges, masses: counts.into_iter().map(|c| c as f64 / total).collect() })
}

/// Fraction of pixels strictly above `threshold`.
pub fn phase_fraction(grid: &Grid, threshold: f64) -> f64 {
    grid.values().iter().filter(|&&v| v > threshold).count() as f64 / grid.len() as f64
}

/// `S₂(r)` for `r = 0..=max_lag` along `direction`, counting only pixel pairs
/// that both lie inside the grid.
pub fn two_point_pf(grid: &Grid, direction: Direction, max_lag: usize, threshold: f64) -> Result<PfCurve> {
    let (h, w) = (grid.height(), grid.width());
    let extent = match direction {
        Direction::X => w,
        Direction::Y => h,
    };
    if max_lag >= extent {
        return invalid(format!("max_lag {max_lag} must be smaller than the extent {extent}"));
    }
    let phase: Vec<bool> = grid.values().iter().map(|&v| v > threshold).collect();
    let mut values = Vec::with_capacity(max_lag + 1);
    for r in 0..=max_lag {
        let (rows, cols, step) = match direction {
            Direction::X => (h, w - r, r),
            Direction::Y => (h - r, w, r * w),
        };
        let mut hits = 0usize;
        for i in 0..rows {
            for j in 0..cols {
                let a = i * w + j;
                if phase[a] && phase[a + step] {
                    hits += 1;
                }
            }
        }
        values.push(hits as f64 / (rows * cols) as f64);
    }
    Ok(PfCurve { direction, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub crop_size: usize,
    pub patch_size: usize,
    pub max_lag: usize,
    pub bins: usize,
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { crop_size: 60, patch_size: 16, max_lag: 16, bins: DEFAULT_BINS, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub exemplar_histogram: Histogram,
    pub histograms: Vec<Histogram>,
    pub exemplar_pf_x: PfCurve,
    pub exemplar_pf_y: PfCurve,
    pub pf_x: Vec<PfCurve>,
    pub pf_y: Vec<PfCurve>,
    pub exemplar_fraction: f64,
    /// Thresholded phase-1 fraction of each (uncropped) realization.
    pub channel_fraction: Vec<f64>,
}

/// Random `crop × crop` window of `grid` reflect-padded by `patch_size / 2`.
pub fn padded_crop<R: Rng + ?Sized>(grid: &Grid, crop: usize, patch_size: usize, rng: &mut R) -> Result<Grid> {
    let padded = reflect_pad(grid, patch_size / 2)?;
    if crop == 0 || crop > padded.height() || crop > padded.width() {
        return invalid(format!(
            "crop {crop} does not fit the padded {}x{} realization",
            padded.height(),
            padded.width()
        ));
    }
    let r = rng.random_range(0..=padded.height() - crop);
    let c = rng.random_range(0..=padded.width() - crop);
    padded.crop(r, c, crop, crop)
}

/// Histograms of the raw realizations and PF curves of padded random crops,
/// alongside the exemplar's statistics computed on the exemplar itself.
pub fn eval_report<R: Rng + ?Sized>(
    exemplar: &Grid,
    realizations: &[Grid],
    cfg: &EvalConfig,
    rng: &mut R,
) -> Result<StatsReport> {
    if realizations.is_empty() {
        return invalid("eval needs at least one realization");
    }
    if cfg.crop_size > exemplar.height() || cfg.crop_size > exemplar.width() {
        return invalid(format!("crop {} exceeds the exemplar", cfg.crop_size));
    }
    if cfg.max_lag >= cfg.crop_size {
        return invalid(format!("max_lag {} must be smaller than crop {}", cfg.max_lag, cfg.crop_size));
    }
    let pf = |g: &Grid, d| two_point_pf(g, d, cfg.max_lag, cfg.threshold);
    let mut report = StatsReport {
        exemplar_histogram: histogram(exemplar, cfg.bins)?,
        histograms: Vec::with_capacity(realizations.len()),
        exemplar_pf_x: pf(exemplar, Direction::X)?,
        exemplar_pf_y: pf(exemplar, Direction::Y)?,
        pf_x: Vec::with_capacity(realizations.len()),
        pf_y: Vec::with_capacity(realizations.len()),
        exemplar_fraction: phase_fraction(exemplar, cfg.threshold),
        channel_fraction: Vec::with_capacity(realizations.len()),
    };
    for real in realizations {
        report.histograms.push(histogram(real, cfg.bins)?);
        report.channel_fraction.push(phase_fraction(real, cfg.threshold));
        let crop = padded_crop(real, cfg.crop_size, cfg.patch_size, rng)?;
        report.pf_x.push(pf(&crop, Direction::X)?);
        report.pf_y.push(pf(&crop, Direction::Y)?);
    }
    Ok(report)
}

fn real_header(first: &str, n: usize) -> String {
    let mut s = String::from(first);
    for i in 0..n {
        s.push_str(&format!(",real_{i:04}"));
    }
    s.push('\n');
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::File::create(path)?.write_all(text.as_bytes())?;
    Ok(())
}

fn pf_csv(exemplar: &PfCurve, curves: &[PfCurve]) -> String {
    let mut s = real_header("lag,exemplar", curves.len());
    for lag in 0..exemplar.values.len() {
        s.push_str(&format!("{lag},{}", exemplar.values[lag]));
        for c in curves {
            s.push_str(&format!(",{}", c.values[lag]));
        }
        s.push('\n');
    }
    s
}

impl StatsReport {
    /// Write `histogram.csv`, `pf_x.csv` and `pf_y.csv` into `dir`, returning
    /// the paths written.
    pub fn write_csvs(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        let mut hist = real_header("bin_lo,bin_hi,exemplar", self.histograms.len());
        let ex = &self.exemplar_histogram;
        for b in 0..ex.masses.len() {
            hist.push_str(&format!("{},{},{}", ex.edges[b], ex.edges[b + 1], ex.masses[b]));
            for h in &self.histograms {
                hist.push_str(&format!(",{}", h.masses[b]));
            }
            hist.push('\n');
        }
        let files = [
            ("histogram.csv", hist),
            ("pf_x.csv", pf_csv(&self.exemplar_pf_x, &self.pf_x)),
            ("pf_y.csv", pf_csv(&self.exemplar_pf_y, &self.pf_y)),
        ];
        let mut written = Vec::new();
        for (name, text) in files {
            let p = dir.join(name);
            write_file(&p, &text)?;
            written.push(p);
        }
        Ok(written)
    }
}
