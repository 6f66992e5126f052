//! C ABI over `geommd`.
//!
//! Objects cross the boundary as opaque handles (`GmGrid`, `GmEncoder`,
//! `GmGenerator`), each released by its `*_free` function. Every fallible
//! call returns a [`GmStatus`]; the message of the most recent failure on the
//! calling thread is available from [`gm_last_error_message`]. Panics are
//! caught and reported as `GM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use geommd::encoders::{fit_pca, Encoder};
use geommd::gennet::{self, GeneratorModel};
use geommd::grid::{make_channel_exemplar, sample_patches, Grid};
use geommd::kernels::KernelSpec;
use geommd::mmd::mmd2;
use geommd::optimsynth::{synthesize, SynthConfig};
use geommd::stats::{histogram, two_point_pf, Direction};
use geommd::{pgm, seeded_rng, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DegenerateSample = 3,
    ZeroVariance = 4,
    NonFinite = 5,
    Config = 6,
    Format = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmKernelFamily {
    RationalQuadratic = 0,
    GaussianRbf = 1,
    Linear = 2,
    Polynomial2 = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmDirection {
    X = 0,
    Y = 1,
}

/// Kernel description. For the rational quadratic kernel a non-positive
/// `length_scale` selects the median heuristic; `gamma` is used only by the
/// Gaussian RBF kernel.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GmKernel {
    pub family: GmKernelFamily,
    pub alpha: f64,
    pub length_scale: f64,
    pub gamma: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GmSynthParams {
    pub out_height: usize,
    pub out_width: usize,
    pub patch_size: usize,
    pub patches_per_iter: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub kernel: GmKernel,
}

pub struct GmGrid(Grid);
pub struct GmEncoder(Encoder);
pub struct GmGenerator(GeneratorModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GmStatus {
    match err {
        Error::InvalidArgument(_) => GmStatus::InvalidArgument,
        Error::DegenerateSample(_) => GmStatus::DegenerateSample,
        Error::ZeroVariance => GmStatus::ZeroVariance,
        Error::NonFinite(_) => GmStatus::NonFinite,
        Error::Config(_) | Error::Json(_) => GmStatus::Config,
        Error::Pgm(_) => GmStatus::Format,
        Error::Io(_) => GmStatus::Io,
    }
}

struct Fail(GmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GmStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GmStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: the caller guarantees `p` is null or a live handle from this library.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    // SAFETY: non-null, and the caller guarantees a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(GmStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: `out` is non-null and writable per the caller contract.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err(Fail(
            GmStatus::InvalidArgument,
            format!("output buffer holds {len} values, {} required", src.len()),
        ));
    }
    // SAFETY: `out` has room for `len >= src.len()` doubles per the caller contract.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    Ok(())
}

fn kernel_spec(k: &GmKernel) -> KernelSpec {
    match k.family {
        GmKernelFamily::RationalQuadratic => {
            KernelSpec::rational_quadratic(k.alpha, (k.length_scale > 0.0).then_some(k.length_scale))
        }
        GmKernelFamily::GaussianRbf => KernelSpec::gaussian_rbf(k.gamma),
        GmKernelFamily::Linear => KernelSpec::linear(),
        GmKernelFamily::Polynomial2 => KernelSpec::polynomial2(),
    }
}

/// Message describing the last failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Defaults matching the library's desk-scale synthesis settings.
#[no_mangle]
pub extern "C" fn gm_synth_params_default() -> GmSynthParams {
    let d = SynthConfig::default();
    GmSynthParams {
        out_height: d.out_height,
        out_width: d.out_width,
        patch_size: d.patch_size,
        patches_per_iter: d.patches_per_iter,
        iterations: d.iterations,
        learning_rate: d.lr,
        seed: d.seed,
        kernel: GmKernel { family: GmKernelFamily::RationalQuadratic, alpha: 0.5, length_scale: 0.0, gamma: 0.0 },
    }
}

/// Create a `height × width` grid from row-major `values` (or zeros when
/// `values` is NULL).
///
/// # Safety
/// `values` must be NULL or point to `height * width` doubles; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_grid_new(height: usize, width: usize, values: *const f64, out: *mut *mut GmGrid) -> GmStatus {
    guard(|| {
        let count = height.checked_mul(width).ok_or_else(|| Fail(GmStatus::InvalidArgument, "size overflow".into()))?;
        let data = if values.is_null() {
            vec![0.0; count]
        } else {
            // SAFETY: caller guarantees `count` readable doubles.
            unsafe { std::slice::from_raw_parts(values, count) }.to_vec()
        };
        let grid = Grid::new(height, width, data)?;
        unsafe { store(out, GmGrid(grid)) }
    })
}

/// # Safety
/// `grid` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gm_grid_free(grid: *mut GmGrid) {
    if !grid.is_null() {
        // SAFETY: produced by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(grid) });
    }
}

/// # Safety
/// `grid` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gm_grid_height(grid: *const GmGrid) -> usize {
    unsafe { grid.as_ref() }.map_or(0, |g| g.0.height())
}

/// # Safety
/// `grid` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gm_grid_width(grid: *const GmGrid) -> usize {
    unsafe { grid.as_ref() }.map_or(0, |g| g.0.width())
}

/// Copy the row-major pixel values into `out` (capacity `len`).
///
/// # Safety
/// `grid` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gm_grid_values(grid: *const GmGrid, out: *mut f64, len: usize) -> GmStatus {
    guard(|| {
        let g = unsafe { borrow(grid, "grid") }?;
        unsafe { copy_out(g.0.values(), out, len) }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_pgm_read(path: *const c_char, out: *mut *mut GmGrid) -> GmStatus {
    guard(|| {
        let g = pgm::read_pgm(unsafe { path_arg(path) }?)?;
        unsafe { store(out, GmGrid(g)) }
    })
}

/// # Safety
/// `grid` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gm_pgm_write(grid: *const GmGrid, path: *const c_char) -> GmStatus {
    guard(|| {
        let g = unsafe { borrow(grid, "grid") }?;
        Ok(pgm::write_pgm(unsafe { path_arg(path) }?, &g.0)?)
    })
}

/// Procedural binary channel image.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_make_channel_exemplar(
    height: usize,
    width: usize,
    channel_fraction: f64,
    seed: u64,
    out: *mut *mut GmGrid,
) -> GmStatus {
    guard(|| {
        let g = make_channel_exemplar(height, width, channel_fraction, &mut seeded_rng(seed))?;
        unsafe { store(out, GmGrid(g)) }
    })
}

/// Encoder that passes `dim`-dimensional patches through unchanged.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_encoder_identity(dim: usize, out: *mut *mut GmEncoder) -> GmStatus {
    guard(|| {
        if dim == 0 {
            return Err(Fail(GmStatus::InvalidArgument, "dim must be positive".into()));
        }
        unsafe { store(out, GmEncoder(Encoder::identity(dim))) }
    })
}

/// Fit a PCA encoder with `code_dim` components on `count` random
/// `patch_size²` patches of `exemplar` reflect-padded by `pad`.
///
/// # Safety
/// `exemplar` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_encoder_fit_pca(
    exemplar: *const GmGrid,
    patch_size: usize,
    pad: usize,
    count: usize,
    code_dim: usize,
    seed: u64,
    out: *mut *mut GmEncoder,
) -> GmStatus {
    guard(|| {
        let ex = unsafe { borrow(exemplar, "exemplar") }?;
        let sample = sample_patches(&ex.0, count, patch_size, pad, &mut seeded_rng(seed))?;
        unsafe { store(out, GmEncoder(fit_pca(&sample, code_dim)?)) }
    })
}

/// Load an encoder written by `geommd fit-encoder`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_encoder_load(path: *const c_char, out: *mut *mut GmEncoder) -> GmStatus {
    guard(|| {
        let text = std::fs::read_to_string(unsafe { path_arg(path) }?).map_err(Error::from)?;
        unsafe { store(out, GmEncoder(Encoder::from_json(&text)?)) }
    })
}

/// # Safety
/// `encoder` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gm_encoder_code_dim(encoder: *const GmEncoder) -> usize {
    unsafe { encoder.as_ref() }.map_or(0, |e| e.0.code_dim())
}

/// # Safety
/// `encoder` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gm_encoder_free(encoder: *mut GmEncoder) {
    if !encoder.is_null() {
        // SAFETY: produced by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(encoder) });
    }
}

/// MMD² between `count` patches of `a` and `count` patches of `b`. Both sides
/// are drawn with the same `seed`.
///
/// # Safety
/// `a`, `b`, `encoder` and `kernel` must be live; `out_value` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gm_mmd2(
    a: *const GmGrid,
    b: *const GmGrid,
    encoder: *const GmEncoder,
    kernel: *const GmKernel,
    patch_size: usize,
    pad: usize,
    count: usize,
    seed: u64,
    out_value: *mut f64,
) -> GmStatus {
    guard(|| {
        let (a, b) = unsafe { (borrow(a, "a")?, borrow(b, "b")?) };
        let enc = unsafe { borrow(encoder, "encoder") }?;
        let spec = kernel_spec(unsafe { borrow(kernel, "kernel") }?);
        spec.validate()?;
        let xa = sample_patches(&a.0, count, patch_size, pad, &mut seeded_rng(seed))?;
        let xb = sample_patches(&b.0, count, patch_size, pad, &mut seeded_rng(seed))?;
        let v = mmd2(&spec, &enc.0, &xa, &xb)?.value;
        unsafe { copy_out(&[v], out_value, 1) }
    })
}

/// Optimization-based synthesis. When `trace` is non-NULL it receives the
/// per-iteration MMD² and must hold `params->iterations` doubles.
///
/// # Safety
/// Handles and `params` must be live; `out` must be valid; `trace` must be
/// NULL or large enough.
#[no_mangle]
pub unsafe extern "C" fn gm_synthesize(
    exemplar: *const GmGrid,
    encoder: *const GmEncoder,
    params: *const GmSynthParams,
    out: *mut *mut GmGrid,
    trace: *mut f64,
) -> GmStatus {
    guard(|| {
        let ex = unsafe { borrow(exemplar, "exemplar") }?;
        let enc = unsafe { borrow(encoder, "encoder") }?;
        let p = unsafe { borrow(params, "params") }?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let cfg = SynthConfig {
            out_height: p.out_height,
            out_width: p.out_width,
            patch_size: p.patch_size,
            patches_per_iter: p.patches_per_iter,
            iterations: p.iterations,
            lr: p.learning_rate,
            seed: p.seed,
            kernel: kernel_spec(&p.kernel),
            ..SynthConfig::default()
        };
        let res = synthesize(&ex.0, &enc.0, &cfg)?;
        if !trace.is_null() {
            let values: Vec<f64> = res.trace.iter().map(|r| r.mmd2).collect();
            unsafe { copy_out(&values, trace, values.len()) }?;
        }
        unsafe { store(out, GmGrid(res.grid)) }
    })
}

/// Load a generator written by `geommd train-gen`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gm_generator_load(path: *const c_char, out: *mut *mut GmGenerator) -> GmStatus {
    guard(|| {
        let text = std::fs::read_to_string(unsafe { path_arg(path) }?).map_err(Error::from)?;
        unsafe { store(out, GmGenerator(GeneratorModel::from_json(&text)?)) }
    })
}

/// # Safety
/// `generator` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gm_generator_free(generator: *mut GmGenerator) {
    if !generator.is_null() {
        // SAFETY: produced by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(generator) });
    }
}

/// Draw `count` realizations into `out[0..count]`; each must later be freed
/// with `gm_grid_free`. Nothing is written on failure.
///
/// # Safety
/// `generator` must be live and `out` must hold `count` pointers.
#[no_mangle]
pub unsafe extern "C" fn gm_generator_sample(
    generator: *const GmGenerator,
    count: usize,
    seed: u64,
    out: *mut *mut GmGrid,
) -> GmStatus {
    guard(|| {
        let g = unsafe { borrow(generator, "generator") }?;
        if out.is_null() {
            return Err(null("output array"));
        }
        let grids = gennet::sample(&g.0, count, &mut seeded_rng(seed), None)?;
        for (i, grid) in grids.into_iter().enumerate() {
            // SAFETY: caller guarantees `count` writable slots.
            unsafe { *out.add(i) = Box::into_raw(Box::new(GmGrid(grid))) };
        }
        Ok(())
    })
}

/// Two-point probability `S₂(0..=max_lag)` into `out` (capacity `len`).
///
/// # Safety
/// `grid` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gm_two_point_pf(
    grid: *const GmGrid,
    direction: GmDirection,
    max_lag: usize,
    threshold: f64,
    out: *mut f64,
    len: usize,
) -> GmStatus {
    guard(|| {
        let g = unsafe { borrow(grid, "grid") }?;
        let d = match direction {
            GmDirection::X => Direction::X,
            GmDirection::Y => Direction::Y,
        };
        let curve = two_point_pf(&g.0, d, max_lag, threshold)?;
        unsafe { copy_out(&curve.values, out, len) }
    })
}

/// Normalized `bins`-bin histogram over `[-1, 1]` into `out` (capacity `len`).
///
/// # Safety
/// `grid` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gm_histogram(grid: *const GmGrid, bins: usize, out: *mut f64, len: usize) -> GmStatus {
    guard(|| {
        let g = unsafe { borrow(grid, "grid") }?;
        unsafe { copy_out(&histogram(&g.0, bins)?.masses, out, len) }
    })
}
