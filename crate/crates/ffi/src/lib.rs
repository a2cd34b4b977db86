//! C ABI for the `shflbw` toolkit.
//!
//! Matrices cross the boundary as opaque handles created and released by this
//! library. Every function returns a [`ShflbwStatus`]; on failure the message
//! is available from [`shflbw_last_error`] on the same thread. The header
//! `include/shflbw.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use shflbw::analysis::{flexibility_log_gain, max_reuse_closed_form, required_reuse, HardwareModel};
use shflbw::formats::{
    compress_shflbw, from_bytes, to_bytes, validate_pattern, DenseMatrix, Matrix, Pattern,
    ShflBWMatrix, SparsityMask, ToDense,
};
use shflbw::pruning::{importance_scores, prune_shflbw, PruneConfig};
use shflbw::spmm::{pipeline_simulate, spmm_execute, IterationOrder, TileConfig};
use shflbw::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShflbwStatus {
    Ok = 0,
    NullPointer = 1,
    ShapeMismatch = 2,
    NonConformantMask = 3,
    BadParams = 4,
    BadGeometry = 5,
    InvalidValue = 6,
    BadMagic = 7,
    UnsupportedVersion = 8,
    CorruptPayload = 9,
    Io = 10,
    WrongKind = 11,
    Panic = 12,
}

impl From<&Error> for ShflbwStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::ShapeMismatch(_) => Self::ShapeMismatch,
            Error::NonConformantMask(_) => Self::NonConformantMask,
            Error::BadParams(_) => Self::BadParams,
            Error::BadGeometry(_) => Self::BadGeometry,
            Error::InvalidValue(_) => Self::InvalidValue,
            Error::BadMagic => Self::BadMagic,
            Error::UnsupportedVersion(_) => Self::UnsupportedVersion,
            Error::CorruptPayload(_) => Self::CorruptPayload,
            Error::Io(_) => Self::Io,
            Error::Json(_) => Self::InvalidValue,
        }
    }
}

/// Pattern selector for [`shflbw_validate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShflbwPattern {
    Unstructured = 0,
    VectorWise = 1,
    BlockWise = 2,
    ShflBw = 3,
    Balanced = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShflbwOrder {
    LoadThenCompute = 0,
    ComputeThenLoad = 1,
}

/// Tile shape for [`shflbw_spmm`]; pass NULL for the defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ShflbwTileConfig {
    pub tm: usize,
    pub tn: usize,
    pub tk: usize,
}

/// Event counts from [`shflbw_pipeline_simulate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShflbwCounters {
    pub meta_bulk_loads: usize,
    pub stitches: usize,
    pub mmas: usize,
    pub hazards: usize,
}

/// Row-major float matrix.
pub struct ShflbwDense(DenseMatrix);

/// Binary keep/prune mask.
pub struct ShflbwMask(SparsityMask);

/// Shuffled block-wise sparse matrix.
pub struct ShflbwSparse(ShflBWMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ShflbwStatus, msg: impl Into<String>) -> ShflbwStatus {
    set_last_error(msg.into());
    status
}

type FfiResult<T = ()> = Result<T, ShflbwStatus>;

fn lift<T>(r: shflbw::Result<T>) -> FfiResult<T> {
    r.map_err(|e| fail((&e).into(), e.to_string()))
}

fn guard(f: impl FnOnce() -> FfiResult) -> ShflbwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ShflbwStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(ShflbwStatus::Panic, "internal panic"),
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| fail(ShflbwStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(ShflbwStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(ShflbwStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(fail(ShflbwStatus::NullPointer, format!("{what} is NULL")));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_box<T>(out: *mut *mut T, value: T) -> FfiResult {
    put(out, Box::into_raw(Box::new(value)), "out")
}

fn copy_into<T: Copy>(dst: &mut [T], src: &[T]) -> FfiResult {
    if dst.len() != src.len() {
        return Err(fail(
            ShflbwStatus::ShapeMismatch,
            format!("buffer holds {} elements, need {}", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> FfiResult<String> {
    if p.is_null() {
        return Err(fail(ShflbwStatus::NullPointer, "path is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(ShflbwStatus::InvalidValue, "path is not UTF-8"))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn shflbw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Version string of the library, statically allocated.
#[no_mangle]
pub extern "C" fn shflbw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// Dense matrices

/// # Safety
/// `values` must point to `rows * cols` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_dense_new(
    rows: usize,
    cols: usize,
    values: *const f32,
    out: *mut *mut ShflbwDense,
) -> ShflbwStatus {
    guard(|| {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| fail(ShflbwStatus::ShapeMismatch, "rows * cols overflows"))?;
        let values = slice(values, n, "values")?.to_vec();
        put_box(out, ShflbwDense(lift(DenseMatrix::new(rows, cols, values))?))
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn shflbw_dense_free(m: *mut ShflbwDense) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_dense_shape(
    m: *const ShflbwDense,
    rows: *mut usize,
    cols: *mut usize,
) -> ShflbwStatus {
    guard(|| {
        let m = handle(m, "matrix")?;
        put(rows, m.0.rows(), "rows")?;
        put(cols, m.0.cols(), "cols")
    })
}

/// Copies the row-major values into `out`, which must hold exactly
/// `rows * cols` floats.
///
/// # Safety
/// `m` must be a live handle and `out` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn shflbw_dense_values(
    m: *const ShflbwDense,
    out: *mut f32,
    len: usize,
) -> ShflbwStatus {
    guard(|| {
        let m = handle(m, "matrix")?;
        copy_into(slice_mut(out, len, "out")?, m.0.values())
    })
}

// Masks

/// `bits` holds one byte per entry, row-major; nonzero means kept.
///
/// # Safety
/// `bits` must point to `rows * cols` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_mask_new(
    rows: usize,
    cols: usize,
    bits: *const u8,
    out: *mut *mut ShflbwMask,
) -> ShflbwStatus {
    guard(|| {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| fail(ShflbwStatus::ShapeMismatch, "rows * cols overflows"))?;
        let bits = slice(bits, n, "bits")?.iter().map(|&b| b != 0).collect();
        put_box(out, ShflbwMask(lift(SparsityMask::new(rows, cols, bits))?))
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn shflbw_mask_free(m: *mut ShflbwMask) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn shflbw_mask_bits(
    m: *const ShflbwMask,
    out: *mut u8,
    len: usize,
) -> ShflbwStatus {
    guard(|| {
        let m = handle(m, "mask")?;
        let bits: Vec<u8> = m.0.bits().iter().map(|&b| b as u8).collect();
        copy_into(slice_mut(out, len, "out")?, &bits)
    })
}

/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_mask_popcount(m: *const ShflbwMask, out: *mut usize) -> ShflbwStatus {
    guard(|| put(out, handle(m, "mask")?.0.popcount(), "out"))
}

// Sparse matrices

/// # Safety
/// `m` must be NULL or a handle from this library that is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn shflbw_sparse_free(m: *mut ShflbwSparse) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_sparse_shape(
    m: *const ShflbwSparse,
    rows: *mut usize,
    cols: *mut usize,
    vector_size: *mut usize,
) -> ShflbwStatus {
    guard(|| {
        let m = &handle(m, "matrix")?.0;
        put(rows, m.rows(), "rows")?;
        put(cols, m.cols(), "cols")?;
        put(vector_size, m.vector_size(), "vector_size")
    })
}

/// Copies the row permutation into `out`, which must hold `rows` entries.
///
/// # Safety
/// `m` must be a live handle; `out` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn shflbw_sparse_row_indices(
    m: *const ShflbwSparse,
    out: *mut usize,
    len: usize,
) -> ShflbwStatus {
    guard(|| {
        let m = handle(m, "matrix")?;
        copy_into(slice_mut(out, len, "out")?, m.0.row_indices())
    })
}

/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_sparse_to_dense(
    m: *const ShflbwSparse,
    out: *mut *mut ShflbwDense,
) -> ShflbwStatus {
    guard(|| put_box(out, ShflbwDense(handle(m, "matrix")?.0.to_dense())))
}

// Pruning, compression, validation

/// Prunes `weights` to a shuffled block-wise mask keeping a fraction `alpha`
/// per group of `v` rows. The permuted row order goes to `permutation`
/// (`rows` entries) when it is not NULL.
///
/// # Safety
/// `weights` must be a live handle; `out_mask` and `kept_score` must be
/// writable; `permutation`, if not NULL, must hold `rows` entries.
#[no_mangle]
pub unsafe extern "C" fn shflbw_prune_shflbw(
    weights: *const ShflbwDense,
    alpha: f64,
    v: usize,
    seed: u64,
    out_mask: *mut *mut ShflbwMask,
    kept_score: *mut f64,
    permutation: *mut usize,
) -> ShflbwStatus {
    guard(|| {
        let w = &handle(weights, "weights")?.0;
        let cfg = PruneConfig::new(alpha, v).with_seed(seed);
        let res = lift(prune_shflbw(&importance_scores(w), &cfg))?;
        if !permutation.is_null() {
            copy_into(slice_mut(permutation, w.rows(), "permutation")?, &res.permutation)?;
        }
        put(kept_score, res.kept_score, "kept_score")?;
        put_box(out_mask, ShflbwMask(res.mask))
    })
}

/// # Safety
/// `weights` and `mask` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_compress(
    weights: *const ShflbwDense,
    mask: *const ShflbwMask,
    v: usize,
    out: *mut *mut ShflbwSparse,
) -> ShflbwStatus {
    guard(|| {
        let w = &handle(weights, "weights")?.0;
        let m = &handle(mask, "mask")?.0;
        put_box(out, ShflbwSparse(lift(compress_shflbw(w, m, v))?))
    })
}

/// Checks `mask` against a pattern. `p1` is V (or n for balanced), `p2` is m
/// for balanced and ignored otherwise.
///
/// # Safety
/// `mask` must be a live handle; `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_validate(
    mask: *const ShflbwMask,
    pattern: ShflbwPattern,
    p1: usize,
    p2: usize,
    passed: *mut bool,
) -> ShflbwStatus {
    guard(|| {
        let m = &handle(mask, "mask")?.0;
        let pattern = match pattern {
            ShflbwPattern::Unstructured => Pattern::Unstructured,
            ShflbwPattern::VectorWise => Pattern::VectorWise { v: p1 },
            ShflbwPattern::BlockWise => Pattern::BlockWise { v: p1 },
            ShflbwPattern::ShflBw => Pattern::ShflBw { v: p1 },
            ShflbwPattern::Balanced => Pattern::Balanced { n: p1, m: p2 },
        };
        put(passed, lift(validate_pattern(m, pattern))?.passed, "passed")
    })
}

// Products

/// `C = A * B` through the tiled executor.
///
/// # Safety
/// `a` and `b` must be live handles; `tile` may be NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_spmm(
    a: *const ShflbwSparse,
    b: *const ShflbwDense,
    tile: *const ShflbwTileConfig,
    out: *mut *mut ShflbwDense,
) -> ShflbwStatus {
    guard(|| {
        let a = &handle(a, "a")?.0;
        let b = &handle(b, "b")?.0;
        let cfg = match tile.as_ref() {
            Some(t) => TileConfig::with_tiles(t.tm, t.tn, t.tk),
            None => TileConfig::default(),
        };
        lift(cfg.validate())?;
        put_box(out, ShflbwDense(lift(spmm_execute(a, b, &cfg))?))
    })
}

// Container files

unsafe fn save(path: *const c_char, m: Matrix) -> FfiResult {
    let path = path_arg(path)?;
    let bytes = lift(to_bytes(&m))?;
    std::fs::write(&path, bytes).map_err(|e| fail(ShflbwStatus::Io, format!("{path}: {e}")))
}

unsafe fn load(path: *const c_char) -> FfiResult<Matrix> {
    let path = path_arg(path)?;
    let bytes =
        std::fs::read(&path).map_err(|e| fail(ShflbwStatus::Io, format!("{path}: {e}")))?;
    lift(from_bytes(&bytes))
}

fn wrong_kind(want: &str, got: &Matrix) -> ShflbwStatus {
    fail(
        ShflbwStatus::WrongKind,
        format!("expected {want}, file holds {}", got.kind_name()),
    )
}

/// # Safety
/// `m` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn shflbw_dense_save(m: *const ShflbwDense, path: *const c_char) -> ShflbwStatus {
    guard(|| save(path, Matrix::Dense(handle(m, "matrix")?.0.clone())))
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_dense_load(
    path: *const c_char,
    out: *mut *mut ShflbwDense,
) -> ShflbwStatus {
    guard(|| match load(path)? {
        Matrix::Dense(d) => put_box(out, ShflbwDense(d)),
        other => Err(wrong_kind("dense", &other)),
    })
}

/// # Safety
/// `m` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn shflbw_mask_save(m: *const ShflbwMask, path: *const c_char) -> ShflbwStatus {
    guard(|| save(path, Matrix::Mask(handle(m, "mask")?.0.clone())))
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_mask_load(
    path: *const c_char,
    out: *mut *mut ShflbwMask,
) -> ShflbwStatus {
    guard(|| match load(path)? {
        Matrix::Mask(m) => put_box(out, ShflbwMask(m)),
        other => Err(wrong_kind("mask", &other)),
    })
}

/// # Safety
/// `m` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn shflbw_sparse_save(
    m: *const ShflbwSparse,
    path: *const c_char,
) -> ShflbwStatus {
    guard(|| save(path, Matrix::ShflBw(handle(m, "matrix")?.0.clone())))
}

/// Loads a shfl-bw or vector-wise file; vector-wise gets the identity order.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_sparse_load(
    path: *const c_char,
    out: *mut *mut ShflbwSparse,
) -> ShflbwStatus {
    guard(|| match load(path)? {
        Matrix::ShflBw(s) => put_box(out, ShflbwSparse(s)),
        Matrix::VectorWise(vw) => put_box(out, ShflbwSparse(ShflBWMatrix::from_vector_wise(vw))),
        other => Err(wrong_kind("shfl-bw", &other)),
    })
}

// Analysis

/// Natural log of the number of ways to split `m` rows into groups of `v`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_flexibility_log_gain(m: usize, v: usize, out: *mut f64) -> ShflbwStatus {
    guard(|| put(out, lift(flexibility_log_gain(m, v))?, "out"))
}

/// Best FLOP/byte reachable at density `alpha` with `regfile_size` accumulators.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_max_reuse(alpha: f64, regfile_size: usize, out: *mut f64) -> ShflbwStatus {
    guard(|| put(out, lift(max_reuse_closed_form(alpha, regfile_size))?, "out"))
}

/// MACs per loaded value needed to stay compute-bound on a bundled profile
/// (`"reference-A100-like"`, `"reference-T4-like"`).
///
/// # Safety
/// `profile` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_required_reuse(profile: *const c_char, out: *mut f64) -> ShflbwStatus {
    guard(|| {
        let name = path_arg(profile)?;
        let hw = HardwareModel::bundled(&name)
            .ok_or_else(|| fail(ShflbwStatus::BadParams, format!("unknown profile '{name}'")))?;
        put(out, lift(required_reuse(&hw))?, "out")
    })
}

/// Runs the pipeline schedule for `total_steps` steps and reports counts.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shflbw_pipeline_simulate(
    total_steps: usize,
    pipe_stage: usize,
    meta_prefetch_stage: usize,
    order: ShflbwOrder,
    lead: usize,
    out: *mut ShflbwCounters,
) -> ShflbwStatus {
    guard(|| {
        let cfg = TileConfig {
            pipe_stage,
            meta_prefetch_stage,
            ..TileConfig::default()
        };
        let order = match order {
            ShflbwOrder::LoadThenCompute => IterationOrder::LoadThenCompute,
            ShflbwOrder::ComputeThenLoad => IterationOrder::ComputeThenLoad,
        };
        let trace = lift(pipeline_simulate(total_steps, &cfg, order, lead))?;
        let c = trace.counters;
        put(
            out,
            ShflbwCounters {
                meta_bulk_loads: c.meta_bulk_loads,
                stitches: c.stitches,
                mmas: c.mmas,
                hazards: trace.hazards.len(),
            },
            "out",
        )
    })
}
