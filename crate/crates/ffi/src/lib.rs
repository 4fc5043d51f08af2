//! C ABI over stored masked-RBM models.
//!
//! Models are opaque handles created by [`mrbm_model_load`] or
//! [`mrbm_model_from_bytes`] and released with [`mrbm_model_free`]. Every
//! fallible function returns an [`MrbmStatus`]; the message for the most
//! recent failure on the calling thread is available from
//! [`mrbm_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use mrbm::data::container::{read_model, write_model, Container, StoredModel};
use mrbm::masked::{GibbsConfig, OutlierConfig};
use mrbm::rng::{stream, DOMAIN_SEGMENT};
use mrbm::Error;

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrbmStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Format = 3,
    Dimension = 4,
    InvalidArgument = 5,
    Numerical = 6,
    WrongModelKind = 7,
    Panic = 8,
}

/// Kind of model behind a handle.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrbmModelKind {
    /// A lone Beta RBM (background or baseline model).
    BetaRbm = 0,
    /// Foreground mixed RBM plus background Beta RBM.
    Masked = 1,
}

/// Opaque model handle.
pub struct MrbmModel {
    inner: StoredModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn classify(e: &Error) -> MrbmStatus {
    match e {
        Error::Io(_) => MrbmStatus::Io,
        Error::Container(_) | Error::Json(_) | Error::Csv(_) | Error::Image { .. } | Error::Dataset(_) => {
            MrbmStatus::Format
        }
        Error::Dimension { .. } => MrbmStatus::Dimension,
        Error::InvalidParameter(_) | Error::Domain(_) => MrbmStatus::InvalidArgument,
        Error::NonFinite { .. } | Error::NonFiniteDensity { .. } | Error::Diverged { .. } => MrbmStatus::Numerical,
    }
}

struct Fail(MrbmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(classify(&e), e.to_string())
    }
}

/// Runs `f`, recording any failure or panic in the thread's error slot.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MrbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MrbmStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            MrbmStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MrbmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MrbmStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn model_arg<'a>(m: *const MrbmModel) -> Result<&'a MrbmModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

fn check_buffer(what: &str, expected: usize, got: usize) -> Result<(), Fail> {
    if expected == got {
        Ok(())
    } else {
        Err(Fail(MrbmStatus::Dimension, format!("{what} has length {got}, expected {expected}")))
    }
}

fn wrong_kind(expected: &str) -> Fail {
    Fail(MrbmStatus::WrongModelKind, format!("operation needs a {expected} model"))
}

/// Message for the last failure on this thread, or NULL if the last call
/// succeeded. The pointer stays valid until the next call into this library
/// on the same thread.
#[no_mangle]
pub extern "C" fn mrbm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mrbm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model container from `path` into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrbm_model_load(path: *const c_char, out: *mut *mut MrbmModel) -> MrbmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (inner, _) = read_model(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MrbmModel { inner }));
        Ok(())
    })
}

/// Parses a model container held in memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mrbm_model_from_bytes(bytes: *const u8, len: usize, out: *mut *mut MrbmModel) -> MrbmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        let c = Container::from_bytes(slice::from_raw_parts(bytes, len))?;
        let inner = StoredModel::from_container(&c)?;
        *out = Box::into_raw(Box::new(MrbmModel { inner }));
        Ok(())
    })
}

/// Writes the model to `path` in the container format.
///
/// # Safety
/// `model` must come from this library and `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mrbm_model_save(model: *const MrbmModel, path: *const c_char) -> MrbmStatus {
    guard(|| {
        let m = model_arg(model)?;
        write_model(path_arg(path)?, &m.inner, Default::default())?;
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mrbm_model_free(model: *mut MrbmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrbm_model_kind(model: *const MrbmModel, out: *mut MrbmModelKind) -> MrbmStatus {
    guard(|| {
        let m = model_arg(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = match m.inner {
            StoredModel::Beta(_) => MrbmModelKind::BetaRbm,
            StoredModel::Masked(_) => MrbmModelKind::Masked,
        };
        Ok(())
    })
}

/// Number of pixels per image the model expects.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrbm_model_n_pixels(model: *const MrbmModel, out: *mut usize) -> MrbmStatus {
    guard(|| {
        let m = model_arg(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.inner.n_pix();
        Ok(())
    })
}

/// Hidden units of the Beta RBM, or of the foreground RBM for masked models.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mrbm_model_n_hidden(model: *const MrbmModel, out: *mut usize) -> MrbmStatus {
    guard(|| {
        let m = model_arg(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = match &m.inner {
            StoredModel::Beta(p) => p.n_hid(),
            StoredModel::Masked(mm) => mm.fg.n_hid(),
        };
        Ok(())
    })
}

/// Gibbs settings for [`mrbm_segment`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MrbmSegmentOptions {
    pub sweeps: u32,
    pub burn_in: u32,
    /// Outlier prior; ignored unless `use_outliers` is nonzero.
    pub outlier_p: f64,
    pub use_outliers: u8,
    pub seed: u64,
}

/// 100 sweeps, 50 burn-in, outliers on with p = 0.3, seed 0.
#[no_mangle]
pub extern "C" fn mrbm_segment_options_default() -> MrbmSegmentOptions {
    MrbmSegmentOptions {
        sweeps: 100,
        burn_in: 50,
        outlier_p: OutlierConfig::DEFAULT_P,
        use_outliers: 1,
        seed: 0,
    }
}

/// Segments one image (pixels in `[0, 1]`, row-major). Writes per-pixel mask
/// probabilities to `mask_out` and, when `hidden_out` is not NULL, the
/// posterior-mean foreground hidden activations.
///
/// Calls with the same seed and `stream_index` are reproducible; use the
/// image's index in a batch as `stream_index` to match the command-line tool.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn mrbm_segment(
    model: *const MrbmModel,
    image: *const f64,
    n_pixels: usize,
    options: *const MrbmSegmentOptions,
    stream_index: u64,
    mask_out: *mut f64,
    hidden_out: *mut f64,
    n_hidden: usize,
) -> MrbmStatus {
    guard(|| {
        let m = match &model_arg(model)?.inner {
            StoredModel::Masked(mm) => mm,
            StoredModel::Beta(_) => return Err(wrong_kind("masked")),
        };
        let opts = options.as_ref().ok_or_else(|| null("options"))?;
        if image.is_null() {
            return Err(null("image"));
        }
        if mask_out.is_null() {
            return Err(null("mask_out"));
        }
        check_buffer("image", m.n_pix(), n_pixels)?;
        if !hidden_out.is_null() {
            check_buffer("hidden_out", m.fg.n_hid(), n_hidden)?;
        }
        let x: Vec<f64> = slice::from_raw_parts(image, n_pixels)
            .iter()
            .map(|&v| {
                if v.is_finite() && (0.0..=1.0).contains(&v) {
                    Ok(mrbm::rbm::dist::clamp_pixel(v))
                } else {
                    Err(Fail(MrbmStatus::InvalidArgument, format!("pixel value {v} outside [0, 1]")))
                }
            })
            .collect::<Result<_, _>>()?;
        let gcfg = GibbsConfig::new(opts.sweeps as usize, opts.burn_in as usize, opts.seed)?;
        let out = if opts.use_outliers != 0 {
            OutlierConfig::enabled(opts.outlier_p)?
        } else {
            OutlierConfig::disabled()
        };
        let mut rng = stream(opts.seed, &[DOMAIN_SEGMENT, stream_index]);
        let seg = m.segment(&x, &out, &gcfg, &mut rng)?;
        slice::from_raw_parts_mut(mask_out, n_pixels).copy_from_slice(&seg.mask_probs);
        if !hidden_out.is_null() {
            slice::from_raw_parts_mut(hidden_out, n_hidden).copy_from_slice(&seg.hf_means);
        }
        Ok(())
    })
}

/// Hidden-unit means of a Beta RBM model for one image.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn mrbm_hidden_means(
    model: *const MrbmModel,
    image: *const f64,
    n_pixels: usize,
    hidden_out: *mut f64,
    n_hidden: usize,
) -> MrbmStatus {
    guard(|| {
        let p = match &model_arg(model)?.inner {
            StoredModel::Beta(p) => p,
            StoredModel::Masked(_) => return Err(wrong_kind("beta-rbm")),
        };
        if image.is_null() {
            return Err(null("image"));
        }
        if hidden_out.is_null() {
            return Err(null("hidden_out"));
        }
        check_buffer("image", p.n_vis(), n_pixels)?;
        check_buffer("hidden_out", p.n_hid(), n_hidden)?;
        let x: Vec<f64> = slice::from_raw_parts(image, n_pixels)
            .iter()
            .map(|&v| mrbm::rbm::dist::clamp_pixel(v))
            .collect();
        let q = p.hidden_conditional(&x)?;
        slice::from_raw_parts_mut(hidden_out, n_hidden).copy_from_slice(&q);
        Ok(())
    })
}
