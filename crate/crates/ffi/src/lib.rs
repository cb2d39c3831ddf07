//! C ABI over `seasurrogate`.
//!
//! Every function returns an [`SsStatus`]. On failure the message is kept
//! per thread and can be read with [`ss_last_error`]. Handles are opaque and
//! must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use seasurrogate::lstm::Checkpoint;
use seasurrogate::oracle::OracleConfig;
use seasurrogate::spectra::{self, SeaState};
use seasurrogate::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Numeric = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Oracle configuration handle.
pub struct SsOracle(OracleConfig);

/// Trained surrogate handle.
pub struct SsModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::Shape(_) => SsStatus::InvalidArgument,
        Error::Io { .. } | Error::Json { .. } | Error::Load { .. } => SsStatus::Io,
        Error::Numeric(_) | Error::NonFiniteLoss { .. } | Error::Simulation { .. } => SsStatus::Numeric,
    }
}

struct Fail(SsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(SsStatus::NullArgument, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SsStatus::Panic
        }
    }
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Pierson-Moskowitz spectral density at `omega` (rad/s), in m²·s.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn ss_pm_spectrum(hs: f64, tp: f64, omega: f64, out: *mut f64) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sea = SeaState::new("ffi", hs, tp)?;
        *out = spectra::pm_spectrum(&sea, omega)?;
        Ok(())
    })
}

/// Create an oracle with the library defaults.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_oracle_new_default(out: *mut *mut SsOracle) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(SsOracle(OracleConfig::default())));
        Ok(())
    })
}

/// Set the record duration in seconds.
///
/// # Safety
/// `oracle` must be null or a live handle from `ss_oracle_new_default`.
#[no_mangle]
pub unsafe extern "C" fn ss_oracle_set_duration(oracle: *mut SsOracle, duration: f64) -> SsStatus {
    guard(|| {
        let o = oracle.as_mut().ok_or_else(|| null("oracle"))?;
        let mut cfg = o.0.clone();
        cfg.duration = duration;
        cfg.validate()?;
        o.0 = cfg;
        Ok(())
    })
}

/// Number of samples each simulated channel will hold.
///
/// # Safety
/// `oracle` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_oracle_sample_count(oracle: *const SsOracle, out: *mut usize) -> SsStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = spectra::sample_count(o.0.dt, o.0.duration);
        Ok(())
    })
}

/// Simulate one realization. Each output buffer must hold `capacity` doubles,
/// at least `ss_oracle_sample_count`. Pitch and roll are in degrees.
///
/// # Safety
/// `oracle` must be a live handle. Non-null buffers must be writable for
/// `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_oracle_simulate(
    oracle: *const SsOracle,
    hs: f64,
    tp: f64,
    seed: u64,
    wave: *mut f64,
    heave: *mut f64,
    pitch: *mut f64,
    roll: *mut f64,
    capacity: usize,
) -> SsStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        let n = spectra::sample_count(o.0.dt, o.0.duration);
        if capacity < n {
            return Err(Fail(
                SsStatus::BufferTooSmall,
                format!("capacity {capacity} is below the {n} samples required"),
            ));
        }
        let outs = [
            out_slice(wave, n, "wave")?,
            out_slice(heave, n, "heave")?,
            out_slice(pitch, n, "pitch")?,
            out_slice(roll, n, "roll")?,
        ];
        let sea = SeaState::new("ffi", hs, tp)?;
        let r = o.0.realization(&sea, seed)?;
        let [w, hv, pt, rl] = outs;
        w.copy_from_slice(&r.probes[0]);
        hv.copy_from_slice(r.motions.channel(0));
        pt.copy_from_slice(r.motions.channel(1));
        rl.copy_from_slice(r.motions.channel(2));
        Ok(())
    })
}

/// # Safety
/// `oracle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_oracle_free(oracle: *mut SsOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// Load a checkpoint written by the training pipeline.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_model_load(path: *const c_char, out: *mut *mut SsModel) -> SsStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(SsStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let ck = Checkpoint::load(Path::new(p))?;
        *out = Box::into_raw(Box::new(SsModel(ck)));
        Ok(())
    })
}

/// Window shape expected by `ss_model_predict`: `rows` time steps of
/// `inputs` probe values each.
///
/// # Safety
/// `model` must be a live handle; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_model_window_shape(
    model: *const SsModel,
    rows: *mut usize,
    inputs: *mut usize,
) -> SsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if rows.is_null() || inputs.is_null() {
            return Err(null("rows/inputs"));
        }
        *rows = m.0.stencil.rows();
        *inputs = m.0.stencil.num_inputs();
        Ok(())
    })
}

/// Predict heave (m), pitch (deg) and roll (deg) from one raw elevation
/// window, row-major with row 0 the newest sample.
///
/// # Safety
/// `window` must hold `len` doubles; `out` must be writable for three.
#[no_mangle]
pub unsafe extern "C" fn ss_model_predict(
    model: *const SsModel,
    window: *const f64,
    len: usize,
    out: *mut f64,
) -> SsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if window.is_null() {
            return Err(null("window"));
        }
        let out = out_slice(out, 3, "out")?;
        let st = &m.0.stencil;
        let n = st.num_inputs();
        if len != st.rows() * n {
            return Err(Fail(
                SsStatus::InvalidArgument,
                format!("window has {len} values, expected {}", st.rows() * n),
            ));
        }
        let raw = std::slice::from_raw_parts(window, len);
        let x: Vec<f64> =
            raw.iter().enumerate().map(|(i, &v)| st.normalization.inputs[i % n].apply(v)).collect();
        let y = m.0.params.predict(&x)?;
        for c in 0..3 {
            out[c] = st.normalization.outputs[c].invert(y[c]);
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_model_free(model: *mut SsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
