//! C interface to trained skillcnn models.
//!
//! A model is an opaque handle obtained from `skill_model_load` and released
//! with `skill_model_free`. Every fallible call returns a `SkillStatus`; on
//! failure, `skill_last_error_message` describes the most recent error on the
//! calling thread.
//!
//! Input series are frame-major: `values[t * channels + c]`, the same layout
//! as a kinematics text file.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use skillcnn::cam::compute_cam;
use skillcnn::model::TrainedModel;
use skillcnn::nn::{argmax, Mts, NUM_CLASSES};
use skillcnn::Error;

/// Result of every fallible call. Zero means success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkillStatus {
    SkillOk = 0,
    SkillErrNullPointer = 1,
    SkillErrInvalidUtf8 = 2,
    SkillErrShape = 3,
    SkillErrEmpty = 4,
    SkillErrDomain = 5,
    SkillErrConfig = 6,
    SkillErrParse = 7,
    SkillErrDiverged = 8,
    SkillErrIo = 9,
    SkillErrJson = 10,
    SkillErrBufferTooSmall = 11,
    SkillErrPanic = 12,
}

/// Opaque trained model.
pub struct SkillModel {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SkillStatus, msg: impl Into<String>) -> SkillStatus {
    set_error(msg.into());
    status
}

fn from_error(err: Error) -> SkillStatus {
    let status = match &err {
        Error::Shape(_) => SkillStatus::SkillErrShape,
        Error::EmptyInput(_) => SkillStatus::SkillErrEmpty,
        Error::Domain(_) => SkillStatus::SkillErrDomain,
        Error::Config(_) => SkillStatus::SkillErrConfig,
        Error::Parse { .. } => SkillStatus::SkillErrParse,
        Error::NonFiniteLoss { .. } => SkillStatus::SkillErrDiverged,
        Error::Io { .. } => SkillStatus::SkillErrIo,
        Error::Json { .. } => SkillStatus::SkillErrJson,
    };
    fail(status, format!("{}: {err}", err.code()))
}

fn guarded(f: impl FnOnce() -> SkillStatus) -> SkillStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == SkillStatus::SkillOk {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(SkillStatus::SkillErrPanic, "internal panic"),
    }
}

/// Copies a frame-major buffer into a channel-major series.
///
/// # Safety
/// `values` must point to `channels * frames` readable floats.
unsafe fn read_series(
    values: *const f32,
    channels: usize,
    frames: usize,
) -> Result<Mts<f32>, SkillStatus> {
    if values.is_null() {
        return Err(fail(SkillStatus::SkillErrNullPointer, "values is null"));
    }
    let n = channels
        .checked_mul(frames)
        .ok_or_else(|| fail(SkillStatus::SkillErrShape, "channels * frames overflows"))?;
    if n == 0 {
        return Err(fail(SkillStatus::SkillErrEmpty, "series has no values"));
    }
    let src = std::slice::from_raw_parts(values, n);
    let mut out = vec![0f32; n];
    for t in 0..frames {
        for c in 0..channels {
            out[c * frames + t] = src[t * channels + c];
        }
    }
    Mts::new(channels, frames, out).map_err(from_error)
}

/// Loads a JSON checkpoint. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skill_model_load(
    path: *const c_char,
    out: *mut *mut SkillModel,
) -> SkillStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(SkillStatus::SkillErrNullPointer, "path or out is null");
        }
        *out = ptr::null_mut();
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return fail(SkillStatus::SkillErrInvalidUtf8, "path is not UTF-8"),
        };
        match TrainedModel::load(path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SkillModel { inner }));
                SkillStatus::SkillOk
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from `skill_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn skill_model_free(model: *mut SkillModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of learnable parameters.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn skill_model_num_params(
    model: *const SkillModel,
    out: *mut usize,
) -> SkillStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return fail(SkillStatus::SkillErrNullPointer, "model or out is null");
        }
        *out = (*model).inner.net.num_params();
        SkillStatus::SkillOk
    })
}

/// Class probabilities (order N, I, E) for one raw trial. The checkpoint's
/// normalization is applied. `class_out` may be null.
///
/// # Safety
/// `values` must hold `channels * frames` floats and `probs_out` room for 3.
#[no_mangle]
pub unsafe extern "C" fn skill_model_predict(
    model: *const SkillModel,
    values: *const f32,
    channels: usize,
    frames: usize,
    probs_out: *mut f32,
    class_out: *mut u32,
) -> SkillStatus {
    guarded(|| {
        if model.is_null() || probs_out.is_null() {
            return fail(
                SkillStatus::SkillErrNullPointer,
                "model or probs_out is null",
            );
        }
        let series = match read_series(values, channels, frames) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match (*model).inner.forward(&series) {
            Ok(f) => {
                std::slice::from_raw_parts_mut(probs_out, NUM_CLASSES).copy_from_slice(&f.probs);
                if !class_out.is_null() {
                    *class_out = argmax(&f.probs) as u32;
                }
                SkillStatus::SkillOk
            }
            Err(e) => from_error(e),
        }
    })
}

/// Class activation maps for all three classes, class-major:
/// `cam_out[c * frames + t]`. `cam_len` must be at least `3 * frames`.
///
/// # Safety
/// `values` must hold `channels * frames` floats and `cam_out` `cam_len`.
#[no_mangle]
pub unsafe extern "C" fn skill_model_cam(
    model: *const SkillModel,
    values: *const f32,
    channels: usize,
    frames: usize,
    cam_out: *mut f32,
    cam_len: usize,
) -> SkillStatus {
    guarded(|| {
        if model.is_null() || cam_out.is_null() {
            return fail(SkillStatus::SkillErrNullPointer, "model or cam_out is null");
        }
        if cam_len < NUM_CLASSES.saturating_mul(frames) {
            return fail(
                SkillStatus::SkillErrBufferTooSmall,
                format!(
                    "cam_out needs {} floats, got {cam_len}",
                    NUM_CLASSES * frames
                ),
            );
        }
        let series = match read_series(values, channels, frames) {
            Ok(s) => s,
            Err(s) => return s,
        };
        let m = &(*model).inner;
        let map = match m.prepare(&series).and_then(|x| compute_cam(&m.net, &x)) {
            Ok(map) => map,
            Err(e) => return from_error(e),
        };
        let dst = std::slice::from_raw_parts_mut(cam_out, NUM_CLASSES * frames);
        for c in 0..NUM_CLASSES {
            dst[c * frames..(c + 1) * frames].copy_from_slice(map.row(c));
        }
        SkillStatus::SkillOk
    })
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn skill_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
