//! C ABI over the detector.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every fallible function returns an [`HrcnStatus`]; on
//! failure `hrcn_last_error` describes the problem for the calling thread.
//! Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hrcenternet::codec::{CodecConfig, Detection};
use hrcenternet::eval::detect;
use hrcenternet::{iou, BBox, Error, Model, ModelConfig, TensorGrid};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HrcnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    ConfigMismatch = 5,
    Panic = 6,
    Internal = 7,
}

/// A trained or freshly initialized detector.
pub struct HrcnModel {
    inner: Model,
}

/// Detections from one call to `hrcn_detect`.
pub struct HrcnDetections {
    items: Vec<Detection>,
}

/// Box corners in input pixels plus the detection score.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrcnBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub score: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HrcnStatus {
    match e {
        Error::Io { .. } => HrcnStatus::Io,
        Error::Format { .. } | Error::Image { .. } | Error::Parse { .. } => HrcnStatus::Format,
        Error::ConfigMismatch(_) => HrcnStatus::ConfigMismatch,
        Error::InvalidBox(_) | Error::DimensionMismatch(_) | Error::InvalidConfig(_) | Error::Annotation { .. } => {
            HrcnStatus::InvalidArgument
        }
        _ => HrcnStatus::Internal,
    }
}

/// Runs `f`, recording any error or panic for `hrcn_last_error`.
fn guard<F: FnOnce() -> Result<(), (HrcnStatus, String)>>(f: F) -> HrcnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HrcnStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HrcnStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (HrcnStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (HrcnStatus, String) {
    (HrcnStatus::NullArgument, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (HrcnStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (HrcnStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message for the last failed call on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hrcn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a model from a preset name (`"toy"` or `"paper-w32"`) and seed.
#[no_mangle]
pub unsafe extern "C" fn hrcn_model_new(preset: *const c_char, seed: u64, out: *mut *mut HrcnModel) -> HrcnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(preset, "preset")?;
        let cfg = ModelConfig::preset(name).map_err(lib_err)?;
        let inner = Model::build(cfg, seed).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HrcnModel { inner }));
        Ok(())
    })
}

/// Loads a checkpoint file.
#[no_mangle]
pub unsafe extern "C" fn hrcn_model_load(path: *const c_char, out: *mut *mut HrcnModel) -> HrcnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let inner = Model::load(path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HrcnModel { inner }));
        Ok(())
    })
}

/// Writes a checkpoint file.
#[no_mangle]
pub unsafe extern "C" fn hrcn_model_save(model: *const HrcnModel, path: *const c_char) -> HrcnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let path = str_arg(path, "path")?;
        model.inner.save(path).map_err(lib_err)
    })
}

/// Releases a model; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hrcn_model_free(model: *mut HrcnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of learnable parameters, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hrcn_model_param_count(model: *const HrcnModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.param_count())
}

/// Channels the model expects (1 or 3), or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hrcn_model_input_channels(model: *const HrcnModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().input_channels)
}

/// Detects characters on a `channels x height x width` planar float image in `[0, 1]`.
///
/// `channels` may be 1 or 3 regardless of the model; any size is accepted.
/// Non-positive `conf` or `nms_iou` select the defaults (0.3 and 0.5).
#[no_mangle]
pub unsafe extern "C" fn hrcn_detect(
    model: *const HrcnModel,
    pixels: *const f32,
    channels: usize,
    height: usize,
    width: usize,
    conf: f64,
    nms_iou: f64,
    out: *mut *mut HrcnDetections,
) -> HrcnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let n = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .filter(|&n| n > 0)
            .ok_or((HrcnStatus::InvalidArgument, format!("bad image dims {channels}x{height}x{width}")))?;
        let data = std::slice::from_raw_parts(pixels, n).to_vec();
        let img = TensorGrid::from_vec(channels, height, width, data).map_err(lib_err)?;
        let defaults = CodecConfig::default();
        let cfg = CodecConfig {
            conf_thresh: if conf > 0.0 { conf } else { defaults.conf_thresh },
            nms_iou: if nms_iou > 0.0 { nms_iou } else { defaults.nms_iou },
            ..defaults
        };
        cfg.validate().map_err(lib_err)?;
        let items = detect(&model.inner, &img, &cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HrcnDetections { items }));
        Ok(())
    })
}

/// Number of detections, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hrcn_detections_len(dets: *const HrcnDetections) -> usize {
    dets.as_ref().map_or(0, |d| d.items.len())
}

/// Copies detection `index` (best score first) into `out`.
#[no_mangle]
pub unsafe extern "C" fn hrcn_detections_get(dets: *const HrcnDetections, index: usize, out: *mut HrcnBox) -> HrcnStatus {
    guard(|| {
        let dets = dets.as_ref().ok_or_else(|| null("detections"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = dets.items.get(index).ok_or((
            HrcnStatus::InvalidArgument,
            format!("index {index} out of range for {} detections", dets.items.len()),
        ))?;
        let c = d.bbox.to_corners();
        *out = HrcnBox {
            x_min: c.x_min,
            y_min: c.y_min,
            x_max: c.x_max,
            y_max: c.y_max,
            score: d.score,
        };
        Ok(())
    })
}

/// Releases a detection list; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hrcn_detections_free(dets: *mut HrcnDetections) {
    if !dets.is_null() {
        drop(Box::from_raw(dets));
    }
}

/// Intersection over union of two boxes (scores are ignored).
#[no_mangle]
pub unsafe extern "C" fn hrcn_iou(a: *const HrcnBox, b: *const HrcnBox, out: *mut f64) -> HrcnStatus {
    guard(|| {
        let (a, b) = (a.as_ref().ok_or_else(|| null("a"))?, b.as_ref().ok_or_else(|| null("b"))?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let to_box = |h: &HrcnBox| BBox::from_corners(h.x_min, h.y_min, h.x_max, h.y_max).map_err(lib_err);
        *out = iou(&to_box(a)?, &to_box(b)?);
        Ok(())
    })
}
