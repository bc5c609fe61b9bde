//! C ABI for loading a trained langgrid model and running predictions.
//!
//! Every function returns an [`LgStatus`]; on failure a description is
//! available from [`lg_last_error`] until the next call on the same thread.
//! Handles are opaque and must be released with [`lg_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use langgrid::grid::{compute_mse, compute_ta, ObjectInstance, Scene, WorldPoint};
use langgrid::model::Model;
use langgrid::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Panic = 4,
    Shape = 10,
    EmptyInput = 11,
    NonFinite = 12,
    Range = 13,
    Collision = 14,
    MissingGrad = 15,
    Config = 16,
    Generation = 17,
    Ambiguous = 18,
    Parse = 19,
    Checkpoint = 20,
    Io = 21,
}

impl From<&Error> for LgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape(_) => LgStatus::Shape,
            Error::EmptyInput(_) => LgStatus::EmptyInput,
            Error::NonFinite(_) => LgStatus::NonFinite,
            Error::Range(_) => LgStatus::Range,
            Error::Collision { .. } => LgStatus::Collision,
            Error::MissingGrad(_) => LgStatus::MissingGrad,
            Error::Config(_) => LgStatus::Config,
            Error::Generation { .. } => LgStatus::Generation,
            Error::Ambiguous(_) => LgStatus::Ambiguous,
            Error::Parse { .. } => LgStatus::Parse,
            Error::Checkpoint(_) => LgStatus::Checkpoint,
            Error::Io { .. } => LgStatus::Io,
        }
    }
}

/// One scene object as passed across the boundary.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LgObject {
    pub type_id: u32,
    pub x: f64,
    pub y: f64,
    pub size: f64,
}

/// Opaque trained model.
pub struct LgModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

struct Fail(LgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(LgStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LgStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(LgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn model_ref<'a>(m: *const LgModel) -> Result<&'a Model, Fail> {
    m.as_ref().map(|h| &h.model).ok_or_else(|| null("model"))
}

unsafe fn points(p: *const f64, n: usize, what: &str) -> Result<Vec<WorldPoint>, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, 2 * n)
        .chunks_exact(2)
        .map(|c| WorldPoint::new(c[0], c[1]))
        .collect())
}

unsafe fn scene_from_objects(model: &Model, objects: *const LgObject, n: usize) -> Result<Scene, Fail> {
    if objects.is_null() && n > 0 {
        return Err(null("objects"));
    }
    let list = if n == 0 { &[][..] } else { std::slice::from_raw_parts(objects, n) };
    let objs = list
        .iter()
        .map(|o| ObjectInstance {
            type_id: o.type_id as usize,
            position: WorldPoint::new(o.x, o.y),
            size: o.size,
        })
        .collect();
    Ok(Scene::new(model.config().n_types, objs)?)
}

fn run(model: &Model, instruction: &str, scene: &Scene, start: *mut f64, end: *mut f64) -> Result<Option<Vec<f64>>, Fail> {
    if start.is_null() || end.is_null() {
        return Err(null("output"));
    }
    let p = model.predict(&model.input(instruction, scene)?)?;
    unsafe {
        *start = p.start.x;
        *start.add(1) = p.start.y;
        *end = p.end.x;
        *end.add(1) = p.end.y;
    }
    Ok(p.heatmaps)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn lg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lg_model_load(path: *const c_char, out: *mut *mut LgModel) -> LgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let model = Model::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(LgModel { model }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`lg_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lg_model_free(model: *mut LgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Grid width and height the model was built for; heatmaps hold
/// `2 * width * height` values.
///
/// # Safety
/// `model` must be a live handle; `width` and `height` writable.
#[no_mangle]
pub unsafe extern "C" fn lg_model_grid(model: *const LgModel, width: *mut usize, height: *mut usize) -> LgStatus {
    guard(|| {
        let m = model_ref(model)?;
        if width.is_null() || height.is_null() {
            return Err(null("output"));
        }
        *width = m.config().grid_w;
        *height = m.config().grid_h;
        Ok(())
    })
}

/// Predicts start and end world coordinates, each written as `[x, y]`.
/// Objects use type ids of the model's catalog.
///
/// # Safety
/// `instruction` must be NUL-terminated, `objects` must point at `n_objects`
/// entries, and `start`, `end` at two writable doubles each.
#[no_mangle]
pub unsafe extern "C" fn lg_model_predict(
    model: *const LgModel,
    instruction: *const c_char,
    objects: *const LgObject,
    n_objects: usize,
    start: *mut f64,
    end: *mut f64,
) -> LgStatus {
    guard(|| {
        let m = model_ref(model)?;
        let scene = scene_from_objects(m, objects, n_objects)?;
        run(m, text(instruction, "instruction")?, &scene, start, end)?;
        Ok(())
    })
}

/// Same as [`lg_model_predict`] with the scene given as JSON:
/// `{"catalog_size": N, "objects": [{"type_id", "position": {"x", "y"}, "size"}]}`.
///
/// # Safety
/// Strings must be NUL-terminated; `start`, `end` as for [`lg_model_predict`].
#[no_mangle]
pub unsafe extern "C" fn lg_model_predict_json(
    model: *const LgModel,
    instruction: *const c_char,
    scene_json: *const c_char,
    start: *mut f64,
    end: *mut f64,
) -> LgStatus {
    guard(|| {
        let m = model_ref(model)?;
        let json = text(scene_json, "scene")?;
        let scene: Scene = serde_json::from_str(json).map_err(|e| {
            Fail(LgStatus::Parse, format!("scene: {e}"))
        })?;
        scene.validate()?;
        run(m, text(instruction, "instruction")?, &scene, start, end)?;
        Ok(())
    })
}

/// Writes both normalized heatmaps, `[k][i][j]` with k = start, end, into
/// `heatmaps` (capacity `len`, at least `2 * width * height`). Fails with
/// `Config` for models without a grid head.
///
/// # Safety
/// As for [`lg_model_predict`]; `heatmaps` must point at `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lg_model_heatmaps(
    model: *const LgModel,
    instruction: *const c_char,
    objects: *const LgObject,
    n_objects: usize,
    heatmaps: *mut f64,
    len: usize,
) -> LgStatus {
    guard(|| {
        let m = model_ref(model)?;
        if heatmaps.is_null() {
            return Err(null("heatmaps"));
        }
        let need = 2 * m.config().grid_w * m.config().grid_h;
        if len < need {
            return Err(Fail(LgStatus::BufferTooSmall, format!("need {need} values, got {len}")));
        }
        let scene = scene_from_objects(m, objects, n_objects)?;
        let (mut s, mut e) = ([0.0; 2], [0.0; 2]);
        let heat = run(m, text(instruction, "instruction")?, &scene, s.as_mut_ptr(), e.as_mut_ptr())?
            .ok_or_else(|| Fail(LgStatus::Config, "model has no heatmaps".into()))?;
        std::slice::from_raw_parts_mut(heatmaps, need).copy_from_slice(&heat);
        Ok(())
    })
}

/// Percentage of predictions within `tol` of gold on both axes. Points are
/// interleaved `[x0, y0, x1, y1, ...]`, `n` points each.
///
/// # Safety
/// `pred` and `gold` must point at `2 * n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lg_tolerable_accuracy(pred: *const f64, gold: *const f64, n: usize, tol: f64, out: *mut f64) -> LgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = compute_ta(&points(pred, n, "pred")?, &points(gold, n, "gold")?, tol)?;
        Ok(())
    })
}

/// Mean squared Euclidean error over `n` interleaved points.
///
/// # Safety
/// As for [`lg_tolerable_accuracy`].
#[no_mangle]
pub unsafe extern "C" fn lg_mean_squared_error(pred: *const f64, gold: *const f64, n: usize, out: *mut f64) -> LgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = compute_mse(&points(pred, n, "pred")?, &points(gold, n, "gold")?)?;
        Ok(())
    })
}
