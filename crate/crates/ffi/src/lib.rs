//! C ABI over `ntt_core`.
//!
//! Objects are opaque handles created by `ntt_*_new`/`ntt_*_load` style
//! functions and released with the matching `ntt_*_free`. Every fallible
//! call returns an [`NttStatus`]; on failure a message for the calling thread
//! is available from [`ntt_last_error`]. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use ntt_core::classifiers::{encode_for, predict_trajectory, TrainedModel};
use ntt_core::encoders::encode_topdown;
use ntt_core::evalkit::{mann_whitney_u, spearman_rank};
use ntt_core::navsim::{Action, Episode, MapSpec, Termination};
use ntt_core::policies::Trajectory;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NttStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Simulation = 4,
    Encoding = 5,
    Model = 6,
    Statistics = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// How an episode step ended.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NttTermination {
    Running = 0,
    Goal = 1,
    Death = 2,
    Timeout = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NttPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub heading: f64,
}

/// Opaque map handle.
pub struct NttMap {
    inner: Arc<MapSpec>,
}

/// Opaque episode handle.
pub struct NttEpisode {
    inner: Episode,
}

/// Opaque trajectory handle.
pub struct NttTrajectory {
    inner: Trajectory,
}

/// Opaque trained classifier handle.
pub struct NttClassifier {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(NttStatus, String);

type FfiResult = Result<(), Failure>;

fn fail<E: std::fmt::Display>(status: NttStatus) -> impl FnOnce(E) -> Failure {
    move |e| Failure(status, e.to_string())
}

fn guard(f: impl FnOnce() -> FfiResult) -> NttStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NttStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NttStatus::Panic
        }
    }
}

unsafe fn href<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(NttStatus::NullPointer, format!("{what} is null")))
}

unsafe fn hmut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(NttStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(NttStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure(NttStatus::NullPointer, "path is null".into()));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(NttStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(NttStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn pose_of(p: ntt_core::navsim::AgentPose) -> NttPose {
    NttPose {
        x: p.x,
        y: p.y,
        z: p.z,
        heading: p.heading,
    }
}

/// Message of the calling thread's most recent failure, or null. The pointer
/// stays valid until the next `ntt_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ntt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ntt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The built-in map.
#[no_mangle]
pub unsafe extern "C" fn ntt_map_default(out: *mut *mut NttMap) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(NttMap {
            inner: Arc::new(MapSpec::default_map()),
        }));
        Ok(())
    })
}

/// Loads a text map file.
#[no_mangle]
pub unsafe extern "C" fn ntt_map_load(path: *const c_char, out: *mut *mut NttMap) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let map = MapSpec::load(&path_arg(path)?).map_err(fail(NttStatus::Io))?;
        *out = Box::into_raw(Box::new(NttMap { inner: Arc::new(map) }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntt_map_goal_count(map: *const NttMap, out: *mut usize) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = href(map, "map")?.inner.goals.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntt_map_spawn_count(map: *const NttMap, out: *mut usize) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = href(map, "map")?.inner.spawns.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntt_map_free(map: *mut NttMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Starts an episode at a spawn point facing `heading` radians.
#[no_mangle]
pub unsafe extern "C" fn ntt_episode_start(
    map: *const NttMap,
    spawn_index: usize,
    goal_index: usize,
    heading: f64,
    out: *mut *mut NttEpisode,
) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let map = href(map, "map")?;
        let ep = Episode::start(map.inner.clone(), spawn_index, goal_index, heading).map_err(fail(NttStatus::InvalidArgument))?;
        *out = Box::into_raw(Box::new(NttEpisode { inner: ep }));
        Ok(())
    })
}

/// Applies action `action` (0..9, in the simulator's action order).
#[no_mangle]
pub unsafe extern "C" fn ntt_episode_step(
    episode: *mut NttEpisode,
    action: u32,
    reward: *mut f64,
    termination: *mut NttTermination,
) -> NttStatus {
    guard(|| {
        let ep = hmut(episode, "episode")?;
        let action = Action::from_index(action as usize)
            .ok_or_else(|| Failure(NttStatus::InvalidArgument, format!("action {action} outside 0..{}", Action::COUNT)))?;
        let outcome = ep.inner.step(action).map_err(fail(NttStatus::Simulation))?;
        if let Some(r) = reward.as_mut() {
            *r = outcome.reward;
        }
        if let Some(t) = termination.as_mut() {
            *t = match outcome.reason {
                Termination::Running => NttTermination::Running,
                Termination::Goal => NttTermination::Goal,
                Termination::Death => NttTermination::Death,
                Termination::Timeout => NttTermination::Timeout,
            };
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntt_episode_pose(episode: *const NttEpisode, out: *mut NttPose) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = pose_of(href(episode, "episode")?.inner.pose());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntt_episode_free(episode: *mut NttEpisode) {
    if !episode.is_null() {
        drop(Box::from_raw(episode));
    }
}

/// Loads a trajectory file (JSON lines).
#[no_mangle]
pub unsafe extern "C" fn ntt_trajectory_load(path: *const c_char, out: *mut *mut NttTrajectory) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let t = Trajectory::load(&path_arg(path)?).map_err(fail(NttStatus::Io))?;
        *out = Box::into_raw(Box::new(NttTrajectory { inner: t }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntt_trajectory_len(trajectory: *const NttTrajectory, out: *mut usize) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = href(trajectory, "trajectory")?.inner.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntt_trajectory_pose(trajectory: *const NttTrajectory, t: usize, out: *mut NttPose) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let tr = &href(trajectory, "trajectory")?.inner;
        let step = tr
            .steps
            .get(t)
            .ok_or_else(|| Failure(NttStatus::InvalidArgument, format!("step {t} outside 0..{}", tr.len())))?;
        *out = pose_of(step.pose());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntt_trajectory_free(trajectory: *mut NttTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Renders the top-down encoding into `pixels` (row-major, 8-bit). Writes the
/// image size to `width`/`height` and fails with `BufferTooSmall` when
/// `capacity` is insufficient; pass a null buffer to query the size.
#[no_mangle]
pub unsafe extern "C" fn ntt_encode_topdown(
    trajectory: *const NttTrajectory,
    map: *const NttMap,
    pixels: *mut u8,
    capacity: usize,
    width: *mut usize,
    height: *mut usize,
) -> NttStatus {
    guard(|| {
        out_ptr(width, "width")?;
        out_ptr(height, "height")?;
        let t = &href(trajectory, "trajectory")?.inner;
        let map = &href(map, "map")?.inner;
        let img = encode_topdown(t, &map.bounds()).map_err(fail(NttStatus::Encoding))?;
        *width = img.width;
        *height = img.height;
        if pixels.is_null() {
            return Ok(());
        }
        if capacity < img.pixels.len() {
            return Err(Failure(
                NttStatus::BufferTooSmall,
                format!("need {} bytes, got {capacity}", img.pixels.len()),
            ));
        }
        ptr::copy_nonoverlapping(img.pixels.as_ptr(), pixels, img.pixels.len());
        Ok(())
    })
}

/// Loads a trained classifier container.
#[no_mangle]
pub unsafe extern "C" fn ntt_classifier_load(path: *const c_char, out: *mut *mut NttClassifier) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let m = TrainedModel::load(&path_arg(path)?).map_err(fail(NttStatus::Model))?;
        *out = Box::into_raw(Box::new(NttClassifier { inner: m }));
        Ok(())
    })
}

/// Trajectory-level verdict: mean logit and the majority vote (1 = human).
/// Visual models render frames from the map.
#[no_mangle]
pub unsafe extern "C" fn ntt_classifier_predict(
    classifier: *const NttClassifier,
    trajectory: *const NttTrajectory,
    map: *const NttMap,
    logit: *mut f64,
    majority_human: *mut i32,
) -> NttStatus {
    guard(|| {
        let m = &href(classifier, "classifier")?.inner;
        let t = &href(trajectory, "trajectory")?.inner;
        let map = &href(map, "map")?.inner;
        let enc = encode_for(m.kind, t, map, &m.preprocess, None).map_err(fail(NttStatus::Encoding))?;
        let v = predict_trajectory(m, &enc).map_err(fail(NttStatus::Model))?;
        if let Some(l) = logit.as_mut() {
            *l = v.logit;
        }
        if let Some(h) = majority_human.as_mut() {
            *h = v.majority_human as i32;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ntt_classifier_free(classifier: *mut NttClassifier) {
    if !classifier.is_null() {
        drop(Box::from_raw(classifier));
    }
}

/// Spearman rank correlation of two length-`n` samples.
#[no_mangle]
pub unsafe extern "C" fn ntt_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> NttStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let r = spearman_rank(slice_arg(x, n, "x")?, slice_arg(y, n, "y")?).map_err(fail(NttStatus::Statistics))?;
        *out = r;
        Ok(())
    })
}

/// Mann-Whitney U of the first sample and its two-sided p-value.
#[no_mangle]
pub unsafe extern "C" fn ntt_mann_whitney(
    a: *const f64,
    n1: usize,
    b: *const f64,
    n2: usize,
    u1: *mut f64,
    p_value: *mut f64,
) -> NttStatus {
    guard(|| {
        out_ptr(u1, "u1")?;
        out_ptr(p_value, "p_value")?;
        let mw = mann_whitney_u(slice_arg(a, n1, "a")?, slice_arg(b, n2, "b")?).map_err(fail(NttStatus::Statistics))?;
        *u1 = mw.u1;
        *p_value = mw.p_value;
        Ok(())
    })
}
