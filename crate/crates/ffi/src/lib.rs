//! C interface to srp-core: simulated episodes with automatic region labels,
//! and region prediction from a trained checkpoint.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! and released by the matching `*_free`. Every fallible call returns an
//! [`SrpStatus`]; the message of the last failure on the calling thread is
//! available from [`srp_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;

use srp_core::checkpoint::Checkpoint;
use srp_core::labeler::{label_episode, CoherenceParams, LabelerParams};
use srp_core::pipeline::srp_from_checkpoint;
use srp_core::sim::{make_episode, Episode, SimConfig};
use srp_core::srp::{forward, prediction_from, SrpConfig, SrpParams};
use srp_core::topology::{build_topology, AffordedAction, SemanticRegion, TopologyKind, TopologyParams};
use srp_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrpTopologyKind {
    FourWay = 0,
    ThreeWayLeftStraight = 1,
    ThreeWayLeftRight = 2,
    StraightMultiLane = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrpAction {
    LeftTurn = 0,
    Straight = 1,
    RightTurn = 2,
    LeftLaneChange = 3,
    RightLaneChange = 4,
}

/// Model dimensions needed to size buffers.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SrpModelInfo {
    pub t_e: usize,
    pub t_d: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
}

/// Simulated and labelled episode.
pub struct SrpEpisode {
    episode: Episode,
    labels: Vec<Option<SemanticRegion>>,
    accepted: bool,
}

/// Trained region predictor.
pub struct SrpModel {
    cfg: SrpConfig,
    params: SrpParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SrpStatus {
    match e {
        Error::Io(_) => SrpStatus::Io,
        Error::Format(_) | Error::Json(_) | Error::Shape(_) | Error::HashMismatch { .. } => SrpStatus::Format,
        _ => SrpStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard<F: FnOnce() -> Result<(), (SrpStatus, String)>>(f: F) -> SrpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrpStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            SrpStatus::Panic
        }
    }
}

fn core(e: Error) -> (SrpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SrpStatus, String) {
    (SrpStatus::NullPointer, format!("{what} is null"))
}

fn kind_of(k: SrpTopologyKind) -> TopologyKind {
    TopologyKind::ALL[k as usize]
}

fn action_of(a: SrpAction) -> AffordedAction {
    AffordedAction::ALL[a as usize]
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to fit) and returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn srp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static NUL-terminated name of a region code (0..18), or null.
#[no_mangle]
pub extern "C" fn srp_region_name(code: u8) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        (0..=u8::MAX)
            .map_while(SemanticRegion::from_code)
            .map(|r| CString::new(r.name()).expect("names have no NUL"))
            .collect()
    });
    names.get(code as usize).map_or(std::ptr::null(), |n| n.as_ptr())
}

/// Simulates one episode on a layout with `lanes` lanes per direction and
/// labels it. `clean` disables every noise source.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn srp_episode_new(
    kind: SrpTopologyKind,
    action: SrpAction,
    lanes: u32,
    seed: u64,
    clean: bool,
    out: *mut *mut SrpEpisode,
) -> SrpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = TopologyParams {
            lanes_per_direction: lanes,
            ..TopologyParams::default()
        };
        let t = build_topology(kind_of(kind), params).map_err(core)?;
        let sim = if clean {
            SimConfig::clean()
        } else {
            SimConfig::default()
        }
        .with_seed(seed);
        let episode = make_episode(&t, action_of(action), &sim).map_err(core)?;
        let lp = LabelerParams::for_layout(&params, episode.grid.resolution);
        let res = label_episode(&episode, &CoherenceParams::default(), &lp).map_err(core)?;
        *out = Box::into_raw(Box::new(SrpEpisode {
            episode,
            labels: res.labels,
            accepted: res.accepted,
        }));
        Ok(())
    })
}

/// # Safety
/// `ep` must be null or a handle from [`srp_episode_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn srp_episode_free(ep: *mut SrpEpisode) {
    if !ep.is_null() {
        drop(Box::from_raw(ep));
    }
}

/// Number of frames, or 0 for a null handle.
///
/// # Safety
/// `ep` must be null or a live episode handle.
#[no_mangle]
pub unsafe extern "C" fn srp_episode_len(ep: *const SrpEpisode) -> usize {
    ep.as_ref().map_or(0, |e| e.episode.len())
}

/// Whether the labeler's quality filter accepted the episode.
///
/// # Safety
/// `ep` must be null or a live episode handle.
#[no_mangle]
pub unsafe extern "C" fn srp_episode_accepted(ep: *const SrpEpisode) -> bool {
    ep.as_ref().is_some_and(|e| e.accepted)
}

/// Writes one region code per frame: the automatic label in `labels` (-1 when
/// unlabelled) and the ground truth in `truth`. Either buffer may be null.
///
/// # Safety
/// Non-null buffers must be valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn srp_episode_regions(
    ep: *const SrpEpisode,
    labels: *mut i16,
    truth: *mut i16,
    len: usize,
) -> SrpStatus {
    guard(|| {
        let e = ep.as_ref().ok_or_else(|| null("episode"))?;
        let n = e.episode.len();
        if len < n {
            return Err((SrpStatus::BufferTooSmall, format!("need {n} elements, got {len}")));
        }
        for k in 0..n {
            if !labels.is_null() {
                *labels.add(k) = e.labels[k].map_or(-1, |r| r.code() as i16);
            }
            if !truth.is_null() {
                *truth.add(k) = e.episode.gt_regions[k].code() as i16;
            }
        }
        Ok(())
    })
}

/// Copies the features of frames `start..start + frames` into `out`,
/// frame-major.
///
/// # Safety
/// `out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn srp_episode_features(
    ep: *const SrpEpisode,
    start: usize,
    frames: usize,
    out: *mut f64,
    len: usize,
) -> SrpStatus {
    guard(|| {
        let e = ep.as_ref().ok_or_else(|| null("episode"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let end = start.checked_add(frames).filter(|&end| end <= e.episode.len()).ok_or((
            SrpStatus::InvalidArgument,
            "frame range outside the episode".to_string(),
        ))?;
        let dim = srp_core::sim::FEATURE_DIM;
        if len < frames * dim {
            return Err((SrpStatus::BufferTooSmall, format!("need {} doubles", frames * dim)));
        }
        for (i, f) in e.episode.features[start..end].iter().enumerate() {
            let v = f.to_vec();
            std::ptr::copy_nonoverlapping(v.as_ptr(), out.add(i * dim), dim);
        }
        Ok(())
    })
}

/// Loads a region predictor checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn srp_model_load(path: *const c_char, out: *mut *mut SrpModel) -> SrpStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (SrpStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let ckpt = Checkpoint::load(Path::new(path)).map_err(core)?;
        let (cfg, params) = srp_from_checkpoint(&ckpt).map_err(core)?;
        *out = Box::into_raw(Box::new(SrpModel { cfg, params }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`srp_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn srp_model_free(m: *mut SrpModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live model handle; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn srp_model_info(m: *const SrpModel, out: *mut SrpModelInfo) -> SrpStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = SrpModelInfo {
            t_e: m.cfg.t_e,
            t_d: m.cfg.t_d,
            feature_dim: m.cfg.feature_dim,
            hidden_dim: m.cfg.hidden_dim,
        };
        Ok(())
    })
}

/// Predicts from a frame-major window of `t_e * feature_dim` doubles.
/// Writes the topology class (1 = intersection), the current region code and
/// `t_d` horizon region codes (step 0 is the current frame). `hidden`, when
/// non-null, receives the `hidden_dim` scene representation.
///
/// # Safety
/// `window` must be valid for `window_len` doubles, `future` for
/// `future_len` bytes, `hidden` (if non-null) for `hidden_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn srp_model_predict(
    m: *const SrpModel,
    window: *const f64,
    window_len: usize,
    topology: *mut u8,
    current: *mut u8,
    future: *mut u8,
    future_len: usize,
    hidden: *mut f64,
) -> SrpStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        if window.is_null() || topology.is_null() || current.is_null() || future.is_null() {
            return Err(null("window or output buffer"));
        }
        let (t_e, dim) = (m.cfg.t_e, m.cfg.feature_dim);
        if window_len != t_e * dim {
            return Err((
                SrpStatus::InvalidArgument,
                format!("window must hold {} doubles", t_e * dim),
            ));
        }
        if future_len < m.cfg.t_d {
            return Err((SrpStatus::BufferTooSmall, format!("future needs {} bytes", m.cfg.t_d)));
        }
        let flat = std::slice::from_raw_parts(window, window_len);
        let frames: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let out = forward(&m.params, &m.cfg, &frames).map_err(core)?;
        let p = prediction_from(&out);
        let classifier = p.topology_class as usize;
        let code = |local: usize| {
            SemanticRegion::from_local(classifier, local)
                .expect("index in vocabulary")
                .code()
        };
        *topology = p.topology_class;
        *current = code(p.current_region);
        for (i, &r) in p.future_regions.iter().enumerate() {
            *future.add(i) = code(r);
        }
        if !hidden.is_null() {
            let h = out.final_hidden();
            std::ptr::copy_nonoverlapping(h.as_ptr(), hidden, h.len());
        }
        Ok(())
    })
}
