//! C ABI over the `gflswing` core.
//!
//! Every function returns a [`GflStatus`]; on anything other than
//! `GFL_STATUS_OK` a message is available from [`gfl_last_error`] on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gflswing::config::{load_config, parse_config, table1_config, ConfigError, RunConfig};
use gflswing::dynamics::{simulate, DynamicsError, Trajectory};
use gflswing::stability::{classify_with, compare_uniform, evaluate_clearing, find_cct, StabilityError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GflStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Simulation = 5,
    Stability = 6,
    OutOfRange = 7,
    Panic = 99,
}

/// Resolved run configuration.
pub struct GflConfig(RunConfig);

/// Simulated trajectory.
pub struct GflTrajectory(Trajectory);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GflSample {
    pub t: f64,
    pub v_pcc_mag: f64,
    pub v_pcc_angle: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GflInverterSample {
    pub theta_cg: f64,
    pub i_mag: f64,
    pub i_q: f64,
    pub v_gq: f64,
    pub limited: bool,
    pub tripped: bool,
}

/// Optional times are NaN and optional indices -1 when absent.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GflVerdict {
    pub stable: bool,
    pub first_unstable_index: i64,
    pub t_unstable: f64,
    pub t_settled: f64,
    pub max_angle_excursion: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GflCct {
    pub cct: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub evaluations: u64,
    /// Fleet index of the first unit to lose synchronism past the CCT.
    pub first_unstable_index: i64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GflComparison {
    pub cct_nonuniform: f64,
    pub cct_uniform: f64,
    pub delta: f64,
}

struct Failure(GflStatus, String);

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = if matches!(e, ConfigError::Io { .. }) { GflStatus::Io } else { GflStatus::Config };
        Failure(status, e.to_string())
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Self {
        Failure(GflStatus::Simulation, e.to_string())
    }
}

impl From<StabilityError> for Failure {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::Dynamics(d) => d.into(),
            e => Failure(GflStatus::Stability, e.to_string()),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GflStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GflStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            GflStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(GflStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GflStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn opt_time(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

fn opt_index(i: Option<usize>) -> i64 {
    i.map_or(-1, |i| i as i64)
}

/// Message for the last failed call on this thread. Empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn gfl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn gfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The bundled five-inverter configuration.
///
/// # Safety
/// `out_cfg` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gfl_config_bundled(out_cfg: *mut *mut GflConfig) -> GflStatus {
    guard(|| {
        *out(out_cfg, "out_cfg")? = boxed(GflConfig(table1_config()));
        Ok(())
    })
}

/// Reads a TOML configuration file.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out_cfg` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gfl_config_load(path: *const c_char, out_cfg: *mut *mut GflConfig) -> GflStatus {
    guard(|| {
        let dst = out(out_cfg, "out_cfg")?;
        *dst = ptr::null_mut();
        let cfg = load_config(string(path, "path")?)?;
        *dst = boxed(GflConfig(cfg));
        Ok(())
    })
}

/// Parses a TOML configuration held in memory.
///
/// # Safety
/// As for [`gfl_config_load`].
#[no_mangle]
pub unsafe extern "C" fn gfl_config_parse(text: *const c_char, out_cfg: *mut *mut GflConfig) -> GflStatus {
    guard(|| {
        let dst = out(out_cfg, "out_cfg")?;
        *dst = ptr::null_mut();
        let cfg = parse_config(string(text, "text")?)?;
        *dst = boxed(GflConfig(cfg));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfl_config_free(cfg: *mut GflConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle or null; `n` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gfl_config_n_inverters(cfg: *const GflConfig, n: *mut usize) -> GflStatus {
    guard(|| {
        *out(n, "n")? = deref(cfg, "cfg")?.0.fleet.len();
        Ok(())
    })
}

/// Overrides the integration step, seconds.
///
/// # Safety
/// `cfg` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gfl_config_set_dt(cfg: *mut GflConfig, dt: f64) -> GflStatus {
    guard(|| {
        let c = out(cfg, "cfg")?;
        c.0 = c.0.clone().with_dt(dt)?;
        Ok(())
    })
}

/// Writes the configuration hash (64 hex digits plus NUL) into `buf`.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gfl_config_hash(cfg: *const GflConfig, buf: *mut c_char, len: usize) -> GflStatus {
    guard(|| {
        let h = deref(cfg, "cfg")?.0.hash();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len <= h.len() {
            return Err(Failure(GflStatus::InvalidArgument, format!("buffer needs {} bytes", h.len() + 1)));
        }
        ptr::copy_nonoverlapping(h.as_ptr().cast::<c_char>(), buf, h.len());
        *buf.add(h.len()) = 0;
        Ok(())
    })
}

/// Runs the configured scenario.
///
/// # Safety
/// `cfg` must be a live handle or null; `out_traj` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gfl_simulate(cfg: *const GflConfig, out_traj: *mut *mut GflTrajectory) -> GflStatus {
    guard(|| {
        let dst = out(out_traj, "out_traj")?;
        *dst = ptr::null_mut();
        let c = &deref(cfg, "cfg")?.0;
        let traj = simulate(&c.fleet, &c.grid, &c.scenario, &c.study.dynamics)?;
        *dst = boxed(GflTrajectory(traj));
        Ok(())
    })
}

/// Runs the configured fault cleared `clearing_time` seconds after inception,
/// for the search's post-clearing horizon. Stops early once a unit is lost.
///
/// # Safety
/// As for [`gfl_simulate`].
#[no_mangle]
pub unsafe extern "C" fn gfl_simulate_clearing(
    cfg: *const GflConfig,
    clearing_time: f64,
    out_traj: *mut *mut GflTrajectory,
) -> GflStatus {
    guard(|| {
        let dst = out(out_traj, "out_traj")?;
        *dst = ptr::null_mut();
        let c = &deref(cfg, "cfg")?.0;
        if !(clearing_time > 0.0 && clearing_time.is_finite()) {
            return Err(Failure(GflStatus::InvalidArgument, format!("clearing time must be positive, got {clearing_time}")));
        }
        let (_, traj) =
            evaluate_clearing(&c.fleet, &c.grid, &c.scenario, clearing_time, c.search.post_clear_time, &c.study, true)?;
        *dst = boxed(GflTrajectory(traj));
        Ok(())
    })
}

/// # Safety
/// `traj` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfl_trajectory_free(traj: *mut GflTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of records.
///
/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gfl_trajectory_len(traj: *const GflTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.records.len())
}

/// # Safety
/// `traj` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gfl_trajectory_n_inverters(traj: *const GflTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.fleet.len())
}

/// PCC quantities of record `k`.
///
/// # Safety
/// `traj` must be a live handle or null; `sample` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gfl_trajectory_sample(traj: *const GflTrajectory, k: usize, sample: *mut GflSample) -> GflStatus {
    guard(|| {
        let t = &deref(traj, "traj")?.0;
        let dst = out(sample, "sample")?;
        let r = t.records.get(k).ok_or_else(|| range("record", k, t.records.len()))?;
        *dst = GflSample { t: r.t, v_pcc_mag: r.v_pcc_mag, v_pcc_angle: r.v_pcc_angle };
        Ok(())
    })
}

/// State of inverter `i` at record `k`.
///
/// # Safety
/// As for [`gfl_trajectory_sample`].
#[no_mangle]
pub unsafe extern "C" fn gfl_trajectory_inverter(
    traj: *const GflTrajectory,
    k: usize,
    i: usize,
    sample: *mut GflInverterSample,
) -> GflStatus {
    guard(|| {
        let t = &deref(traj, "traj")?.0;
        let dst = out(sample, "sample")?;
        let r = t.records.get(k).ok_or_else(|| range("record", k, t.records.len()))?;
        let s = r.inverters.get(i).ok_or_else(|| range("inverter", i, r.inverters.len()))?;
        *dst = GflInverterSample {
            theta_cg: s.theta_cg,
            i_mag: s.i_mag,
            i_q: s.i_q,
            v_gq: s.v_gq,
            limited: s.limited,
            tripped: s.tripped,
        };
        Ok(())
    })
}

fn range(what: &str, i: usize, n: usize) -> Failure {
    Failure(GflStatus::OutOfRange, format!("{what} {i} out of range 0..{n}"))
}

/// Classifies a trajectory with the configuration's stability criteria.
///
/// # Safety
/// Handles must be live or null; `verdict` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gfl_classify(
    cfg: *const GflConfig,
    traj: *const GflTrajectory,
    verdict: *mut GflVerdict,
) -> GflStatus {
    guard(|| {
        let c = &deref(cfg, "cfg")?.0;
        let t = &deref(traj, "traj")?.0;
        let dst = out(verdict, "verdict")?;
        let v = classify_with(t, &c.study.criteria)?;
        *dst = GflVerdict {
            stable: v.stable,
            first_unstable_index: opt_index(v.first_unstable_index),
            t_unstable: opt_time(v.t_unstable),
            t_settled: opt_time(v.t_settled),
            max_angle_excursion: v.max_angle_excursion,
        };
        Ok(())
    })
}

/// Critical clearing time of the configured fleet and fault.
///
/// # Safety
/// `cfg` must be a live handle or null; `result` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gfl_find_cct(cfg: *const GflConfig, result: *mut GflCct) -> GflStatus {
    guard(|| {
        let c = &deref(cfg, "cfg")?.0;
        let dst = out(result, "result")?;
        let r = find_cct(&c.fleet, &c.grid, &c.scenario, &c.search, &c.study)?;
        let first = r.loss_order.first().and_then(|n| c.fleet.iter().position(|u| &u.name == n));
        *dst = GflCct {
            cct: r.cct,
            bracket_lo: r.bracket_lo,
            bracket_hi: r.bracket_hi,
            evaluations: r.evaluations as u64,
            first_unstable_index: opt_index(first),
        };
        Ok(())
    })
}

/// CCT of the configured fleet against its uniform counterpart.
///
/// # Safety
/// As for [`gfl_find_cct`].
#[no_mangle]
pub unsafe extern "C" fn gfl_compare(cfg: *const GflConfig, result: *mut GflComparison) -> GflStatus {
    guard(|| {
        let c = &deref(cfg, "cfg")?.0;
        let dst = out(result, "result")?;
        let r = compare_uniform(&c.fleet, &c.grid, &c.scenario, &c.search, &c.study)?;
        *dst = GflComparison { cct_nonuniform: r.cct_nonuniform, cct_uniform: r.cct_uniform, delta: r.delta };
        Ok(())
    })
}
