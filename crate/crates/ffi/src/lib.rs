//! C ABI for the aggdiff solver.
//!
//! Every fallible function returns an [`AggdiffStatus`]. On failure the
//! message is available from [`aggdiff_last_error`] on the same thread until
//! the next call. Handles are opaque and owned by the caller, who releases
//! them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aggdiff::density::ParticleEnsemble;
use aggdiff::error::Error;
use aggdiff::experiments::{self, ExperimentConfig, RunOutput};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggdiffStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Domain = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// An experiment configuration.
pub struct AggdiffConfig {
    inner: ExperimentConfig,
}

/// A finished run: snapshots and diagnostics.
pub struct AggdiffRun {
    inner: RunOutput,
}

/// Diagnostics of one snapshot.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AggdiffDiagnostics {
    pub time: f64,
    pub mass: f64,
    pub center: f64,
    pub second_moment: f64,
    pub energy: f64,
    pub max_speed: f64,
    pub max_density: f64,
    pub n_particles: usize,
    pub n_remesh: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

struct Fail(AggdiffStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Json(_) | Error::Unsupported(_) => {
                AggdiffStatus::InvalidConfig
            }
            Error::Domain(_) => AggdiffStatus::Domain,
            Error::Numerical(_) | Error::Stiffness { .. } => AggdiffStatus::Numerical,
            Error::Io(_) => AggdiffStatus::Io,
        };
        Fail(code, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AggdiffStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AggdiffStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AggdiffStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AggdiffStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Fail(AggdiffStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn config_ref<'a>(cfg: *const AggdiffConfig) -> Result<&'a ExperimentConfig, Fail> {
    cfg.as_ref().map(|c| &c.inner).ok_or_else(|| null("config"))
}

unsafe fn run_ref<'a>(run: *const AggdiffRun) -> Result<&'a RunOutput, Fail> {
    run.as_ref().map(|r| &r.inner).ok_or_else(|| null("run"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into the library on the same thread.
#[no_mangle]
pub extern "C" fn aggdiff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aggdiff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON config. Validation happens in [`aggdiff_config_validate`]
/// and [`aggdiff_run`].
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_config_from_json(
    json: *const c_char,
    out: *mut *mut AggdiffConfig,
) -> AggdiffStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(text(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(AggdiffConfig { inner: cfg })))
    })
}

/// Loads a named preset.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_config_preset(
    name: *const c_char,
    out: *mut *mut AggdiffConfig,
) -> AggdiffStatus {
    guard(|| {
        let cfg = experiments::preset(text(name, "name")?)?;
        write_out(out, Box::into_raw(Box::new(AggdiffConfig { inner: cfg })))
    })
}

/// Applies one `key.path=value` override in place.
///
/// # Safety
/// `cfg` must come from this library; `assignment` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_config_override(
    cfg: *mut AggdiffConfig,
    assignment: *const c_char,
) -> AggdiffStatus {
    guard(|| {
        let a = text(assignment, "assignment")?;
        let c = cfg.as_mut().ok_or_else(|| null("config"))?;
        c.inner = c.inner.with_overrides(&[a])?;
        Ok(())
    })
}

/// Validates a config. Returns `InvalidConfig` with every problem in the
/// error message.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_config_validate(cfg: *const AggdiffConfig) -> AggdiffStatus {
    guard(|| Ok(config_ref(cfg)?.validate()?))
}

/// Serializes a config to JSON. The string is released with
/// [`aggdiff_string_free`].
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_config_to_json(
    cfg: *const AggdiffConfig,
    out: *mut *mut c_char,
) -> AggdiffStatus {
    guard(|| {
        let json = CString::new(config_ref(cfg)?.to_json()).expect("JSON has no NUL");
        write_out(out, json.into_raw())
    })
}

/// # Safety
/// `cfg` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_config_free(cfg: *mut AggdiffConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Particle velocities for the config's model at the given positions and
/// weights.
///
/// # Safety
/// `cfg` must come from this library; the three arrays must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_velocity(
    cfg: *const AggdiffConfig,
    positions: *const f64,
    weights: *const f64,
    n: usize,
    velocities: *mut f64,
) -> AggdiffStatus {
    guard(|| {
        let c = config_ref(cfg)?;
        if positions.is_null() || weights.is_null() || velocities.is_null() {
            return Err(null("array"));
        }
        let x = std::slice::from_raw_parts(positions, n);
        let w = std::slice::from_raw_parts(weights, n);
        // the ensemble keeps particles sorted; results go back in caller order
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let model = c.build_model()?;
        let ens = ParticleEnsemble::new(
            order.iter().map(|&i| x[i]).collect(),
            order.iter().map(|&i| w[i]).collect(),
            c.h(),
            1,
        )?;
        let v = model.velocity(&ens)?;
        let out = std::slice::from_raw_parts_mut(velocities, n);
        for (k, &i) in order.iter().enumerate() {
            out[i] = v[k];
        }
        Ok(())
    })
}

/// Runs an experiment. With a non-null `out_dir` the outputs are written
/// there as well.
///
/// # Safety
/// `cfg` must come from this library; `out_dir` is null or NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_run(
    cfg: *const AggdiffConfig,
    out_dir: *const c_char,
    out: *mut *mut AggdiffRun,
) -> AggdiffStatus {
    guard(|| {
        let c = config_ref(cfg)?;
        let dir = if out_dir.is_null() { None } else { Some(text(out_dir, "out_dir")?) };
        let result = experiments::run(c, dir.map(Path::new))?;
        write_out(out, Box::into_raw(Box::new(AggdiffRun { inner: result })))
    })
}

/// # Safety
/// `run` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_run_free(run: *mut AggdiffRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of recorded snapshots.
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_run_snapshot_count(
    run: *const AggdiffRun,
    out: *mut usize,
) -> AggdiffStatus {
    guard(|| write_out(out, run_ref(run)?.record.snapshots.len()))
}

/// Diagnostics of snapshot `index`.
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_run_diagnostics(
    run: *const AggdiffRun,
    index: usize,
    out: *mut AggdiffDiagnostics,
) -> AggdiffStatus {
    guard(|| {
        let r = run_ref(run)?;
        let (Some(row), Some(snap)) = (r.rows.get(index), r.record.snapshots.get(index)) else {
            return Err(Fail(
                AggdiffStatus::OutOfRange,
                format!("snapshot {index} of {}", r.record.snapshots.len()),
            ));
        };
        write_out(
            out,
            AggdiffDiagnostics {
                time: row.time,
                mass: row.mass,
                center: row.center,
                second_moment: row.second_moment,
                energy: row.energy,
                max_speed: row.max_speed,
                max_density: row.max_density,
                n_particles: snap.ensemble.len(),
                n_remesh: row.n_remesh,
            },
        )
    })
}

/// Copies the particles of snapshot `index`. `len` receives the particle
/// count; when `capacity` is smaller nothing is copied and
/// `BufferTooSmall` is returned, so a call with `capacity = 0` queries the
/// size.
///
/// # Safety
/// `run` must come from this library; `positions` and `weights` must hold
/// `capacity` values; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aggdiff_run_particles(
    run: *const AggdiffRun,
    index: usize,
    positions: *mut f64,
    weights: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> AggdiffStatus {
    guard(|| {
        let r = run_ref(run)?;
        let snap = r.record.snapshots.get(index).ok_or_else(|| {
            Fail(
                AggdiffStatus::OutOfRange,
                format!("snapshot {index} of {}", r.record.snapshots.len()),
            )
        })?;
        let n = snap.ensemble.len();
        write_out(len, n)?;
        if capacity < n {
            return Err(Fail(AggdiffStatus::BufferTooSmall, format!("need {n}, got {capacity}")));
        }
        if positions.is_null() || weights.is_null() {
            return Err(null("array"));
        }
        std::slice::from_raw_parts_mut(positions, n).copy_from_slice(snap.ensemble.positions());
        std::slice::from_raw_parts_mut(weights, n).copy_from_slice(snap.ensemble.weights());
        Ok(())
    })
}
