//! C ABI for the continuous-level Monte Carlo toolkit.
//!
//! Every entry point returns a [`ClmcStatus`]; results travel through out
//! parameters. On any non-zero status the failing call stores a
//! human-readable message retrievable with [`clmc_last_error_message`].
//! Level laws cross the boundary as opaque handles; the experiment
//! drivers exchange JSON, matching the configs and artifacts of the
//! `clmc` command-line tool. No call unwinds across the boundary.
//!
//! The companion header `include/clmc.h` is regenerated on every build.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};

use clmc::{
    interval_weight, run_calibrate, run_estimate, run_sweep, ExperimentConfig, LevelLaw,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClmcStatus {
    /// The call succeeded and its out parameters are valid.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument value violates the callee's documented domain.
    InvalidArgument = 2,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 3,
    /// A JSON argument failed to parse or validate.
    InvalidJson = 4,
    /// The experiment ran and reported a failure.
    RunFailed = 5,
    /// An internal invariant broke; the library state is still sound.
    Internal = 6,
}

/// Stopping-level distribution handle. Create with one of the
/// `clmc_law_*` constructors, release with [`clmc_law_free`].
pub struct ClmcLevelLaw {
    inner: LevelLaw,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl ToString) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn fail(status: ClmcStatus, message: impl ToString) -> ClmcStatus {
    set_last_error(message);
    status
}

/// Runs the body under a panic guard so no unwind crosses the ABI.
fn guarded(body: impl FnOnce() -> ClmcStatus + UnwindSafe) -> ClmcStatus {
    match catch_unwind(body) {
        Ok(status) => status,
        Err(_) => fail(ClmcStatus::Internal, "internal panic"),
    }
}

/// ABI revision of this header and library pair. Incremented on any
/// breaking change to the exported surface.
#[no_mangle]
pub extern "C" fn clmc_abi_version() -> u32 {
    1
}

/// Message describing the most recent failure on the calling thread, as a
/// NUL-terminated UTF-8 string. Empty if nothing failed yet. The pointer
/// stays valid until the next failing clmc call on the same thread; the
/// caller must not free it.
#[no_mangle]
pub extern "C" fn clmc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Releases a string returned through a `char **` out parameter.
///
/// # Safety
///
/// `text` must be null or a pointer obtained from this library's out
/// parameters, not yet freed. Passing anything else is undefined behavior.
#[no_mangle]
pub unsafe extern "C" fn clmc_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}

/// Expected-contribution weight of the interval `(l_prev, l_next]` for a
/// sample whose exponential-law stopping level was clipped to `l_tilde`.
/// Writes the weight to `out`.
///
/// # Safety
///
/// `out` must point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn clmc_interval_weight(
    rate: f64,
    l_prev: f64,
    l_next: f64,
    l_tilde: f64,
    out: *mut f64,
) -> ClmcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(ClmcStatus::NullPointer, "out pointer is null");
        }
        match interval_weight(rate, l_prev, l_next, l_tilde) {
            Ok(weight) => {
                unsafe { out.write(weight) };
                ClmcStatus::Ok
            }
            Err(err) => fail(ClmcStatus::InvalidArgument, err),
        }
    })
}

fn new_law(law: LevelLaw, out: *mut *mut ClmcLevelLaw) -> ClmcStatus {
    if out.is_null() {
        return fail(ClmcStatus::NullPointer, "out pointer is null");
    }
    if let Err(err) = law.validate() {
        return fail(ClmcStatus::InvalidArgument, err);
    }
    let handle = Box::new(ClmcLevelLaw { inner: law });
    unsafe { out.write(Box::into_raw(handle)) };
    ClmcStatus::Ok
}

/// Creates the continuous law with survival `exp(-rate * l)`, `rate > 0`.
///
/// # Safety
///
/// `out` must point to writable memory for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn clmc_law_exponential(
    rate: f64,
    out: *mut *mut ClmcLevelLaw,
) -> ClmcStatus {
    guarded(|| new_law(LevelLaw::Exponential { rate }, out))
}

/// Creates the geometric law on {0, 1, 2, ...} with success probability
/// `rate` in (0, 1).
///
/// # Safety
///
/// `out` must point to writable memory for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn clmc_law_geometric(
    rate: f64,
    out: *mut *mut ClmcLevelLaw,
) -> ClmcStatus {
    guarded(|| new_law(LevelLaw::Geometric { rate }, out))
}

/// Creates a law from its JSON form, e.g.
/// `{"law":"exponential","rate":1.5}` or
/// `{"law":"piecewise","survival":[[1,0.65],[2,0.4225]]}`.
///
/// # Safety
///
/// `json` must be a NUL-terminated string; `out` must point to writable
/// memory for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn clmc_law_from_json(
    json: *const c_char,
    out: *mut *mut ClmcLevelLaw,
) -> ClmcStatus {
    guarded(|| {
        if json.is_null() {
            return fail(ClmcStatus::NullPointer, "json pointer is null");
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(text) => text,
            Err(err) => return fail(ClmcStatus::InvalidUtf8, err),
        };
        match serde_json::from_str::<LevelLaw>(text) {
            Ok(law) => new_law(law, out),
            Err(err) => fail(ClmcStatus::InvalidJson, err),
        }
    })
}

/// Writes `P(L >= level)` under `law` to `out`.
///
/// # Safety
///
/// `law` must be a live handle from a `clmc_law_*` constructor; `out`
/// must point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn clmc_law_survival(
    law: *const ClmcLevelLaw,
    level: f64,
    out: *mut f64,
) -> ClmcStatus {
    guarded(|| {
        if law.is_null() || out.is_null() {
            return fail(ClmcStatus::NullPointer, "law or out pointer is null");
        }
        let survival = unsafe { &(*law).inner }.survival(level);
        unsafe { out.write(survival) };
        ClmcStatus::Ok
    })
}

/// Releases a law handle. Null is a no-op.
///
/// # Safety
///
/// `law` must be null or a live handle from a `clmc_law_*` constructor;
/// it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clmc_law_free(law: *mut ClmcLevelLaw) {
    if !law.is_null() {
        drop(unsafe { Box::from_raw(law) });
    }
}

fn parse_config(json: *const c_char) -> Result<ExperimentConfig, ClmcStatus> {
    if json.is_null() {
        return Err(fail(ClmcStatus::NullPointer, "config pointer is null"));
    }
    let text = unsafe { CStr::from_ptr(json) }
        .to_str()
        .map_err(|err| fail(ClmcStatus::InvalidUtf8, err))?;
    ExperimentConfig::from_json(text).map_err(|err| fail(ClmcStatus::InvalidJson, err))
}

fn write_json_out(value: impl serde::Serialize, out: *mut *mut c_char) -> ClmcStatus {
    let text = match serde_json::to_string_pretty(&value) {
        Ok(text) => text,
        Err(err) => return fail(ClmcStatus::Internal, err),
    };
    match CString::new(text) {
        Ok(owned) => {
            unsafe { out.write(owned.into_raw()) };
            ClmcStatus::Ok
        }
        Err(err) => fail(ClmcStatus::Internal, err),
    }
}

/// Runs pilot calibration for the JSON experiment config and hands back
/// the fitted-rates artifact as JSON. Files are also written to the
/// config's output directory, exactly as the command-line tool does.
/// Free the result with [`clmc_string_free`].
///
/// # Safety
///
/// `config_json` must be a NUL-terminated string; `out_json` must point
/// to writable memory for one `char *`.
#[no_mangle]
pub unsafe extern "C" fn clmc_run_calibrate_json(
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ClmcStatus {
    guarded(|| {
        if out_json.is_null() {
            return fail(ClmcStatus::NullPointer, "out pointer is null");
        }
        let config = match parse_config(config_json) {
            Ok(config) => config,
            Err(status) => return status,
        };
        match run_calibrate(&config) {
            Ok(outcome) => write_json_out(outcome.rates, out_json),
            Err(err) => fail(ClmcStatus::RunFailed, err),
        }
    })
}

/// Runs a full estimate for the JSON experiment config and hands back the
/// estimate artifact as JSON. Files are also written to the config's
/// output directory. Free the result with [`clmc_string_free`].
///
/// # Safety
///
/// `config_json` must be a NUL-terminated string; `out_json` must point
/// to writable memory for one `char *`.
#[no_mangle]
pub unsafe extern "C" fn clmc_run_estimate_json(
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ClmcStatus {
    guarded(|| {
        if out_json.is_null() {
            return fail(ClmcStatus::NullPointer, "out pointer is null");
        }
        let config = match parse_config(config_json) {
            Ok(config) => config,
            Err(status) => return status,
        };
        match run_estimate(&config) {
            Ok(outcome) => write_json_out(outcome.artifact, out_json),
            Err(err) => fail(ClmcStatus::RunFailed, err),
        }
    })
}

/// Runs a tolerance sweep over `epsilons` (at least 3 values) for the
/// JSON experiment config and hands back the sweep artifact as JSON.
/// Files are also written to the config's output directory. Free the
/// result with [`clmc_string_free`].
///
/// # Safety
///
/// `config_json` must be a NUL-terminated string; `epsilons` must point
/// to `count` readable doubles; `out_json` must point to writable memory
/// for one `char *`.
#[no_mangle]
pub unsafe extern "C" fn clmc_run_sweep_json(
    config_json: *const c_char,
    epsilons: *const f64,
    count: usize,
    out_json: *mut *mut c_char,
) -> ClmcStatus {
    guarded(|| {
        if out_json.is_null() || epsilons.is_null() {
            return fail(ClmcStatus::NullPointer, "epsilons or out pointer is null");
        }
        let config = match parse_config(config_json) {
            Ok(config) => config,
            Err(status) => return status,
        };
        let epsilons = unsafe { std::slice::from_raw_parts(epsilons, count) };
        match run_sweep(&config, epsilons) {
            Ok(outcome) => write_json_out(outcome.artifact, out_json),
            Err(err) => fail(ClmcStatus::RunFailed, err),
        }
    })
}
