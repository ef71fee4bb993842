//! C ABI for the simulator: opaque scenario handles, integer status codes
//! and caller-freed strings, so any language with a C FFI can parse,
//! validate, run and analyze scenarios.
//!
//! Conventions:
//! - Every function returns an [`IodsimStatus`]; out-parameters are written
//!   only on `IODSIM_STATUS_OK` unless documented otherwise.
//! - Strings handed out by this library must be released with
//!   [`iodsim_string_free`]; scenario handles with [`iodsim_scenario_free`].
//! - All input strings are NUL-terminated UTF-8.

use iodsim::analysis::{analyze, AnalyzeOptions, Kpi};
use iodsim::config::{parse_scenario, ParseError, ScenarioConfig};
use iodsim::scenario::{execute_to_dir, ExecError};
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
#[cfg(test)]
use std::ptr;

/// Status codes mirroring the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IodsimStatus {
    Ok = 0,
    ValidationError = 1,
    SyntaxError = 2,
    RuntimeError = 3,
    IoError = 4,
    InvalidArgument = 5,
}

/// Summary of a completed run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IodsimRunStats {
    pub events_processed: u64,
    pub wall_seconds: f64,
    pub virtual_seconds: f64,
}

/// Opaque parsed-and-validated scenario.
pub struct IodsimScenario {
    config: ScenarioConfig,
}

fn string_out(out: *mut *mut c_char, text: String) {
    if out.is_null() {
        return;
    }
    let c = CString::new(text.replace('\0', " ")).expect("no interior NUL");
    unsafe { *out = c.into_raw() };
}

unsafe fn input_str<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

fn parse_into_handle(
    text: &str,
    out: *mut *mut IodsimScenario,
    diagnostics: *mut *mut c_char,
) -> IodsimStatus {
    match parse_scenario(text) {
        Ok((config, warnings)) => {
            if !warnings.is_empty() {
                let joined = warnings
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("\n");
                string_out(diagnostics, joined);
            }
            unsafe { *out = Box::into_raw(Box::new(IodsimScenario { config })) };
            IodsimStatus::Ok
        }
        Err(ParseError::Syntax {
            line,
            column,
            message,
        }) => {
            string_out(diagnostics, format!("{line}:{column}: {message}"));
            IodsimStatus::SyntaxError
        }
        Err(ParseError::Invalid(report)) => {
            string_out(diagnostics, report.to_string());
            IodsimStatus::ValidationError
        }
    }
}

/// Parses and validates scenario JSON into an opaque handle.
///
/// On success `*out` owns the scenario. Warnings (and on failure, errors)
/// are reported through `diagnostics` when it is non-NULL.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer; `diagnostics` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn iodsim_scenario_parse(
    json: *const c_char,
    out: *mut *mut IodsimScenario,
    diagnostics: *mut *mut c_char,
) -> IodsimStatus {
    if out.is_null() {
        return IodsimStatus::InvalidArgument;
    }
    let Some(text) = input_str(json) else {
        return IodsimStatus::InvalidArgument;
    };
    parse_into_handle(text, out, diagnostics)
}

/// Reads a scenario file and parses it like [`iodsim_scenario_parse`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be valid;
/// `diagnostics` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn iodsim_scenario_load_file(
    path: *const c_char,
    out: *mut *mut IodsimScenario,
    diagnostics: *mut *mut c_char,
) -> IodsimStatus {
    if out.is_null() {
        return IodsimStatus::InvalidArgument;
    }
    let Some(path) = input_str(path) else {
        return IodsimStatus::InvalidArgument;
    };
    match std::fs::read_to_string(path) {
        Ok(text) => parse_into_handle(&text, out, diagnostics),
        Err(e) => {
            string_out(diagnostics, format!("cannot read {path}: {e}"));
            IodsimStatus::IoError
        }
    }
}

/// Overrides the seed of a parsed scenario.
///
/// # Safety
/// `scenario` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn iodsim_scenario_set_seed(
    scenario: *mut IodsimScenario,
    seed: u64,
) -> IodsimStatus {
    let Some(s) = scenario.as_mut() else {
        return IodsimStatus::InvalidArgument;
    };
    s.config.seed = seed;
    IodsimStatus::Ok
}

/// Overrides the virtual duration of a parsed scenario.
///
/// # Safety
/// `scenario` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn iodsim_scenario_set_duration(
    scenario: *mut IodsimScenario,
    seconds: f64,
) -> IodsimStatus {
    let Some(s) = scenario.as_mut() else {
        return IodsimStatus::InvalidArgument;
    };
    // NaN fails the first comparison on purpose
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(seconds > 0.0) || !seconds.is_finite() {
        return IodsimStatus::InvalidArgument;
    }
    s.config.duration = seconds;
    IodsimStatus::Ok
}

/// Runs the scenario, writing the XML report, traces, captures and the
/// progress log under `results_dir` (created if absent).
///
/// # Safety
/// `scenario` must be a live handle; `results_dir` a valid NUL-terminated
/// string; `stats_out` and `error_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn iodsim_scenario_run(
    scenario: *mut IodsimScenario,
    results_dir: *const c_char,
    stats_out: *mut IodsimRunStats,
    error_out: *mut *mut c_char,
) -> IodsimStatus {
    let Some(s) = scenario.as_mut() else {
        return IodsimStatus::InvalidArgument;
    };
    let Some(dir) = input_str(results_dir) else {
        return IodsimStatus::InvalidArgument;
    };
    match execute_to_dir(&s.config, Path::new(dir), true) {
        Ok(summary) => {
            if !stats_out.is_null() {
                *stats_out = IodsimRunStats {
                    events_processed: summary.stats.events_processed,
                    wall_seconds: summary.stats.wall_seconds,
                    virtual_seconds: summary.stats.virtual_seconds,
                };
            }
            IodsimStatus::Ok
        }
        Err(ExecError::Build(e)) => {
            string_out(error_out, e.to_string());
            IodsimStatus::ValidationError
        }
        Err(ExecError::Io(e)) => {
            string_out(error_out, e.to_string());
            IodsimStatus::IoError
        }
        Err(e) => {
            string_out(error_out, e.to_string());
            IodsimStatus::RuntimeError
        }
    }
}

/// Computes a KPI CSV (`power`, `rssi`, `throughput`, `storage`, `latency`,
/// `plr` or `perf`) from a results directory. `window_s <= 0` selects the
/// default 1 s window.
///
/// # Safety
/// `results_dir` and `kpi` must be valid NUL-terminated strings; `csv_out`
/// must be valid; `error_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn iodsim_analyze(
    results_dir: *const c_char,
    kpi: *const c_char,
    window_s: f64,
    csv_out: *mut *mut c_char,
    error_out: *mut *mut c_char,
) -> IodsimStatus {
    if csv_out.is_null() {
        return IodsimStatus::InvalidArgument;
    }
    let (Some(dir), Some(kpi)) = (input_str(results_dir), input_str(kpi)) else {
        return IodsimStatus::InvalidArgument;
    };
    let kpi: Kpi = match kpi.parse() {
        Ok(k) => k,
        Err(e) => {
            string_out(error_out, e);
            return IodsimStatus::InvalidArgument;
        }
    };
    let opts = AnalyzeOptions {
        window_s: if window_s > 0.0 { window_s } else { 1.0 },
    };
    match analyze(Path::new(dir), kpi, &opts) {
        Ok(csv) => {
            string_out(csv_out, csv);
            IodsimStatus::Ok
        }
        Err(e) => {
            string_out(error_out, e.to_string());
            IodsimStatus::ValidationError
        }
    }
}

/// Releases a scenario handle. NULL is a no-op.
///
/// # Safety
/// `scenario` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iodsim_scenario_free(scenario: *mut IodsimScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Releases a string handed out by this library. NULL is a no-op.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iodsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn iodsim_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
