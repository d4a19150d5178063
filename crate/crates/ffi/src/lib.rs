//! C ABI over the flight-log parser, the sensor detectors, the script
//! validators and the text metrics.
//!
//! Every fallible function returns an [`AstStatus`]. On failure a message is
//! kept per thread and can be read with [`ast_last_error`]. Strings and byte
//! buffers handed out by the library must be released with
//! [`ast_string_free`] and [`ast_bytes_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ast_core::analytics::{detect_sensor_failures, DetectorConfig};
use ast_core::evaluation::jaccard;
use ast_core::flightlog::{parse_any, write_ulog, FlightLog, FlightLogError};
use ast_core::scriptgen::{validate_mission_value, validate_sim_settings_value, RuleSet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AstStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    BadMagic = 4,
    CorruptLog = 5,
    InvalidLog = 6,
    InvalidRuleSet = 7,
    InvalidConfig = 8,
    Panic = 99,
}

/// A parsed flight log.
pub struct AstFlightLog(FlightLog);

/// A compiled validation rule set.
pub struct AstRuleSet(RuleSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type FfiResult<T> = Result<T, (AstStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> AstStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AstStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AstStatus::Panic
        }
    }
}

fn null(name: &str) -> (AstStatus, String) {
    (AstStatus::NullArgument, format!("{name} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (AstStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

fn json_out(value: Result<serde_json::Value, serde_json::Error>) -> FfiResult<*mut c_char> {
    let value = value.map_err(|e| (AstStatus::InvalidJson, e.to_string()))?;
    Ok(to_c_string(value.to_string()))
}

fn log_status(e: &FlightLogError) -> AstStatus {
    match e {
        FlightLogError::BadMagic => AstStatus::BadMagic,
        FlightLogError::CorruptHeader | FlightLogError::CorruptLog(_) => AstStatus::CorruptLog,
        _ => AstStatus::InvalidLog,
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ast_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ast_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ast_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `data`/`len` must be null/0 or a buffer returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ast_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Vec::from_raw_parts(data, len, len));
    }
}

/// Parses a ULog or CSV flight log.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ast_flight_log_parse(data: *const u8, len: usize, out: *mut *mut AstFlightLog) -> AstStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let log = parse_any(bytes).map_err(|e| (log_status(&e), e.to_string()))?;
        put(out, Box::into_raw(Box::new(AstFlightLog(log))), "out")
    })
}

/// # Safety
/// `log` must be null or a handle from [`ast_flight_log_parse`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ast_flight_log_free(log: *mut AstFlightLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// Number of data series, or 0 for a null handle.
///
/// # Safety
/// `log` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ast_flight_log_series_count(log: *const AstFlightLog) -> usize {
    log.as_ref().map_or(0, |l| l.0.series.len())
}

/// JSON summary: format, start time, duration, series names with lengths,
/// and the logged messages.
///
/// # Safety
/// `log` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ast_flight_log_summary(log: *const AstFlightLog, out_json: *mut *mut c_char) -> AstStatus {
    guard(|| {
        let log = &log.as_ref().ok_or_else(|| null("log"))?.0;
        let series: Vec<_> = log
            .series
            .iter()
            .map(|(name, s)| serde_json::json!({"name": name, "samples": s.len()}))
            .collect();
        let summary = serde_json::json!({
            "format": log.source_format,
            "start_time_us": log.start_time,
            "duration_us": log.duration_us(),
            "series": series,
            "messages": log.messages,
        });
        put(out_json, json_out(Ok(summary))?, "out_json")
    })
}

/// Serializes the log as ULog bytes; free with [`ast_bytes_free`].
///
/// # Safety
/// `log` must be a live handle; `out_data` and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ast_flight_log_write_ulog(
    log: *const AstFlightLog,
    out_data: *mut *mut u8,
    out_len: *mut usize,
) -> AstStatus {
    guard(|| {
        let log = &log.as_ref().ok_or_else(|| null("log"))?.0;
        if out_data.is_null() || out_len.is_null() {
            return Err(null("out_data/out_len"));
        }
        let bytes = write_ulog(log).map_err(|e| (log_status(&e), e.to_string()))?;
        let mut boxed = bytes.into_boxed_slice();
        let len = boxed.len();
        let data = boxed.as_mut_ptr();
        std::mem::forget(boxed);
        out_data.write(data);
        out_len.write(len);
        Ok(())
    })
}

/// Runs the seven sensor detectors; the result is a JSON array of
/// verdicts. `config_json` may be null for the default thresholds.
///
/// # Safety
/// `log` must be a live handle; `config_json` null or a C string;
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ast_detect_sensor_failures(
    log: *const AstFlightLog,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> AstStatus {
    guard(|| {
        let log = &log.as_ref().ok_or_else(|| null("log"))?.0;
        let cfg = if config_json.is_null() {
            DetectorConfig::default()
        } else {
            let text = c_str(config_json, "config_json")?;
            let cfg: DetectorConfig =
                serde_json::from_str(text).map_err(|e| (AstStatus::InvalidJson, e.to_string()))?;
            cfg.validate().map_err(|e| (AstStatus::InvalidConfig, e.to_string()))?;
            cfg
        };
        put(out_json, json_out(serde_json::to_value(detect_sensor_failures(log, &cfg)))?, "out_json")
    })
}

/// Bundled mission-plan rules.
#[no_mangle]
pub extern "C" fn ast_ruleset_default_mission() -> *mut AstRuleSet {
    Box::into_raw(Box::new(AstRuleSet(RuleSet::default_mission())))
}

/// Bundled simulator-settings rules.
#[no_mangle]
pub extern "C" fn ast_ruleset_default_env() -> *mut AstRuleSet {
    Box::into_raw(Box::new(AstRuleSet(RuleSet::default_env())))
}

/// Compiles a rule set from its JSON file form.
///
/// # Safety
/// `json` must be a C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ast_ruleset_from_json(json: *const c_char, out: *mut *mut AstRuleSet) -> AstStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let rs = RuleSet::from_json(text).map_err(|e| (AstStatus::InvalidRuleSet, e.to_string()))?;
        put(out, Box::into_raw(Box::new(AstRuleSet(rs))), "out")
    })
}

/// # Safety
/// `rules` must be null or a rule-set handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn ast_ruleset_free(rules: *mut AstRuleSet) {
    if !rules.is_null() {
        drop(Box::from_raw(rules));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AstDocumentKind {
    MissionPlan = 0,
    SimSettings = 1,
}

/// Checks a mission plan or simulator settings document. `out_ok` receives
/// whether it passed and `out_report_json` the full report.
///
/// # Safety
/// `rules` must be a live handle, `document_json` a C string, and both out
/// pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ast_validate_document(
    rules: *const AstRuleSet,
    kind: AstDocumentKind,
    document_json: *const c_char,
    out_ok: *mut bool,
    out_report_json: *mut *mut c_char,
) -> AstStatus {
    guard(|| {
        let rules = &rules.as_ref().ok_or_else(|| null("rules"))?.0;
        let text = c_str(document_json, "document_json")?;
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| (AstStatus::InvalidJson, e.to_string()))?;
        let report = match kind {
            AstDocumentKind::MissionPlan => validate_mission_value(&doc, rules),
            AstDocumentKind::SimSettings => validate_sim_settings_value(&doc, rules),
        };
        if out_ok.is_null() || out_report_json.is_null() {
            return Err(null("out_ok/out_report_json"));
        }
        out_ok.write(report.ok);
        out_report_json.write(json_out(serde_json::to_value(&report))?);
        Ok(())
    })
}

/// Token-set Jaccard similarity of two texts, in [0, 1].
///
/// # Safety
/// `a` and `b` must be C strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ast_jaccard(a: *const c_char, b: *const c_char, out: *mut f64) -> AstStatus {
    guard(|| {
        let v = jaccard(c_str(a, "a")?, c_str(b, "b")?);
        put(out, v, "out")
    })
}
