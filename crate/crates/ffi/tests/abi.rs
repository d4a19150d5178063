use std::ffi::{CStr, CString};
use std::ptr;

use ast_core::analytics::Sensor;
use ast_core::fixtures;
use ast_core::flightlog::write_ulog;
use ast_ffi::*;

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { ast_string_free(p) };
    s
}

fn last_error() -> String {
    let p = ast_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn parse_detect_and_round_trip() {
    let bytes = write_ulog(&fixtures::synthetic_log(Some(Sensor::Barometer))).unwrap();
    let mut log = ptr::null_mut();
    assert_eq!(unsafe { ast_flight_log_parse(bytes.as_ptr(), bytes.len(), &mut log) }, AstStatus::Ok);
    assert!(ast_last_error().is_null());
    assert!(unsafe { ast_flight_log_series_count(log) } > 0);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ast_detect_sensor_failures(log, ptr::null(), &mut json) }, AstStatus::Ok);
    let verdicts: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    let failed: Vec<&str> = verdicts
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| v["failed"] == true)
        .map(|v| v["sensor"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["barometer"]);

    let cfg = CString::new(r#"{"baro_step_m": 1000.0}"#).unwrap();
    assert_eq!(unsafe { ast_detect_sensor_failures(log, cfg.as_ptr(), &mut json) }, AstStatus::Ok);
    assert!(!take_string(json).contains("\"failed\":true"));
    let bad = CString::new(r#"{"baro_step_m": -1}"#).unwrap();
    assert_eq!(unsafe { ast_detect_sensor_failures(log, bad.as_ptr(), &mut json) }, AstStatus::InvalidConfig);

    let (mut data, mut len) = (ptr::null_mut(), 0usize);
    assert_eq!(unsafe { ast_flight_log_write_ulog(log, &mut data, &mut len) }, AstStatus::Ok);
    assert_eq!(unsafe { std::slice::from_raw_parts(data, len) }, bytes.as_slice());
    unsafe { ast_bytes_free(data, len) };

    assert_eq!(unsafe { ast_flight_log_summary(log, &mut json) }, AstStatus::Ok);
    let summary: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert_eq!(summary["format"], "ulog");
    unsafe { ast_flight_log_free(log) };
}

#[test]
fn errors_are_codes_with_messages() {
    let mut log = ptr::null_mut();
    assert_eq!(unsafe { ast_flight_log_parse(b"junk".as_ptr(), 4, &mut log) }, AstStatus::BadMagic);
    assert!(log.is_null());
    assert!(last_error().contains("magic"));
    assert_eq!(unsafe { ast_flight_log_parse(ptr::null(), 0, &mut log) }, AstStatus::NullArgument);
    assert_eq!(unsafe { ast_flight_log_summary(ptr::null(), &mut ptr::null_mut()) }, AstStatus::NullArgument);

    let mut rs = ptr::null_mut();
    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { ast_ruleset_from_json(bad.as_ptr(), &mut rs) }, AstStatus::InvalidRuleSet);
    assert!(!last_error().is_empty());
    unsafe {
        ast_ruleset_free(ptr::null_mut());
        ast_flight_log_free(ptr::null_mut());
        ast_string_free(ptr::null_mut());
    }
}

#[test]
fn validates_documents() {
    let rules = ast_ruleset_default_mission();
    let plan = serde_json::json!({
        "mission": {
            "cruiseSpeed": 10, "hoverSpeed": 5,
            "plannedHomePosition": [40.7128, -74.006, 10],
            "items": [
                {"command": 22, "Altitude": 130, "params": [0, 0, 0, 0, 40.7128, -74.006, 130]},
                {"command": 21, "Altitude": 0, "params": [0, 0, 0, 0, 40.7128, -74.006, 0]}
            ]
        }
    });
    let doc = CString::new(plan.to_string()).unwrap();
    let (mut ok, mut report) = (true, ptr::null_mut());
    let st = unsafe { ast_validate_document(rules, AstDocumentKind::MissionPlan, doc.as_ptr(), &mut ok, &mut report) };
    assert_eq!(st, AstStatus::Ok);
    let report = take_string(report);
    assert!(!ok, "{report}");
    assert!(report.contains("altitude"), "{report}");
    unsafe { ast_ruleset_free(rules) };

    let env = ast_ruleset_default_env();
    let doc = CString::new("[1,").unwrap();
    let st = unsafe { ast_validate_document(env, AstDocumentKind::SimSettings, doc.as_ptr(), &mut ok, &mut ptr::null_mut()) };
    assert_eq!(st, AstStatus::InvalidJson);
    unsafe { ast_ruleset_free(env) };
}

#[test]
fn jaccard_and_version() {
    let (a, b) = (CString::new("alpha beta").unwrap(), CString::new("beta gamma").unwrap());
    let mut v = 0.0;
    assert_eq!(unsafe { ast_jaccard(a.as_ptr(), b.as_ptr(), &mut v) }, AstStatus::Ok);
    assert_eq!(v, 1.0 / 3.0);
    let version = unsafe { CStr::from_ptr(ast_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/ast.h")).unwrap();
    for name in ["ast_flight_log_parse", "ast_ruleset_from_json", "ast_last_error", "AST_STATUS_BAD_MAGIC"] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let src = std::env::temp_dir().join(format!("ast_header_check_{}.c", std::process::id()));
    std::fs::write(&src, "#include \"ast.h\"\nint main(void) { AstStatus s = AST_STATUS_OK; return (int)s; }\n").unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("skipping C compile check, {cc} unavailable: {e}"),
    }
    let _ = std::fs::remove_file(src);
}
