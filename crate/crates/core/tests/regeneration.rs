mod common;

use std::time::Duration;

use ast_core::gateway::{BackendConfig, Gateway, ScriptEntry, ScriptedResponses};
use ast_core::prompting::SCENARIO_SAMPLE;
use ast_core::scenario::{parse_blueprint, ScenarioBlueprint};
use ast_core::scriptgen::{RuleSet, Script, ScriptAgent, ScriptError, ScriptKind};
use common::cases;

fn blueprint() -> ScenarioBlueprint {
    parse_blueprint(SCENARIO_SAMPLE).unwrap()
}

fn run(kind: ScriptKind, gw: &Gateway, rules: &RuleSet, max: u32) -> Result<ast_core::scriptgen::Validated, ScriptError> {
    ScriptAgent::new(kind, gw).generate_validated(&blueprint(), rules, max)
}

#[test]
fn mission_fixed_on_second_attempt() {
    let mut bad = cases::base_plan();
    bad["mission"]["items"][2]["Altitude"] = 121.93.into();
    let gw = Gateway::scripted(ScriptedResponses::new(
        vec![ScriptEntry::new("## VALIDATION ERRORS", cases::base_plan().to_string())],
        bad.to_string(),
    ));
    let v = run(ScriptKind::Mission, &gw, &RuleSet::default_mission(), 3).unwrap();
    assert!(v.report.ok);
    assert_eq!(v.attempts_used, 2);
    assert!(matches!(v.artifact, Some(Script::Mission(_))));
    assert!(!v.prompts[0].contains("VALIDATION ERRORS"));
    assert!(v.prompts[1].contains("$.mission.items[2].Altitude"), "{}", v.prompts[1]);
}

#[test]
fn settings_fixed_on_second_attempt() {
    let mut bad = cases::base_settings();
    bad["SimulatorSettings"]["Weather"]["WindSpeed"] = 22.36.into();
    let gw = Gateway::scripted(ScriptedResponses::new(
        vec![ScriptEntry::new("## VALIDATION ERRORS", cases::base_settings().to_string())],
        bad.to_string(),
    ));
    let v = run(ScriptKind::Env, &gw, &RuleSet::default_env(), 3).unwrap();
    assert_eq!((v.report.ok, v.attempts_used), (true, 2));
    assert!(v.prompts[1].contains("wind_range"));
}

#[test]
fn first_attempt_success_uses_one_call() {
    let gw = Gateway::scripted(ScriptedResponses::new(vec![], cases::base_plan().to_string()));
    let v = run(ScriptKind::Mission, &gw, &RuleSet::default_mission(), 3).unwrap();
    assert_eq!((v.report.ok, v.attempts_used, v.prompts.len()), (true, 1, 1));
}

#[test]
fn always_failing_stops_at_max_attempts() {
    let gw = Gateway::scripted(ScriptedResponses::new(vec![], "I cannot produce JSON today."));
    for max in 1..=4 {
        let v = run(ScriptKind::Mission, &gw, &RuleSet::default_mission(), max).unwrap();
        assert!(!v.report.ok);
        assert_eq!(v.attempts_used, max);
        assert_eq!(v.report.rule_ids(), ["format_validity"]);
        assert!(v.artifact.is_none() && v.document.is_none());
    }
}

#[test]
fn zero_attempts_is_a_precondition_error() {
    let gw = Gateway::scripted(ScriptedResponses::new(vec![], "{}"));
    assert!(matches!(run(ScriptKind::Mission, &gw, &RuleSet::default_mission(), 0), Err(ScriptError::Precondition(_))));
}

#[test]
fn unreachable_backend_is_reported() {
    let mut cfg = BackendConfig::remote("http://127.0.0.1:9", "none");
    cfg.max_retries = 1;
    cfg.backoff_base_ms = 1;
    cfg.timeout = Duration::from_secs(2);
    let gw = Gateway::remote(cfg).unwrap();
    let err = run(ScriptKind::Mission, &gw, &RuleSet::default_mission(), 3).unwrap_err();
    assert!(matches!(err, ScriptError::BackendUnavailable(_)), "{err}");
}
