//! Mission and simulator-settings generation from an approved blueprint,
//! rule validation and the bounded regeneration loop.

mod plan;
mod rules;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use plan::{
    normalize_mission_document, HomeLocation, MissionItem, MissionPlan, Pose, SimSettings, SimulatorSection, Vehicle,
    Weather, CMD_TAKEOFF,
};
pub use rules::{
    haversine_m, resolve, FieldRequirement, FieldType, GeoTarget, HomeRef, Predicate, RangeArgs, Rule, RuleSet,
    RuleSetFile, Selector, Severity, BOUND_EPSILON,
};

use crate::gateway::{ChatMessage, Gateway, LlmError};
use crate::prompting::{self, append_section, assemble, AgentKind, PromptError, PromptSpec, RuleText, VALIDATION_ERRORS_HEADER};
use crate::scenario::{check_completeness, extract_json, ScenarioBlueprint};
use crate::validation::{ValidationReport, Violation};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const FORMAT_RULE: &str = "format_validity";

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("script could not be parsed: {0}")]
    UnparseableScript(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid ruleset: {0}")]
    InvalidRuleSet(String),
    #[error(transparent)]
    Llm(LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl From<LlmError> for ScriptError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::BackendUnavailable { .. } | LlmError::Timeout { .. } => ScriptError::BackendUnavailable(e.to_string()),
            other => ScriptError::Llm(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptKind {
    Mission,
    Env,
}

impl ScriptKind {
    pub fn agent(self) -> AgentKind {
        match self {
            ScriptKind::Mission => AgentKind::Mission,
            ScriptKind::Env => AgentKind::Env,
        }
    }

    pub fn default_sample(self) -> &'static str {
        match self {
            ScriptKind::Mission => prompting::MISSION_SAMPLE,
            ScriptKind::Env => prompting::ENV_SAMPLE,
        }
    }

    pub fn default_rules(self) -> RuleSet {
        match self {
            ScriptKind::Mission => RuleSet::default_mission(),
            ScriptKind::Env => RuleSet::default_env(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Script {
    Mission(MissionPlan),
    Env(SimSettings),
}

impl Script {
    pub fn to_document(&self) -> Value {
        match self {
            Script::Mission(p) => p.to_document(),
            Script::Env(s) => s.to_document(),
        }
    }
}

pub fn validate_mission_value(doc: &Value, rules: &RuleSet) -> ValidationReport {
    rules.validate(doc)
}

pub fn validate_mission(plan: &MissionPlan, rules: &RuleSet) -> ValidationReport {
    rules.validate(&plan.to_document())
}

pub fn validate_sim_settings_value(doc: &Value, rules: &RuleSet) -> ValidationReport {
    rules.validate(doc)
}

pub fn validate_sim_settings(settings: &SimSettings, rules: &RuleSet) -> ValidationReport {
    rules.validate(&settings.to_document())
}

/// The prompt for one script agent. Rules from the ruleset that the stock
/// prompt does not already state are listed as well.
pub fn script_prompt(
    kind: ScriptKind,
    blueprint: &ScenarioBlueprint,
    spec: &PromptSpec,
    schema_sample: &str,
    rules: &RuleSet,
) -> Result<String, ScriptError> {
    let goals = match kind {
        ScriptKind::Mission => {
            if blueprint.mission_description.trim().is_empty() {
                return Err(ScriptError::Precondition("blueprint has no mission description".into()));
            }
            let report = check_completeness(blueprint);
            if !report.ok {
                return Err(ScriptError::Precondition(format!("blueprint is incomplete:\n{}", report.describe())));
            }
            let mut g = format!("Mission: {}", blueprint.mission_description.trim());
            if !blueprint.environment.location.is_empty() {
                g.push_str(&format!("\nLocation: {}", blueprint.environment.location));
            }
            g
        }
        ScriptKind::Env => {
            if blueprint.environment.is_empty() {
                return Err(ScriptError::Precondition("blueprint has an empty environment".into()));
            }
            blueprint.environment.summary()
        }
    };
    let mut spec = spec.clone().with_user_goals(goals);
    spec.sample_output = Some(schema_sample.to_string());
    for r in rules.rules() {
        if !spec.rules.iter().any(|x| x.id == r.id) && !r.description.is_empty() {
            spec.rules.push(RuleText::new(&r.id, &r.description, true));
        }
    }
    Ok(assemble(&spec)?)
}

/// Parses a reply into its canonical JSON document and the typed script.
pub fn parse_script(kind: ScriptKind, reply: &str) -> Result<(Value, Script), String> {
    let v = extract_json(reply).ok_or("reply contains no JSON object")?;
    match kind {
        ScriptKind::Mission => {
            let doc = normalize_mission_document(v);
            let plan = MissionPlan::from_document(&doc)?;
            Ok((doc, Script::Mission(plan)))
        }
        ScriptKind::Env => {
            let s = SimSettings::from_document(&v)?;
            Ok((v, Script::Env(s)))
        }
    }
}

/// A script agent: prompt skeleton plus backend.
pub struct ScriptAgent<'a> {
    pub kind: ScriptKind,
    pub gateway: &'a Gateway,
    pub spec: PromptSpec,
    pub schema_sample: String,
}

/// Result of [`ScriptAgent::generate_validated`].
#[derive(Debug, Clone)]
pub struct Validated {
    pub artifact: Option<Script>,
    /// The raw document as returned (after normalization), even when it failed.
    pub document: Option<Value>,
    pub report: ValidationReport,
    pub attempts_used: u32,
    pub prompts: Vec<String>,
}

impl<'a> ScriptAgent<'a> {
    pub fn new(kind: ScriptKind, gateway: &'a Gateway) -> Self {
        Self {
            kind,
            gateway,
            spec: prompting::builtin_spec(kind.agent()),
            schema_sample: kind.default_sample().to_string(),
        }
    }

    pub fn generate(&self, blueprint: &ScenarioBlueprint, rules: &RuleSet) -> Result<Script, ScriptError> {
        let prompt = script_prompt(self.kind, blueprint, &self.spec, &self.schema_sample, rules)?;
        let reply = self.gateway.complete(&[ChatMessage::user(prompt)])?;
        parse_script(self.kind, &reply).map(|(_, s)| s).map_err(ScriptError::UnparseableScript)
    }

    /// Generate, validate and, on violations, regenerate with the violation
    /// list appended, up to `max_attempts` times.
    pub fn generate_validated(
        &self,
        blueprint: &ScenarioBlueprint,
        rules: &RuleSet,
        max_attempts: u32,
    ) -> Result<Validated, ScriptError> {
        if max_attempts == 0 {
            return Err(ScriptError::Precondition("max_attempts must be at least 1".into()));
        }
        let base = script_prompt(self.kind, blueprint, &self.spec, &self.schema_sample, rules)?;
        let mut prompt = base.clone();
        let mut prompts = Vec::new();
        let mut last = None;
        for attempt in 1..=max_attempts {
            let reply = self.gateway.complete(&[ChatMessage::user(prompt.clone())])?;
            prompts.push(prompt.clone());
            let (document, artifact, report) = match extract_json(&reply) {
                None => (None, None, format_failure("$", "reply contains no JSON object", Value::Null)),
                Some(v) => {
                    let doc = match self.kind {
                        ScriptKind::Mission => normalize_mission_document(v),
                        ScriptKind::Env => v,
                    };
                    let report = rules.validate(&doc);
                    let typed = match self.kind {
                        ScriptKind::Mission => MissionPlan::from_document(&doc).map(Script::Mission),
                        ScriptKind::Env => SimSettings::from_document(&doc).map(Script::Env),
                    };
                    match typed {
                        Ok(t) => (Some(doc), Some(t), report),
                        Err(e) if report.ok => (Some(doc), None, format_failure("$", &e, Value::Null)),
                        Err(_) => (Some(doc), None, report),
                    }
                }
            };
            if report.ok {
                return Ok(Validated {
                    artifact,
                    document,
                    report,
                    attempts_used: attempt,
                    prompts,
                });
            }
            log::info!("{:?} attempt {attempt} failed {} rule check(s)", self.kind, report.violations.len());
            prompt = append_section(
                &base,
                VALIDATION_ERRORS_HEADER,
                &format!("{}\nReturn the complete corrected script.", report.describe()),
            );
            last = Some((artifact, document, report));
        }
        let (artifact, document, report) = last.expect("at least one attempt");
        Ok(Validated {
            artifact,
            document,
            report,
            attempts_used: max_attempts,
            prompts,
        })
    }
}

fn format_failure(path: &str, message: &str, observed: Value) -> ValidationReport {
    ValidationReport::from_violations(vec![Violation {
        rule_id: FORMAT_RULE.into(),
        json_path: path.into(),
        message: message.into(),
        observed_value: observed,
    }])
}

/// Combined validation record written next to the scripts.
pub fn validation_record(mission: &Validated, env: &Validated) -> Value {
    json!({
        "ok": mission.report.ok && env.report.ok,
        "mission": {"attempts_used": mission.attempts_used, "report": mission.report},
        "sim_settings": {"attempts_used": env.attempts_used, "report": env.report},
    })
}
