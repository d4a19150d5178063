//! Scenario blueprints: generation grounded in retrieved incident reports,
//! feedback-driven refinement and the completeness gate.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gateway::{ChatMessage, Gateway, LlmError};
use crate::knowledge::{Embedder, KnowledgeError, VectorIndex};
use crate::prompting::{
    self, append_section, assemble, AgentKind, ContextChunk, PromptError, PromptSpec, FEEDBACK_HEADER,
    PARSE_ERROR_HEADER, PREVIOUS_OUTPUT_HEADER,
};
use crate::validation::{ValidationReport, Violation};

pub const DEFAULT_K: usize = 5;
pub const COMPLETENESS_RULE: &str = "blueprint_completeness";
pub const WIND_RULE: &str = "wind_non_negative";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("user goal must not be empty")]
    EmptyGoal,
    #[error("feedback text must not be empty")]
    EmptyFeedback,
    #[error("blueprint is incomplete:\n{0}")]
    Incomplete(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("blueprint could not be parsed after a reprompt: {0}")]
    UnparseableBlueprint(String),
    #[error(transparent)]
    Llm(LlmError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl From<LlmError> for ScenarioError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::BackendUnavailable { .. } | LlmError::Timeout { .. } => {
                ScenarioError::BackendUnavailable(e.to_string())
            }
            other => ScenarioError::Llm(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Magnitude {
    pub value: f64,
    #[serde(default)]
    pub unit: String,
}

impl Magnitude {
    /// Speed in m/s when the unit is a known speed unit (bare numbers count as m/s).
    pub fn speed_mps(&self) -> Option<f64> {
        let factor = match self.unit.trim().to_ascii_lowercase().replace(' ', "").as_str() {
            "" | "m/s" | "mps" | "ms" => 1.0,
            "mph" => 0.44704,
            "km/h" | "kph" | "kmh" => 1.0 / 3.6,
            "kt" | "kts" | "knot" | "knots" => 1852.0 / 3600.0,
            _ => return None,
        };
        Some(self.value * factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpsQuality {
    Low,
    Medium,
    High,
}

impl GpsQuality {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" | "poor" | "weak" => Some(GpsQuality::Low),
            "medium" | "moderate" | "average" => Some(GpsQuality::Medium),
            "high" | "good" | "strong" => Some(GpsQuality::High),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GpsQuality::Low => "low",
            GpsQuality::Medium => "medium",
            GpsQuality::High => "high",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvDescription {
    #[serde(default)]
    pub location: String,
    /// Condition name (lowercase) to magnitude, e.g. `wind` → 15 m/s.
    #[serde(default)]
    pub weather: BTreeMap<String, Magnitude>,
    #[serde(default)]
    pub gps_quality: Option<GpsQuality>,
    #[serde(default)]
    pub obstacles: Vec<String>,
    #[serde(default)]
    pub narrative: String,
}

impl EnvDescription {
    pub fn is_empty(&self) -> bool {
        self.location.trim().is_empty()
            && self.weather.is_empty()
            && self.gps_quality.is_none()
            && self.obstacles.is_empty()
            && self.narrative.trim().is_empty()
    }

    /// Plain-text rendering used as the goal for the environment agent.
    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        if !self.location.is_empty() {
            lines.push(format!("Location: {}", self.location));
        }
        if !self.weather.is_empty() {
            let w: Vec<String> = self
                .weather
                .iter()
                .map(|(k, m)| format!("{k} = {} {}", m.value, m.unit).trim_end().to_string())
                .collect();
            lines.push(format!("Weather: {}", w.join(", ")));
        }
        if let Some(g) = self.gps_quality {
            lines.push(format!("GPS Quality: {}", g.as_str()));
        }
        if !self.obstacles.is_empty() {
            lines.push(format!("Obstacles: {}", self.obstacles.join(", ")));
        }
        if !self.narrative.is_empty() {
            lines.push(self.narrative.clone());
        }
        lines.join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSection {
    Environment,
    Mission,
    TestProperties,
    All,
}

impl std::str::FromStr for TargetSection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "environment" | "env" => Ok(TargetSection::Environment),
            "mission" => Ok(TargetSection::Mission),
            "test_properties" | "properties" => Ok(TargetSection::TestProperties),
            "all" => Ok(TargetSection::All),
            other => Err(format!("unknown section {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackNote {
    #[serde(default)]
    pub author: String,
    pub text: String,
    pub target_section: TargetSection,
}

impl FeedbackNote {
    pub fn new(text: impl Into<String>, target_section: TargetSection) -> Self {
        Self {
            author: "developer".into(),
            text: text.into(),
            target_section,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBlueprint {
    #[serde(default)]
    pub use_case: String,
    pub environment: EnvDescription,
    pub mission_description: String,
    pub test_properties: Vec<String>,
    /// Ids of the incident chunks the blueprint was grounded in.
    #[serde(default)]
    pub provenance: Vec<String>,
    #[serde(default)]
    pub raw_text: String,
    #[serde(default)]
    pub revision: u32,
}

/// One retrieval call, kept so a run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub query: String,
    pub k: usize,
    pub hits: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub blueprint: ScenarioBlueprint,
    pub searches: Vec<SearchRecord>,
    pub attempts: u32,
}

pub fn check_completeness(bp: &ScenarioBlueprint) -> ValidationReport {
    let mut v = Vec::new();
    let mut push = |rule: &str, path: String, message: &str, observed: Value| {
        v.push(Violation {
            rule_id: rule.into(),
            json_path: path,
            message: message.into(),
            observed_value: observed,
        })
    };
    if bp.environment.is_empty() {
        push(COMPLETENESS_RULE, "environment".into(), "environment section is missing or empty", Value::Null);
    }
    if bp.mission_description.trim().is_empty() {
        push(
            COMPLETENESS_RULE,
            "mission_description".into(),
            "mission description is missing or empty",
            json!(bp.mission_description),
        );
    }
    if bp.test_properties.is_empty() {
        push(COMPLETENESS_RULE, "test_properties".into(), "at least one test property is required", json!([]));
    }
    let mut seen = HashSet::new();
    for (i, p) in bp.test_properties.iter().enumerate() {
        let norm = p.trim().to_lowercase();
        if norm.is_empty() {
            push(COMPLETENESS_RULE, format!("test_properties[{i}]"), "empty test property", json!(p));
        } else if !seen.insert(norm) {
            push(COMPLETENESS_RULE, format!("test_properties[{i}]"), "duplicate test property", json!(p));
        }
    }
    if let Some(w) = bp.environment.weather.get("wind") {
        if w.value < 0.0 || !w.value.is_finite() {
            push(
                WIND_RULE,
                "environment.weather.wind".into(),
                "wind magnitude must be non-negative",
                json!(w.value),
            );
        }
    }
    ValidationReport::from_violations(v)
}

fn fenced_json(text: &str) -> Option<&str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?s)```[a-zA-Z]*\s*\n(.*?)```").expect("static regex"));
    re.captures_iter(text)
        .map(|c| c.get(1).unwrap().as_str())
        .find(|body| body.trim_start().starts_with('{'))
}

fn outer_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Finds the JSON object in an agent reply: a fenced block first, otherwise
/// the outermost braces.
pub fn extract_json(text: &str) -> Option<Value> {
    let candidates = [fenced_json(text), outer_object(text)];
    candidates
        .into_iter()
        .flatten()
        .find_map(|c| serde_json::from_str::<Value>(c).ok().filter(Value::is_object))
}

fn magnitude_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(-?\d+(?:\.\d+)?)\s*([^\d\s].*?)?\s*$").expect("static regex"))
}

fn default_unit(condition: &str) -> &'static str {
    if condition.contains("wind") { "m/s" } else { "" }
}

fn parse_magnitude(condition: &str, raw: &str) -> Option<Magnitude> {
    let caps = magnitude_re().captures(raw)?;
    let value: f64 = caps[1].parse().ok()?;
    let unit = caps.get(2).map_or(default_unit(condition), |m| m.as_str());
    Some(Magnitude {
        value,
        unit: unit.to_string(),
    })
}

/// `Wind = 15m/s, Rain = 0.5` style weather text.
fn parse_weather_text(text: &str, out: &mut BTreeMap<String, Magnitude>) {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^\s*([A-Za-z][A-Za-z ]*?)\s*(?:=|:|of|at)?\s*(-?\d.*)$").expect("static regex"));
    for part in text.split([',', ';']) {
        if let Some(c) = re.captures(part) {
            let name = c[1].trim().to_lowercase().replace(' ', "_");
            let name = if name.starts_with("wind") && !name.contains("direction") { "wind".into() } else { name };
            if let Some(m) = parse_magnitude(&name, &c[2]) {
                out.insert(name, m);
            }
        }
    }
}

fn string_list(v: &Value) -> Result<Vec<String>, String> {
    match v {
        Value::Null => Ok(Vec::new()),
        Value::String(s) => Ok(s
            .split([',', '\n'])
            .map(|p| clean_item(p).to_string())
            .filter(|p| !p.is_empty())
            .collect()),
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::String(s) => Ok(s.trim().to_string()),
                Value::Object(o) => o
                    .get("name")
                    .or_else(|| o.get("property"))
                    .and_then(Value::as_str)
                    .map(|s| s.trim().to_string())
                    .ok_or_else(|| "list entries must be strings".to_string()),
                other => Ok(other.to_string()),
            })
            .collect(),
        other => Err(format!("expected a list of strings, found {other}")),
    }
}

fn env_from_json(v: &Value) -> Result<EnvDescription, String> {
    let mut env = EnvDescription::default();
    match v {
        Value::Null => {}
        Value::String(s) => env = parse_env_text(s),
        Value::Object(o) => {
            let text = |k: &str| o.get(k).and_then(Value::as_str).map(str::to_string).unwrap_or_default();
            env.location = text("location");
            env.narrative = text("narrative");
            if env.narrative.is_empty() {
                env.narrative = text("description");
            }
            env.gps_quality = o.get("gps_quality").and_then(Value::as_str).and_then(GpsQuality::parse);
            env.obstacles = string_list(o.get("obstacles").unwrap_or(&Value::Null))?;
            match o.get("weather") {
                None | Some(Value::Null) => {}
                Some(Value::String(s)) => parse_weather_text(s, &mut env.weather),
                Some(Value::Object(w)) => {
                    for (k, raw) in w {
                        let key = k.trim().to_lowercase().replace(' ', "_");
                        let m = match raw {
                            Value::Number(n) => n.as_f64().map(|value| Magnitude {
                                value,
                                unit: default_unit(&key).into(),
                            }),
                            Value::String(s) => parse_magnitude(&key, s),
                            Value::Object(_) => serde_json::from_value::<Magnitude>(raw.clone()).ok(),
                            _ => None,
                        };
                        match m {
                            Some(m) => {
                                env.weather.insert(key, m);
                            }
                            None => log::warn!("ignoring weather entry {k}: {raw}"),
                        }
                    }
                }
                Some(other) => return Err(format!("weather must be an object, found {other}")),
            }
        }
        other => return Err(format!("environment must be an object, found {other}")),
    }
    Ok(env)
}

fn clean_item(line: &str) -> &str {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^\s*(?:[-*•+]|\d+[.)])\s*").expect("static regex"));
    let t = line.trim();
    match re.find(t) {
        Some(m) => t[m.end()..].trim(),
        None => t,
    }
}

fn parse_env_text(text: &str) -> EnvDescription {
    let mut env = EnvDescription::default();
    let mut narrative = Vec::new();
    for line in text.lines() {
        let item = clean_item(line).trim_matches('*');
        if item.is_empty() {
            continue;
        }
        let (key, value) = match item.split_once(':') {
            Some((k, v)) => (k.trim().trim_matches('*').trim().to_lowercase(), v.trim().trim_matches('*').trim()),
            None => (String::new(), item),
        };
        match key.as_str() {
            "location" => env.location = value.to_string(),
            "weather" | "weather conditions" => parse_weather_text(value, &mut env.weather),
            "gps quality" | "gps" | "gps_quality" => env.gps_quality = GpsQuality::parse(value),
            "obstacles" => {
                env.obstacles = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            _ => narrative.push(item.to_string()),
        }
    }
    env.narrative = narrative.join(" ");
    env
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Environment,
    Mission,
    Properties,
}

fn header_of(line: &str) -> Option<(Section, String)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*(?:#{1,6}\s*)?(?:\*\*)?\s*(environment(?:al description)?|(?:suas\s+)?mission(?:\s+description)?|test\s+propert(?:y|ies))\s*(?:\*\*)?\s*(?::\s*(?:\*\*)?\s*(.*))?$",
        )
        .expect("static regex")
    });
    let caps = re.captures(line)?;
    let name = caps[1].to_lowercase();
    let section = if name.starts_with("env") {
        Section::Environment
    } else if name.starts_with("test") {
        Section::Properties
    } else {
        Section::Mission
    };
    Some((section, caps.get(2).map_or("", |m| m.as_str()).trim().to_string()))
}

fn parse_sections(text: &str) -> Option<ScenarioBlueprint> {
    let mut bodies: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
    let mut current: Option<Section> = None;
    for line in text.lines() {
        if let Some((s, inline)) = header_of(line) {
            current = Some(s);
            let body = bodies.entry(section_key(s)).or_default();
            if !inline.is_empty() {
                body.push(inline);
            }
        } else if let Some(s) = current {
            bodies.entry(section_key(s)).or_default().push(line.to_string());
        }
    }
    if bodies.is_empty() {
        return None;
    }
    let get = |k: &str| bodies.get(k).map(|b| b.join("\n")).unwrap_or_default();
    Some(ScenarioBlueprint {
        use_case: String::new(),
        environment: parse_env_text(&get("environment")),
        mission_description: get("mission")
            .lines()
            .map(clean_item)
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join(" "),
        test_properties: get("properties")
            .lines()
            .map(|l| clean_item(l).trim_matches('*').trim().to_string())
            .filter(|l| !l.is_empty())
            .collect(),
        provenance: Vec::new(),
        raw_text: text.to_string(),
        revision: 0,
    })
}

fn section_key(s: Section) -> &'static str {
    match s {
        Section::Environment => "environment",
        Section::Mission => "mission",
        Section::Properties => "properties",
    }
}

fn from_json(v: &Value, raw: &str) -> Result<ScenarioBlueprint, String> {
    let o = v.as_object().ok_or("blueprint must be a JSON object")?;
    let env_value = o.get("environment").unwrap_or(&Value::Null);
    let mission = o
        .get("mission")
        .or_else(|| o.get("mission_description"))
        .unwrap_or(&Value::Null);
    let mission_description = match mission {
        Value::Null => String::new(),
        Value::String(s) => s.trim().to_string(),
        Value::Object(m) => m
            .get("description")
            .and_then(Value::as_str)
            .map(|s| s.trim().to_string())
            .ok_or("mission object needs a description")?,
        other => return Err(format!("mission must be text, found {other}")),
    };
    Ok(ScenarioBlueprint {
        use_case: o.get("use_case").and_then(Value::as_str).unwrap_or_default().to_string(),
        environment: env_from_json(env_value)?,
        mission_description,
        test_properties: string_list(o.get("test_properties").unwrap_or(&Value::Null))?,
        provenance: Vec::new(),
        raw_text: raw.to_string(),
        revision: 0,
    })
}

/// Parses an agent reply: a JSON object first, header-delimited prose otherwise.
pub fn parse_blueprint(text: &str) -> Result<ScenarioBlueprint, String> {
    if let Some(v) = extract_json(text) {
        return from_json(&v, text);
    }
    parse_sections(text).ok_or_else(|| "reply holds neither a JSON object nor ENVIRONMENT/MISSION/TEST PROPERTIES sections".into())
}

fn parse_complete(text: &str) -> Result<ScenarioBlueprint, String> {
    let bp = parse_blueprint(text)?;
    let report = check_completeness(&bp);
    if report.ok {
        Ok(bp)
    } else {
        Err(report.describe())
    }
}

/// The scenario agent bound to its knowledge store and backend.
pub struct ScenarioAgent<'a> {
    pub index: &'a VectorIndex,
    pub embedder: &'a Embedder,
    pub gateway: &'a Gateway,
    pub spec: PromptSpec,
    pub k: usize,
}

impl<'a> ScenarioAgent<'a> {
    pub fn new(index: &'a VectorIndex, embedder: &'a Embedder, gateway: &'a Gateway) -> Self {
        Self {
            index,
            embedder,
            gateway,
            spec: prompting::builtin_spec(AgentKind::Scenario),
            k: DEFAULT_K,
        }
    }

    fn retrieve(&self, query: &str) -> Result<(SearchRecord, Vec<ContextChunk>), ScenarioError> {
        let hits = self.index.search(self.embedder, query, self.k)?;
        let record = SearchRecord {
            query: query.to_string(),
            k: self.k,
            hits: hits.iter().map(|h| (h.chunk.id.clone(), h.score)).collect(),
        };
        let context = hits
            .iter()
            .map(|h| ContextChunk {
                source_id: h.chunk.id.clone(),
                text: h.chunk.text.clone(),
            })
            .collect();
        Ok((record, context))
    }

    /// Sends `prompt`, and on an unusable reply sends it once more with the
    /// problem appended.
    fn ask(
        &self,
        prompt: &str,
        finish: impl Fn(&str) -> Result<ScenarioBlueprint, String>,
    ) -> Result<(ScenarioBlueprint, u32), ScenarioError> {
        let reply = self.gateway.complete(&[ChatMessage::user(prompt)])?;
        match finish(&reply) {
            Ok(bp) => Ok((bp, 1)),
            Err(reason) => {
                log::warn!("blueprint rejected, reprompting: {reason}");
                let retry = append_section(
                    prompt,
                    PARSE_ERROR_HEADER,
                    &format!(
                        "Your previous answer could not be used:\n{reason}\nAnswer again with the environment, \
                         mission and test properties, following the expected output format."
                    ),
                );
                let reply = self.gateway.complete(&[ChatMessage::user(retry)])?;
                finish(&reply).map(|bp| (bp, 2)).map_err(ScenarioError::UnparseableBlueprint)
            }
        }
    }

    pub fn generate(&self, user_goal: &str) -> Result<Generation, ScenarioError> {
        let goal = user_goal.trim();
        if goal.is_empty() {
            return Err(ScenarioError::EmptyGoal);
        }
        let (record, context) = self.retrieve(goal)?;
        let spec = self.spec.clone().with_user_goals(goal).with_context(context);
        let prompt = assemble(&spec)?;
        let (mut bp, attempts) = self.ask(&prompt, parse_complete)?;
        bp.provenance = record.hits.iter().map(|(id, _)| id.clone()).collect();
        Ok(Generation {
            blueprint: bp,
            searches: vec![record],
            attempts,
        })
    }

    /// Reworks one section (or all) of a complete blueprint. Sections outside
    /// the feedback's target are carried over unchanged.
    pub fn refine(&self, prior: &ScenarioBlueprint, feedback: &FeedbackNote) -> Result<Generation, ScenarioError> {
        if feedback.text.trim().is_empty() {
            return Err(ScenarioError::EmptyFeedback);
        }
        let gate = check_completeness(prior);
        if !gate.ok {
            return Err(ScenarioError::Incomplete(gate.describe()));
        }
        let (record, context) = self.retrieve(&feedback.text)?;
        let target = match feedback.target_section {
            TargetSection::Environment => "environment",
            TargetSection::Mission => "mission",
            TargetSection::TestProperties => "test_properties",
            TargetSection::All => "all",
        };
        let spec = self.spec.clone().with_context(context);
        let mut prompt = assemble(&spec)?;
        prompt = append_section(&prompt, PREVIOUS_OUTPUT_HEADER, &prior.raw_text);
        prompt = append_section(
            &prompt,
            FEEDBACK_HEADER,
            &format!("Target section: {target}\n{}\nKeep every other section unchanged.", feedback.text.trim()),
        );
        let merge = |reply: &str| -> Result<ScenarioBlueprint, String> {
            let fresh = parse_blueprint(reply)?;
            let mut bp = prior.clone();
            bp.raw_text = reply.to_string();
            match feedback.target_section {
                TargetSection::Environment => bp.environment = fresh.environment,
                TargetSection::Mission => bp.mission_description = fresh.mission_description,
                TargetSection::TestProperties => bp.test_properties = fresh.test_properties,
                TargetSection::All => {
                    bp.environment = fresh.environment;
                    bp.mission_description = fresh.mission_description;
                    bp.test_properties = fresh.test_properties;
                    if !fresh.use_case.is_empty() {
                        bp.use_case = fresh.use_case;
                    }
                }
            }
            let report = check_completeness(&bp);
            if report.ok { Ok(bp) } else { Err(report.describe()) }
        };
        let (mut bp, attempts) = self.ask(&prompt, merge)?;
        for (id, _) in &record.hits {
            if !bp.provenance.contains(id) {
                bp.provenance.push(id.clone());
            }
        }
        bp.revision = prior.revision + 1;
        Ok(Generation {
            blueprint: bp,
            searches: vec![record],
            attempts,
        })
    }
}
