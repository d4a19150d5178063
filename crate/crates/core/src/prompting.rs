//! Agent prompt assembly.
//!
//! Every prompt is built from the same four building blocks: a persona
//! (agent goals), the user's goals, a sample of the expected output and a list
//! of rules the answer must satisfy. Retrieved knowledge-base chunks are laid
//! out between the user goals and the output sample.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const AGENT_GOALS_HEADER: &str = "## AGENT GOALS";
pub const USER_GOALS_HEADER: &str = "## USER GOALS";
pub const CONTEXT_HEADER: &str = "## CONTEXT";
pub const EXPECTED_OUTPUT_HEADER: &str = "## EXPECTED OUTPUT FORMAT";
pub const RULES_HEADER: &str = "## RULES";
pub const VALIDATION_ERRORS_HEADER: &str = "## VALIDATION ERRORS";
pub const PARSE_ERROR_HEADER: &str = "## PARSE ERROR";
pub const PREVIOUS_OUTPUT_HEADER: &str = "## PREVIOUS BLUEPRINT";
pub const FEEDBACK_HEADER: &str = "## FEEDBACK";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("agent goals must not be empty")]
    EmptyAgentGoals,
    #[error("rule {0:?} has an empty id or statement")]
    InvalidRule(String),
    #[error("duplicate rule id {0:?}")]
    DuplicateRule(String),
    #[error("prompt pack: {0}")]
    Pack(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleText {
    pub id: String,
    pub statement: String,
    #[serde(default)]
    pub machine_checkable: bool,
}

impl RuleText {
    pub fn new(id: &str, statement: &str, machine_checkable: bool) -> Self {
        Self {
            id: id.to_string(),
            statement: statement.to_string(),
            machine_checkable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextChunk {
    pub source_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptSpec {
    pub agent_goals: String,
    #[serde(default)]
    pub sample_output: Option<String>,
    #[serde(default)]
    pub user_goals: Option<String>,
    #[serde(default)]
    pub rules: Vec<RuleText>,
    #[serde(default)]
    pub retrieved_context: Vec<ContextChunk>,
}

impl PromptSpec {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.agent_goals.trim().is_empty() {
            return Err(PromptError::EmptyAgentGoals);
        }
        let mut seen = HashSet::new();
        for r in &self.rules {
            if r.id.trim().is_empty() || r.statement.trim().is_empty() {
                return Err(PromptError::InvalidRule(r.id.clone()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(PromptError::DuplicateRule(r.id.clone()));
            }
        }
        Ok(())
    }

    pub fn with_user_goals(mut self, goals: impl Into<String>) -> Self {
        self.user_goals = Some(goals.into());
        self
    }

    pub fn with_context(mut self, chunks: Vec<ContextChunk>) -> Self {
        self.retrieved_context = chunks;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Scenario,
    Mission,
    Env,
    AnalyticsAuto,
    AnalyticsInteractive,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Scenario,
        AgentKind::Mission,
        AgentKind::Env,
        AgentKind::AnalyticsAuto,
        AgentKind::AnalyticsInteractive,
    ];
}

fn section(out: &mut String, header: &str, body: &str) {
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    out.push_str(header);
    out.push('\n');
    out.push_str(body);
}

fn non_empty(s: &Option<String>) -> Option<&str> {
    s.as_deref().filter(|t| !t.trim().is_empty())
}

/// Renders the spec in the fixed section order; empty sections are omitted.
pub fn assemble(spec: &PromptSpec) -> Result<String, PromptError> {
    spec.validate()?;
    let mut out = String::new();
    section(&mut out, AGENT_GOALS_HEADER, &spec.agent_goals);
    if let Some(goals) = non_empty(&spec.user_goals) {
        section(&mut out, USER_GOALS_HEADER, goals);
    }
    if !spec.retrieved_context.is_empty() {
        let body = spec
            .retrieved_context
            .iter()
            .map(|c| format!("[{}] {}", c.source_id, c.text))
            .collect::<Vec<_>>()
            .join("\n\n");
        section(&mut out, CONTEXT_HEADER, &body);
    }
    if let Some(sample) = non_empty(&spec.sample_output) {
        section(&mut out, EXPECTED_OUTPUT_HEADER, sample);
    }
    if !spec.rules.is_empty() {
        let body = spec
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{}. {}", i + 1, r.statement))
            .collect::<Vec<_>>()
            .join("\n");
        section(&mut out, RULES_HEADER, &body);
    }
    Ok(out)
}

/// Appends an extra section (validation feedback, parse errors, ...) to an
/// already assembled prompt.
pub fn append_section(prompt: &str, header: &str, body: &str) -> String {
    let mut out = prompt.to_string();
    section(&mut out, header, body);
    out
}

/// Splits an assembled prompt back into `(header, body)` pairs.
pub fn split_sections(prompt: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in prompt.split('\n') {
        if line.starts_with("## ") {
            if let Some((h, body)) = current.take() {
                out.push((h, trim_trailing_blank(body)));
            }
            current = Some((line.to_string(), Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((h, body)) = current {
        out.push((h, trim_trailing_blank(body)));
    }
    out
}

fn trim_trailing_blank(mut lines: Vec<&str>) -> String {
    // sections are separated by exactly one blank line
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines.join("\n")
}

pub const SCENARIO_SAMPLE: &str = r#"Answer with one fenced JSON object of this shape:
```json
{
  "use_case": "City surveillance",
  "environment": {
    "location": "New York City",
    "weather": {"wind": "15 m/s"},
    "gps_quality": "high",
    "obstacles": ["Buildings", "PowerLines"],
    "narrative": "Dense urban canyon with gusty wind between high-rise buildings."
  },
  "mission": "Monitor traffic patterns, and assist law enforcement in maintaining public safety.",
  "test_properties": ["Flight Stability in Wind"]
}
```"#;

pub const MISSION_SAMPLE: &str = r#"{
  "mission": {
    "cruiseSpeed": 10,
    "hoverSpeed": 5,
    "items": [
      {
        "AMSLAltAboveTerrain": null,
        "Altitude": 50,
        "AltitudeMode": 1,
        "autoContinue": true,
        "command": 22,
        "frame": 3,
        "params": [15, 0, 0, null, 47.39803986, 8.54557254, 50],
        "type": "SimpleItem"
      }
    ],
    "plannedHomePosition": [47.397742, 8.545594, 488]
  }
}"#;

pub const ENV_SAMPLE: &str = r#"{
  "SimulatorSettings": {
    "Weather": {
      "RainIntensity": 0.5,
      "WindSpeed": 5,
      "WindDirection": 0,
      "Visibility": 0.7
    }
  },
  "Vehicles": {
    "Drone_1": {
      "VehicleType": "Quadrotor",
      "Pose": {"X": 0, "Y": 0, "Z": 10, "Roll": 0, "Pitch": 0, "Yaw": 0},
      "HomeLocation": {"Latitude": 47.641468, "Longitude": -122.140165, "Altitude": 10}
    }
  }
}"#;

/// The stock prompt skeleton for each agent.
pub fn builtin_spec(agent: AgentKind) -> PromptSpec {
    match agent {
        AgentKind::Scenario => PromptSpec {
            agent_goals: "Act as a Test Engineer to generate scenario blueprints that include \
                          the Environment, the sUAS Mission and the Test Properties."
                .into(),
            sample_output: Some(SCENARIO_SAMPLE.into()),
            user_goals: None,
            rules: vec![RuleText::new("blueprint_completeness", "Blueprint Completeness", true)],
            retrieved_context: Vec::new(),
        },
        AgentKind::Mission => PromptSpec {
            agent_goals: "Act as an Automation Engineer to generate a SuT mission script based \
                          on scenario blueprint."
                .into(),
            sample_output: Some(MISSION_SAMPLE.into()),
            user_goals: None,
            rules: vec![
                RuleText::new("format_validity", "Script Format Validity", true),
                RuleText::new("lat_lon_valid", "Valid Geo-location", true),
                RuleText::new("valid_waypoints", "Valid Waypoints", true),
                RuleText::new("velocity_range", "Velocity = [0,30] mph", true),
                RuleText::new("altitude_max", "Altitude ≤ 400 ft", true),
            ],
            retrieved_context: Vec::new(),
        },
        AgentKind::Env => PromptSpec {
            agent_goals: "Act as an Automation Engineer to generate sim tool script based on \
                          scenario blueprint."
                .into(),
            sample_output: Some(ENV_SAMPLE.into()),
            user_goals: None,
            rules: vec![
                RuleText::new("format_validity", "Script Format Validity", true),
                RuleText::new("wind_range", "Wind = [0,50] mph", true),
                RuleText::new("light_range", "Light Intensity = (0,10)", true),
            ],
            retrieved_context: Vec::new(),
        },
        AgentKind::AnalyticsAuto => PromptSpec {
            agent_goals: "Act as a Data Analyst to analyze simulation log data and explain how \
                          the test properties are affected."
                .into(),
            sample_output: None,
            user_goals: None,
            rules: vec![RuleText::new("analysis_completeness", "Analysis Completeness", false)],
            retrieved_context: Vec::new(),
        },
        AgentKind::AnalyticsInteractive => PromptSpec {
            agent_goals: "Answer the developer's question using the attached flight-log plots."
                .into(),
            sample_output: None,
            user_goals: None,
            rules: vec![RuleText::new("analysis_completeness", "Analysis Completeness", false)],
            retrieved_context: Vec::new(),
        },
    }
}

/// Per-agent overrides loaded from a JSON file keyed by agent name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptPack {
    overrides: BTreeMap<AgentKind, PromptSpec>,
}

impl PromptPack {
    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let pack: PromptPack =
            serde_json::from_str(text).map_err(|e| PromptError::Pack(e.to_string()))?;
        for spec in pack.overrides.values() {
            spec.validate()?;
        }
        Ok(pack)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Pack(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn spec(&self, agent: AgentKind) -> PromptSpec {
        self.overrides
            .get(&agent)
            .cloned()
            .unwrap_or_else(|| builtin_spec(agent))
    }
}
