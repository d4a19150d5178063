use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: String,
    pub json_path: String,
    pub message: String,
    #[serde(default)]
    pub observed_value: Value,
}

/// Outcome of a rule check. `ok` holds exactly when `violations` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            ok: violations.is_empty(),
            violations,
            warnings: Vec::new(),
        }
    }

    pub fn passed() -> Self {
        Self::from_violations(Vec::new())
    }

    pub fn rule_ids(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.rule_id.as_str()).collect()
    }

    /// One line per violation, as fed back to a generating agent.
    pub fn describe(&self) -> String {
        self.violations
            .iter()
            .enumerate()
            .map(|(i, v)| {
                format!(
                    "{}. [{}] at {}: {} (observed: {})",
                    i + 1,
                    v.rule_id,
                    v.json_path,
                    v.message,
                    v.observed_value
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}
