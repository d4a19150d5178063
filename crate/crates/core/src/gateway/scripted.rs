use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: String,
    pub response: String,
}

impl ScriptEntry {
    pub fn new(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: matcher.into(),
            response: response.into(),
        }
    }
}

/// Ordered matcher table. The first entry whose matcher is a case-sensitive
/// substring of the assembled prompt answers; otherwise `default_response`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScriptedResponses {
    pub entries: Vec<ScriptEntry>,
    pub default_response: String,
}

impl ScriptedResponses {
    pub fn new(entries: Vec<ScriptEntry>, default_response: impl Into<String>) -> Self {
        Self {
            entries,
            default_response: default_response.into(),
        }
    }

    pub fn respond(&self, prompt: &str) -> &str {
        self.entries
            .iter()
            .find(|e| prompt.contains(&e.matcher))
            .map(|e| e.response.as_str())
            .unwrap_or(&self.default_response)
    }

    /// Parses the response-file layout: a JSON array of
    /// `{"match", "response"}` objects plus one `{"default"}` object.
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| LlmError::InvalidConfig(format!("scripted responses: {e}")))?;
        let items = value.as_array().ok_or_else(|| {
            LlmError::InvalidConfig("scripted responses must be a JSON array".into())
        })?;
        let mut out = ScriptedResponses::default();
        let mut saw_default = false;
        for (i, item) in items.iter().enumerate() {
            if let Some(d) = item.get("default") {
                let d = d.as_str().ok_or_else(|| {
                    LlmError::InvalidConfig(format!("entry {i}: default must be a string"))
                })?;
                if saw_default {
                    return Err(LlmError::InvalidConfig("more than one default entry".into()));
                }
                saw_default = true;
                out.default_response = d.to_string();
                continue;
            }
            let entry: ScriptEntry = serde_json::from_value(item.clone())
                .map_err(|e| LlmError::InvalidConfig(format!("entry {i}: {e}")))?;
            out.entries.push(entry);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let mut items: Vec<Value> = self
            .entries
            .iter()
            .map(|e| serde_json::json!({"match": e.matcher, "response": e.response}))
            .collect();
        items.push(serde_json::json!({"default": self.default_response}));
        serde_json::to_string_pretty(&Value::Array(items)).expect("json values serialize")
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
