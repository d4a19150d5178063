use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scenario::FeedbackNote;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    BlueprintDrafted,
    AwaitingApproval,
    Approved,
    ScriptsGenerated,
    ScriptsValidated,
    AwaitingLog,
    LogIngested,
    Analyzed,
    Evaluated,
    Failed,
}

impl Stage {
    const ORDER: [Stage; 9] = [
        Stage::BlueprintDrafted,
        Stage::AwaitingApproval,
        Stage::Approved,
        Stage::ScriptsGenerated,
        Stage::ScriptsValidated,
        Stage::AwaitingLog,
        Stage::LogIngested,
        Stage::Analyzed,
        Stage::Evaluated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::BlueprintDrafted => "blueprint_drafted",
            Stage::AwaitingApproval => "awaiting_approval",
            Stage::Approved => "approved",
            Stage::ScriptsGenerated => "scripts_generated",
            Stage::ScriptsValidated => "scripts_validated",
            Stage::AwaitingLog => "awaiting_log",
            Stage::LogIngested => "log_ingested",
            Stage::Analyzed => "analyzed",
            Stage::Evaluated => "evaluated",
            Stage::Failed => "failed",
        }
    }

    fn position(self) -> Option<usize> {
        Self::ORDER.iter().position(|s| *s == self)
    }

    /// Forward by one step, into `failed` from anywhere but `failed`, or back
    /// from review to drafting when feedback arrives.
    pub fn can_move_to(self, next: Stage) -> bool {
        if self == Stage::Failed {
            return false;
        }
        if next == Stage::Failed {
            return true;
        }
        if self == Stage::AwaitingApproval && next == Stage::BlueprintDrafted {
            return true;
        }
        match (self.position(), next.position()) {
            (Some(a), Some(b)) => b == a + 1,
            _ => false,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub stage: Stage,
    /// RFC 3339, UTC.
    pub at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    /// Stage the run was in when it failed.
    pub stage: Stage,
    pub code: String,
    pub message: String,
}

/// Settings the run was started with, recorded for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub mock: bool,
    pub chat_model: String,
    pub vision_model: String,
    pub critic_model: String,
    /// Sampling temperature sent to the chat backend; `None` leaves the
    /// backend's own default in force.
    #[serde(default)]
    pub chat_temperature: Option<f32>,
    pub embedder: String,
    pub mission_rules: Vec<String>,
    pub env_rules: Vec<String>,
    pub k_retrieval: usize,
    pub k_params: usize,
    pub max_attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub user_goal: String,
    pub stage: Stage,
    /// Artifact name → path relative to the run directory.
    pub artifact_paths: BTreeMap<String, String>,
    pub revision_count: u32,
    pub history: Vec<Transition>,
    pub config: ConfigSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    /// Feedback applied so far, oldest first.
    #[serde(default)]
    pub feedback: Vec<FeedbackNote>,
}

pub(crate) fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(run_id: String, user_goal: String, config: ConfigSnapshot) -> Self {
        Self {
            run_id,
            user_goal,
            stage: Stage::BlueprintDrafted,
            artifact_paths: BTreeMap::new(),
            revision_count: 0,
            history: vec![Transition {
                stage: Stage::BlueprintDrafted,
                at: now(),
            }],
            config,
            log_id: None,
            failure: None,
            feedback: Vec::new(),
        }
    }

    /// Appends to the history; illegal moves are refused.
    pub fn advance(&mut self, next: Stage) -> Result<(), (Stage, Stage)> {
        if !self.stage.can_move_to(next) {
            return Err((self.stage, next));
        }
        self.stage = next;
        self.history.push(Transition { stage: next, at: now() });
        Ok(())
    }

    pub fn fail(&mut self, code: &str, message: impl Into<String>) {
        let failure = Failure {
            stage: self.stage,
            code: code.to_string(),
            message: message.into(),
        };
        if self.advance(Stage::Failed).is_ok() {
            self.failure = Some(failure);
        }
    }

    pub fn artifact(&self, name: &str) -> Option<&str> {
        self.artifact_paths.get(name).map(String::as_str)
    }
}
