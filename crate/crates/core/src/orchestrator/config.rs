use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evaluation::EvalConfig;
use crate::gateway::{BackendConfig, BackendKind};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Remote,
}

/// Everything a pipeline needs, loaded from one JSON file and then
/// overridden by `AST_*` environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Root holding `runs/`, `logs/`, `analytics/` and `kb/`.
    pub data_dir: PathBuf,
    /// Use the bundled scripted backend and bundled knowledge bases.
    pub mock: bool,
    pub chat: Option<BackendConfig>,
    /// Defaults to the chat backend.
    pub vision: Option<BackendConfig>,
    /// Defaults to the chat backend.
    pub critic: Option<BackendConfig>,
    /// Response table for scripted backends outside mock mode.
    pub scripted_responses: Option<PathBuf>,
    pub embedder: EmbedderKind,
    /// Saved incident index; defaults to `kb/incidents.astix`.
    pub corpus_index: Option<PathBuf>,
    /// Parameter docs as JSONL; defaults to `kb/params.jsonl`.
    pub param_kb: Option<PathBuf>,
    pub mission_rules: Option<PathBuf>,
    pub env_rules: Option<PathBuf>,
    /// Ids from the bundled use-case rule set to add to the mission rules.
    pub use_case_rules: Vec<String>,
    pub prompt_pack: Option<PathBuf>,
    pub detector_config: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub k_retrieval: usize,
    pub k_params: usize,
    pub max_attempts: u32,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("ast-data"),
            mock: false,
            chat: None,
            vision: None,
            critic: None,
            scripted_responses: None,
            embedder: EmbedderKind::Hash,
            corpus_index: None,
            param_kb: None,
            mission_rules: None,
            env_rules: None,
            use_case_rules: Vec::new(),
            prompt_pack: None,
            detector_config: None,
            labels: None,
            k_retrieval: crate::scenario::DEFAULT_K,
            k_params: crate::analytics::DEFAULT_K_PARAMS,
            max_attempts: crate::scriptgen::DEFAULT_MAX_ATTEMPTS,
            eval: EvalConfig::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> PipelineError {
    PipelineError::InvalidConfig(msg.into())
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| bad(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn mock(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            mock: true,
            ..Self::default()
        }
    }

    /// Applies overrides from `vars` (normally `std::env::vars()`).
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), PipelineError> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, PipelineError> {
            v.trim().parse().map_err(|_| bad(format!("{key}={v:?} is not a valid number")))
        }
        for (key, v) in vars {
            match key.as_str() {
                "AST_DATA_DIR" => self.data_dir = PathBuf::from(v),
                "AST_MOCK" => self.mock = matches!(v.trim().to_ascii_lowercase().as_str(), "1" | "true" | "yes"),
                "AST_LLM_BASE_URL" => {
                    let chat = self.chat.get_or_insert_with(|| BackendConfig::remote("", ""));
                    chat.kind = BackendKind::Remote;
                    chat.base_url = Some(v);
                }
                "AST_LLM_MODEL" => self.chat.get_or_insert_with(|| BackendConfig::remote("", "")).model_id = v,
                "AST_LLM_API_KEY" => {
                    for b in [&mut self.chat, &mut self.vision, &mut self.critic].into_iter().flatten() {
                        b.api_key = Some(v.clone());
                    }
                }
                "AST_VISION_MODEL" => {
                    let base = self.vision.clone().or_else(|| self.chat.clone());
                    let mut b = base.unwrap_or_else(|| BackendConfig::remote("", ""));
                    b.model_id = v;
                    self.vision = Some(b);
                }
                "AST_CRITIC_MODEL" => {
                    let base = self.critic.clone().or_else(|| self.chat.clone());
                    let mut b = base.unwrap_or_else(|| BackendConfig::remote("", ""));
                    b.model_id = v;
                    self.critic = Some(b);
                }
                "AST_CORPUS_INDEX" => self.corpus_index = Some(PathBuf::from(v)),
                "AST_PARAM_KB" => self.param_kb = Some(PathBuf::from(v)),
                "AST_MISSION_RULES" => self.mission_rules = Some(PathBuf::from(v)),
                "AST_ENV_RULES" => self.env_rules = Some(PathBuf::from(v)),
                "AST_DETECTOR_CONFIG" => self.detector_config = Some(PathBuf::from(v)),
                "AST_LABELS" => self.labels = Some(PathBuf::from(v)),
                "AST_K_RETRIEVAL" => self.k_retrieval = num(&key, &v)?,
                "AST_K_PARAMS" => self.k_params = num(&key, &v)?,
                "AST_MAX_ATTEMPTS" => self.max_attempts = num(&key, &v)?,
                "AST_FAITHFULNESS_THRESHOLD" => self.eval.faithfulness_threshold = num(&key, &v)?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn kb_dir(&self) -> PathBuf {
        self.data_dir.join("kb")
    }

    pub fn corpus_index_path(&self) -> PathBuf {
        self.corpus_index.clone().unwrap_or_else(|| self.kb_dir().join("incidents.astix"))
    }

    pub fn param_kb_path(&self) -> PathBuf {
        self.param_kb.clone().unwrap_or_else(|| self.kb_dir().join("params.jsonl"))
    }

    /// Numeric sanity plus existence of every explicitly named file.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k_retrieval == 0 || self.k_params == 0 {
            return Err(bad("k_retrieval and k_params must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(bad("max_attempts must be at least 1"));
        }
        self.eval.validate().map_err(|e| bad(e.to_string()))?;
        let named = [
            ("scripted_responses", &self.scripted_responses),
            ("corpus_index", &self.corpus_index),
            ("param_kb", &self.param_kb),
            ("mission_rules", &self.mission_rules),
            ("env_rules", &self.env_rules),
            ("prompt_pack", &self.prompt_pack),
            ("detector_config", &self.detector_config),
            ("labels", &self.labels),
        ];
        for (name, path) in named {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(bad(format!("{name} path {} does not exist", p.display())));
                }
            }
        }
        if !self.mock {
            match &self.chat {
                None => return Err(bad("no chat backend configured; set chat in the config, AST_LLM_BASE_URL, or use mock mode")),
                Some(c) => c.validate().map_err(|e| bad(e.to_string()))?,
            }
        }
        Ok(())
    }
}
