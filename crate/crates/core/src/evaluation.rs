//! Retrieval and response-quality metrics plus blueprint diversity.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{ChatMessage, Gateway, LlmError};
use crate::knowledge::{cosine, hash_embed, tokenize, VectorIndex};
use crate::scenario::{extract_json, ScenarioBlueprint};

pub const DEFAULT_FAITHFULNESS_THRESHOLD: f64 = 0.35;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("diversity needs at least two blueprints, got {0}")]
    TooFewBlueprints(usize),
    #[error("no relevance labels for query {0:?}")]
    UnknownQuery(String),
    #[error("labels for {query:?} name chunk {chunk:?}, which is not in the index")]
    UnknownChunk { query: String, chunk: String },
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("critic mode needs a gateway")]
    NoCritic,
    #[error("critic backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("critic reply could not be parsed: {0}")]
    MalformedCritic(String),
    #[error(transparent)]
    Llm(LlmError),
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl From<LlmError> for EvalError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::BackendUnavailable { .. } | LlmError::Timeout { .. } => EvalError::BackendUnavailable(e.to_string()),
            other => EvalError::Llm(other),
        }
    }
}

fn token_set(text: &str) -> HashSet<String> {
    tokenize(text).into_iter().collect()
}

/// Token-set Jaccard similarity. Two texts with no tokens count as identical.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (token_set(a), token_set(b));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(&b).count();
    let union = a.union(&b).count();
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub use_case: String,
    pub pairwise: Vec<(usize, usize, f64)>,
    pub mean: f64,
}

pub fn diversity(blueprints: &[ScenarioBlueprint]) -> Result<DiversityReport, EvalError> {
    let texts: Vec<&str> = blueprints.iter().map(|b| b.raw_text.as_str()).collect();
    let use_case = blueprints.first().map(|b| b.use_case.clone()).unwrap_or_default();
    diversity_of_texts(&use_case, &texts)
}

pub fn diversity_of_texts(use_case: &str, texts: &[&str]) -> Result<DiversityReport, EvalError> {
    if texts.len() < 2 {
        return Err(EvalError::TooFewBlueprints(texts.len()));
    }
    let mut pairwise = Vec::new();
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            pairwise.push((i, j, jaccard(texts[i], texts[j])));
        }
    }
    let mean = pairwise.iter().map(|p| p.2).sum::<f64>() / pairwise.len() as f64;
    Ok(DiversityReport {
        use_case: use_case.to_string(),
        pairwise,
        mean,
    })
}

/// Ground truth for the context metrics: query id → relevant chunk ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelevanceLabels(pub BTreeMap<String, BTreeSet<String>>);

impl RelevanceLabels {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::InvalidConfig(format!("labels: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn relevant(&self, query_id: &str) -> Result<&BTreeSet<String>, EvalError> {
        self.0.get(query_id).ok_or_else(|| EvalError::UnknownQuery(query_id.to_string()))
    }

    /// Every labelled id must exist in `index`.
    pub fn check_against(&self, index: &VectorIndex) -> Result<(), EvalError> {
        for (q, ids) in &self.0 {
            if let Some(missing) = ids.iter().find(|id| index.get(id).is_none()) {
                return Err(EvalError::UnknownChunk {
                    query: q.clone(),
                    chunk: missing.clone(),
                });
            }
        }
        Ok(())
    }
}

/// A metric value plus whether it was defined by convention rather than
/// measured (nothing retrieved, or nothing relevant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetric {
    pub value: f64,
    pub vacuous: bool,
}

fn hits(retrieved: &[String], relevant: &BTreeSet<String>) -> usize {
    let unique: BTreeSet<&String> = retrieved.iter().collect();
    unique.into_iter().filter(|id| relevant.contains(*id)).count()
}

pub fn context_precision(retrieved: &[String], labels: &RelevanceLabels, query_id: &str) -> Result<SetMetric, EvalError> {
    let relevant = labels.relevant(query_id)?;
    let unique: BTreeSet<&String> = retrieved.iter().collect();
    if unique.is_empty() {
        return Ok(SetMetric { value: 1.0, vacuous: true });
    }
    Ok(SetMetric {
        value: hits(retrieved, relevant) as f64 / unique.len() as f64,
        vacuous: false,
    })
}

pub fn context_recall(retrieved: &[String], labels: &RelevanceLabels, query_id: &str) -> Result<SetMetric, EvalError> {
    let relevant = labels.relevant(query_id)?;
    if relevant.is_empty() {
        return Ok(SetMetric { value: 1.0, vacuous: true });
    }
    Ok(SetMetric {
        value: hits(retrieved, relevant) as f64 / relevant.len() as f64,
        vacuous: false,
    })
}

/// Sentence split on terminal punctuation followed by whitespace, and on
/// line breaks. Fragments without tokens are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == '\n' {
            out.push(std::mem::take(&mut cur));
            continue;
        }
        cur.push(c);
        if matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace()) {
            out.push(std::mem::take(&mut cur));
        }
    }
    out.push(cur);
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !tokenize(s).is_empty())
        .collect()
}

fn hash_cos(a: &str, b: &str) -> f64 {
    match (hash_embed(a), hash_embed(b)) {
        (Ok(x), Ok(y)) => cosine(&x, &y).clamp(0.0, 1.0),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Fixture,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub faithfulness_threshold: f64,
    /// Reverse questions asked of the critic per response.
    pub critic_questions: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::Fixture,
            faithfulness_threshold: DEFAULT_FAITHFULNESS_THRESHOLD,
            critic_questions: 3,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(0.0..=1.0).contains(&self.faithfulness_threshold) {
            return Err(EvalError::InvalidConfig("faithfulness_threshold must be in [0,1]".into()));
        }
        if self.critic_questions == 0 {
            return Err(EvalError::InvalidConfig("critic_questions must be at least 1".into()));
        }
        Ok(())
    }
}

pub struct Evaluator<'a> {
    pub config: EvalConfig,
    pub critic: Option<&'a Gateway>,
}

const CLAIMS_PROMPT: &str = "Extract every factual claim made in the RESPONSE and decide whether \
each one can be inferred from the CONTEXT. Reply with JSON only: \
{\"claims\": [{\"claim\": \"...\", \"supported\": true}]}";

const QUESTIONS_PROMPT: &str = "Write questions that the RESPONSE below would answer. \
Reply with JSON only: {\"questions\": [\"...\"]}";

fn critic_json(gw: &Gateway, prompt: String) -> Result<Value, EvalError> {
    let reply = gw.complete(&[ChatMessage::user(prompt)])?;
    extract_json(&reply).ok_or_else(|| EvalError::MalformedCritic(reply.chars().take(200).collect()))
}

impl<'a> Evaluator<'a> {
    pub fn fixture() -> Self {
        Self {
            config: EvalConfig::default(),
            critic: None,
        }
    }

    pub fn critic(gateway: &'a Gateway) -> Self {
        Self {
            config: EvalConfig {
                mode: EvalMode::Critic,
                ..EvalConfig::default()
            },
            critic: Some(gateway),
        }
    }

    fn gateway(&self) -> Result<&'a Gateway, EvalError> {
        self.critic.ok_or(EvalError::NoCritic)
    }

    /// Share of response statements grounded in the contexts.
    pub fn faithfulness(&self, response: &str, contexts: &[String]) -> Result<f64, EvalError> {
        if contexts.iter().all(|c| tokenize(c).is_empty()) {
            return Err(EvalError::EmptyInput("contexts"));
        }
        if tokenize(response).is_empty() {
            return Err(EvalError::EmptyInput("response"));
        }
        match self.config.mode {
            EvalMode::Fixture => {
                let sentences = split_sentences(response);
                let supported = sentences
                    .iter()
                    .filter(|s| {
                        contexts
                            .iter()
                            .map(|c| hash_cos(s, c))
                            .fold(0.0, f64::max)
                            >= self.config.faithfulness_threshold
                    })
                    .count();
                Ok(supported as f64 / sentences.len() as f64)
            }
            EvalMode::Critic => {
                let prompt = format!(
                    "{CLAIMS_PROMPT}\n\nCONTEXT\n{}\n\nRESPONSE\n{response}",
                    contexts.join("\n---\n")
                );
                let v = critic_json(self.gateway()?, prompt)?;
                let claims = v
                    .get("claims")
                    .and_then(Value::as_array)
                    .ok_or_else(|| EvalError::MalformedCritic("missing claims array".into()))?;
                if claims.is_empty() {
                    return Ok(0.0);
                }
                let supported = claims
                    .iter()
                    .filter(|c| c.get("supported").and_then(Value::as_bool) == Some(true))
                    .count();
                Ok(supported as f64 / claims.len() as f64)
            }
        }
    }

    pub fn response_relevancy(&self, query: &str, response: &str) -> Result<f64, EvalError> {
        if tokenize(query).is_empty() {
            return Err(EvalError::EmptyInput("query"));
        }
        if tokenize(response).is_empty() {
            return Err(EvalError::EmptyInput("response"));
        }
        match self.config.mode {
            EvalMode::Fixture => Ok(hash_cos(query, response)),
            EvalMode::Critic => {
                let prompt = format!(
                    "{QUESTIONS_PROMPT}\nWrite {} questions.\n\nRESPONSE\n{response}",
                    self.config.critic_questions
                );
                let v = critic_json(self.gateway()?, prompt)?;
                let qs: Vec<&str> = v
                    .get("questions")
                    .and_then(Value::as_array)
                    .map(|a| a.iter().filter_map(Value::as_str).collect())
                    .unwrap_or_default();
                if qs.is_empty() {
                    return Err(EvalError::MalformedCritic("no questions returned".into()));
                }
                Ok(qs.iter().map(|q| hash_cos(query, q)).sum::<f64>() / qs.len() as f64)
            }
        }
    }

    pub fn evaluate(&self, items: &[EvalItem], labels: Option<&RelevanceLabels>) -> Result<EvalReport, EvalError> {
        self.config.validate()?;
        if items.is_empty() {
            return Err(EvalError::EmptyInput("items"));
        }
        let mut per_item = Vec::new();
        for item in items {
            let (precision, recall) = match (labels, &item.query_id) {
                (Some(l), Some(q)) if l.0.contains_key(q) => (
                    Some(context_precision(&item.retrieved_ids, l, q)?),
                    Some(context_recall(&item.retrieved_ids, l, q)?),
                ),
                _ => (None, None),
            };
            per_item.push(ItemScores {
                id: item.id.clone(),
                faithfulness: self.faithfulness(&item.response, &item.contexts)?,
                response_relevancy: self.response_relevancy(&item.query, &item.response)?,
                context_precision: precision,
                context_recall: recall,
            });
        }
        let mean = |f: &dyn Fn(&ItemScores) -> Option<f64>| {
            let v: Vec<f64> = per_item.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Ok(EvalReport {
            mode: self.config.mode,
            faithfulness: mean(&|s| Some(s.faithfulness)).unwrap_or(0.0),
            response_relevancy: mean(&|s| Some(s.response_relevancy)).unwrap_or(0.0),
            context_precision: mean(&|s| s.context_precision.map(|m| m.value)),
            context_recall: mean(&|s| s.context_recall.map(|m| m.value)),
            per_item,
        })
    }
}

/// One generated answer with what it was grounded on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    /// Label key for the context metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    pub query: String,
    pub response: String,
    pub contexts: Vec<String>,
    #[serde(default)]
    pub retrieved_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub id: String,
    pub faithfulness: f64,
    pub response_relevancy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_precision: Option<SetMetric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_recall: Option<SetMetric>,
}

/// Means over items. The context metrics are absent when no item had labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub faithfulness: f64,
    pub context_precision: Option<f64>,
    pub response_relevancy: f64,
    pub context_recall: Option<f64>,
    pub per_item: Vec<ItemScores>,
}
