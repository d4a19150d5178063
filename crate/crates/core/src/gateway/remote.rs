use std::time::Duration;

use base64::Engine;
use rand::Rng;
use serde_json::{json, Value};

use super::{BackendConfig, ChatMessage, LlmError};

/// Blocking client for an OpenAI-compatible chat-completions endpoint.
pub struct RemoteClient {
    agent: ureq::Agent,
    base_url: String,
}

enum Failure {
    Retryable(String),
    Timeout,
    Fatal(LlmError),
}

impl RemoteClient {
    pub fn new(config: &BackendConfig) -> Result<Self, LlmError> {
        let base_url = config
            .base_url
            .clone()
            .ok_or_else(|| LlmError::InvalidConfig("remote backend requires base_url".into()))?;
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            agent: ureq::Agent::new_with_config(agent_config),
            base_url: base_url.trim_end_matches('/').to_string(),
        })
    }

    pub fn chat(&self, config: &BackendConfig, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = chat_body(config, messages);
        let url = format!("{}/chat/completions", self.base_url);
        let reply = self.post_with_retry(config, &url, &body)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
    }

    pub fn embed(&self, config: &BackendConfig, text: &str) -> Result<Vec<f32>, LlmError> {
        let body = json!({"model": config.model_id, "input": text});
        let url = format!("{}/embeddings", self.base_url);
        let reply = self.post_with_retry(config, &url, &body)?;
        let values = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::MalformedResponse("missing data[0].embedding".into()))?;
        values
            .iter()
            .map(|v| {
                v.as_f64()
                    .map(|f| f as f32)
                    .ok_or_else(|| LlmError::MalformedResponse("non-numeric embedding".into()))
            })
            .collect()
    }

    fn post_with_retry(&self, config: &BackendConfig, url: &str, body: &Value) -> Result<Value, LlmError> {
        let attempts_allowed = config.max_retries + 1;
        let mut last = Failure::Retryable("no attempt made".into());
        for attempt in 0..attempts_allowed {
            if attempt > 0 {
                std::thread::sleep(backoff_delay(config.backoff_base_ms, attempt - 1));
            }
            match self.post_once(config, url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(f) => {
                    log::warn!("{url}: attempt {} of {attempts_allowed} failed", attempt + 1);
                    last = f;
                }
            }
        }
        Err(match last {
            Failure::Timeout => LlmError::Timeout {
                attempts: attempts_allowed,
            },
            Failure::Retryable(reason) => LlmError::BackendUnavailable {
                attempts: attempts_allowed,
                reason,
            },
            Failure::Fatal(e) => e,
        })
    }

    fn post_once(&self, config: &BackendConfig, url: &str, body: &Value) -> Result<Value, Failure> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = config.api_key.as_deref().filter(|k| !k.is_empty()) {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(Failure::Timeout),
            Err(e) => return Err(Failure::Retryable(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Err(Failure::Timeout),
            Err(e) => return Err(Failure::Retryable(e.to_string())),
        };
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(LlmError::MalformedResponse(e.to_string()))),
            400..=499 => Err(Failure::Fatal(LlmError::BadRequest { status, body: text })),
            _ => Err(Failure::Retryable(format!("HTTP {status}"))),
        }
    }
}

/// `base · 2^attempt`, scaled by a uniform factor in [0.8, 1.2].
pub(crate) fn backoff_delay(base_ms: u64, attempt: u32) -> Duration {
    let nominal = base_ms as f64 * 2f64.powi(attempt.min(16) as i32);
    let jitter: f64 = rand::rng().random_range(0.8..=1.2);
    Duration::from_secs_f64(nominal * jitter / 1000.0)
}

fn chat_body(config: &BackendConfig, messages: &[ChatMessage]) -> Value {
    let engine = base64::engine::general_purpose::STANDARD;
    let msgs: Vec<Value> = messages
        .iter()
        .map(|m| {
            if m.images.is_empty() {
                json!({"role": m.role.as_str(), "content": m.text})
            } else {
                let mut parts = vec![json!({"type": "text", "text": m.text})];
                for img in &m.images {
                    let url = format!("data:{};base64,{}", img.mime, engine.encode(&img.data));
                    parts.push(json!({"type": "image_url", "image_url": {"url": url}}));
                }
                json!({"role": m.role.as_str(), "content": parts})
            }
        })
        .collect();
    let mut body = json!({"model": config.model_id, "messages": msgs});
    if let Some(t) = config.temperature {
        body["temperature"] = json!(t);
    }
    body
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_within_jitter_band() {
        for attempt in 0..4 {
            let d = backoff_delay(500, attempt).as_secs_f64();
            let nominal = 0.5 * 2f64.powi(attempt as i32);
            assert!(d >= nominal * 0.8 - 1e-9 && d <= nominal * 1.2 + 1e-9, "{d}");
        }
    }

    #[test]
    fn images_are_inlined() {
        let cfg = BackendConfig::remote("http://x", "vision");
        let msg = ChatMessage::user_with_images("look", vec![super::super::ImageAttachment::png(vec![1, 2, 3])]);
        let body = chat_body(&cfg, &[msg]);
        let url = body.pointer("/messages/0/content/1/image_url/url").unwrap();
        assert_eq!(url, "data:image/png;base64,AQID");
    }
}
