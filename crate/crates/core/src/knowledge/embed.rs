use std::sync::Arc;

use crate::gateway::{Gateway, LlmError};

use super::KnowledgeError;

pub const HASH_DIM: usize = 384;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

pub fn hash_bucket(token: &str) -> usize {
    (fnv1a64(token.as_bytes()) % HASH_DIM as u64) as usize
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Bag-of-hashed-tokens vector, L2-normalized.
pub fn hash_embed(text: &str) -> Result<Vec<f32>, KnowledgeError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(KnowledgeError::EmptyText);
    }
    let mut v = vec![0f64; HASH_DIM];
    for t in &tokens {
        v[hash_bucket(t)] += 1.0;
    }
    normalize(&mut v);
    Ok(v.into_iter().map(|x| x as f32).collect())
}

/// Dot product accumulated in f64.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

#[derive(Debug, Clone)]
pub enum Embedder {
    Hash,
    Remote(Arc<Gateway>),
}

impl Embedder {
    pub fn embed(&self, text: &str) -> Result<Vec<f32>, KnowledgeError> {
        match self {
            Embedder::Hash => hash_embed(text),
            Embedder::Remote(gw) => {
                if text.trim().is_empty() {
                    return Err(KnowledgeError::EmptyText);
                }
                let raw = gw.embed(text).map_err(|e| match e {
                    LlmError::BackendUnavailable { .. } | LlmError::Timeout { .. } => {
                        KnowledgeError::BackendUnavailable(e.to_string())
                    }
                    other => KnowledgeError::Embedding(other.to_string()),
                })?;
                let mut v: Vec<f64> = raw.into_iter().map(f64::from).collect();
                if !normalize(&mut v) {
                    return Err(KnowledgeError::Embedding("zero-norm embedding".into()));
                }
                Ok(v.into_iter().map(|x| x as f32).collect())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Embedder::Hash => "hash",
            Embedder::Remote(_) => "remote",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tokenize_strips_punctuation() {
        assert_eq!(tokenize("Wind = 15m/s, GPS!"), ["wind", "15ms", "gps"]);
        assert!(tokenize(" ... ").is_empty());
    }

    #[test]
    fn repeated_token_collapses() {
        assert_eq!(hash_embed("wind wind").unwrap(), hash_embed("wind").unwrap());
    }

    #[test]
    fn unit_norm_and_self_similarity() {
        for t in ["search and rescue", "a", "Battery failsafe triggered at 42 s"] {
            let v = hash_embed(t).unwrap();
            let n: f64 = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
            assert!((cosine(&v, &v) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(hash_embed(""), Err(KnowledgeError::EmptyText)));
        assert!(matches!(hash_embed("?!"), Err(KnowledgeError::EmptyText)));
    }
}
