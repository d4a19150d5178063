//! The two retrieval knowledge bases: real-world incident reports for
//! scenario generation and flight-controller parameter documentation for log
//! analytics.

mod corpus;
mod embed;
mod index;
mod msgdef;

use thiserror::Error;

pub use corpus::{ingest_corpus, split_incident, CorpusManifest, IngestedCorpus, SourceStats, MAX_CHUNK_TOKENS};
pub use embed::{cosine, fnv1a64, hash_bucket, hash_embed, tokenize, Embedder, HASH_DIM};
pub use index::{DocumentChunk, SearchHit, VectorIndex, INDEX_MAGIC};
pub use msgdef::{
    load_jsonl, msg_files, parse_msg_definitions, parse_msg_str, read_jsonl, to_snake_case, write_jsonl,
    MalformedLine, ParameterDoc, ParsedDefinitions,
};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corpus at {0} contains no incidents")]
    EmptyCorpus(String),
    #[error("duplicate chunk id {0:?}")]
    DuplicateId(String),
    #[error("chunk {id}: dimension {found}, index expects {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("invalid chunk: {0}")]
    InvalidChunk(String),
    #[error("bad index file: {0}")]
    BadIndexFile(String),
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// Parameter documentation indexed for semantic lookup.
///
/// Each parameter is embedded under two views: its name together with its
/// description, and the description alone. A query scores a parameter by the
/// better of the two.
#[derive(Debug, Clone)]
pub struct ParamIndex {
    docs: Vec<ParameterDoc>,
    views: Vec<Vec<Vec<f32>>>,
}

/// Embedding text for the combined view; underscores and brackets in the
/// name become spaces so name fragments can match query words.
pub fn param_view_text(doc: &ParameterDoc) -> String {
    let spaced: String = doc
        .name
        .chars()
        .map(|c| if c == '_' || c == '[' || c == ']' { ' ' } else { c })
        .collect();
    format!("{} {} {}", doc.name, spaced, doc.description)
}

impl ParamIndex {
    pub fn build(docs: Vec<ParameterDoc>, embedder: &Embedder) -> Result<Self, KnowledgeError> {
        if docs.is_empty() {
            return Err(KnowledgeError::EmptyIndex);
        }
        let mut views = Vec::with_capacity(docs.len());
        for d in &docs {
            let mut v = vec![embedder.embed(&param_view_text(d))?];
            if !tokenize(&d.description).is_empty() {
                v.push(embedder.embed(&d.description)?);
            }
            views.push(v);
        }
        Ok(Self { docs, views })
    }

    pub fn docs(&self) -> &[ParameterDoc] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Top `k` parameters by best-view cosine, descending, ties in insertion order.
    pub fn search(&self, embedder: &Embedder, query: &str, k: usize) -> Result<Vec<(ParameterDoc, f64)>, KnowledgeError> {
        if k == 0 {
            return Err(KnowledgeError::InvalidK);
        }
        if self.docs.is_empty() {
            return Err(KnowledgeError::EmptyIndex);
        }
        let q = embedder.embed(query)?;
        let mut scored: Vec<(usize, f64)> = self
            .views
            .iter()
            .enumerate()
            .map(|(i, vs)| {
                let best = vs.iter().map(|v| cosine(&q, v)).fold(f64::NEG_INFINITY, f64::max);
                (i, best)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k);
        Ok(scored.into_iter().map(|(i, s)| (self.docs[i].clone(), s)).collect())
    }
}
