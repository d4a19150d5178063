use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embed::Embedder;
use super::index::DocumentChunk;
use super::KnowledgeError;

/// Incidents longer than this many whitespace tokens are split on paragraphs.
pub const MAX_CHUNK_TOKENS: usize = 1200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub name: String,
    pub incident_count: usize,
    pub total_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub sources: Vec<SourceStats>,
}

#[derive(Debug)]
pub struct IngestedCorpus {
    pub manifest: CorpusManifest,
    pub chunks: Vec<DocumentChunk>,
    pub skipped: Vec<PathBuf>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, KnowledgeError> {
    let rd = std::fs::read_dir(dir).map_err(|e| KnowledgeError::Io(dir.display().to_string(), e))?;
    let mut out: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
    out.sort();
    Ok(out)
}

/// Reads `corpus/<source>/<incident>.txt`, one chunk per incident unless the
/// incident exceeds [`MAX_CHUNK_TOKENS`].
pub fn ingest_corpus(dir: &Path, embedder: &Embedder) -> Result<IngestedCorpus, KnowledgeError> {
    let mut manifest = CorpusManifest::default();
    let mut chunks = Vec::new();
    let mut skipped = Vec::new();
    for source_dir in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        let source = source_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut stats = SourceStats {
            name: source.clone(),
            incident_count: 0,
            total_tokens: 0,
        };
        for file in sorted_entries(&source_dir)? {
            if !file.is_file() || file.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let text = match std::fs::read_to_string(&file) {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("skipping unreadable incident {}: {e}", file.display());
                    skipped.push(file);
                    continue;
                }
            };
            if text.trim().is_empty() {
                log::warn!("skipping empty incident {}", file.display());
                skipped.push(file);
                continue;
            }
            let incident_id = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            stats.incident_count += 1;
            stats.total_tokens += text.split_whitespace().count();
            let pieces = split_incident(&text, MAX_CHUNK_TOKENS);
            let base = format!("{source}/{incident_id}");
            let single = pieces.len() == 1;
            for (i, piece) in pieces.into_iter().enumerate() {
                let id = if single { base.clone() } else { format!("{base}#{i}") };
                chunks.push(DocumentChunk::embed(id, source.clone(), piece, embedder)?);
            }
        }
        if stats.incident_count > 0 {
            manifest.sources.push(stats);
        }
    }
    if chunks.is_empty() {
        return Err(KnowledgeError::EmptyCorpus(dir.display().to_string()));
    }
    Ok(IngestedCorpus {
        manifest,
        chunks,
        skipped,
    })
}

/// Greedy paragraph packing; a single oversize paragraph is cut on word
/// boundaries.
pub fn split_incident(text: &str, max_tokens: usize) -> Vec<String> {
    let trimmed = text.trim();
    if trimmed.split_whitespace().count() <= max_tokens {
        return vec![trimmed.to_string()];
    }
    let mut paragraphs: Vec<String> = Vec::new();
    for para in trimmed.split("\n\n").map(str::trim).filter(|p| !p.is_empty()) {
        let words: Vec<&str> = para.split_whitespace().collect();
        if words.len() <= max_tokens {
            paragraphs.push(para.to_string());
        } else {
            paragraphs.extend(words.chunks(max_tokens).map(|w| w.join(" ")));
        }
    }
    let mut out = Vec::new();
    let mut current = String::new();
    let mut current_tokens = 0;
    for para in paragraphs {
        let n = para.split_whitespace().count();
        if current_tokens > 0 && current_tokens + n > max_tokens {
            out.push(std::mem::take(&mut current));
            current_tokens = 0;
        }
        if !current.is_empty() {
            current.push_str("\n\n");
        }
        current.push_str(&para);
        current_tokens += n;
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}
