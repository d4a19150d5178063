use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, Embedder};
use super::KnowledgeError;

pub const INDEX_MAGIC: &[u8; 6] = b"ASTIX1";
const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub id: String,
    pub source: String,
    pub text: String,
    pub token_count: usize,
    pub vector: Vec<f32>,
}

impl DocumentChunk {
    pub fn embed(
        id: impl Into<String>,
        source: impl Into<String>,
        text: impl Into<String>,
        embedder: &Embedder,
    ) -> Result<Self, KnowledgeError> {
        let text = text.into();
        let vector = embedder.embed(&text)?;
        Ok(Self {
            id: id.into(),
            source: source.into(),
            token_count: text.split_whitespace().count(),
            text,
            vector,
        })
    }
}

/// Exact brute-force cosine index. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    chunks: Vec<DocumentChunk>,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit<'a> {
    pub chunk: &'a DocumentChunk,
    pub score: f64,
}

impl VectorIndex {
    pub fn build(chunks: Vec<DocumentChunk>) -> Result<Self, KnowledgeError> {
        let first = chunks.first().ok_or(KnowledgeError::EmptyIndex)?;
        let dim = first.vector.len();
        let mut ids = HashSet::new();
        for c in &chunks {
            if c.vector.len() != dim {
                return Err(KnowledgeError::DimensionMismatch {
                    id: c.id.clone(),
                    expected: dim,
                    found: c.vector.len(),
                });
            }
            if c.text.trim().is_empty() {
                return Err(KnowledgeError::InvalidChunk(format!("{}: empty text", c.id)));
            }
            let norm = cosine(&c.vector, &c.vector).sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(KnowledgeError::InvalidChunk(format!(
                    "{}: vector norm {norm} is not 1",
                    c.id
                )));
            }
            if !ids.insert(c.id.clone()) {
                return Err(KnowledgeError::DuplicateId(c.id.clone()));
            }
        }
        Ok(Self { chunks, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[DocumentChunk] {
        &self.chunks
    }

    pub fn get(&self, id: &str) -> Option<&DocumentChunk> {
        self.chunks.iter().find(|c| c.id == id)
    }

    /// Top `min(k, len)` chunks by cosine, descending; ties keep insertion order.
    pub fn search_vector(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit<'_>>, KnowledgeError> {
        if k == 0 {
            return Err(KnowledgeError::InvalidK);
        }
        if query.len() != self.dim {
            return Err(KnowledgeError::DimensionMismatch {
                id: "<query>".into(),
                expected: self.dim,
                found: query.len(),
            });
        }
        let mut hits: Vec<SearchHit<'_>> = self
            .chunks
            .iter()
            .map(|c| SearchHit {
                chunk: c,
                score: cosine(query, &c.vector),
            })
            .collect();
        // stable sort keeps insertion order among equal scores
        hits.sort_by(|a, b| b.score.total_cmp(&a.score));
        hits.truncate(k);
        Ok(hits)
    }

    pub fn search(
        &self,
        embedder: &Embedder,
        query: &str,
        k: usize,
    ) -> Result<Vec<SearchHit<'_>>, KnowledgeError> {
        let q = embedder.embed(query)?;
        self.search_vector(&q, k)
    }

    /// Little-endian: magic, u32 dim, u32 count, then per chunk the
    /// u32-length-prefixed id, source and text followed by `dim` f32 values.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.chunks.len() as u32).to_le_bytes())?;
        for c in &self.chunks {
            for s in [&c.id, &c.source, &c.text] {
                w.write_all(&(s.len() as u32).to_le_bytes())?;
                w.write_all(s.as_bytes())?;
            }
            for v in &c.vector {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KnowledgeError> {
        let mut r = bytes;
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(|_| KnowledgeError::BadIndexFile("truncated header".into()))?;
        if &magic != INDEX_MAGIC {
            return Err(KnowledgeError::BadIndexFile("bad magic".into()));
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u32(&mut r)? as usize;
        let mut chunks = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let id = read_string(&mut r)?;
            let source = read_string(&mut r)?;
            let text = read_string(&mut r)?;
            let mut vector = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut b = [0u8; 4];
                r.read_exact(&mut b).map_err(|_| KnowledgeError::BadIndexFile("truncated vector".into()))?;
                vector.push(f32::from_le_bytes(b));
            }
            chunks.push(DocumentChunk {
                token_count: text.split_whitespace().count(),
                id,
                source,
                text,
                vector,
            });
        }
        if !r.is_empty() {
            return Err(KnowledgeError::BadIndexFile("trailing bytes".into()));
        }
        Self::build(chunks)
    }

    pub fn save(&self, path: &Path) -> Result<(), KnowledgeError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| KnowledgeError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let bytes = std::fs::read(path).map_err(|e| KnowledgeError::Io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_u32(r: &mut &[u8]) -> Result<u32, KnowledgeError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| KnowledgeError::BadIndexFile("truncated length".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut &[u8]) -> Result<String, KnowledgeError> {
    let len = read_u32(r)? as usize;
    if len > r.len() {
        return Err(KnowledgeError::BadIndexFile("string overruns file".into()));
    }
    let (head, tail) = r.split_at(len);
    *r = tail;
    String::from_utf8(head.to_vec()).map_err(|_| KnowledgeError::BadIndexFile("invalid utf-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(id: &str, text: &str) -> DocumentChunk {
        DocumentChunk::embed(id, "test", text, &Embedder::Hash).unwrap()
    }

    fn sample() -> VectorIndex {
        VectorIndex::build(vec![
            chunk("a", "drone lost gps signal near power lines"),
            chunk("b", "battery failsafe during package delivery"),
            chunk("c", "hiker located by thermal camera"),
        ])
        .unwrap()
    }

    #[test]
    fn self_query_ranks_first() {
        let idx = sample();
        let hits = idx.search(&Embedder::Hash, "battery failsafe during package delivery", 2).unwrap();
        assert_eq!(hits[0].chunk.id, "b");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn k_larger_than_index() {
        let idx = sample();
        assert_eq!(idx.search(&Embedder::Hash, "drone", 50).unwrap().len(), 3);
    }

    #[test]
    fn k_zero_rejected() {
        assert!(matches!(sample().search(&Embedder::Hash, "x", 0), Err(KnowledgeError::InvalidK)));
    }

    #[test]
    fn ties_keep_insertion_order() {
        let idx = VectorIndex::build(vec![chunk("x1", "same words"), chunk("x2", "same words")]).unwrap();
        let hits = idx.search(&Embedder::Hash, "unrelated query tokens", 2).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.chunk.id.as_str()).collect();
        assert_eq!(ids, ["x1", "x2"]);
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(VectorIndex::build(vec![]), Err(KnowledgeError::EmptyIndex)));
        assert!(matches!(
            VectorIndex::build(vec![chunk("a", "x"), chunk("a", "y")]),
            Err(KnowledgeError::DuplicateId(_))
        ));
        let mut bad = chunk("n", "z");
        bad.vector[0] += 0.5;
        assert!(matches!(VectorIndex::build(vec![bad]), Err(KnowledgeError::InvalidChunk(_))));
    }

    #[test]
    fn binary_round_trip() {
        let idx = sample();
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..6], b"ASTIX1");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 384);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 3);
        assert_eq!(VectorIndex::from_bytes(&bytes).unwrap(), idx);
        assert!(VectorIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(VectorIndex::from_bytes(b"NOPE00").is_err());
    }
}
