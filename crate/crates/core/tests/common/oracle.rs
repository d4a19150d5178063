//! Reference implementations written from the definitions, sharing no code
//! with the library.

use std::collections::{BTreeSet, HashMap};

pub const DIM: u64 = 384;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(1099511628211);
    }
    h
}

pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let w: String = word.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        if !w.is_empty() {
            out.push(w);
        }
    }
    out
}

/// Sparse bucket counts.
pub fn bag(text: &str) -> HashMap<u64, f64> {
    let mut m = HashMap::new();
    for t in tokens(text) {
        *m.entry(fnv1a(t.as_bytes()) % DIM).or_insert(0.0) += 1.0;
    }
    m
}

pub fn cosine(a: &HashMap<u64, f64>, b: &HashMap<u64, f64>) -> f64 {
    let dot: f64 = a.iter().map(|(k, x)| x * b.get(k).copied().unwrap_or(0.0)).sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Brute-force top-k by cosine, earlier documents first on equal scores.
pub fn rank<'a>(query: &str, docs: &[(&'a str, &str)], k: usize) -> Vec<(&'a str, f64)> {
    let q = bag(query);
    let mut scored: Vec<(usize, &str, f64)> = docs
        .iter()
        .enumerate()
        .map(|(i, (id, text))| (i, *id, cosine(&q, &bag(text))))
        .collect();
    scored.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(_, id, s)| (id, s)).collect()
}

pub fn jaccard(a: &str, b: &str) -> f64 {
    let a: BTreeSet<String> = tokens(a).into_iter().collect();
    let b: BTreeSet<String> = tokens(b).into_iter().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}

pub fn precision(retrieved: &[&str], relevant: &BTreeSet<String>) -> f64 {
    let hits = retrieved.iter().filter(|id| relevant.contains(**id)).count();
    hits as f64 / retrieved.len() as f64
}
