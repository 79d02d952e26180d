//! Corpus-level chunk index with BM25 and exact cosine search.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chunker::SerializedChunk;
use crate::error::{Error, Result};

pub const INDEX_VERSION: u32 = 1;
pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_RETRIEVAL_K: usize = 4;
/// Recorded in the index so the scheme travels with the data.
pub const TOKENIZER_NOTE: &str = "lowercase; split on whitespace and ASCII punctuation";

/// Lowercased terms, split on whitespace and ASCII punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub chunk: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkIndex {
    pub version: u32,
    pub tokenizer: String,
    /// Chunks in insertion order; postings refer to positions here.
    pub chunks: Vec<SerializedChunk>,
    /// Term count of each chunk under [`tokenize`].
    pub lengths: Vec<usize>,
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub avg_len: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<Vec<Vec<f64>>>,
}

impl ChunkIndex {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let idx: ChunkIndex = serde_json::from_str(s)?;
        if idx.version != INDEX_VERSION {
            return Err(Error::parse(
                "index",
                format!("unsupported index version {}", idx.version),
            ));
        }
        Ok(idx)
    }
}

/// Builds postings and statistics; dense vectors are attached as given.
pub fn build_index(chunks: Vec<SerializedChunk>, dense: Option<Vec<Vec<f64>>>) -> Result<ChunkIndex> {
    let mut seen = BTreeSet::new();
    for c in &chunks {
        if !seen.insert(c.chunk_id.as_str()) {
            return Err(Error::DuplicateChunkId(c.chunk_id.clone()));
        }
    }
    if let Some(vecs) = &dense {
        if vecs.len() != chunks.len() {
            return Err(Error::DimMismatch {
                expected: chunks.len(),
                got: vecs.len(),
            });
        }
        if let Some(first) = vecs.first() {
            if let Some(bad) = vecs.iter().find(|v| v.len() != first.len()) {
                return Err(Error::DimMismatch {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
    }
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut lengths = Vec::with_capacity(chunks.len());
    for (i, c) in chunks.iter().enumerate() {
        let terms = tokenize(&c.text);
        lengths.push(terms.len());
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in terms {
            *tf.entry(t).or_default() += 1;
        }
        for (t, n) in tf {
            postings.entry(t).or_default().push(Posting { chunk: i, tf: n });
        }
    }
    let avg_len = if chunks.is_empty() {
        0.0
    } else {
        lengths.iter().sum::<usize>() as f64 / chunks.len() as f64
    };
    Ok(ChunkIndex {
        version: INDEX_VERSION,
        tokenizer: TOKENIZER_NOTE.to_string(),
        chunks,
        lengths,
        postings,
        avg_len,
        dense,
    })
}

fn top_k(index: &ChunkIndex, mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.chunks[a.0].chunk_id.cmp(&index.chunks[b.0].chunk_id))
    });
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(i, s)| (index.chunks[i].chunk_id.clone(), s))
        .collect()
}

/// BM25 ranking with the `ln(1 + ...)` idf.
///
/// Only chunks sharing a term with the query are ranked. Repeated query
/// terms count once.
pub fn bm25_search(index: &ChunkIndex, query: &str, k: usize, k1: f64, b: f64) -> Vec<(String, f64)> {
    let n = index.len() as f64;
    let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
    let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
    for t in &terms {
        let Some(list) = index.postings.get(t) else {
            continue;
        };
        let df = list.len() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        for p in list {
            let tf = p.tf as f64;
            let len = index.lengths[p.chunk] as f64;
            let norm = if index.avg_len > 0.0 { len / index.avg_len } else { 0.0 };
            *scores.entry(p.chunk).or_default() += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
        }
    }
    top_k(index, scores.into_iter().collect(), k)
}

/// Exact cosine scan over the dense vectors.
pub fn dense_search(index: &ChunkIndex, query: &[f64], k: usize) -> Result<Vec<(String, f64)>> {
    let vecs = index.dense.as_ref().ok_or(Error::NoDenseVectors)?;
    if let Some(first) = vecs.first() {
        if first.len() != query.len() {
            return Err(Error::DimMismatch {
                expected: first.len(),
                got: query.len(),
            });
        }
    }
    let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scored = vecs
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = v.iter().zip(query).map(|(a, b)| a * b).sum();
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cos = if qn == 0.0 || vn == 0.0 { 0.0 } else { dot / (qn * vn) };
            (i, cos)
        })
        .collect();
    Ok(top_k(index, scored, k))
}
