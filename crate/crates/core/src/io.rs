//! JSON and JSON-Lines interchange files.
//!
//! Every per-document artifact lives in its own file named after the
//! document id, so stages can be rerun on any subset of a corpus.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::canvas::RawDetection;
use crate::error::{Error, Result};
use crate::parser::{HeadParams, ScoredEdge, TENSOR_NAMES};
use crate::softroi::TypeEmbeddingTable;
use crate::tree::{Parent, ParentMap};

pub const CHECKPOINT_VERSION: u32 = 1;

fn parse_err(path: &Path, line: usize, e: impl std::fmt::Display) -> Error {
    Error::parse(format!("{}:{}", path.display(), line), e.to_string())
}

/// Prefixes an I/O error with the path it concerns.
pub fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(with_path(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e))
}

/// Compact JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads one value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path).map_err(with_path(path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Document ids with a file `<id><ext>` in `dir`, sorted.
pub fn list_doc_ids(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(with_path(dir))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(id) = name.strip_suffix(ext) {
            if !id.is_empty() {
                ids.push(id.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn doc_path(dir: &Path, doc_id: &str, ext: &str) -> PathBuf {
    dir.join(format!("{doc_id}{ext}"))
}

/// First line of a detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionHeader {
    pub doc_id: String,
    pub page_sizes: Vec<(f64, f64)>,
}

/// Header line then one detection per line.
pub fn read_detections(path: &Path) -> Result<(DetectionHeader, Vec<RawDetection>)> {
    let reader = BufReader::new(fs::File::open(path).map_err(with_path(path))?);
    let mut header: Option<DetectionHeader> = None;
    let mut dets = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e))?);
        } else {
            dets.push(serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e))?);
        }
    }
    let header = header.ok_or_else(|| parse_err(path, 1, "missing document header line"))?;
    Ok((header, dets))
}

pub fn write_detections(path: &Path, header: &DetectionHeader, dets: &[RawDetection]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for d in dets {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub child: usize,
    pub parent: Parent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Per-document tree file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub doc_id: String,
    pub edges: Vec<TreeEdge>,
}

impl TreeFile {
    /// Edges of `parents`, with scores looked up from `scored` when given.
    pub fn from_parents(doc_id: &str, parents: &ParentMap, scored: Option<&[ScoredEdge]>) -> Self {
        let edges = parents
            .0
            .iter()
            .enumerate()
            .map(|(child, &parent)| TreeEdge {
                child,
                parent,
                score: scored.and_then(|s| {
                    s.iter()
                        .find(|e| e.child == child && e.parent == parent)
                        .map(|e| e.score)
                }),
            })
            .collect();
        TreeFile {
            doc_id: doc_id.to_string(),
            edges,
        }
    }

    /// Parent map; every child id in `0..n` must appear exactly once.
    pub fn to_parents(&self) -> Result<ParentMap> {
        let n = self.edges.len();
        let mut parents: Vec<Option<Parent>> = vec![None; n];
        for e in &self.edges {
            if e.child >= n || parents[e.child].is_some() {
                return Err(Error::IdMismatch(format!(
                    "{}: child {} duplicated or out of range",
                    self.doc_id, e.child
                )));
            }
            parents[e.child] = Some(e.parent);
        }
        Ok(ParentMap(parents.into_iter().map(|p| p.expect("all filled")).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
}

/// Judgment line: explicit chunk ids or answer spans to resolve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_chunk_ids: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_spans: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub query_id: String,
    pub ranking: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    embed_dim: usize,
    type_dim: usize,
    hidden: usize,
    tensors: Vec<NamedTensor>,
}

pub fn checkpoint_to_json(params: &HeadParams) -> Result<String> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        embed_dim: params.embed_dim(),
        type_dim: params.type_dim(),
        hidden: params.hidden_dim(),
        tensors: TENSOR_NAMES
            .iter()
            .zip(params.shapes())
            .zip(params.tensors())
            .map(|((name, shape), data)| NamedTensor {
                name: name.to_string(),
                shape,
                data: data.to_vec(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn checkpoint_from_json(text: &str) -> Result<HeadParams> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::parse("checkpoint", format!("unsupported version {}", file.version)));
    }
    let mut params = HeadParams::zeros(file.embed_dim, file.type_dim, file.hidden);
    params.types = TypeEmbeddingTable::zeros(file.type_dim);
    let shapes = params.shapes();
    if file.tensors.len() != TENSOR_NAMES.len() {
        return Err(Error::parse("checkpoint", "wrong number of tensors"));
    }
    for (i, (slot, t)) in params.tensors_mut().into_iter().zip(&file.tensors).enumerate() {
        if t.name != TENSOR_NAMES[i] || t.shape != shapes[i] || t.data.len() != slot.len() {
            return Err(Error::parse(
                "checkpoint",
                format!("tensor {} does not match {} {:?}", t.name, TENSOR_NAMES[i], shapes[i]),
            ));
        }
        slot.copy_from_slice(&t.data);
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &HeadParams) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = checkpoint_to_json(params)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<HeadParams> {
    checkpoint_from_json(&fs::read_to_string(path).map_err(with_path(path))?)
}
