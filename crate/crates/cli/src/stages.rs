//! One function per pipeline stage, each reading and writing the
//! interchange files. Documents are processed in parallel on the current
//! rayon pool and written in doc-id order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use docdep::canvas::{build_canvas, shared_det_filter, Document};
use docdep::chunker::{chunk_document, length_chunks, store_chunks, SerializedChunk, StoredChunk, WhitespaceTokenizer};
use docdep::config::{PipelineConfig, Retriever};
use docdep::index::{bm25_search, build_index, dense_search, ChunkIndex};
use docdep::io::{
    doc_path, list_doc_ids, load_checkpoint, read_detections, read_json, read_jsonl, save_checkpoint, write_json,
    write_jsonl, JudgmentRecord, QueryRecord, ResultRecord, TreeFile,
};
use docdep::metrics::{
    parent_counts, parent_f1, retrieval_metrics, steds, summary_table, EdgeSubsetTag, MetricReport, RelevanceJudgment,
    STEDS_CONVENTION,
};
use docdep::parser::{parse_encoded, train, EncodedDoc, EpochLog, HeadParams, TrainOutcome};
use docdep::softroi::{embed_document, BlockEmbedding, TokenGrid, TypeEmbeddingTable};
use docdep::tree::ParentMap;
use docdep::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ChunkStrategy {
    /// Section-aware chunks from the dependency tree.
    #[default]
    Tree,
    /// Fixed-length packing in reading order; the comparison baseline.
    Length,
}

fn for_each_doc<T, F>(ids: &[String], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&str) -> Result<T> + Sync,
{
    ids.par_iter().map(|id| f(id)).collect()
}

fn check_doc_id(expected: &str, got: &str) -> Result<()> {
    if expected != got {
        return Err(Error::IdMismatch(format!("file {expected} holds document {got}")));
    }
    Ok(())
}

pub fn read_document(blocks: &Path, id: &str) -> Result<Document> {
    let doc: Document = read_json(&doc_path(blocks, id, ".json"))?;
    check_doc_id(id, &doc.doc_id)?;
    doc.validate()?;
    Ok(doc)
}

pub fn read_tree(dir: &Path, id: &str) -> Result<ParentMap> {
    let file: TreeFile = read_json(&doc_path(dir, id, ".json"))?;
    check_doc_id(id, &file.doc_id)?;
    file.to_parents()
}

pub fn read_embeddings(dir: &Path, id: &str) -> Result<Vec<BlockEmbedding>> {
    read_jsonl(&doc_path(dir, id, ".jsonl"))
}

/// Detections to normalized block documents.
pub fn ingest(detections: &Path, out: &Path, cfg: &PipelineConfig) -> Result<Vec<String>> {
    let ids = list_doc_ids(detections, ".jsonl")?;
    let docs = for_each_doc(&ids, |id| {
        let (header, dets) = read_detections(&doc_path(detections, id, ".jsonl"))?;
        check_doc_id(id, &header.doc_id)?;
        let kept = shared_det_filter(&dets, cfg.tau_det, cfg.tau_nms, cfg.k_max);
        build_canvas(id, &header.page_sizes, &kept)
    })?;
    fs::create_dir_all(out)?;
    for doc in &docs {
        write_json(&doc_path(out, &doc.doc_id, ".json"), doc)?;
    }
    Ok(ids)
}

/// Block embeddings from token grids.
pub fn pool(blocks: &Path, grids: &Path, out: &Path, cfg: &PipelineConfig) -> Result<Vec<String>> {
    let ids = list_doc_ids(blocks, ".json")?;
    let table = TypeEmbeddingTable::seeded(cfg.train.type_dim, cfg.seed);
    let embs = for_each_doc(&ids, |id| {
        let doc = read_document(blocks, id)?;
        let grids: Vec<TokenGrid> = read_jsonl(&doc_path(grids, id, ".jsonl"))?;
        for g in &grids {
            g.validate()?;
        }
        embed_document(&doc, &grids, cfg.alpha, &table)
    })?;
    fs::create_dir_all(out)?;
    for (id, e) in ids.iter().zip(&embs) {
        write_jsonl(&doc_path(out, id, ".jsonl"), e)?;
    }
    Ok(ids)
}

fn encode(blocks: &Path, embeddings: &Path, id: &str, cfg: &PipelineConfig) -> Result<(Document, EncodedDoc)> {
    let doc = read_document(blocks, id)?;
    let embs = read_embeddings(embeddings, id)?;
    let enc = EncodedDoc::new(&doc, &embs, &cfg.candidates)?;
    Ok((doc, enc))
}

/// Trains the scoring head on every document that has a gold tree.
pub fn train_model(
    blocks: &Path,
    embeddings: &Path,
    gold: &Path,
    cfg: &PipelineConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let ids = list_doc_ids(gold, ".json")?;
    let corpus = for_each_doc(&ids, |id| {
        let (_, enc) = encode(blocks, embeddings, id, cfg)?;
        let tree = read_tree(gold, id)?;
        if tree.len() != enc.len() {
            return Err(Error::IdMismatch(format!(
                "{id}: {} blocks but {} gold parents",
                enc.len(),
                tree.len()
            )));
        }
        Ok((enc, tree))
    })?;
    train(&corpus, &cfg.train, on_epoch)
}

pub fn save_model(path: &Path, params: &HeadParams) -> Result<()> {
    save_checkpoint(path, params)
}

/// Scores candidate edges and decodes one tree per document.
pub fn parse(blocks: &Path, embeddings: &Path, model: &Path, out: &Path, cfg: &PipelineConfig) -> Result<Vec<String>> {
    let params = load_checkpoint(model)?;
    parse_with(blocks, embeddings, &params, out, cfg)
}

pub fn parse_with(
    blocks: &Path,
    embeddings: &Path,
    params: &HeadParams,
    out: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<String>> {
    let ids = list_doc_ids(blocks, ".json")?;
    let trees = for_each_doc(&ids, |id| {
        let (_, enc) = encode(blocks, embeddings, id, cfg)?;
        let (parents, edges) = parse_encoded(&enc, params, cfg.decoder)?;
        Ok(TreeFile::from_parents(id, &parents, Some(&edges)))
    })?;
    fs::create_dir_all(out)?;
    for t in &trees {
        write_json(&doc_path(out, &t.doc_id, ".json"), t)?;
    }
    Ok(ids)
}

/// Chunk store per document. `trees` is unused by the length strategy.
pub fn chunk(
    blocks: &Path,
    trees: Option<&Path>,
    out: &Path,
    strategy: ChunkStrategy,
    cfg: &PipelineConfig,
) -> Result<Vec<String>> {
    let ids = list_doc_ids(blocks, ".json")?;
    let stores = for_each_doc(&ids, |id| {
        let doc = read_document(blocks, id)?;
        let chunks = match strategy {
            ChunkStrategy::Tree => {
                let dir = trees.ok_or_else(|| Error::ConfigInvalid("tree chunking needs --trees".into()))?;
                let tree = read_tree(dir, id)?;
                if tree.len() != doc.len() {
                    return Err(Error::IdMismatch(format!(
                        "{id}: {} blocks but {} tree entries",
                        doc.len(),
                        tree.len()
                    )));
                }
                chunk_document(&tree, &doc, cfg.max_len, &WhitespaceTokenizer)
            }
            ChunkStrategy::Length => length_chunks(&doc, cfg.max_len, &WhitespaceTokenizer),
        };
        Ok(store_chunks(&chunks, &doc, cfg.include_metadata))
    })?;
    fs::create_dir_all(out)?;
    for (id, s) in ids.iter().zip(&stores) {
        write_jsonl(&doc_path(out, id, ".jsonl"), s)?;
    }
    Ok(ids)
}

pub fn read_chunk_store(chunks: &Path) -> Result<Vec<StoredChunk>> {
    let mut all = Vec::new();
    for id in list_doc_ids(chunks, ".jsonl")? {
        all.extend(read_jsonl::<StoredChunk>(&doc_path(chunks, &id, ".jsonl"))?);
    }
    Ok(all)
}

fn mean_vector(embs: &[BlockEmbedding], block_ids: &[usize]) -> Result<Vec<f64>> {
    let dim = embs.first().map_or(0, |e| e.e.len());
    let mut v = vec![0.0; dim];
    for &b in block_ids {
        let e = embs
            .get(b)
            .ok_or_else(|| Error::IdMismatch(format!("chunk block {b} has no embedding")))?;
        for (acc, x) in v.iter_mut().zip(&e.e) {
            *acc += x;
        }
    }
    let n = block_ids.len().max(1) as f64;
    Ok(v.into_iter().map(|x| x / n).collect())
}

/// Corpus-level index over every chunk store in `chunks`. With
/// `embeddings`, each chunk also gets the mean of its blocks' vectors.
pub fn index(chunks: &Path, embeddings: Option<&Path>) -> Result<ChunkIndex> {
    let ids = list_doc_ids(chunks, ".jsonl")?;
    let per_doc = for_each_doc(&ids, |id| {
        let stored: Vec<StoredChunk> = read_jsonl(&doc_path(chunks, id, ".jsonl"))?;
        let dense = match embeddings {
            Some(dir) => {
                let embs = read_embeddings(dir, id)?;
                Some(
                    stored
                        .iter()
                        .map(|c| mean_vector(&embs, &c.chunk.block_ids))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            None => None,
        };
        Ok((stored, dense))
    })?;
    let mut serialized = Vec::new();
    let mut dense: Option<Vec<Vec<f64>>> = embeddings.map(|_| Vec::new());
    for (stored, vecs) in per_doc {
        serialized.extend(stored.into_iter().map(|c| SerializedChunk {
            chunk_id: c.chunk.chunk_id,
            text: c.text,
            token_count: c.token_count,
        }));
        if let (Some(all), Some(v)) = (dense.as_mut(), vecs) {
            all.extend(v);
        }
    }
    build_index(serialized, dense)
}

pub fn write_index(path: &Path, index: &ChunkIndex) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = index.to_json()?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_index(path: &Path) -> Result<ChunkIndex> {
    ChunkIndex::from_json(&fs::read_to_string(path).map_err(docdep::io::with_path(path))?)
}

/// Top-k ranking for every query.
pub fn retrieve(index: &ChunkIndex, queries: &[QueryRecord], cfg: &PipelineConfig) -> Result<Vec<ResultRecord>> {
    queries
        .par_iter()
        .map(|q| {
            let ranking = match cfg.retriever {
                Retriever::Bm25 => bm25_search(index, &q.text, cfg.k, cfg.k1, cfg.b),
                Retriever::Dense => {
                    let v = q
                        .vector
                        .as_ref()
                        .ok_or_else(|| Error::parse(format!("query {}", q.query_id), "dense retrieval needs a vector"))?;
                    dense_search(index, v, cfg.k)?
                }
            };
            Ok(ResultRecord {
                query_id: q.query_id.clone(),
                ranking,
            })
        })
        .collect()
}

/// Inputs of `eval`; either half may be absent.
#[derive(Debug, Clone, Default)]
pub struct EvalInputs<'a> {
    pub trees: Option<&'a Path>,
    pub gold: Option<&'a Path>,
    /// Enables the per-subset parent F1.
    pub blocks: Option<&'a Path>,
    pub results: Option<&'a Path>,
    pub judgments: Option<&'a Path>,
    /// Needed when judgments carry answer spans.
    pub chunks: Option<&'a Path>,
}

fn subset_name(tag: EdgeSubsetTag) -> &'static str {
    match tag {
        EdgeSubsetTag::Local => "local",
        EdgeSubsetTag::CrossPage => "cross_page",
        EdgeSubsetTag::FigTable => "fig_table",
    }
}

/// Resolves judgment records into chunk-id sets.
pub fn resolve_judgments(records: &[JudgmentRecord], chunks: &[SerializedChunk]) -> Result<Vec<RelevanceJudgment>> {
    records
        .iter()
        .map(|r| match (&r.relevant_chunk_ids, &r.answer_spans) {
            (Some(ids), _) => Ok(RelevanceJudgment {
                query_id: r.query_id.clone(),
                relevant_chunk_ids: ids.clone(),
                method: docdep::metrics::JudgmentMethod::Explicit,
            }),
            (None, Some(spans)) => Ok(RelevanceJudgment::from_answer_spans(&r.query_id, spans, chunks)),
            (None, None) => Err(Error::parse(
                format!("judgment {}", r.query_id),
                "needs relevant_chunk_ids or answer_spans",
            )),
        })
        .collect()
}

/// Evaluation report as JSON plus a text summary table.
pub fn eval(inputs: &EvalInputs, cfg: &PipelineConfig) -> Result<(Value, String)> {
    let mut report = serde_json::Map::new();
    let mut rows: Vec<(String, f64)> = Vec::new();

    if let (Some(trees), Some(gold)) = (inputs.trees, inputs.gold) {
        let ids = list_doc_ids(gold, ".json")?;
        let per_doc = for_each_doc(&ids, |id| {
            let pred = read_tree(trees, id)?;
            let g = read_tree(gold, id)?;
            let doc = inputs.blocks.map(|b| read_document(b, id)).transpose()?;
            let mut subsets = Vec::new();
            if let Some(doc) = &doc {
                for tag in EdgeSubsetTag::ALL {
                    subsets.push(parent_counts(&pred, &g, Some((tag, doc)))?);
                }
            }
            Ok((parent_f1(&pred, &g, None)?, steds(&pred, &g)?, subsets))
        })?;
        let mut f1 = BTreeMap::new();
        let mut st = BTreeMap::new();
        let mut pooled = [(0usize, 0usize); 3];
        for (id, (f, s, subsets)) in ids.iter().zip(&per_doc) {
            f1.insert(id.clone(), *f);
            st.insert(id.clone(), *s);
            for (acc, (hit, total)) in pooled.iter_mut().zip(subsets) {
                acc.0 += hit;
                acc.1 += total;
            }
        }
        let f1 = MetricReport::from_items("parent_f1", None, f1);
        let st = MetricReport::from_items("steds", None, st);
        rows.push(("parent_f1".into(), f1.macro_avg));
        rows.push(("steds".into(), st.macro_avg));
        report.insert("parent_f1".into(), serde_json::to_value(&f1)?);
        report.insert("steds".into(), serde_json::to_value(&st)?);
        report.insert("steds_convention".into(), json!(STEDS_CONVENTION));
        if inputs.blocks.is_some() {
            let mut subsets = serde_json::Map::new();
            for (tag, (hit, total)) in EdgeSubsetTag::ALL.iter().zip(pooled) {
                let v = if total == 0 { 1.0 } else { hit as f64 / total as f64 };
                rows.push((format!("parent_f1[{}]", subset_name(*tag)), v));
                subsets.insert(subset_name(*tag).into(), json!({"f1": v, "edges": total}));
            }
            report.insert("parent_f1_subsets".into(), Value::Object(subsets));
        }
    }

    if let (Some(results), Some(judgments)) = (inputs.results, inputs.judgments) {
        let results: Vec<ResultRecord> = read_jsonl(results)?;
        let records: Vec<JudgmentRecord> = read_jsonl(judgments)?;
        let chunks: Vec<SerializedChunk> = match inputs.chunks {
            Some(dir) => read_chunk_store(dir)?
                .into_iter()
                .map(|c| SerializedChunk {
                    chunk_id: c.chunk.chunk_id,
                    text: c.text,
                    token_count: c.token_count,
                })
                .collect(),
            None => Vec::new(),
        };
        let judged = resolve_judgments(&records, &chunks)?;
        let rankings: BTreeMap<String, Vec<String>> = results
            .into_iter()
            .map(|r| (r.query_id, r.ranking.into_iter().map(|(id, _)| id).collect()))
            .collect();
        let r = retrieval_metrics(&rankings, &judged, cfg.k);
        let per = |f: fn(&docdep::metrics::QueryScores) -> f64| -> BTreeMap<String, f64> {
            r.per_query.iter().map(|(q, s)| (q.clone(), f(s))).collect()
        };
        for (name, f) in [
            ("ndcg", (|s: &docdep::metrics::QueryScores| s.ndcg) as fn(&_) -> f64),
            ("precision", |s| s.precision),
            ("recall", |s| s.recall),
        ] {
            let m = MetricReport::from_items(name, Some(r.k), per(f));
            rows.push((format!("{name}@{}", r.k), m.macro_avg));
            report.insert(name.into(), serde_json::to_value(&m)?);
        }
        report.insert("evaluated_queries".into(), json!(r.evaluated));
        report.insert("skipped_empty_queries".into(), json!(r.skipped_empty));
    }
    Ok((Value::Object(report), summary_table(&rows)))
}
