use docdep::canvas::{build_canvas, shared_det_filter, BlockType, DEFAULT_K_MAX, DEFAULT_TAU_DET, DEFAULT_TAU_NMS};
use docdep::chunker::{chunk_document, store_chunks, SerializedChunk, WhitespaceTokenizer, DEFAULT_MAX_LEN};
use docdep::metrics::RelevanceJudgment;
use docdep::softroi::{embed_document, TypeEmbeddingTable};
use docdep::synth::{cross_page_edges, expected_cross_page_edges, generate_corpus, SynthConfig, SynthDoc};
use docdep::tree::{DependencyTree, Parent};

fn all_docs(cfg: &SynthConfig) -> Vec<SynthDoc> {
    let c = generate_corpus(cfg).unwrap();
    c.train.into_iter().chain(c.test).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[test]
fn gold_is_a_tree_and_detections_recover_blocks() {
    for d in all_docs(&SynthConfig::default()) {
        DependencyTree::new(d.gold.clone()).unwrap();
        let kept = shared_det_filter(&d.detections, DEFAULT_TAU_DET, DEFAULT_TAU_NMS, DEFAULT_K_MAX);
        let doc = build_canvas(&d.doc.doc_id, &d.doc.page_sizes, &kept).unwrap();
        assert_eq!(doc.len(), d.doc.len(), "{}", d.doc.doc_id);
        for (a, b) in doc.blocks.iter().zip(&d.doc.blocks) {
            assert_eq!((a.id, a.page, a.block_type, &a.text), (b.id, b.page, b.block_type, &b.text));
            assert!((a.bbox.y0 - b.bbox.y0).abs() < 1e-9);
        }
    }
}

/// Noise-free grids: the preceding title/header/visual with the most similar
/// pooled vector is the gold parent of every block.
#[test]
fn nearest_centroid_recovers_gold() {
    let cfg = SynthConfig {
        n_docs: 120,
        test_docs: 0,
        signal_strength: 1.0,
        noise_std: 0.0,
        ..Default::default()
    };
    let table = TypeEmbeddingTable::zeros(1);
    let (mut hit, mut total) = (0, 0);
    for d in all_docs(&cfg) {
        let embs = embed_document(&d.doc, &d.grids, 1.0, &table).unwrap();
        for v in 0..d.doc.len() {
            let parent = (0..v)
                .filter(|&u| {
                    let t = d.doc.blocks[u].block_type;
                    t == BlockType::Title || t.is_header() || t.is_visual()
                })
                .map(|u| (u, cosine(&embs[u].e, &embs[v].e)))
                .filter(|&(_, c)| c > 1e-9)
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(Parent::Root, |(u, _)| Parent::Block(u));
            total += 1;
            hit += usize::from(parent == d.gold.get(v));
        }
    }
    assert_eq!(hit, total);
}

#[test]
fn cross_page_rate_matches_expectation() {
    let cfg = SynthConfig::default();
    let docs = all_docs(&cfg);
    assert!(docs.len() >= 100);
    let (mut cross, mut edges, mut expected) = (0usize, 0usize, 0.0);
    for d in &docs {
        let (c, t) = cross_page_edges(&d.doc, &d.gold);
        cross += c;
        edges += t;
        expected += expected_cross_page_edges(&d.gold, d.doc.num_pages(), cfg.page_capacity());
    }
    let observed = cross as f64 / edges as f64;
    let expected = expected / edges as f64;
    assert!((observed - expected).abs() <= 0.1 * expected, "{observed} vs {expected}");
}

#[test]
fn judgments_nonempty_under_default_chunking() {
    for d in all_docs(&SynthConfig::default()) {
        let chunks = chunk_document(&d.gold, &d.doc, DEFAULT_MAX_LEN, &WhitespaceTokenizer);
        let ser: Vec<SerializedChunk> = store_chunks(&chunks, &d.doc, true)
            .into_iter()
            .map(|s| SerializedChunk {
                chunk_id: s.chunk.chunk_id,
                text: s.text,
                token_count: s.token_count,
            })
            .collect();
        for j in &d.judgments {
            let spans = j.answer_spans.clone().unwrap();
            let r = RelevanceJudgment::from_answer_spans(&j.query_id, &spans, &ser);
            assert_eq!(r.relevant_chunk_ids.len(), 1, "{}", j.query_id);
        }
    }
}
