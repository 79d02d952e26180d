//! Seeded synthetic corpora with known hierarchy.
//!
//! Each document is a title, a few section headers, and per section a run of
//! paragraphs and figure/table + caption pairs, stacked top to bottom and cut
//! into pages at uniformly random block boundaries.
//!
//! Token vectors carry a planted signal. Every block has an identity vector
//! built from a corpus-wide palette of orthogonal directions: the title `t`,
//! `s_k` for the k-th section of a document and `f_j` for its j-th visual.
//!
//! | block     | identity      |
//! |-----------|---------------|
//! | title     | `t`           |
//! | header    | `s_k + t/2`   |
//! | paragraph | `s_k`         |
//! | visual    | `s_k + f_j`   |
//! | caption   | `f_j`         |
//!
//! Each gold parent is then the nearest preceding title/header/visual
//! identity. Tokens inside a block are `signal * identity + noise`.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::canvas::{type_label, Block, BlockType, Document, RawDetection, Rect};
use crate::error::{Error, Result};
use crate::io::{doc_path, write_detections, write_json, write_jsonl, DetectionHeader, JudgmentRecord, QueryRecord, TreeFile};
use crate::softroi::{Token, TokenGrid};
use crate::tree::{Parent, ParentMap};

/// Letter size in points.
pub const PAGE_SIZE: (f64, f64) = (612.0, 792.0);
const TOP: f64 = 0.05;
const USABLE: f64 = 0.9;
const GAP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Total documents, the last `test_docs` of which form the test split.
    pub n_docs: usize,
    pub test_docs: usize,
    pub pages_per_doc: (usize, usize),
    pub sections_per_doc: (usize, usize),
    /// Body slots per section; a slot is a paragraph or a visual + caption.
    pub blocks_per_section: (usize, usize),
    pub figure_rate: f64,
    pub embedding_dim: usize,
    pub signal_strength: f64,
    /// Per-component standard deviation of token noise.
    pub noise_std: f64,
    /// Tokens per side of the square page lattice.
    pub grid_size: usize,
    pub questions_per_doc: usize,
    /// Add low-confidence junk and duplicate detections for the filter.
    pub distractors: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_docs: 250,
            test_docs: 50,
            pages_per_doc: (2, 4),
            sections_per_doc: (2, 4),
            blocks_per_section: (2, 4),
            figure_rate: 0.3,
            embedding_dim: 32,
            signal_strength: 0.8,
            noise_std: 1.0,
            grid_size: 20,
            questions_per_doc: 2,
            distractors: true,
        }
    }
}

impl SynthConfig {
    /// Shortest block that still covers a lattice row.
    pub fn min_block_height(&self) -> f64 {
        1.2 / self.grid_size as f64
    }

    /// Most blocks a page can hold at minimum height.
    pub fn page_capacity(&self) -> usize {
        ((USABLE + GAP) / (self.min_block_height() + GAP)).floor() as usize
    }

    /// Title, one direction per section slot, one per visual slot.
    fn identity_count(&self) -> usize {
        1 + self.sections_per_doc.1 * (1 + self.blocks_per_section.1)
    }

    fn max_blocks(&self) -> usize {
        1 + self.sections_per_doc.1 * (1 + 2 * self.blocks_per_section.1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        for (name, (lo, hi)) in [
            ("pages_per_doc", self.pages_per_doc),
            ("sections_per_doc", self.sections_per_doc),
            ("blocks_per_section", self.blocks_per_section),
        ] {
            if lo == 0 || lo > hi {
                return bad(format!("{name} range {lo}..{hi} is empty or starts at 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.figure_rate) {
            return bad("figure_rate must be in [0, 1]".into());
        }
        if !(self.signal_strength > 0.0 && self.signal_strength <= 1.0) {
            return bad("signal_strength must be in (0, 1]".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and non-negative".into());
        }
        if self.test_docs > self.n_docs {
            return bad("test_docs exceeds n_docs".into());
        }
        if self.grid_size < 2 || self.page_capacity() == 0 {
            return bad("grid_size too small".into());
        }
        let ids = self.identity_count();
        if ids > self.embedding_dim {
            return bad(format!(
                "embedding_dim {} cannot hold {ids} orthogonal identities",
                self.embedding_dim
            ));
        }
        if self.max_blocks() > self.pages_per_doc.1 * self.page_capacity() {
            return bad(format!(
                "up to {} blocks do not fit on {} pages of {}",
                self.max_blocks(),
                self.pages_per_doc.1,
                self.page_capacity()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDoc {
    /// Clean blocks; ids match `gold`.
    pub doc: Document,
    /// Pixel detections, distractors included.
    pub detections: Vec<RawDetection>,
    pub grids: Vec<TokenGrid>,
    pub gold: ParentMap,
    pub queries: Vec<QueryRecord>,
    pub judgments: Vec<JudgmentRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<SynthDoc>,
    pub test: Vec<SynthDoc>,
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ner", "sto", "va", "ri", "den", "pol", "tu", "gra", "fen", "bi", "cor", "sa", "mel", "tor",
    "vin", "pe", "dal", "ush", "qua", "ron", "ex",
];

fn word(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(2..=3);
    (0..n).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect()
}

fn words(rng: &mut impl Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

/// `count` orthogonal vectors of norm `sqrt(dim)`.
fn orthogonal_identities(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / dim as f64;
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        let scale = (dim as f64).sqrt() / norm;
        basis.push(v.into_iter().map(|x| x * scale).collect());
    }
    basis
}

fn add(a: &[f64], b: &[f64], kb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + kb * y).collect()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Ways to cut `len` blocks into `pages` pages of 1..=`cap` blocks each,
/// as `table[len][pages]`.
fn composition_counts(n: usize, pages: usize, cap: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; pages + 1]; n + 1];
    c[0][0] = 1.0;
    for len in 1..=n {
        for t in 1..=pages {
            c[len][t] = (1..=cap.min(len)).map(|k| c[len - k][t - 1]).sum();
        }
    }
    c
}

/// Page sizes drawn uniformly from all valid compositions.
fn sample_page_sizes(rng: &mut impl Rng, n: usize, pages: usize, cap: usize) -> Vec<usize> {
    let c = composition_counts(n, pages, cap);
    let mut sizes = Vec::with_capacity(pages);
    let mut left = n;
    for t in (1..=pages).rev() {
        let total = c[left][t];
        let mut x = rng.gen::<f64>() * total;
        let mut pick = 1;
        for k in 1..=cap.min(left) {
            let w = c[left - k][t - 1];
            if w == 0.0 {
                continue;
            }
            pick = k;
            if x < w {
                break;
            }
            x -= w;
        }
        sizes.push(pick);
        left -= pick;
    }
    sizes
}

/// Probability that blocks at reading positions `p < q` land on different
/// pages under uniform page cutting.
pub fn cross_page_probability(n: usize, pages: usize, cap: usize, p: usize, q: usize) -> f64 {
    let c = composition_counts(n, pages, cap);
    if c[n][pages] == 0.0 {
        return 0.0;
    }
    let mut same = 0.0;
    for before in 0..pages {
        let after = pages - 1 - before;
        for a in 0..=p {
            for b in (q + 1)..=n.min(a + cap) {
                same += c[a][before] * c[n - b][after];
            }
        }
    }
    1.0 - same / c[n][pages]
}

/// Expected number of non-ROOT gold edges that cross a page boundary.
pub fn expected_cross_page_edges(gold: &ParentMap, pages: usize, cap: usize) -> f64 {
    let n = gold.len();
    gold.0
        .iter()
        .enumerate()
        .filter_map(|(child, p)| p.block().map(|parent| cross_page_probability(n, pages, cap, parent, child)))
        .sum()
}

/// Observed count of non-ROOT gold edges between different pages.
pub fn cross_page_edges(doc: &Document, gold: &ParentMap) -> (usize, usize) {
    let mut cross = 0;
    let mut total = 0;
    for (child, p) in gold.0.iter().enumerate() {
        if let Some(parent) = p.block() {
            total += 1;
            cross += usize::from(doc.blocks[parent].page != doc.blocks[child].page);
        }
    }
    (cross, total)
}

struct Planned {
    block_type: BlockType,
    parent: Parent,
    identity: Vec<f64>,
    text: String,
    height: f64,
    x: (f64, f64),
}

fn generate_doc(cfg: &SynthConfig, palette: &[Vec<f64>], index: usize) -> SynthDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let doc_id = format!("s{}-d{index:04}", cfg.seed);
    let n_sections = rng.gen_range(cfg.sections_per_doc.0..=cfg.sections_per_doc.1);
    let slots: Vec<Vec<bool>> = (0..n_sections)
        .map(|_| {
            let n = rng.gen_range(cfg.blocks_per_section.0..=cfg.blocks_per_section.1);
            (0..n).map(|_| rng.gen_bool(cfg.figure_rate)).collect()
        })
        .collect();
    let (title_id, section_ids, visual_ids) = (&palette[0], &palette[1..=cfg.sections_per_doc.1], &palette[1 + cfg.sections_per_doc.1..]);
    let min_h = cfg.min_block_height();

    let mut plan: Vec<Planned> = Vec::new();
    plan.push(Planned {
        block_type: BlockType::Title,
        parent: Parent::Root,
        identity: title_id.clone(),
        text: words(&mut rng, 3, 6),
        height: 0.06,
        x: (0.15, 0.85),
    });
    let mut section_titles = Vec::new();
    let mut visual_counter = 0usize;
    for (s, body) in slots.iter().enumerate() {
        let header = plan.len();
        let title = format!("{} {}", s + 1, words(&mut rng, 2, 4));
        section_titles.push(title.clone());
        plan.push(Planned {
            block_type: BlockType::SectionHeader,
            parent: Parent::Block(0),
            identity: add(&section_ids[s], title_id, 0.5),
            text: title,
            height: 0.05,
            x: (rng.gen_range(0.08..0.12), rng.gen_range(0.4..0.7)),
        });
        for &is_visual in body {
            if !is_visual {
                plan.push(Planned {
                    block_type: BlockType::Paragraph,
                    parent: Parent::Block(header),
                    identity: section_ids[s].clone(),
                    text: words(&mut rng, 20, 60),
                    height: rng.gen_range(0.08..0.16),
                    x: (rng.gen_range(0.08..0.12), rng.gen_range(0.88..0.92)),
                });
                continue;
            }
            let f = &visual_ids[visual_counter];
            visual_counter += 1;
            let (kind, label, text) = if rng.gen_bool(0.5) {
                (BlockType::Figure, "Figure", String::new())
            } else {
                (BlockType::Table, "Table", words(&mut rng, 4, 10))
            };
            let visual = plan.len();
            let x = (rng.gen_range(0.2..0.3), rng.gen_range(0.7..0.8));
            plan.push(Planned {
                block_type: kind,
                parent: Parent::Block(header),
                identity: add(&section_ids[s], f, 1.0),
                text,
                height: rng.gen_range(0.15..0.25),
                x,
            });
            plan.push(Planned {
                block_type: BlockType::Caption,
                parent: Parent::Block(visual),
                identity: f.clone(),
                text: format!("{label} {visual_counter}: {}", words(&mut rng, 4, 10)),
                height: 0.05,
                x: (x.0 - 0.05, x.1 + 0.05),
            });
        }
    }

    let n = plan.len();
    let cap = cfg.page_capacity();
    let drawn = rng.gen_range(cfg.pages_per_doc.0..=cfg.pages_per_doc.1);
    let pages = drawn.max(n.div_ceil(cap)).min(n);
    let sizes = sample_page_sizes(&mut rng, n, pages, cap);

    // vertical layout, page by page
    let mut blocks = Vec::with_capacity(n);
    let mut start = 0;
    for (pi, &k) in sizes.iter().enumerate() {
        let slice = &plan[start..start + k];
        let natural: Vec<f64> = slice.iter().map(|p| p.height.max(min_h)).collect();
        let avail = USABLE - (k as f64 - 1.0) * GAP;
        let total: f64 = natural.iter().sum();
        let heights: Vec<f64> = if total <= avail {
            natural
        } else {
            let excess: f64 = natural.iter().map(|h| h - min_h).sum();
            let s = ((avail - k as f64 * min_h) / excess).clamp(0.0, 1.0);
            natural.iter().map(|h| min_h + (h - min_h) * s).collect()
        };
        let mut y = TOP;
        for (j, p) in slice.iter().enumerate() {
            let bbox = Rect::new(p.x.0, y, p.x.1, y + heights[j]);
            blocks.push(Block {
                id: start + j,
                page: pi + 1,
                bbox,
                block_type: p.block_type,
                text: p.text.clone(),
                confidence: round4(rng.gen_range(0.8..1.0)),
            });
            y += heights[j] + GAP;
        }
        start += k;
    }

    // planted questions
    let paragraphs: Vec<usize> = (0..n).filter(|&i| plan[i].block_type == BlockType::Paragraph).collect();
    let n_q = cfg.questions_per_doc.min(paragraphs.len());
    let mut picks: Vec<usize> = sample(&mut rng, paragraphs.len(), n_q).into_iter().map(|i| paragraphs[i]).collect();
    picks.sort_unstable();
    let mut queries = Vec::new();
    let mut judgments = Vec::new();
    for (k, &b) in picks.iter().enumerate() {
        let token = format!("zq{index:05}{k:02}");
        let mut ws: Vec<String> = blocks[b].text.split(' ').map(str::to_string).collect();
        let at = rng.gen_range(0..=ws.len());
        ws.insert(at, token.clone());
        blocks[b].text = ws.join(" ");
        // the token plus up to two words either side of it
        let context: Vec<&str> = ws[at.saturating_sub(2)..(at + 3).min(ws.len())]
            .iter()
            .map(String::as_str)
            .filter(|w| !w.is_empty())
            .collect();
        let query_id = format!("{doc_id}-q{k}");
        queries.push(QueryRecord {
            query_id: query_id.clone(),
            text: context.join(" "),
            vector: Some(plan[b].identity.iter().map(|x| round4(x * cfg.signal_strength)).collect()),
        });
        judgments.push(JudgmentRecord {
            query_id,
            relevant_chunk_ids: None,
            answer_spans: Some(vec![token]),
        });
    }

    // token grids
    let g = cfg.grid_size;
    let grids: Vec<TokenGrid> = (1..=pages)
        .map(|page| {
            let on_page: Vec<&Block> = blocks.iter().filter(|b| b.page == page).collect();
            let mut tokens = Vec::with_capacity(g * g);
            for row in 0..g {
                for col in 0..g {
                    let (u, v) = ((col as f64 + 0.5) / g as f64, (row as f64 + 0.5) / g as f64);
                    let owner = on_page.iter().find(|b| b.bbox.contains(u, v));
                    let z: Vec<f64> = (0..cfg.embedding_dim)
                        .map(|d| {
                            let signal = owner.map_or(0.0, |b| cfg.signal_strength * plan[b.id].identity[d]);
                            let noise: f64 = rng.sample(StandardNormal);
                            round4(signal + cfg.noise_std * noise)
                        })
                        .collect();
                    tokens.push(Token(u, v, z));
                }
            }
            TokenGrid {
                page,
                dim: cfg.embedding_dim,
                tokens,
            }
        })
        .collect();

    let page_sizes = vec![PAGE_SIZE; pages];
    let doc = Document {
        doc_id: doc_id.clone(),
        page_sizes: page_sizes.clone(),
        blocks,
    };
    let detections = detections_for(&doc, cfg.distractors, &mut rng);
    SynthDoc {
        gold: ParentMap(plan.iter().map(|p| p.parent).collect()),
        doc,
        detections,
        grids,
        queries,
        judgments,
    }
}

fn detections_for(doc: &Document, distractors: bool, rng: &mut impl Rng) -> Vec<RawDetection> {
    let (w, h) = PAGE_SIZE;
    let px = |r: &Rect| Rect::new(r.x0 * w, r.y0 * h, r.x1 * w, r.y1 * h);
    let mut out = Vec::new();
    for b in &doc.blocks {
        out.push(RawDetection {
            page: b.page,
            bbox: px(&b.bbox),
            type_label: type_label(b.block_type).to_string(),
            confidence: b.confidence,
            text: b.text.clone(),
        });
        if distractors && rng.gen_bool(0.1) {
            let j = |rng: &mut dyn rand::RngCore| rng.gen_range(-0.004..0.004);
            let r = &b.bbox;
            out.push(RawDetection {
                page: b.page,
                bbox: px(&Rect::new(r.x0 + j(rng), r.y0 + j(rng), r.x1 + j(rng), r.y1 + j(rng))),
                type_label: type_label(b.block_type).to_string(),
                confidence: round4(b.confidence - 0.2),
                text: b.text.clone(),
            });
        }
    }
    if distractors {
        for page in 1..=doc.num_pages() {
            let (x, y) = (rng.gen_range(0.0..0.8), rng.gen_range(0.0..0.9));
            out.push(RawDetection {
                page,
                bbox: px(&Rect::new(x, y, x + 0.1, y + 0.05)),
                type_label: "other".into(),
                confidence: round4(rng.gen_range(0.05..0.4)),
                text: "noise".into(),
            });
        }
    }
    // shuffle so the canvas has to restore reading order
    for i in (1..out.len()).rev() {
        out.swap(i, rng.gen_range(0..=i));
    }
    out
}

/// Generates the corpus; the same config always yields the same documents.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let palette = orthogonal_identities(&mut rng, cfg.identity_count(), cfg.embedding_dim);
    let mut docs: Vec<SynthDoc> = (0..cfg.n_docs).map(|i| generate_doc(cfg, &palette, i)).collect();
    let test = docs.split_off(cfg.n_docs - cfg.test_docs);
    Ok(SynthCorpus { train: docs, test })
}

/// Writes one split in the interchange layout:
/// `detections/<id>.jsonl`, `grids/<id>.jsonl`, `gold/<id>.json`,
/// `queries.jsonl` and `judgments.jsonl`.
pub fn write_split(dir: &Path, docs: &[SynthDoc]) -> Result<()> {
    let mut queries = Vec::new();
    let mut judgments = Vec::new();
    for d in docs {
        let id = &d.doc.doc_id;
        let header = DetectionHeader {
            doc_id: id.clone(),
            page_sizes: d.doc.page_sizes.clone(),
        };
        write_detections(&doc_path(&dir.join("detections"), id, ".jsonl"), &header, &d.detections)?;
        write_jsonl(&doc_path(&dir.join("grids"), id, ".jsonl"), &d.grids)?;
        write_json(&doc_path(&dir.join("gold"), id, ".json"), &TreeFile::from_parents(id, &d.gold, None))?;
        queries.extend(d.queries.iter().cloned());
        judgments.extend(d.judgments.iter().cloned());
    }
    write_jsonl(&dir.join("queries.jsonl"), &queries)?;
    write_jsonl(&dir.join("judgments.jsonl"), &judgments)?;
    Ok(())
}
