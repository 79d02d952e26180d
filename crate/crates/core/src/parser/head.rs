//! Biaffine edge scorer and its child-softmax training objective.
//!
//! A two-layer MLP maps each block input `[e; tau]` to a hidden vector `h`.
//! Block edges are scored as `[h_u;1]^T U [h_v;1] + w_geo . g(u,v)` and the
//! virtual root as `r . h_v + b_r`. For every child the scores of its
//! candidates plus ROOT are normalized with a softmax and trained with
//! cross-entropy against the gold parent.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::candidates::{build_candidates, geo_features, CandidateConfig, CandidateSet, GeoFeatures, GEO_DIM};
use crate::canvas::{BlockType, Document};
use crate::error::{Error, Result};
use crate::softroi::{BlockEmbedding, TypeEmbeddingTable};
use crate::tree::{Parent, ParentMap};

pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `hidden x (embed + type)`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `hidden x hidden`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// `(hidden + 1) x (hidden + 1)`
    pub u: Array2<f64>,
    pub w_geo: Array1<f64>,
    pub r: Array1<f64>,
    pub b_r: f64,
    pub types: TypeEmbeddingTable,
}

/// Names of the parameter tensors, in flattening order.
pub const TENSOR_NAMES: [&str; 9] = ["w1", "b1", "w2", "b2", "u", "w_geo", "r", "b_r", "type_table"];

impl HeadParams {
    pub fn zeros(embed_dim: usize, type_dim: usize, hidden: usize) -> Self {
        HeadParams {
            w1: Array2::zeros((hidden, embed_dim + type_dim)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            u: Array2::zeros((hidden + 1, hidden + 1)),
            w_geo: Array1::zeros(GEO_DIM),
            r: Array1::zeros(hidden),
            b_r: 0.0,
            types: TypeEmbeddingTable::zeros(type_dim),
        }
    }

    /// Seeded initialization: fan-in scaled uniform for the MLP,
    /// uniform(-1/(H+1), 1/(H+1)) for `U`, uniform(-0.05, 0.05) for
    /// `w_geo` and `r`, zero biases.
    pub fn init(embed_dim: usize, type_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = embed_dim + type_dim;
        let mut p = Self::zeros(embed_dim, type_dim, hidden);
        let a1 = (6.0 / in_dim.max(1) as f64).sqrt();
        p.w1.mapv_inplace(|_| rng.gen_range(-a1..a1));
        let a2 = (6.0 / hidden.max(1) as f64).sqrt();
        p.w2.mapv_inplace(|_| rng.gen_range(-a2..a2));
        let au = 1.0 / (hidden + 1) as f64;
        p.u.mapv_inplace(|_| rng.gen_range(-au..au));
        p.w_geo.mapv_inplace(|_| rng.gen_range(-0.05..0.05));
        p.r.mapv_inplace(|_| rng.gen_range(-0.05..0.05));
        p.types = TypeEmbeddingTable::seeded(type_dim, rng.gen());
        p
    }

    pub fn embed_dim(&self) -> usize {
        self.w1.ncols() - self.types.dim()
    }

    pub fn type_dim(&self) -> usize {
        self.types.dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.embed_dim(), self.type_dim(), self.hidden_dim())
    }

    /// Shapes of each tensor, matching [`TENSOR_NAMES`].
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        vec![
            self.w1.shape().to_vec(),
            self.b1.shape().to_vec(),
            self.w2.shape().to_vec(),
            self.b2.shape().to_vec(),
            self.u.shape().to_vec(),
            self.w_geo.shape().to_vec(),
            self.r.shape().to_vec(),
            vec![],
            self.types.rows.shape().to_vec(),
        ]
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
            self.u.as_slice().expect("standard layout"),
            self.w_geo.as_slice().expect("standard layout"),
            self.r.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.b_r),
            self.types.rows.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
            self.u.as_slice_mut().expect("standard layout"),
            self.w_geo.as_slice_mut().expect("standard layout"),
            self.r.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b_r),
            self.types.rows.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &HeadParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= k;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// `h = W2 relu(W1 x + b1) + b2` for one input vector.
pub fn hidden(x: &[f64], params: &HeadParams) -> Result<Vec<f64>> {
    if x.len() != params.w1.ncols() {
        return Err(Error::DimMismatch {
            expected: params.w1.ncols(),
            got: x.len(),
        });
    }
    let x = ArrayView1::from(x);
    let a1 = params.w1.dot(&x) + &params.b1;
    let r1 = a1.mapv(|a| a.max(0.0));
    Ok((params.w2.dot(&r1) + &params.b2).to_vec())
}

/// Numerically stable softmax.
pub fn child_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// A document prepared for scoring: embeddings, types, candidates and the
/// geometric features of every candidate edge.
#[derive(Debug, Clone)]
pub struct EncodedDoc {
    pub doc_id: String,
    pub types: Vec<BlockType>,
    /// `blocks x embed_dim`
    pub emb: Array2<f64>,
    pub candidates: Vec<CandidateSet>,
    /// Per child, one feature vector per block candidate.
    pub geo: Vec<Vec<GeoFeatures>>,
}

impl EncodedDoc {
    pub fn new(doc: &Document, embeddings: &[BlockEmbedding], cfg: &CandidateConfig) -> Result<Self> {
        let candidates = build_candidates(doc, cfg);
        Self::with_candidates(doc, embeddings, candidates, cfg.m_pages)
    }

    pub fn with_candidates(
        doc: &Document,
        embeddings: &[BlockEmbedding],
        candidates: Vec<CandidateSet>,
        m_pages: usize,
    ) -> Result<Self> {
        if embeddings.len() != doc.blocks.len() {
            return Err(Error::IdMismatch(format!(
                "{}: {} blocks but {} embeddings",
                doc.doc_id,
                doc.blocks.len(),
                embeddings.len()
            )));
        }
        let dim = embeddings.first().map(|e| e.e.len()).unwrap_or(0);
        let mut emb = Array2::zeros((embeddings.len(), dim));
        for (i, e) in embeddings.iter().enumerate() {
            if e.block_id != i {
                return Err(Error::IdMismatch(format!(
                    "{}: embedding {i} carries block id {}",
                    doc.doc_id, e.block_id
                )));
            }
            if e.e.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: e.e.len(),
                });
            }
            emb.row_mut(i).assign(&ArrayView1::from(&e.e[..]));
        }
        let geo = candidates
            .iter()
            .map(|c| {
                c.candidates
                    .iter()
                    .map(|&u| geo_features(&doc.blocks[u], &doc.blocks[c.child], m_pages))
                    .collect()
            })
            .collect();
        Ok(EncodedDoc {
            doc_id: doc.doc_id.clone(),
            types: doc.blocks.iter().map(|b| b.block_type).collect(),
            emb,
            candidates,
            geo,
        })
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Position of `gold` among this child's scored options (0 = ROOT).
    pub fn option_index(&self, child: usize, gold: Parent) -> Option<usize> {
        match gold {
            Parent::Root => Some(0),
            Parent::Block(b) => self.candidates[child]
                .candidates
                .iter()
                .position(|&c| c == b)
                .map(|i| i + 1),
        }
    }
}

/// Cached forward pass over one document.
struct Forward {
    x: Array2<f64>,
    a1: Array2<f64>,
    /// relu(a1) with dropout applied
    r1: Array2<f64>,
    /// keep-mask scale per hidden unit (1 without dropout)
    mask: Option<Array2<f64>>,
    /// `[h; 1]` rows
    haug: Array2<f64>,
    /// rows `U [h_v; 1]`
    q: Array2<f64>,
}

impl Forward {
    fn run(enc: &EncodedDoc, params: &HeadParams, dropout: Option<(f64, u64)>) -> Result<Self> {
        let n = enc.len();
        let d = enc.emb.ncols();
        if n > 0 && d != params.embed_dim() {
            return Err(Error::DimMismatch {
                expected: params.embed_dim(),
                got: d,
            });
        }
        let hdim = params.hidden_dim();
        let tdim = params.type_dim();
        let mut x = Array2::zeros((n, d + tdim));
        x.slice_mut(s![.., ..d]).assign(&enc.emb);
        for (i, t) in enc.types.iter().enumerate() {
            x.slice_mut(s![i, d..]).assign(&params.types.rows.row(t.index()));
        }
        let a1 = x.dot(&params.w1.t()) + &params.b1;
        let mut r1 = a1.mapv(|a| a.max(0.0));
        let mask = match dropout {
            Some((rate, seed)) if rate > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let keep = 1.0 - rate;
                let m = Array2::from_shape_fn((n, hdim), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                r1 *= &m;
                Some(m)
            }
            _ => None,
        };
        let h = r1.dot(&params.w2.t()) + &params.b2;
        let mut haug = Array2::ones((n, hdim + 1));
        haug.slice_mut(s![.., ..hdim]).assign(&h);
        let q = haug.dot(&params.u.t());
        Ok(Forward {
            x,
            a1,
            r1,
            mask,
            haug,
            q,
        })
    }

    fn h(&self, i: usize) -> ArrayView1<'_, f64> {
        let hdim = self.haug.ncols() - 1;
        self.haug.slice(s![i, ..hdim])
    }

    /// Scores of child `v`: ROOT first, then its block candidates.
    fn child_scores(&self, enc: &EncodedDoc, params: &HeadParams, v: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(enc.candidates[v].width());
        out.push(params.r.dot(&self.h(v)) + params.b_r);
        let qv = self.q.row(v);
        for (j, &u) in enc.candidates[v].candidates.iter().enumerate() {
            let g = ArrayView1::from(&enc.geo[v][j][..]);
            out.push(self.haug.row(u).dot(&qv) + params.w_geo.dot(&g));
        }
        out
    }
}

/// Hidden vectors of every block of a document (`blocks x hidden`).
pub fn hidden_states(enc: &EncodedDoc, params: &HeadParams) -> Result<Array2<f64>> {
    let f = Forward::run(enc, params, None)?;
    let hdim = params.hidden_dim();
    Ok(f.haug.slice(s![.., ..hdim]).to_owned())
}

/// Score of the edge `parent -> child` given precomputed hidden vectors.
pub fn edge_score(
    parent: Parent,
    child: usize,
    hidden: &Array2<f64>,
    enc: &EncodedDoc,
    params: &HeadParams,
) -> Result<f64> {
    let hv = hidden.row(child);
    match parent {
        Parent::Root => Ok(params.r.dot(&hv) + params.b_r),
        Parent::Block(u) => {
            let j = enc.candidates[child]
                .candidates
                .iter()
                .position(|&c| c == u)
                .ok_or(Error::NotACandidate {
                    child,
                    parent: parent.to_string(),
                })?;
            Ok(biaffine(hidden.row(u), hv, &params.u) + params.w_geo.dot(&ArrayView1::from(&enc.geo[child][j][..])))
        }
    }
}

/// `[h_u;1]^T U [h_v;1]`.
pub fn biaffine(hu: ArrayView1<f64>, hv: ArrayView1<f64>, u: &Array2<f64>) -> f64 {
    let n = hu.len();
    let mut total = 0.0;
    for i in 0..=n {
        let a = if i < n { hu[i] } else { 1.0 };
        let row = u.row(i);
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * hv[j];
        }
        acc += row[n];
        total += a * acc;
    }
    total
}

/// Per-child scored options: ROOT first, then block candidates.
pub fn score_document(enc: &EncodedDoc, params: &HeadParams) -> Result<Vec<Vec<(Parent, f64)>>> {
    let f = Forward::run(enc, params, None)?;
    Ok((0..enc.len())
        .map(|v| {
            let scores = f.child_scores(enc, params, v);
            std::iter::once(Parent::Root)
                .chain(enc.candidates[v].candidates.iter().map(|&u| Parent::Block(u)))
                .zip(scores)
                .collect()
        })
        .collect())
}

/// Dropout settings for one loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean cross-entropy over retained children.
    pub loss: f64,
    pub grads: HeadParams,
    /// Children whose gold parent is among their options and which have
    /// more than one option.
    pub retained: usize,
    /// Children whose gold parent was pruned from the candidate set.
    pub gold_unreachable: usize,
    /// Children with ROOT as their only option.
    pub trivial: usize,
}

struct DocGrad {
    loss_sum: f64,
    grads: HeadParams,
    retained: usize,
    gold_unreachable: usize,
    trivial: usize,
}

fn doc_loss_grad(
    enc: &EncodedDoc,
    gold: &ParentMap,
    params: &HeadParams,
    dropout: Option<(f64, u64)>,
) -> Result<DocGrad> {
    if gold.len() != enc.len() {
        return Err(Error::IdMismatch(format!(
            "{}: {} blocks but {} gold parents",
            enc.doc_id,
            enc.len(),
            gold.len()
        )));
    }
    let f = Forward::run(enc, params, dropout)?;
    let n = enc.len();
    let hdim = params.hidden_dim();
    let mut grads = params.zeros_like();
    let mut out = DocGrad {
        loss_sum: 0.0,
        grads: params.zeros_like(),
        retained: 0,
        gold_unreachable: 0,
        trivial: 0,
    };
    // G[u] accumulates delta * [h_v;1] so that dU = Haug^T G
    let mut g_rows = Array2::<f64>::zeros((n, hdim + 1));
    let mut d_haug = Array2::<f64>::zeros((n, hdim + 1));
    let mut need_p = Vec::new();

    for v in 0..n {
        let width = enc.candidates[v].width();
        if width == 1 {
            out.trivial += 1;
            continue;
        }
        let Some(gold_idx) = enc.option_index(v, gold.get(v)) else {
            out.gold_unreachable += 1;
            continue;
        };
        out.retained += 1;
        let scores = f.child_scores(enc, params, v);
        out.loss_sum += log_sum_exp(&scores) - scores[gold_idx];
        let mut delta = child_softmax(&scores);
        delta[gold_idx] -= 1.0;

        // ROOT option
        let d0 = delta[0];
        grads.b_r += d0;
        grads.r.scaled_add(d0, &f.h(v));
        {
            let mut row = d_haug.slice_mut(s![v, ..hdim]);
            row.scaled_add(d0, &params.r);
        }
        for (j, &u) in enc.candidates[v].candidates.iter().enumerate() {
            let d = delta[j + 1];
            let g = ArrayView1::from(&enc.geo[v][j][..]);
            grads.w_geo.scaled_add(d, &g);
            g_rows.row_mut(u).scaled_add(d, &f.haug.row(v));
            d_haug.row_mut(u).scaled_add(d, &f.q.row(v));
            need_p.push((u, v, d));
        }
    }

    // d [h_v;1] += delta * U^T [h_u;1]
    if !need_p.is_empty() {
        let p = f.haug.dot(&params.u);
        for (u, v, d) in need_p {
            d_haug.row_mut(v).scaled_add(d, &p.row(u));
        }
    }
    grads.u = f.haug.t().dot(&g_rows);

    let d_h = d_haug.slice(s![.., ..hdim]);
    grads.w2 = d_h.t().dot(&f.r1);
    grads.b2 = d_h.sum_axis(Axis(0));
    let mut d_a1 = d_h.dot(&params.w2);
    d_a1.zip_mut_with(&f.a1, |g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
    if let Some(m) = &f.mask {
        d_a1 *= m;
    }
    grads.w1 = d_a1.t().dot(&f.x);
    grads.b1 = d_a1.sum_axis(Axis(0));
    let d_x = d_a1.dot(&params.w1);
    let d = enc.emb.ncols();
    for (i, t) in enc.types.iter().enumerate() {
        let mut row = grads.types.rows.row_mut(t.index());
        row += &d_x.slice(s![i, d..]);
    }
    out.grads = grads;
    Ok(out)
}

/// Mean child-softmax cross-entropy over a batch and its exact gradient.
///
/// Documents are processed independently (in parallel when `parallel` is
/// set) and reduced in batch order, so the result does not depend on the
/// thread count.
pub fn loss_and_grad(
    batch: &[(&EncodedDoc, &ParentMap)],
    params: &HeadParams,
    dropout: Option<Dropout>,
    parallel: bool,
) -> Result<LossOutput> {
    use rayon::prelude::*;

    let drop_for = |i: usize| {
        dropout.map(|d| (d.rate, d.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)))
    };
    let per_doc: Vec<Result<DocGrad>> = if parallel {
        batch
            .par_iter()
            .enumerate()
            .map(|(i, (enc, gold))| doc_loss_grad(enc, gold, params, drop_for(i)))
            .collect()
    } else {
        batch
            .iter()
            .enumerate()
            .map(|(i, (enc, gold))| doc_loss_grad(enc, gold, params, drop_for(i)))
            .collect()
    };

    let mut grads = params.zeros_like();
    let mut loss_sum = 0.0;
    let (mut retained, mut unreachable, mut trivial) = (0, 0, 0);
    for r in per_doc {
        let r = r?;
        grads.add_assign(&r.grads);
        loss_sum += r.loss_sum;
        retained += r.retained;
        unreachable += r.gold_unreachable;
        trivial += r.trivial;
    }
    let loss = if retained > 0 {
        let k = 1.0 / retained as f64;
        grads.scale(k);
        loss_sum * k
    } else {
        0.0
    };
    Ok(LossOutput {
        loss,
        grads,
        retained,
        gold_unreachable: unreachable,
        trivial,
    })
}
