//! Boundary-aware pooling of page token grids into block embeddings.
//!
//! Every token inside a block's box is weighted by
//! `(u'(1-u'))^alpha * (v'(1-v'))^alpha` in box-local coordinates, so the box
//! centre carries the most weight and the border the least. `alpha = 0` is
//! plain mean pooling.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canvas::{Block, BlockType, Document, Rect};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_TYPE_DIM: usize = 16;

/// A single grid token: page-normalized position and its vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token(pub f64, pub f64, pub Vec<f64>);

impl Token {
    pub fn u(&self) -> f64 {
        self.0
    }
    pub fn v(&self) -> f64 {
        self.1
    }
    pub fn z(&self) -> &[f64] {
        &self.2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenGrid {
    pub page: usize,
    pub dim: usize,
    pub tokens: Vec<Token>,
}

impl TokenGrid {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::parse(
                format!("grid page {}", self.page),
                "token grid has no tokens",
            ));
        }
        for t in &self.tokens {
            if t.z().len() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    got: t.z().len(),
                });
            }
            if !(0.0..=1.0).contains(&t.u()) || !(0.0..=1.0).contains(&t.v()) {
                return Err(Error::parse(
                    format!("grid page {}", self.page),
                    format!("token coordinate ({}, {}) outside [0,1]", t.u(), t.v()),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEmbedding {
    pub block_id: usize,
    pub e: Vec<f64>,
    pub tau: Vec<f64>,
}

/// One learned row per [`BlockType`].
#[derive(Debug, Clone, PartialEq)]
pub struct TypeEmbeddingTable {
    pub rows: Array2<f64>,
}

impl TypeEmbeddingTable {
    pub fn zeros(dim: usize) -> Self {
        TypeEmbeddingTable {
            rows: Array2::zeros((BlockType::COUNT, dim)),
        }
    }

    /// Seeded uniform(-0.1, 0.1) initialization.
    pub fn seeded(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = Array2::from_shape_fn((BlockType::COUNT, dim), |_| rng.gen_range(-0.1..0.1));
        TypeEmbeddingTable { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, t: BlockType) -> Vec<f64> {
        self.rows.row(t.index()).to_vec()
    }
}

/// Normalized boundary-aware weights of the tokens inside `bbox`.
pub fn roi_weights(bbox: &Rect, grid: &TokenGrid, alpha: f64) -> Result<Vec<(usize, f64)>> {
    let (w, h) = (bbox.width(), bbox.height());
    let mut raw: Vec<(usize, f64)> = grid
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| bbox.contains(t.u(), t.v()))
        .map(|(i, t)| {
            let ul = ((t.u() - bbox.x0) / w).clamp(0.0, 1.0);
            let vl = ((t.v() - bbox.y0) / h).clamp(0.0, 1.0);
            let wt = if alpha == 0.0 {
                1.0
            } else {
                (ul * (1.0 - ul)).powf(alpha) * (vl * (1.0 - vl)).powf(alpha)
            };
            (i, wt)
        })
        .collect();
    if raw.is_empty() {
        return Err(Error::EmptyRoi(bbox.to_array()));
    }
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    if total > 0.0 {
        for (_, w) in raw.iter_mut() {
            *w /= total;
        }
    } else {
        // every token sits on the border
        let n = raw.len() as f64;
        for (_, w) in raw.iter_mut() {
            *w = 1.0 / n;
        }
    }
    Ok(raw)
}

fn nearest_token(bbox: &Rect, grid: &TokenGrid) -> usize {
    let (cx, cy) = bbox.center();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, t) in grid.tokens.iter().enumerate() {
        let d = (t.u() - cx).powi(2) + (t.v() - cy).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Pooled embedding of a single block.
pub fn embed_block(
    block: &Block,
    grid: &TokenGrid,
    alpha: f64,
    table: &TypeEmbeddingTable,
) -> Result<BlockEmbedding> {
    if grid.page != block.page {
        return Err(Error::MissingGrid(block.page));
    }
    if let Some(t) = grid.tokens.iter().find(|t| t.z().len() != grid.dim) {
        return Err(Error::DimMismatch {
            expected: grid.dim,
            got: t.z().len(),
        });
    }
    if grid.tokens.is_empty() {
        return Err(Error::MissingGrid(block.page));
    }
    let e = match roi_weights(&block.bbox, grid, alpha) {
        Ok(weights) => {
            let mut e = vec![0.0; grid.dim];
            for (i, w) in weights {
                for (acc, z) in e.iter_mut().zip(grid.tokens[i].z()) {
                    *acc += w * z;
                }
            }
            e
        }
        Err(Error::EmptyRoi(_)) => grid.tokens[nearest_token(&block.bbox, grid)].z().to_vec(),
        Err(other) => return Err(other),
    };
    Ok(BlockEmbedding {
        block_id: block.id,
        e,
        tau: table.row(block.block_type),
    })
}

/// One embedding per block, in block-id order.
pub fn embed_document(
    doc: &Document,
    grids: &[TokenGrid],
    alpha: f64,
    table: &TypeEmbeddingTable,
) -> Result<Vec<BlockEmbedding>> {
    let mut by_page: Vec<Option<&TokenGrid>> = vec![None; doc.num_pages() + 1];
    for g in grids {
        if g.page < by_page.len() {
            by_page[g.page] = Some(g);
        }
    }
    for page in 1..=doc.num_pages() {
        if by_page[page].is_none() {
            return Err(Error::MissingGrid(page));
        }
    }
    doc.blocks
        .iter()
        .map(|b| {
            let grid = by_page
                .get(b.page)
                .copied()
                .flatten()
                .ok_or(Error::MissingGrid(b.page))?;
            embed_block(b, grid, alpha, table)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(tokens: Vec<(f64, f64, Vec<f64>)>) -> TokenGrid {
        let dim = tokens.first().map(|t| t.2.len()).unwrap_or(0);
        TokenGrid {
            page: 1,
            dim,
            tokens: tokens.into_iter().map(|(u, v, z)| Token(u, v, z)).collect(),
        }
    }

    fn lattice(n: usize, dim: usize, f: impl Fn(usize, usize) -> Vec<f64>) -> TokenGrid {
        let mut toks = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let u = (i as f64 + 0.5) / n as f64;
                let v = (j as f64 + 0.5) / n as f64;
                toks.push((u, v, f(i, j)));
            }
        }
        let mut g = grid(toks);
        g.dim = dim;
        g
    }

    fn block(bbox: Rect) -> Block {
        Block {
            id: 0,
            page: 1,
            bbox,
            block_type: BlockType::Paragraph,
            text: String::new(),
            confidence: 1.0,
        }
    }

    #[test]
    fn singleton_center() {
        let g = grid(vec![(0.5, 0.5, vec![1.0])]);
        let w = roi_weights(&Rect::new(0.0, 0.0, 1.0, 1.0), &g, 3.0).unwrap();
        assert_eq!(w, vec![(0, 1.0)]);
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let g = lattice(4, 1, |_, _| vec![0.0]);
        let w = roi_weights(&Rect::new(0.0, 0.0, 1.0, 1.0), &g, 0.0).unwrap();
        assert_eq!(w.len(), 16);
        for (_, x) in w {
            assert!((x - 1.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn midline_three_tokens() {
        // u' = 0.25, 0.5, 0.75 at v' = 0.5 in the box (0.2,0.2)-(0.6,0.6)
        let g = grid(vec![
            (0.3, 0.4, vec![0.0]),
            (0.4, 0.4, vec![0.0]),
            (0.5, 0.4, vec![0.0]),
        ]);
        let w = roi_weights(&Rect::new(0.2, 0.2, 0.6, 0.6), &g, 1.0).unwrap();
        // hand evaluation: 0.1875*0.25, 0.25*0.25, 0.1875*0.25 normalized
        let raw = [0.1875 * 0.25, 0.25 * 0.25, 0.1875 * 0.25];
        let s: f64 = raw.iter().sum();
        for ((_, got), r) in w.iter().zip(raw) {
            assert!((got - r / s).abs() < 1e-9);
        }
        assert!((w[0].1 - 0.3).abs() < 1e-9);
        assert!((w[1].1 - 0.4).abs() < 1e-9);
        assert!((w[2].1 - 0.3).abs() < 1e-9);
    }

    #[test]
    fn border_only_falls_back_to_uniform() {
        let g = grid(vec![(0.2, 0.2, vec![0.0]), (0.6, 0.6, vec![0.0])]);
        let w = roi_weights(&Rect::new(0.2, 0.2, 0.6, 0.6), &g, 1.0).unwrap();
        assert_eq!(w, vec![(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn empty_roi_error_and_fallback() {
        let g = grid(vec![(0.1, 0.1, vec![1.0, 2.0]), (0.9, 0.9, vec![3.0, 4.0])]);
        let bbox = Rect::new(0.7, 0.7, 0.8, 0.8);
        assert!(matches!(roi_weights(&bbox, &g, 1.0), Err(Error::EmptyRoi(_))));
        let emb = embed_block(&block(bbox), &g, 1.0, &TypeEmbeddingTable::zeros(2)).unwrap();
        assert_eq!(emb.e, vec![3.0, 4.0]);
    }

    #[test]
    fn singleton_roi_copies_vector() {
        let g = grid(vec![(0.5, 0.5, vec![0.25, -1.5]), (0.9, 0.9, vec![9.0, 9.0])]);
        let emb = embed_block(
            &block(Rect::new(0.4, 0.4, 0.6, 0.6)),
            &g,
            2.0,
            &TypeEmbeddingTable::zeros(3),
        )
        .unwrap();
        assert_eq!(emb.e, vec![0.25, -1.5]);
        assert_eq!(emb.tau, vec![0.0; 3]);
    }

    #[test]
    fn shared_vector_is_reproduced() {
        let g = lattice(6, 3, |_, _| vec![0.5, -2.0, 1.0]);
        for alpha in [0.0, 0.5, 1.0, 4.0] {
            let emb = embed_block(
                &block(Rect::new(0.1, 0.1, 0.9, 0.7)),
                &g,
                alpha,
                &TypeEmbeddingTable::zeros(1),
            )
            .unwrap();
            for (a, b) in emb.e.iter().zip([0.5, -2.0, 1.0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_token_weighted_sum() {
        // u' = 0.1 and 0.3 on the midline: raw 0.09 and 0.21 -> (0.3, 0.7)
        let g = grid(vec![(0.1, 0.5, vec![1.0, 0.0]), (0.3, 0.5, vec![0.0, 1.0])]);
        let bbox = Rect::new(0.0, 0.0, 1.0, 1.0);
        let w = roi_weights(&bbox, &g, 1.0).unwrap();
        assert!((w[0].1 - 0.3).abs() < 1e-12 && (w[1].1 - 0.7).abs() < 1e-12);
        let emb = embed_block(&block(bbox), &g, 1.0, &TypeEmbeddingTable::zeros(1)).unwrap();
        // dot-product oracle
        let oracle: Vec<f64> = (0..2)
            .map(|d| w.iter().map(|&(i, x)| x * g.tokens[i].z()[d]).sum())
            .collect();
        assert_eq!(emb.e, oracle);
        assert!((emb.e[0] - 0.3).abs() < 1e-12 && (emb.e[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn dim_mismatch_detected() {
        let mut g = grid(vec![(0.5, 0.5, vec![1.0]), (0.6, 0.6, vec![1.0, 2.0])]);
        g.dim = 1;
        let e = embed_block(&block(Rect::new(0.0, 0.0, 1.0, 1.0)), &g, 1.0, &TypeEmbeddingTable::zeros(1));
        assert!(matches!(e, Err(Error::DimMismatch { expected: 1, got: 2 })));
    }

    #[test]
    fn document_level() {
        let table = TypeEmbeddingTable::seeded(4, 1);
        let empty = Document {
            doc_id: "e".into(),
            page_sizes: vec![],
            blocks: vec![],
        };
        assert!(embed_document(&empty, &[], 1.0, &table).unwrap().is_empty());

        let mut b0 = block(Rect::new(0.1, 0.1, 0.5, 0.5));
        let mut b1 = block(Rect::new(0.1, 0.1, 0.5, 0.5));
        b1.id = 1;
        b1.page = 2;
        b0.block_type = BlockType::Title;
        let doc = Document {
            doc_id: "d".into(),
            page_sizes: vec![(1., 1.), (1., 1.)],
            blocks: vec![b0, b1],
        };
        let g1 = lattice(5, 2, |i, j| vec![i as f64, j as f64]);
        let mut g2 = g1.clone();
        g2.page = 2;
        let embs = embed_document(&doc, &[g1.clone(), g2], 1.0, &table).unwrap();
        assert_eq!(embs.len(), 2);
        assert_eq!(embs[0].block_id, 0);
        assert_eq!(embs[1].block_id, 1);
        // same bbox, same grid content -> identical vectors
        assert_eq!(embs[0].e, embs[1].e);
        assert_eq!(embs[0].tau, table.row(BlockType::Title));
        assert!(matches!(
            embed_document(&doc, &[g1], 1.0, &table),
            Err(Error::MissingGrid(2))
        ));
    }

    fn arb_grid() -> impl Strategy<Value = TokenGrid> {
        prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, prop::collection::vec(-5.0..5.0f64, 3)), 1..60)
            .prop_map(grid)
    }

    fn arb_rect() -> impl Strategy<Value = Rect> {
        (0.0..0.8f64, 0.0..0.8f64, 0.05..0.6f64, 0.05..0.6f64)
            .prop_map(|(x, y, w, h)| Rect::new(x, y, (x + w).min(1.0), (y + h).min(1.0)))
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(g in arb_grid(), r in arb_rect(), alpha in 0.0..4.0f64) {
            if let Ok(w) = roi_weights(&r, &g, alpha) {
                let s: f64 = w.iter().map(|(_, x)| x).sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn alpha_zero_equals_mean(g in arb_grid(), r in arb_rect()) {
            let inside: Vec<&Token> = g.tokens.iter().filter(|t| r.contains(t.u(), t.v())).collect();
            prop_assume!(!inside.is_empty());
            let emb = embed_block(&block(r), &g, 0.0, &TypeEmbeddingTable::zeros(1)).unwrap();
            for d in 0..3 {
                let mean = inside.iter().map(|t| t.z()[d]).sum::<f64>() / inside.len() as f64;
                prop_assert!((emb.e[d] - mean).abs() < 1e-9);
            }
        }

        #[test]
        fn pooled_within_component_bounds(g in arb_grid(), r in arb_rect(), alpha in 0.0..3.0f64) {
            let inside: Vec<&Token> = g.tokens.iter().filter(|t| r.contains(t.u(), t.v())).collect();
            prop_assume!(!inside.is_empty());
            let emb = embed_block(&block(r), &g, alpha, &TypeEmbeddingTable::zeros(1)).unwrap();
            for d in 0..3 {
                let lo = inside.iter().map(|t| t.z()[d]).fold(f64::INFINITY, f64::min);
                let hi = inside.iter().map(|t| t.z()[d]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(emb.e[d] >= lo - 1e-9 && emb.e[d] <= hi + 1e-9);
            }
        }

        #[test]
        fn center_peaks_and_border_decays(n in 3usize..12, alpha in 0.1..3.0f64) {
            // odd lattice so one token sits exactly on the box centre
            let n = 2 * n + 1;
            let g = lattice(n, 1, |_, _| vec![0.0]);
            let w = roi_weights(&Rect::new(0.0, 0.0, 1.0, 1.0), &g, alpha).unwrap();
            let at = |i: usize, j: usize| w[j * n + i].1;
            let mid = n / 2;
            for j in 0..n {
                for i in 0..n {
                    prop_assert!(at(i, j) <= at(mid, mid) + 1e-15);
                }
            }
            // non-increasing from the centre outwards along the middle row
            for i in mid..n - 1 {
                prop_assert!(at(i + 1, mid) <= at(i, mid) + 1e-15);
            }
            for i in 1..=mid {
                prop_assert!(at(i - 1, mid) <= at(i, mid) + 1e-15);
            }
        }

        #[test]
        fn larger_alpha_sharpens_centre(n in 2usize..8, a in 0.1..2.0f64, da in 0.1..2.0f64) {
            let n = 2 * n + 1;
            let g = lattice(n, 1, |_, _| vec![0.0]);
            let r = Rect::new(0.0, 0.0, 1.0, 1.0);
            let centre = (n / 2) * n + n / 2;
            let lo = roi_weights(&r, &g, a).unwrap()[centre].1;
            let hi = roi_weights(&r, &g, a + da).unwrap()[centre].1;
            prop_assert!(hi > lo);
        }
    }
}
