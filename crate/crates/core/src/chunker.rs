//! Structure-aware chunking of a dependency tree.
//!
//! Title and section-header blocks anchor sections. Each anchor owns the
//! blocks reachable from it without crossing another header; blocks hanging
//! directly off ROOT form a preamble with an empty section path. Owned blocks
//! are packed in reading order into chunks of at most `max_len` tokens, cut
//! only at block boundaries. Figures and tables always get a chunk of their
//! own, and their captions are moved in next to them.

use serde::{Deserialize, Serialize};

use crate::canvas::{BlockType, Document};
use crate::tree::{Parent, ParentMap};

pub const DEFAULT_MAX_LEN: usize = 550;
/// Section path entries are cut to this many characters.
pub const SECTION_TEXT_LIMIT: usize = 120;

/// Counts tokens for the chunk budget.
pub trait TokenCounter {
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl TokenCounter for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChunkKind {
    Text,
    /// A figure or table with its caption.
    VisualWithCaption,
    /// A figure or table with no caption to bind.
    Visual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    /// Strictly increasing block ids.
    pub block_ids: Vec<usize>,
    /// `(type, text)` of each governing header, outermost first.
    pub section_path: Vec<(BlockType, String)>,
    pub page_span: (usize, usize),
    pub kind: ChunkKind,
    /// Set when the chunk is a single unit larger than the budget.
    #[serde(default)]
    pub oversize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerializedChunk {
    pub chunk_id: String,
    pub text: String,
    pub token_count: usize,
}

/// One line of the chunk store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredChunk {
    #[serde(flatten)]
    pub chunk: Chunk,
    pub text: String,
    pub token_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ChunkOptions {
    pub max_len: usize,
    pub include_metadata: bool,
}

impl Default for ChunkOptions {
    fn default() -> Self {
        ChunkOptions {
            max_len: DEFAULT_MAX_LEN,
            include_metadata: true,
        }
    }
}

/// A structural anchor and the blocks it owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionAnchor {
    /// `None` for the preamble.
    pub header: Option<usize>,
    /// Header block ids from the outermost down to `header`.
    pub path: Vec<usize>,
    /// Owned blocks in reading order (the header included).
    pub members: Vec<usize>,
}

/// Section anchors in reading order of their first member.
pub fn section_roots(tree: &ParentMap, doc: &Document) -> Vec<SectionAnchor> {
    let children = tree.children();
    let mut anchors: Vec<SectionAnchor> = vec![SectionAnchor {
        header: None,
        path: Vec::new(),
        members: Vec::new(),
    }];
    // (node, anchor index, header path)
    let mut stack: Vec<(usize, usize, Vec<usize>)> = children[0]
        .iter()
        .rev()
        .map(|&c| (c, 0, Vec::new()))
        .collect();
    while let Some((node, anchor, path)) = stack.pop() {
        let (anchor, path) = if doc.blocks[node].block_type.is_header() {
            let mut path = path;
            path.push(node);
            anchors.push(SectionAnchor {
                header: Some(node),
                path: path.clone(),
                members: Vec::new(),
            });
            (anchors.len() - 1, path)
        } else {
            (anchor, path)
        };
        anchors[anchor].members.push(node);
        for &c in children[node + 1].iter().rev() {
            stack.push((c, anchor, path.clone()));
        }
    }
    for a in anchors.iter_mut() {
        a.members.sort_unstable();
    }
    anchors.retain(|a| !a.members.is_empty());
    anchors.sort_by_key(|a| a.members[0]);
    anchors
}

fn path_entries(doc: &Document, path: &[usize]) -> Vec<(BlockType, String)> {
    path.iter()
        .map(|&h| {
            let b = &doc.blocks[h];
            let flat = b.text.split_whitespace().collect::<Vec<_>>().join(" ");
            (b.block_type, flat.chars().take(SECTION_TEXT_LIMIT).collect())
        })
        .collect()
}

fn page_span(doc: &Document, ids: &[usize]) -> (usize, usize) {
    let pages = ids.iter().map(|&i| doc.blocks[i].page);
    let lo = pages.clone().min().unwrap_or(0);
    let hi = pages.max().unwrap_or(0);
    (lo, hi)
}

/// Tokens used by the header lines and the pages line of a chunk.
fn metadata_tokens(path: &[(BlockType, String)], counter: &dyn TokenCounter) -> usize {
    path.iter().map(|(_, t)| 1 + counter.count(t)).sum::<usize>() + 2
}

fn new_chunk(doc: &Document, ids: Vec<usize>, path: &[(BlockType, String)], kind: ChunkKind, oversize: bool) -> Chunk {
    Chunk {
        chunk_id: String::new(),
        doc_id: doc.doc_id.clone(),
        page_span: page_span(doc, &ids),
        block_ids: ids,
        section_path: path.to_vec(),
        kind,
        oversize,
    }
}

/// Packs each anchor's blocks into length-bounded chunks.
///
/// Figures and tables are emitted as single-block chunks. Chunk ids are left
/// empty; [`chunk_document`] assigns them after binding.
pub fn dfs_chunk(tree: &ParentMap, doc: &Document, max_len: usize, counter: &dyn TokenCounter) -> Vec<Chunk> {
    let mut out = Vec::new();
    for anchor in section_roots(tree, doc) {
        let path = path_entries(doc, &anchor.path);
        let budget = max_len.saturating_sub(metadata_tokens(&path, counter));
        let mut buf: Vec<usize> = Vec::new();
        let mut used = 0usize;
        let flush = |buf: &mut Vec<usize>, used: &mut usize, out: &mut Vec<Chunk>| {
            if !buf.is_empty() {
                out.push(new_chunk(doc, std::mem::take(buf), &path, ChunkKind::Text, false));
            }
            *used = 0;
        };
        for &id in &anchor.members {
            let block = &doc.blocks[id];
            if block.block_type.is_visual() {
                flush(&mut buf, &mut used, &mut out);
                let size = 1 + counter.count(&block.text);
                out.push(new_chunk(doc, vec![id], &path, ChunkKind::Visual, size > budget));
                continue;
            }
            let size = counter.count(&block.text);
            if used + size > budget {
                flush(&mut buf, &mut used, &mut out);
                if size > budget {
                    out.push(new_chunk(doc, vec![id], &path, ChunkKind::Text, true));
                    continue;
                }
            }
            buf.push(id);
            used += size;
        }
        flush(&mut buf, &mut used, &mut out);
    }
    out
}

fn linked(tree: &ParentMap, a: usize, b: usize) -> bool {
    tree.get(a) == Parent::Block(b) || tree.get(b) == Parent::Block(a)
}

/// Figure/table to caption pairs: tree links first, then the nearest free
/// same-page caption.
pub fn visual_caption_pairs(tree: &ParentMap, doc: &Document) -> Vec<(usize, usize)> {
    let visuals: Vec<usize> = doc.blocks.iter().filter(|b| b.block_type.is_visual()).map(|b| b.id).collect();
    let captions: Vec<usize> = doc
        .blocks
        .iter()
        .filter(|b| b.block_type == BlockType::Caption)
        .map(|b| b.id)
        .collect();
    let mut caption_taken = vec![false; doc.len()];
    let mut visual_done = vec![false; doc.len()];
    let mut pairs = Vec::new();
    for &v in &visuals {
        if let Some(&c) = captions.iter().find(|&&c| !caption_taken[c] && linked(tree, v, c)) {
            caption_taken[c] = true;
            visual_done[v] = true;
            pairs.push((v, c));
        }
    }
    let mut fallback: Vec<(f64, usize, usize)> = Vec::new();
    for &v in visuals.iter().filter(|&&v| !visual_done[v]) {
        let (vx, vy) = doc.blocks[v].bbox.center();
        for &c in captions.iter().filter(|&&c| !caption_taken[c]) {
            if doc.blocks[c].page != doc.blocks[v].page {
                continue;
            }
            let (cx, cy) = doc.blocks[c].bbox.center();
            fallback.push(((vx - cx).hypot(vy - cy), v, c));
        }
    }
    fallback.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, v, c) in fallback {
        if visual_done[v] || caption_taken[c] {
            continue;
        }
        visual_done[v] = true;
        caption_taken[c] = true;
        pairs.push((v, c));
    }
    pairs.sort_unstable();
    pairs
}

/// Moves each figure/table's caption into the figure's chunk.
pub fn bind_visuals(tree: &ParentMap, doc: &Document, mut chunks: Vec<Chunk>) -> Vec<Chunk> {
    let mut owner = vec![usize::MAX; doc.len()];
    for (ci, c) in chunks.iter().enumerate() {
        for &b in &c.block_ids {
            owner[b] = ci;
        }
    }
    for (v, c) in visual_caption_pairs(tree, doc) {
        let (from, to) = (owner[c], owner[v]);
        if from == usize::MAX || to == usize::MAX {
            continue;
        }
        if from != to {
            chunks[from].block_ids.retain(|&b| b != c);
            chunks[to].block_ids.push(c);
            chunks[to].block_ids.sort_unstable();
            owner[c] = to;
        }
        chunks[to].kind = ChunkKind::VisualWithCaption;
    }
    chunks.retain(|c| !c.block_ids.is_empty());
    for c in chunks.iter_mut() {
        c.page_span = page_span(doc, &c.block_ids);
    }
    chunks
}

fn assign_ids(doc_id: &str, chunks: &mut [Chunk]) {
    for (i, c) in chunks.iter_mut().enumerate() {
        c.chunk_id = format!("{doc_id}#{i}");
    }
}

/// Full tree-guided chunking: DFS packing, visual binding, id assignment.
pub fn chunk_document(tree: &ParentMap, doc: &Document, max_len: usize, counter: &dyn TokenCounter) -> Vec<Chunk> {
    let chunks = dfs_chunk(tree, doc, max_len, counter);
    let mut chunks = bind_visuals(tree, doc, chunks);
    let budget_check = |c: &Chunk| {
        let body: usize = c
            .block_ids
            .iter()
            .map(|&b| counter.count(&doc.blocks[b].text) + usize::from(doc.blocks[b].block_type.is_visual()))
            .sum();
        body + metadata_tokens(&c.section_path, counter) > max_len
    };
    for c in chunks.iter_mut() {
        if c.kind == ChunkKind::VisualWithCaption {
            c.oversize = budget_check(c);
        }
    }
    assign_ids(&doc.doc_id, &mut chunks);
    chunks
}

/// Structure-blind baseline: blocks packed in reading order up to `max_len`.
pub fn length_chunks(doc: &Document, max_len: usize, counter: &dyn TokenCounter) -> Vec<Chunk> {
    let mut out = Vec::new();
    let budget = max_len.saturating_sub(2);
    let mut buf: Vec<usize> = Vec::new();
    let mut used = 0;
    for b in &doc.blocks {
        let size = counter.count(&b.text) + usize::from(b.block_type.is_visual());
        if used + size > budget && !buf.is_empty() {
            out.push(new_chunk(doc, std::mem::take(&mut buf), &[], ChunkKind::Text, false));
            used = 0;
        }
        buf.push(b.id);
        used += size;
    }
    if !buf.is_empty() {
        out.push(new_chunk(doc, buf, &[], ChunkKind::Text, false));
    }
    for c in out.iter_mut() {
        c.oversize = c.block_ids.len() == 1
            && counter.count(&doc.blocks[c.block_ids[0]].text) + 2 > max_len;
    }
    assign_ids(&doc.doc_id, &mut out);
    out
}

/// Renders a chunk with the shared retrieval template.
///
/// ```text
/// # <title>            one line per section path entry
/// ## <section>
/// pages: 2-4           or "pages: 2" for a single page
/// [figure]             marker before each figure/table block
/// <block text>
/// ```
///
/// Without metadata only the body lines are emitted. Blocks with empty text
/// contribute no text line.
pub fn serialize_chunk(chunk: &Chunk, doc: &Document, include_metadata: bool) -> SerializedChunk {
    let mut lines: Vec<String> = Vec::new();
    if include_metadata {
        for (depth, (_, text)) in chunk.section_path.iter().enumerate() {
            lines.push(format!("{} {}", "#".repeat(depth + 1), text));
        }
        let (lo, hi) = chunk.page_span;
        lines.push(if lo == hi {
            format!("pages: {lo}")
        } else {
            format!("pages: {lo}-{hi}")
        });
    }
    let mut order = chunk.block_ids.clone();
    if chunk.kind == ChunkKind::VisualWithCaption {
        // captions follow their visual
        order.sort_by_key(|&b| (!doc.blocks[b].block_type.is_visual(), b));
    }
    for b in order {
        let block = &doc.blocks[b];
        match block.block_type {
            BlockType::Figure => lines.push("[figure]".into()),
            BlockType::Table => lines.push("[table]".into()),
            _ => {}
        }
        if !block.text.is_empty() {
            lines.push(block.text.clone());
        }
    }
    let text = lines.join("\n");
    SerializedChunk {
        chunk_id: chunk.chunk_id.clone(),
        token_count: WhitespaceTokenizer.count(&text),
        text,
    }
}

/// Chunks plus their rendered text, ready for the chunk store.
pub fn store_chunks(chunks: &[Chunk], doc: &Document, include_metadata: bool) -> Vec<StoredChunk> {
    chunks
        .iter()
        .map(|c| {
            let s = serialize_chunk(c, doc, include_metadata);
            StoredChunk {
                chunk: c.clone(),
                text: s.text,
                token_count: s.token_count,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canvas::{Block, Rect};
    use Parent::{Block as B, Root};

    fn words(n: usize, tag: &str) -> String {
        (0..n).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ")
    }

    fn blk(id: usize, page: usize, y0: f64, t: BlockType, text: String) -> Block {
        Block {
            id,
            page,
            bbox: Rect::new(0.1, y0, 0.9, y0 + 0.05),
            block_type: t,
            text,
            confidence: 1.0,
        }
    }

    fn doc(blocks: Vec<Block>) -> Document {
        let pages = blocks.iter().map(|b| b.page).max().unwrap_or(0);
        Document {
            doc_id: "d".into(),
            page_sizes: vec![(1.0, 1.0); pages],
            blocks,
        }
    }

    fn partition_ok(chunks: &[Chunk], n: usize) {
        let mut seen = vec![0; n];
        for c in chunks {
            for w in c.block_ids.windows(2) {
                assert!(w[0] < w[1]);
            }
            for &b in &c.block_ids {
                seen[b] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1), "{seen:?}");
    }

    #[test]
    fn headerless_doc_is_one_preamble() {
        let d = doc((0..3).map(|i| blk(i, 1, 0.1 * i as f64, BlockType::Paragraph, "x".into())).collect());
        let t = ParentMap(vec![Root, B(0), Root]);
        let a = section_roots(&t, &d);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].header, None);
        assert_eq!(a[0].members, vec![0, 1, 2]);
    }

    #[test]
    fn three_headers_three_anchors() {
        let d = doc((0..3).map(|i| blk(i, 1, 0.1 * i as f64, BlockType::SectionHeader, "h".into())).collect());
        let t = ParentMap(vec![Root, Root, Root]);
        let a = section_roots(&t, &d);
        assert_eq!(a.iter().map(|a| a.header).collect::<Vec<_>>(), vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn nested_headers_assign_nearest_anchor() {
        let d = doc(vec![
            blk(0, 1, 0.0, BlockType::Title, "T".into()),
            blk(1, 1, 0.1, BlockType::Paragraph, "p".into()),
            blk(2, 1, 0.2, BlockType::SectionHeader, "S1".into()),
            blk(3, 1, 0.3, BlockType::Paragraph, "p".into()),
            blk(4, 2, 0.1, BlockType::SectionHeader, "S2".into()),
            blk(5, 2, 0.2, BlockType::Paragraph, "p".into()),
            blk(6, 2, 0.3, BlockType::ListItem, "p".into()),
        ]);
        let t = ParentMap(vec![Root, B(0), B(0), B(2), B(0), B(4), B(5)]);
        let anchors = section_roots(&t, &d);
        assert_eq!(anchors.len(), 3);
        // tree-walk oracle: nearest header ancestor of every block
        let nearest = |mut b: usize| loop {
            if d.blocks[b].block_type.is_header() {
                return b;
            }
            b = t.get(b).block().unwrap();
        };
        for a in &anchors {
            for &m in &a.members {
                assert_eq!(Some(nearest(m)), a.header);
            }
        }
        assert_eq!(anchors[2].path, vec![0, 4]);
    }

    #[test]
    fn single_small_block() {
        let d = doc(vec![blk(0, 1, 0.1, BlockType::Paragraph, words(10, "w"))]);
        let c = chunk_document(&ParentMap(vec![Root]), &d, 550, &WhitespaceTokenizer);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].block_ids, vec![0]);
        assert!(!c[0].oversize);
    }

    #[test]
    fn three_large_blocks_never_pair() {
        let d = doc((0..3).map(|i| blk(i, 1, 0.1 * i as f64, BlockType::Paragraph, words(300, "w"))).collect());
        let c = chunk_document(&ParentMap(vec![Root; 3]), &d, 550, &WhitespaceTokenizer);
        let ids: Vec<_> = c.iter().map(|c| c.block_ids.clone()).collect();
        assert_eq!(ids, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn buffer_replay() {
        // replay of the packing rule with a budget of 550 - 2 (pages line)
        let sizes = [100, 200, 240, 10, 400, 150];
        let d = doc(sizes.iter().enumerate().map(|(i, &n)| blk(i, 1, 0.1, BlockType::Paragraph, words(n, "w"))).collect());
        let c = chunk_document(&ParentMap(vec![Root; sizes.len()]), &d, 550, &WhitespaceTokenizer);
        let ids: Vec<_> = c.iter().map(|c| c.block_ids.clone()).collect();
        assert_eq!(ids, vec![vec![0, 1, 2], vec![3, 4], vec![5]]);
        for ch in &c {
            assert!(serialize_chunk(ch, &d, true).token_count <= 550);
        }
    }

    #[test]
    fn oversize_block_stands_alone() {
        let d = doc(vec![
            blk(0, 1, 0.1, BlockType::Paragraph, words(5, "a")),
            blk(1, 1, 0.2, BlockType::Paragraph, words(900, "w")),
            blk(2, 1, 0.3, BlockType::Paragraph, words(5, "b")),
        ]);
        let c = chunk_document(&ParentMap(vec![Root; 3]), &d, 550, &WhitespaceTokenizer);
        assert_eq!(c.len(), 3);
        assert!(c[1].oversize);
        assert!(!c[0].oversize && !c[2].oversize);
    }

    fn figure_doc() -> Document {
        doc(vec![
            blk(0, 1, 0.0, BlockType::SectionHeader, "S".into()),
            blk(1, 1, 0.1, BlockType::Paragraph, words(20, "p")),
            blk(2, 1, 0.3, BlockType::Figure, String::new()),
            blk(3, 1, 0.5, BlockType::Caption, "Figure 1: plot".into()),
            blk(4, 2, 0.1, BlockType::Paragraph, words(20, "q")),
        ])
    }

    #[test]
    fn tree_linked_caption_is_bound() {
        let d = figure_doc();
        let t = ParentMap(vec![Root, B(0), B(0), B(2), B(0)]);
        let c = chunk_document(&t, &d, 550, &WhitespaceTokenizer);
        partition_ok(&c, 5);
        let vis = c.iter().find(|c| c.block_ids.contains(&2)).unwrap();
        assert_eq!(vis.block_ids, vec![2, 3]);
        assert_eq!(vis.kind, ChunkKind::VisualWithCaption);
        let s = serialize_chunk(vis, &d, true);
        assert_eq!(s.text, "# S\npages: 1\n[figure]\nFigure 1: plot");
    }

    #[test]
    fn caption_above_table_renders_after_marker() {
        let d = doc(vec![
            blk(0, 1, 0.1, BlockType::Caption, "Table 2: sizes".into()),
            blk(1, 1, 0.2, BlockType::Table, "a b".into()),
        ]);
        let t = ParentMap(vec![B(1), Root]);
        // parent after child is fine for chunking; only linkage matters
        let c = bind_visuals(&t, &d, dfs_chunk(&ParentMap(vec![Root, Root]), &d, 550, &WhitespaceTokenizer));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].block_ids, vec![0, 1]);
        assert_eq!(serialize_chunk(&c[0], &d, false).text, "[table]\na b\nTable 2: sizes");
    }

    #[test]
    fn figure_without_caption_stands_alone() {
        let d = doc(vec![
            blk(0, 1, 0.1, BlockType::Paragraph, "x".into()),
            blk(1, 1, 0.3, BlockType::Figure, String::new()),
        ]);
        let c = chunk_document(&ParentMap(vec![Root, B(0)]), &d, 550, &WhitespaceTokenizer);
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].kind, ChunkKind::Visual);
        assert_eq!(serialize_chunk(&c[1], &d, false).text, "[figure]");
    }

    #[test]
    fn nearest_caption_fallback() {
        let mut d = doc(vec![
            blk(0, 1, 0.05, BlockType::Figure, String::new()),
            blk(1, 1, 0.10, BlockType::Figure, String::new()),
            blk(2, 1, 0.60, BlockType::Caption, "c2".into()),
            blk(3, 1, 0.80, BlockType::Caption, "c3".into()),
        ]);
        d.blocks[0].bbox = Rect::new(0.0, 0.05, 0.4, 0.5);
        d.blocks[1].bbox = Rect::new(0.5, 0.10, 0.9, 0.7);
        d.blocks[2].bbox = Rect::new(0.5, 0.72, 0.9, 0.75);
        d.blocks[3].bbox = Rect::new(0.0, 0.80, 0.4, 0.85);
        let t = ParentMap(vec![Root; 4]);
        // brute force: the minimum-total-distance perfect matching
        let dist = |a: usize, b: usize| {
            let (ax, ay) = d.blocks[a].bbox.center();
            let (bx, by) = d.blocks[b].bbox.center();
            (ax - bx).hypot(ay - by)
        };
        let straight = dist(0, 2) + dist(1, 3);
        let crossed = dist(0, 3) + dist(1, 2);
        let expected = if crossed < straight { vec![(0, 3), (1, 2)] } else { vec![(0, 2), (1, 3)] };
        assert_eq!(visual_caption_pairs(&t, &d), expected);
        let c = chunk_document(&t, &d, 550, &WhitespaceTokenizer);
        partition_ok(&c, 4);
        assert!(c.iter().all(|c| c.kind == ChunkKind::VisualWithCaption));
    }

    #[test]
    fn serialize_with_path_and_pages() {
        let d = doc(vec![
            blk(0, 2, 0.1, BlockType::Title, "T".into()),
            blk(1, 2, 0.2, BlockType::SectionHeader, "S1".into()),
            blk(2, 3, 0.2, BlockType::Paragraph, "body one".into()),
            blk(3, 4, 0.2, BlockType::Paragraph, "body two".into()),
        ]);
        let chunk = Chunk {
            chunk_id: "d#0".into(),
            doc_id: "d".into(),
            block_ids: vec![2, 3],
            section_path: vec![(BlockType::Title, "T".into()), (BlockType::SectionHeader, "S1".into())],
            page_span: (2, 4),
            kind: ChunkKind::Text,
            oversize: false,
        };
        let s = serialize_chunk(&chunk, &d, true);
        assert!(s.text.starts_with("# T\n## S1\npages: 2-4\n"));
        assert_eq!(s.text, "# T\n## S1\npages: 2-4\nbody one\nbody two");
        assert_eq!(s.token_count, 10);
        let bare = serialize_chunk(&chunk, &d, false);
        assert_eq!(bare.text, "body one\nbody two");
        assert!(!bare.text.contains("pages:"));
    }

    #[test]
    fn section_path_truncated() {
        let long: String = "x".repeat(300);
        let d = doc(vec![
            blk(0, 1, 0.1, BlockType::SectionHeader, long),
            blk(1, 1, 0.2, BlockType::Paragraph, "p".into()),
        ]);
        let c = chunk_document(&ParentMap(vec![Root, B(0)]), &d, 550, &WhitespaceTokenizer);
        assert_eq!(c[0].section_path[0].1.chars().count(), SECTION_TEXT_LIMIT);
    }

    #[test]
    fn length_baseline_partitions() {
        let d = doc((0..6).map(|i| blk(i, 1 + i / 3, 0.1, BlockType::Paragraph, words(200, "w"))).collect());
        let c = length_chunks(&d, 550, &WhitespaceTokenizer);
        partition_ok(&c, 6);
        assert!(c.iter().all(|c| c.section_path.is_empty()));
        for ch in &c {
            assert!(serialize_chunk(ch, &d, true).token_count <= 550);
        }
    }
}
