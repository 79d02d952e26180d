//! Parent accuracy and tree-edit similarity.

use serde::{Deserialize, Serialize};

use crate::canvas::Document;
use crate::error::{Error, Result};
use crate::tree::{Parent, ParentMap};

/// Edge families used to break parent accuracy down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeSubsetTag {
    /// Child and gold parent on the same page.
    Local,
    /// Child and gold parent on different pages.
    CrossPage,
    /// Child is a figure or table.
    FigTable,
}

impl EdgeSubsetTag {
    pub const ALL: [EdgeSubsetTag; 3] = [EdgeSubsetTag::Local, EdgeSubsetTag::CrossPage, EdgeSubsetTag::FigTable];

    /// Whether the gold edge of `child` falls in this subset.
    pub fn contains(self, doc: &Document, gold: &ParentMap, child: usize) -> bool {
        let c = &doc.blocks[child];
        match self {
            EdgeSubsetTag::FigTable => c.block_type.is_visual(),
            EdgeSubsetTag::Local | EdgeSubsetTag::CrossPage => match gold.get(child) {
                Parent::Root => false,
                Parent::Block(p) => (doc.blocks[p].page == c.page) == (self == EdgeSubsetTag::Local),
            },
        }
    }
}

fn check_ids(pred: &ParentMap, gold: &ParentMap) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::IdMismatch(format!(
            "prediction has {} blocks, gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    Ok(())
}

/// Per-edge counts behind [`parent_f1`].
pub fn parent_counts(
    pred: &ParentMap,
    gold: &ParentMap,
    subset: Option<(EdgeSubsetTag, &Document)>,
) -> Result<(usize, usize)> {
    check_ids(pred, gold)?;
    if let Some((_, doc)) = subset {
        if doc.len() != gold.len() {
            return Err(Error::IdMismatch(format!(
                "document has {} blocks, gold has {}",
                doc.len(),
                gold.len()
            )));
        }
    }
    let (mut hit, mut total) = (0, 0);
    for id in 0..gold.len() {
        if gold.get(id).is_root() {
            continue;
        }
        if let Some((tag, doc)) = subset {
            if !tag.contains(doc, gold, id) {
                continue;
            }
        }
        total += 1;
        hit += usize::from(pred.get(id) == gold.get(id));
    }
    Ok((hit, total))
}

/// Parent accuracy over blocks whose gold parent is not ROOT.
///
/// Each block gets exactly one predicted parent, so precision, recall and F1
/// coincide. An empty evaluation set scores 1.
pub fn parent_f1(pred: &ParentMap, gold: &ParentMap, subset: Option<(EdgeSubsetTag, &Document)>) -> Result<f64> {
    let (hit, total) = parent_counts(pred, gold, subset)?;
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

/// Ordered tree in postorder, as used by the edit distance.
#[derive(Debug, Clone)]
pub struct OrderedTree {
    /// Node labels in postorder; ROOT is `None`.
    pub labels: Vec<Option<usize>>,
    /// Postorder index of the leftmost leaf under each node.
    pub leftmost: Vec<usize>,
}

impl OrderedTree {
    /// ROOT plus every block reachable from it, children in id order.
    pub fn from_parents(parents: &ParentMap) -> Self {
        let children = parents.children();
        let mut labels = Vec::new();
        let mut leftmost = Vec::new();
        // (node slot, next child index, leftmost leaf so far)
        let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(0, 0, None)];
        while let Some(top) = stack.last_mut() {
            let (slot, next) = (top.0, top.1);
            if next < children[slot].len() {
                top.1 += 1;
                stack.push((children[slot][next] + 1, 0, None));
                continue;
            }
            let (slot, _, lm) = stack.pop().unwrap();
            let me = labels.len();
            labels.push(slot.checked_sub(1));
            let lm = lm.unwrap_or(me);
            leftmost.push(lm);
            if let Some(parent) = stack.last_mut() {
                parent.2.get_or_insert(lm);
            }
        }
        OrderedTree { labels, leftmost }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Zhang-Shasha ordered tree edit distance with unit costs.
pub fn tree_edit_distance(a: &OrderedTree, b: &OrderedTree) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return n + m;
    }
    let keyroots = |t: &OrderedTree| -> Vec<usize> {
        let mut seen = vec![false; t.len()];
        let mut out: Vec<usize> = Vec::new();
        for i in (0..t.len()).rev() {
            if !seen[t.leftmost[i]] {
                seen[t.leftmost[i]] = true;
                out.push(i);
            }
        }
        out.reverse();
        out
    };
    let mut td = vec![vec![0usize; m]; n];
    let mut fd = vec![vec![0usize; m + 1]; n + 1];
    for &i in &keyroots(a) {
        for &j in &keyroots(b) {
            let (li, lj) = (a.leftmost[i], b.leftmost[j]);
            let (rows, cols) = (i - li + 1, j - lj + 1);
            fd[0][0] = 0;
            for x in 1..=rows {
                fd[x][0] = fd[x - 1][0] + 1;
            }
            for y in 1..=cols {
                fd[0][y] = fd[0][y - 1] + 1;
            }
            for x in 1..=rows {
                let ai = li + x - 1;
                for y in 1..=cols {
                    let bj = lj + y - 1;
                    let del = fd[x - 1][y] + 1;
                    let ins = fd[x][y - 1] + 1;
                    if a.leftmost[ai] == li && b.leftmost[bj] == lj {
                        let sub = fd[x - 1][y - 1] + usize::from(a.labels[ai] != b.labels[bj]);
                        fd[x][y] = del.min(ins).min(sub);
                        td[ai][bj] = fd[x][y];
                    } else {
                        let px = a.leftmost[ai] - li;
                        let py = b.leftmost[bj] - lj;
                        fd[x][y] = del.min(ins).min(fd[px][py] + td[ai][bj]);
                    }
                }
            }
        }
    }
    td[n - 1][m - 1]
}

/// Tree similarity `1 - TED / (|pred| + |gold|)`.
///
/// Both trees include ROOT and order children by block id; nodes match at
/// zero cost only when their block ids agree. Blocks unreachable from ROOT in
/// `pred` are left out of its tree.
pub fn steds(pred: &ParentMap, gold: &ParentMap) -> Result<f64> {
    check_ids(pred, gold)?;
    let a = OrderedTree::from_parents(pred);
    let b = OrderedTree::from_parents(gold);
    let ted = tree_edit_distance(&a, &b);
    Ok(1.0 - ted as f64 / (a.len() + b.len()) as f64)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::canvas::{Block, BlockType, Rect};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Parent::{Block as B, Root};

    /// Exhaustive edit distance: the cheapest valid mapping between the trees.
    ///
    /// A mapping is valid when it is one-to-one and preserves both the
    /// ancestor relation and the left-to-right order of nodes.
    pub(crate) fn brute_force_ted(a: &ParentMap, b: &ParentMap) -> usize {
        struct Flat {
            labels: Vec<Option<usize>>,
            pre: Vec<usize>,
            anc: Vec<Vec<bool>>,
        }
        fn flat(p: &ParentMap) -> Flat {
            let children = p.children();
            let mut labels = Vec::new();
            let mut parent_of: Vec<Option<usize>> = Vec::new();
            let mut stack = vec![(0usize, None)];
            while let Some((slot, par)) = stack.pop() {
                let me = labels.len();
                labels.push(slot.checked_sub(1));
                parent_of.push(par);
                for &c in children[slot].iter().rev() {
                    stack.push((c + 1, Some(me)));
                }
            }
            let n = labels.len();
            let mut anc = vec![vec![false; n]; n];
            for v in 0..n {
                let mut cur = parent_of[v];
                while let Some(u) = cur {
                    anc[u][v] = true;
                    cur = parent_of[u];
                }
            }
            Flat {
                labels,
                pre: (0..n).collect(),
                anc,
            }
        }
        let (fa, fb) = (flat(a), flat(b));
        let (n, m) = (fa.labels.len(), fb.labels.len());
        let mut best = n + m;
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        fn rec(
            i: usize,
            fa: &Flat,
            fb: &Flat,
            used: &mut Vec<bool>,
            pairs: &mut Vec<(usize, usize)>,
            best: &mut usize,
        ) {
            let (n, m) = (fa.labels.len(), fb.labels.len());
            if i == n {
                let relabel: usize = pairs.iter().map(|&(x, y)| usize::from(fa.labels[x] != fb.labels[y])).sum();
                let cost = relabel + (n - pairs.len()) + (m - pairs.len());
                *best = (*best).min(cost);
                return;
            }
            rec(i + 1, fa, fb, used, pairs, best);
            for j in 0..m {
                if used[j] {
                    continue;
                }
                let ok = pairs.iter().all(|&(x, y)| {
                    fa.anc[x][i] == fb.anc[y][j] && fa.anc[i][x] == fb.anc[j][y] && (fa.pre[x] < fa.pre[i]) == (fb.pre[y] < fb.pre[j])
                });
                if ok {
                    used[j] = true;
                    pairs.push((i, j));
                    rec(i + 1, fa, fb, used, pairs, best);
                    pairs.pop();
                    used[j] = false;
                }
            }
        }
        let mut used = vec![false; m];
        rec(0, &fa, &fb, &mut used, &mut pairs, &mut best);
        best
    }

    /// Random rooted forest over `n` blocks; parents follow a random order.
    pub(crate) fn random_tree(rng: &mut impl Rng, n: usize) -> ParentMap {
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut parents = vec![Root; n];
        for (pos, &v) in order.iter().enumerate() {
            let pick = rng.gen_range(0..=pos);
            parents[v] = if pick == pos { Root } else { B(order[pick]) };
        }
        ParentMap(parents)
    }

    fn brute_steds(a: &ParentMap, b: &ParentMap) -> f64 {
        1.0 - brute_force_ted(a, b) as f64 / (a.len() + b.len() + 2) as f64
    }

    #[test]
    fn identical_trees_score_one() {
        let t = ParentMap(vec![Root, B(0), B(0), B(1)]);
        assert_eq!(steds(&t, &t).unwrap(), 1.0);
        assert_eq!(steds(&ParentMap(vec![]), &ParentMap(vec![])).unwrap(), 1.0);
    }

    #[test]
    fn chain_vs_star() {
        let chain = ParentMap(vec![Root, B(0), B(1)]);
        let star = ParentMap(vec![Root, Root, Root]);
        let ted = brute_force_ted(&chain, &star);
        let got = steds(&chain, &star).unwrap();
        assert_eq!(got, 1.0 - ted as f64 / 8.0);
        // moving two subtrees up costs a delete and an insert each
        assert_eq!(ted, 4);
    }

    #[test]
    fn zhang_shasha_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..600 {
            let n = rng.gen_range(0..=5);
            let a = random_tree(&mut rng, n);
            let b = if trial % 5 == 0 { a.clone() } else { random_tree(&mut rng, n) };
            let zs = tree_edit_distance(&OrderedTree::from_parents(&a), &OrderedTree::from_parents(&b));
            assert_eq!(zs, brute_force_ted(&a, &b), "{a:?} vs {b:?}");
            assert_eq!(steds(&a, &b).unwrap(), brute_steds(&a, &b));
        }
    }

    #[test]
    fn unreachable_pred_nodes_are_dropped() {
        let gold = ParentMap(vec![Root, B(0), B(1)]);
        let pred = ParentMap(vec![Root, B(2), B(1)]);
        // pred tree is ROOT -> 0 only: TED deletes 1 and 2 from gold
        assert_eq!(steds(&pred, &gold).unwrap(), 1.0 - 2.0 / 6.0);
    }

    #[test]
    fn id_mismatch() {
        let a = ParentMap(vec![Root]);
        let b = ParentMap(vec![Root, Root]);
        assert!(matches!(steds(&a, &b), Err(Error::IdMismatch(_))));
        assert!(matches!(parent_f1(&a, &b, None), Err(Error::IdMismatch(_))));
    }

    #[test]
    fn parent_f1_examples() {
        let gold = ParentMap(vec![Root, B(0), B(0), B(1), B(2)]);
        assert_eq!(parent_f1(&gold, &gold, None).unwrap(), 1.0);
        assert_eq!(parent_f1(&ParentMap(vec![Root; 5]), &gold, None).unwrap(), 0.0);
        let pred = ParentMap(vec![Root, B(0), B(0), B(1), B(1)]);
        assert_eq!(parent_f1(&pred, &gold, None).unwrap(), 0.75);
    }

    fn blk(id: usize, page: usize, t: BlockType) -> Block {
        Block {
            id,
            page,
            bbox: Rect::new(0.1, 0.1, 0.9, 0.2),
            block_type: t,
            text: String::new(),
            confidence: 1.0,
        }
    }

    #[test]
    fn subsets() {
        let doc = Document {
            doc_id: "d".into(),
            page_sizes: vec![(1.0, 1.0); 2],
            blocks: vec![
                blk(0, 1, BlockType::SectionHeader),
                blk(1, 1, BlockType::Paragraph),
                blk(2, 2, BlockType::Paragraph),
                blk(3, 2, BlockType::Figure),
                blk(4, 2, BlockType::Caption),
            ],
        };
        let gold = ParentMap(vec![Root, B(0), B(0), B(0), B(3)]);
        let pred = ParentMap(vec![Root, B(0), B(1), B(2), B(3)]);
        let f = |t| parent_f1(&pred, &gold, Some((t, &doc))).unwrap();
        assert_eq!(f(EdgeSubsetTag::Local), 1.0);
        assert_eq!(f(EdgeSubsetTag::CrossPage), 0.0);
        assert_eq!(f(EdgeSubsetTag::FigTable), 0.0);
        assert_eq!(parent_counts(&pred, &gold, Some((EdgeSubsetTag::CrossPage, &doc))).unwrap(), (0, 2));
    }

    proptest! {
        #[test]
        fn steds_symmetric_and_bounded(seed in any::<u64>(), n in 0usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_tree(&mut rng, n);
            let b = random_tree(&mut rng, n);
            let ab = steds(&a, &b).unwrap();
            prop_assert_eq!(ab, steds(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(steds(&a, &a).unwrap(), 1.0);
            prop_assert_eq!(ab == 1.0, a == b);
        }

        #[test]
        fn single_corruption_never_helps(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gold = random_tree(&mut rng, n);
            let mut pred = gold.clone();
            let v = rng.gen_range(0..n);
            if !gold.0[v].is_root() {
                pred.0[v] = Root;
            } else if v > 0 {
                pred.0[v] = B(rng.gen_range(0..v));
            }
            let s = steds(&pred, &gold).unwrap();
            prop_assert!(s <= 1.0);
            prop_assert_eq!(s == 1.0, pred == gold);
        }

        #[test]
        fn parent_f1_is_hamming(seed in any::<u64>(), n in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gold = random_tree(&mut rng, n);
            let pred = random_tree(&mut rng, n);
            let considered: Vec<usize> = (0..n).filter(|&i| !gold.0[i].is_root()).collect();
            let ham = considered.iter().filter(|&&i| pred.0[i] != gold.0[i]).count();
            let expected = if considered.is_empty() { 1.0 } else { 1.0 - ham as f64 / considered.len() as f64 };
            prop_assert!((parent_f1(&pred, &gold, None).unwrap() - expected).abs() < 1e-12);
        }
    }
}
