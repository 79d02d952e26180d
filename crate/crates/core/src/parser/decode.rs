//! Tree decoding over scored candidate edges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{DependencyTree, Parent, ParentMap, Validity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdge {
    pub child: usize,
    pub parent: Parent,
    pub score: f64,
}

/// Flattens per-child option lists (as produced by `score_document`).
pub fn flatten_scores(per_child: &[Vec<(Parent, f64)>]) -> Vec<ScoredEdge> {
    per_child
        .iter()
        .enumerate()
        .flat_map(|(child, opts)| {
            opts.iter().map(move |&(parent, score)| ScoredEdge {
                child,
                parent,
                score,
            })
        })
        .collect()
}

/// Sum of the scores of the edges used by `parents`, accumulated in child
/// order. Missing edges count as `-inf`.
pub fn total_score(edges: &[ScoredEdge], parents: &ParentMap) -> f64 {
    let mut best = vec![None::<f64>; parents.len()];
    for e in edges {
        if e.child < parents.len() && parents.get(e.child) == e.parent {
            best[e.child] = Some(best[e.child].map_or(e.score, |s: f64| s.max(e.score)));
        }
    }
    best.into_iter().map(|s| s.unwrap_or(f64::NEG_INFINITY)).sum()
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    from: usize,
    to: usize,
    w: f64,
    /// tie-break: lower parent key wins
    key: i64,
    /// index into the previous level's arc list
    id: usize,
}

fn better(a: &Arc, b: &Arc) -> bool {
    a.w > b.w || (a.w == b.w && a.key < b.key)
}

/// Chu-Liu/Edmonds. Returns, per node, the index of its chosen incoming arc
/// (`usize::MAX` for the root), or `None` when some node is unreachable.
fn chu_liu_edmonds(n: usize, root: usize, arcs: &[Arc]) -> Option<Vec<usize>> {
    const NONE: usize = usize::MAX;
    let mut best = vec![NONE; n];
    for (i, a) in arcs.iter().enumerate() {
        if a.to == root || a.from == a.to {
            continue;
        }
        if best[a.to] == NONE || better(a, &arcs[best[a.to]]) {
            best[a.to] = i;
        }
    }
    if (0..n).any(|v| v != root && best[v] == NONE) {
        return None;
    }

    // cycles among the greedy choices
    let mut cycle_of = vec![NONE; n];
    let mut stamp = vec![NONE; n];
    let mut cycles = 0;
    for start in 0..n {
        let mut v = start;
        while v != root && stamp[v] == NONE && cycle_of[v] == NONE {
            stamp[v] = start;
            v = arcs[best[v]].from;
        }
        if v != root && stamp[v] == start && cycle_of[v] == NONE {
            let mut x = v;
            loop {
                cycle_of[x] = cycles;
                x = arcs[best[x]].from;
                if x == v {
                    break;
                }
            }
            cycles += 1;
        }
    }
    if cycles == 0 {
        return Some(best);
    }

    // contract every cycle into one node
    let mut map = vec![0; n];
    let mut next = cycles;
    for v in 0..n {
        if cycle_of[v] != NONE {
            map[v] = cycle_of[v];
        } else {
            map[v] = next;
            next += 1;
        }
    }
    let mut contracted = Vec::with_capacity(arcs.len());
    for (i, a) in arcs.iter().enumerate() {
        let (from, to) = (map[a.from], map[a.to]);
        if from == to {
            continue;
        }
        let w = if cycle_of[a.to] != NONE {
            a.w - arcs[best[a.to]].w
        } else {
            a.w
        };
        contracted.push(Arc {
            from,
            to,
            w,
            key: a.key,
            id: i,
        });
    }
    let sub = chu_liu_edmonds(next, map[root], &contracted)?;

    let mut chosen = vec![NONE; n];
    for v in 0..n {
        if v == root {
            continue;
        }
        chosen[v] = if cycle_of[v] == NONE {
            contracted[sub[map[v]]].id
        } else {
            best[v]
        };
    }
    // the arc entering each cycle breaks it at its head
    for c in 0..cycles {
        let entering = contracted[sub[c]].id;
        chosen[arcs[entering].to] = entering;
    }
    Some(chosen)
}

/// Maximum-weight spanning arborescence rooted at ROOT over the given edges.
///
/// Equal weights resolve toward the lower parent id (ROOT first).
pub fn decode_mst(n_blocks: usize, edges: &[ScoredEdge]) -> Result<DependencyTree> {
    let arcs: Vec<Arc> = edges
        .iter()
        .filter(|e| e.child < n_blocks && e.parent.block().is_none_or(|b| b < n_blocks))
        .enumerate()
        .map(|(i, e)| Arc {
            from: e.parent.block().map_or(0, |b| b + 1),
            to: e.child + 1,
            w: e.score,
            key: e.parent.order_key(),
            id: i,
        })
        .collect();
    let chosen = chu_liu_edmonds(n_blocks + 1, 0, &arcs).ok_or_else(|| {
        Error::IdMismatch("some block has no path from ROOT through the candidate edges".into())
    })?;
    let parents = (1..=n_blocks)
        .map(|v| {
            let a = arcs[chosen[v]];
            if a.from == 0 {
                Parent::Root
            } else {
                Parent::Block(a.from - 1)
            }
        })
        .collect();
    DependencyTree::new(ParentMap(parents))
}

/// Best-scoring parent per child, independently. May not form a tree.
pub fn decode_argmax(n_blocks: usize, edges: &[ScoredEdge]) -> (ParentMap, Validity) {
    let mut best: Vec<Option<(f64, Parent)>> = vec![None; n_blocks];
    for e in edges {
        if e.child >= n_blocks {
            continue;
        }
        let slot = &mut best[e.child];
        let take = match slot {
            None => true,
            Some((s, p)) => e.score > *s || (e.score == *s && e.parent.order_key() < p.order_key()),
        };
        if take {
            *slot = Some((e.score, e.parent));
        }
    }
    let parents = ParentMap(
        best.into_iter()
            .map(|b| b.map_or(Parent::Root, |(_, p)| p))
            .collect(),
    );
    let validity = parents.validity();
    (parents, validity)
}
