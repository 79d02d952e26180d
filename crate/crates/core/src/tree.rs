//! Parent maps and validated dependency trees over block ids.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Parent of a block: the virtual root or another block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parent {
    Root,
    Block(usize),
}

impl Parent {
    pub fn block(self) -> Option<usize> {
        match self {
            Parent::Root => None,
            Parent::Block(b) => Some(b),
        }
    }

    pub fn is_root(self) -> bool {
        matches!(self, Parent::Root)
    }

    /// Ordering key that puts ROOT before every block.
    pub fn order_key(self) -> i64 {
        match self {
            Parent::Root => -1,
            Parent::Block(b) => b as i64,
        }
    }
}

impl fmt::Display for Parent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parent::Root => f.write_str("ROOT"),
            Parent::Block(b) => write!(f, "{b}"),
        }
    }
}

impl Serialize for Parent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Parent::Root => s.serialize_str("ROOT"),
            Parent::Block(b) => s.serialize_u64(*b as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Parent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct ParentVisitor;

        impl Visitor<'_> for ParentVisitor {
            type Value = Parent;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a block id or \"ROOT\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Parent, E> {
                Ok(Parent::Block(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Parent, E> {
                if v < 0 {
                    return Err(E::custom("negative block id"));
                }
                Ok(Parent::Block(v as usize))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Parent, E> {
                if v.eq_ignore_ascii_case("root") {
                    Ok(Parent::Root)
                } else {
                    v.parse()
                        .map(Parent::Block)
                        .map_err(|_| E::custom(format!("invalid parent {v:?}")))
                }
            }
        }

        d.deserialize_any(ParentVisitor)
    }
}

/// One parent per block, indexed by block id. Not necessarily a tree.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParentMap(pub Vec<Parent>);

/// Structural report for a parent map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Validity {
    /// Number of distinct cycles.
    pub cycles: usize,
    /// Blocks that cannot reach ROOT.
    pub unreachable: usize,
    /// Blocks whose parent does not precede them in reading order.
    pub future_parents: usize,
    /// Parents pointing outside the id range or at the block itself.
    pub invalid_refs: usize,
}

impl Validity {
    pub fn is_tree(&self) -> bool {
        self.cycles == 0 && self.unreachable == 0 && self.invalid_refs == 0
    }
}

impl ParentMap {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: usize) -> Parent {
        self.0[id]
    }

    /// Children of ROOT (index 0) and of each block (index id + 1), in id order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.0.len() + 1];
        for (id, p) in self.0.iter().enumerate() {
            match p {
                Parent::Root => ch[0].push(id),
                Parent::Block(b) if *b < self.0.len() => ch[b + 1].push(id),
                Parent::Block(_) => {}
            }
        }
        ch
    }

    pub fn validity(&self) -> Validity {
        let n = self.0.len();
        let mut report = Validity::default();
        for (id, p) in self.0.iter().enumerate() {
            if let Parent::Block(b) = p {
                if *b >= n || *b == id {
                    report.invalid_refs += 1;
                } else if *b > id {
                    report.future_parents += 1;
                }
            }
        }
        // 0 = unvisited, 1 = on current walk, 2 = reaches root, 3 = does not
        let mut state = vec![0u8; n];
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            let mut path = Vec::new();
            let mut cur = start;
            let outcome = loop {
                match state[cur] {
                    1 => {
                        report.cycles += 1;
                        break 3;
                    }
                    2 | 3 => break state[cur],
                    _ => {}
                }
                state[cur] = 1;
                path.push(cur);
                match self.0[cur] {
                    Parent::Root => break 2,
                    Parent::Block(b) if b < n && b != cur => cur = b,
                    Parent::Block(b) if b == cur => {
                        report.cycles += 1;
                        break 3;
                    }
                    Parent::Block(_) => break 3,
                }
            };
            for v in path {
                state[v] = outcome;
            }
        }
        report.unreachable = state.iter().filter(|&&s| s == 3).count();
        report
    }
}

/// A parent map known to be single-parent, acyclic and rooted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    parents: ParentMap,
}

impl DependencyTree {
    pub fn new(parents: ParentMap) -> Result<Self> {
        let v = parents.validity();
        if !v.is_tree() {
            return Err(Error::IdMismatch(format!("parent map is not a tree: {v:?}")));
        }
        Ok(DependencyTree { parents })
    }

    pub fn parents(&self) -> &ParentMap {
        &self.parents
    }

    pub fn parent(&self, id: usize) -> Parent {
        self.parents.get(id)
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        self.parents.children()
    }

    pub fn into_parents(self) -> ParentMap {
        self.parents
    }
}

impl AsRef<ParentMap> for DependencyTree {
    fn as_ref(&self) -> &ParentMap {
        &self.parents
    }
}

impl AsRef<ParentMap> for ParentMap {
    fn as_ref(&self) -> &ParentMap {
        self
    }
}
