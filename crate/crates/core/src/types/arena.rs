//! Hash-consing arenas for local and global types.
//!
//! Structurally equal types share one id, so equality anywhere else in the
//! crate is integer comparison and member lists are sorted id vectors.

use std::sync::{Arc, Mutex};

use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::seq::Part;

pub type TypeId = u32;
pub type GlobalId = u32;

/// Largest tuple the packed atomic matrices support.
pub const MAX_ARITY: usize = 8;

/// A symmetric boolean relation on tuple positions, packed with stride 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitRel(pub u64);

impl BitRel {
    pub fn get(self, i: usize, j: usize) -> bool {
        self.0 >> (i * MAX_ARITY + j) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize) {
        self.0 |= 1 << (i * MAX_ARITY + j);
    }

    /// The relation after reordering positions: `new(i,j) = old(perm[i], perm[j])`.
    pub fn permuted(self, perm: &[u8]) -> BitRel {
        let mut out = BitRel::default();
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                if self.get(pi as usize, pj as usize) {
                    out.set(i, j);
                }
            }
        }
        out
    }

    /// Drops every pair touching positions `≥ keep`.
    pub fn restricted(self, keep: usize) -> BitRel {
        let mut out = BitRel::default();
        for i in 0..keep {
            for j in 0..keep {
                if self.get(i, j) {
                    out.set(i, j);
                }
            }
        }
        out
    }

    /// Union with `other`'s positions shifted up by `offset`.
    pub fn with_shifted(self, other: BitRel, offset: usize) -> BitRel {
        let mut out = self;
        for i in 0..MAX_ARITY - offset {
            for j in 0..MAX_ARITY - offset {
                if other.get(i, j) {
                    out.set(i + offset, j + offset);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Payload {
    Atomic { eq: BitRel, adj: BitRel },
    /// Sorted, deduplicated ids of rank-(k−1) types over tuples extended by
    /// one position.
    Members(Vec<TypeId>),
}

/// A local type: rank, the part of each tuple position, and either the
/// atomic matrices (rank 0) or the member set (rank ≥ 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypeNode {
    pub rank: u8,
    pub parts: SmallVec<[Part; 4]>,
    pub payload: Payload,
}

impl TypeNode {
    pub fn arity(&self) -> usize {
        self.parts.len()
    }

    pub fn members(&self) -> &[TypeId] {
        match &self.payload {
            Payload::Members(m) => m,
            Payload::Atomic { .. } => panic!("rank-0 type has no members"),
        }
    }

    pub fn atomic(&self) -> (BitRel, BitRel) {
        match &self.payload {
            Payload::Atomic { eq, adj } => (*eq, *adj),
            Payload::Members(_) => panic!("rank-{} type is not atomic", self.rank),
        }
    }
}

struct ArenaInner<N> {
    nodes: Vec<Arc<N>>,
    index: FxHashMap<Arc<N>, u32>,
}

impl<N> Default for ArenaInner<N> {
    fn default() -> ArenaInner<N> {
        ArenaInner { nodes: Vec::new(), index: FxHashMap::default() }
    }
}

impl<N: std::hash::Hash + Eq> ArenaInner<N> {
    fn intern(&mut self, node: N) -> u32 {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = self.nodes.len() as u32;
        let arc = Arc::new(node);
        self.nodes.push(arc.clone());
        self.index.insert(arc, id);
        id
    }
}

/// Arena for local types. Interning is thread-safe; ids are stable for the
/// arena's lifetime.
#[derive(Default)]
pub struct TypeArena {
    inner: Mutex<ArenaInner<TypeNode>>,
}

impl TypeArena {
    pub fn new() -> TypeArena {
        TypeArena::default()
    }

    pub fn intern(&self, node: TypeNode) -> TypeId {
        debug_assert!(node.arity() <= MAX_ARITY);
        match &node.payload {
            Payload::Atomic { .. } => debug_assert_eq!(node.rank, 0),
            Payload::Members(m) => {
                debug_assert!(node.rank >= 1 && !m.is_empty());
                debug_assert!(m.windows(2).all(|w| w[0] < w[1]), "members must be sorted and unique");
            }
        }
        self.inner.lock().unwrap().intern(node)
    }

    pub fn node(&self, id: TypeId) -> Arc<TypeNode> {
        self.inner.lock().unwrap().nodes[id as usize].clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GlobalPayload {
    Atomic { eq: BitRel, adj: BitRel },
    Members(Vec<GlobalId>),
}

/// A global type: like a local type but with no part bookkeeping. Arity 0
/// is allowed and stands for a sentence-level type.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GlobalNode {
    pub rank: u8,
    pub arity: u8,
    pub payload: GlobalPayload,
}

impl GlobalNode {
    pub fn members(&self) -> &[GlobalId] {
        match &self.payload {
            GlobalPayload::Members(m) => m,
            GlobalPayload::Atomic { .. } => panic!("rank-0 type has no members"),
        }
    }
}

#[derive(Default)]
pub struct GlobalArena {
    inner: Mutex<ArenaInner<GlobalNode>>,
}

impl GlobalArena {
    pub fn new() -> GlobalArena {
        GlobalArena::default()
    }

    pub fn intern(&self, node: GlobalNode) -> GlobalId {
        debug_assert!((node.arity as usize) <= MAX_ARITY);
        match &node.payload {
            GlobalPayload::Atomic { .. } => debug_assert_eq!(node.rank, 0),
            GlobalPayload::Members(m) => {
                debug_assert!(node.rank >= 1);
                debug_assert!(m.windows(2).all(|w| w[0] < w[1]));
            }
        }
        self.inner.lock().unwrap().intern(node)
    }

    pub fn node(&self, id: GlobalId) -> Arc<GlobalNode> {
        self.inner.lock().unwrap().nodes[id as usize].clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interns_structurally_equal_nodes_once() {
        let arena = TypeArena::new();
        let mut eq = BitRel::default();
        eq.set(0, 0);
        let make = || TypeNode {
            rank: 0,
            parts: SmallVec::from_slice(&[3]),
            payload: Payload::Atomic { eq, adj: BitRel::default() },
        };
        let a = arena.intern(make());
        let b = arena.intern(make());
        assert_eq!(a, b);
        assert_eq!(arena.len(), 1);
        let other = TypeNode {
            rank: 0,
            parts: SmallVec::from_slice(&[4]),
            payload: Payload::Atomic { eq, adj: BitRel::default() },
        };
        assert_ne!(arena.intern(other), a);
    }

    #[test]
    fn bitrel_permute_and_restrict() {
        let mut adj = BitRel::default();
        adj.set(0, 1);
        adj.set(1, 0);
        adj.set(1, 2);
        adj.set(2, 1);
        // Swap positions 0 and 2.
        let p = adj.permuted(&[2, 1, 0]);
        assert!(p.get(2, 1) && p.get(1, 2) && p.get(0, 1) && p.get(1, 0));
        assert!(!p.get(0, 2));
        let r = adj.restricted(2);
        assert!(r.get(0, 1) && !r.get(1, 2));
        let shifted = BitRel::default().with_shifted(r, 3);
        assert!(shifted.get(3, 4) && !shifted.get(0, 1));
    }
}
