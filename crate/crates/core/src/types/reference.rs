//! Reference (slow) type computations: atomic types, the global `tp`
//! oracle, and the local `ltp` oracle straight from its recursive
//! definition. Every fast table and engine in the crate is tested against
//! these.

use std::collections::HashMap;
use std::fmt;

use smallvec::SmallVec;

use crate::graph::Graph;
use crate::seq::{Part, PartTable};
use crate::trigraph::Trigraph;
use crate::types::arena::{
    BitRel, GlobalArena, GlobalId, GlobalNode, GlobalPayload, Payload, TypeArena, TypeId, TypeNode,
};
use crate::Vertex;

pub(crate) fn atomic_bits(g: &Graph, tuple: &[Vertex]) -> (BitRel, BitRel) {
    let mut eq = BitRel::default();
    let mut adj = BitRel::default();
    for (i, &a) in tuple.iter().enumerate() {
        for (j, &b) in tuple.iter().enumerate() {
            if a == b {
                eq.set(i, j);
            }
            if g.has_edge(a, b) {
                adj.set(i, j);
            }
        }
    }
    (eq, adj)
}

/// The maximal consistent set of equality/adjacency literals a concrete
/// assignment satisfies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomicType {
    /// Sorted variable names; position `i` belongs to `vars[i]`.
    pub vars: Vec<String>,
    pub eq: BitRel,
    pub adj: BitRel,
}

pub fn atomic_type(g: &Graph, asg: &HashMap<String, Vertex>) -> AtomicType {
    let mut vars: Vec<String> = asg.keys().cloned().collect();
    vars.sort();
    let tuple: Vec<Vertex> = vars.iter().map(|v| asg[v]).collect();
    let (eq, adj) = atomic_bits(g, &tuple);
    AtomicType { vars, eq, adj }
}

impl fmt::Display for AtomicType {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut lits = Vec::new();
        for i in 0..self.vars.len() {
            for j in (i + 1)..self.vars.len() {
                let (x, y) = (&self.vars[i], &self.vars[j]);
                lits.push(if self.eq.get(i, j) { format!("{x}={y}") } else { format!("{x}!={y}") });
                lits.push(if self.adj.get(i, j) { format!("E({x},{y})") } else { format!("!E({x},{y})") });
            }
        }
        write!(out, "{{{}}}", lits.join(", "))
    }
}

/// The global rank-`k` type of a vertex tuple, by exhaustive recursion over
/// all one-vertex extensions.
pub fn tp(arena: &GlobalArena, g: &Graph, tuple: &[Vertex], k: u32) -> GlobalId {
    if k == 0 {
        let (eq, adj) = atomic_bits(g, tuple);
        return arena.intern(GlobalNode {
            rank: 0,
            arity: tuple.len() as u8,
            payload: GlobalPayload::Atomic { eq, adj },
        });
    }
    let mut members: Vec<GlobalId> = (1..=g.n())
        .map(|b| {
            let mut ext = tuple.to_vec();
            ext.push(b);
            tp(arena, g, &ext, k - 1)
        })
        .collect();
    members.sort_unstable();
    members.dedup();
    arena.intern(GlobalNode {
        rank: k as u8,
        arity: tuple.len() as u8,
        payload: GlobalPayload::Members(members),
    })
}

/// The rank-`q` type of the whole graph: the arity-0 set of singleton
/// rank-(q−1) types.
pub fn tp_sentence(arena: &GlobalArena, g: &Graph, q: u32) -> GlobalId {
    assert!(q >= 1, "sentence types need rank at least 1");
    tp(arena, g, &[], q)
}

/// The local rank-`k` type of a vertex tuple at time `t`, straight from the
/// definition: extensions may only enter parts within impurity distance
/// `2^(k-1)` of the tuple's parts.
pub fn ltp(arena: &TypeArena, g: &Graph, table: &PartTable, t: u32, tuple: &[Vertex], k: u32) -> TypeId {
    let q = crate::trigraph::quotient_at(g, table, t);
    ltp_in(arena, g, &q, table, t, tuple, k)
}

/// `ltp` with the distance structure taken from a caller-provided trigraph
/// (a full quotient, or a vicinity that is guaranteed to cover every ball
/// the recursion asks for).
pub(crate) fn ltp_in(
    arena: &TypeArena,
    g: &Graph,
    tri: &Trigraph,
    table: &PartTable,
    t: u32,
    tuple: &[Vertex],
    k: u32,
) -> TypeId {
    let parts: SmallVec<[Part; 4]> = tuple.iter().map(|&v| table.part_of(v, t)).collect();
    if k == 0 {
        let (eq, adj) = atomic_bits(g, tuple);
        return arena.intern(TypeNode { rank: 0, parts, payload: Payload::Atomic { eq, adj } });
    }
    let ball = tri.ball(&parts, 1 << (k - 1));
    let mut near: Vec<Part> = ball.keys().copied().collect();
    near.sort_unstable();
    let mut members = Vec::new();
    for w in near {
        for b in table.members(w) {
            let mut ext = tuple.to_vec();
            ext.push(b);
            members.push(ltp_in(arena, g, tri, table, t, &ext, k - 1));
        }
    }
    members.sort_unstable();
    members.dedup();
    arena.intern(TypeNode { rank: k as u8, parts, payload: Payload::Members(members) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::tests::p4;
    use crate::seq::PartTable;

    #[test]
    fn atomic_type_examples() {
        let (g, _) = p4();
        let t = atomic_type(&g, &HashMap::from([("x".into(), 1), ("y".into(), 2)]));
        assert!(!t.eq.get(0, 1) && t.adj.get(0, 1));
        assert_eq!(t.to_string(), "{x!=y, E(x,y)}");
        let t = atomic_type(&g, &HashMap::from([("x".into(), 3), ("y".into(), 3)]));
        assert!(t.eq.get(0, 1) && !t.adj.get(0, 1));
        let t = atomic_type(&g, &HashMap::from([("x".into(), 1), ("y".into(), 4)]));
        assert_eq!(t.to_string(), "{x!=y, !E(x,y)}");
    }

    #[test]
    fn tp_distinguishes_by_rank() {
        let (g, _) = p4();
        let arena = GlobalArena::new();
        // Path ends are swapped by an automorphism; rank 3 cannot split them.
        assert_eq!(tp(&arena, &g, &[1], 3), tp(&arena, &g, &[4], 3));
        assert_eq!(tp(&arena, &g, &[2], 3), tp(&arena, &g, &[3], 3));
        // Rank 1 only sees which atomic extension types exist, and both an
        // end and a middle vertex have a neighbor and a non-neighbor. The
        // degree difference needs two nested quantifiers.
        assert_eq!(tp(&arena, &g, &[1], 1), tp(&arena, &g, &[2], 1));
        assert_ne!(tp(&arena, &g, &[1], 2), tp(&arena, &g, &[2], 2));
        assert_eq!(tp(&arena, &g, &[1], 0), tp(&arena, &g, &[2], 0));
    }

    #[test]
    fn ltp_extension_balls() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let arena = TypeArena::new();
        // Time 1: no impure pairs, so rank-1 members extend only into the
        // tuple's own singleton part.
        let t1 = ltp(&arena, &g, &table, 1, &[1], 1);
        let node = arena.node(t1);
        assert_eq!(node.members().len(), 1);
        let member = arena.node(node.members()[0]);
        assert_eq!(member.parts.as_slice(), &[1, 1]);

        // Time 3 ({1,2} and {3,4} impure): extensions reach both parts.
        let t3 = ltp(&arena, &g, &table, 3, &[1], 1);
        let node = arena.node(t3);
        let mut ext_parts: Vec<Part> =
            node.members().iter().map(|&m| *arena.node(m).parts.last().unwrap()).collect();
        ext_parts.sort_unstable();
        ext_parts.dedup();
        assert_eq!(ext_parts, vec![5, 6]);
        assert_eq!(node.members().len(), 3);
    }

    #[test]
    fn ltp_respects_symmetry_at_final_time() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let arena = TypeArena::new();
        for k in 0..=3u32 {
            assert_eq!(ltp(&arena, &g, &table, 4, &[1], k), ltp(&arena, &g, &table, 4, &[4], k), "k={k}");
            assert_eq!(ltp(&arena, &g, &table, 4, &[2], k), ltp(&arena, &g, &table, 4, &[3], k), "k={k}");
        }
        // With a single part the local type carries no part information,
        // so like the graph type it needs rank 2 to split end from middle.
        assert_eq!(ltp(&arena, &g, &table, 4, &[1], 1), ltp(&arena, &g, &table, 4, &[2], 1));
        assert_ne!(ltp(&arena, &g, &table, 4, &[1], 2), ltp(&arena, &g, &table, 4, &[2], 2));
    }
}
