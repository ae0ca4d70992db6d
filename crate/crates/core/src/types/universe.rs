//! Realized type universes, abstract cardinality bounds, and the dense
//! input-output tables (trim/join/promote/warp) over them.
//!
//! Only realized types are materialized; the abstract universe is carried
//! as a saturating cardinality bound. Tables are arrays indexed by a
//! universe's sorted id list.

use crate::err::EngineError;
use crate::graph::Graph;
use crate::seq::{ContractionSequence, Part, PartTable};
use crate::trigraph::{quotient_at, Vicinity};
use crate::types::arena::{TypeArena, TypeId};
use crate::types::ops::{self, OpMemo, OracleMergeCtx, QuotientCtx};
use crate::types::reference;
use crate::Vertex;

/// The realized rank-`k` types of vertex tuples through a fixed part
/// tuple `u` at time `s`, with the abstract cardinality bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeUniverse {
    pub u: Vec<Part>,
    pub s: u32,
    pub k: u8,
    /// Sorted realized type ids.
    pub realized: Vec<TypeId>,
    pub abstract_bound: u128,
}

impl TypeUniverse {
    pub fn len(&self) -> usize {
        self.realized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realized.is_empty()
    }

    pub fn contains(&self, id: TypeId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn index_of(&self, id: TypeId) -> Option<usize> {
        self.realized.binary_search(&id).ok()
    }
}

/// Number of distinct atomic types on an `arity`-position tuple: one per
/// set partition of the positions and edge choice between distinct blocks.
pub fn count_atomic_types(arity: u32) -> u128 {
    let a = arity as usize;
    // stirling[m] = S(a, m), partitions of the positions into m blocks,
    // via S(n+1, m) = m·S(n, m) + S(n, m−1).
    let mut stirling = vec![0u128; a + 1];
    stirling[0] = 1;
    for _ in 0..a {
        let mut next = vec![0u128; a + 1];
        for m in 1..=a {
            next[m] = stirling[m]
                .saturating_mul(m as u128)
                .saturating_add(stirling[m - 1]);
        }
        stirling = next;
    }
    let mut total = 0u128;
    for (m, &count) in stirling.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let pairs = (m * m.saturating_sub(1) / 2) as u32;
        let options = if pairs >= 127 { u128::MAX } else { 1u128 << pairs };
        total = total.saturating_add(count.saturating_mul(options));
    }
    total.max(1)
}

pub(crate) fn abstract_bound(arity: u32, k: u32, parts_in_scope: u128) -> u128 {
    if k == 0 {
        return count_atomic_types(arity);
    }
    let inner = abstract_bound(arity + 1, k - 1, parts_in_scope);
    let exponent = inner.saturating_mul(parts_in_scope);
    if exponent >= 127 {
        u128::MAX
    } else {
        1u128 << exponent
    }
}

fn tuples_through(table: &PartTable, u: &[Part]) -> Vec<Vec<Vertex>> {
    let mut out = vec![Vec::new()];
    for &p in u {
        let members = table.members(p);
        out = out
            .into_iter()
            .flat_map(|t| {
                members.iter().map(move |&v| {
                    let mut e = t.clone();
                    e.push(v);
                    e
                })
            })
            .collect();
    }
    out
}

/// The realized universe computed inside a vicinity. The vicinity must
/// reach radius `2^k` around `u` so every extension ball the recursion
/// takes is complete.
pub fn enumerate_types(
    arena: &TypeArena,
    g: &Graph,
    table: &PartTable,
    u: &[Part],
    s: u32,
    k: u32,
    vic: &Vicinity,
) -> Result<TypeUniverse, EngineError> {
    let need = 1u32 << k;
    if vic.radius < need {
        return Err(EngineError::VicinityTooSmall { have: vic.radius, need });
    }
    if vic.time != s {
        return Err(EngineError::Precondition(format!(
            "vicinity is at time {} but the universe is requested at time {s}",
            vic.time
        )));
    }
    for &p in u {
        if !vic.trigraph.contains(p) {
            return Err(EngineError::Precondition(format!("part {p} is not in the vicinity")));
        }
    }
    let mut realized: Vec<TypeId> = tuples_through(table, u)
        .iter()
        .map(|tuple| reference::ltp_in(arena, g, &vic.trigraph, table, s, tuple, k))
        .collect();
    realized.sort_unstable();
    realized.dedup();
    let bound = abstract_bound(u.len() as u32, k, vic.trigraph.parts().len() as u128);
    assert!((realized.len() as u128) <= bound);
    Ok(TypeUniverse { u: u.to_vec(), s, k: k as u8, realized, abstract_bound: bound })
}

/// The realized universe over the full quotient at time `s`.
pub fn full_universe(
    arena: &TypeArena,
    g: &Graph,
    table: &PartTable,
    u: &[Part],
    s: u32,
    k: u32,
) -> TypeUniverse {
    let q = quotient_at(g, table, s);
    let mut realized: Vec<TypeId> = tuples_through(table, u)
        .iter()
        .map(|tuple| reference::ltp_in(arena, g, &q, table, s, tuple, k))
        .collect();
    realized.sort_unstable();
    realized.dedup();
    let bound = abstract_bound(u.len() as u32, k, q.parts().len() as u128);
    TypeUniverse { u: u.to_vec(), s, k: k as u8, realized, abstract_bound: bound }
}

/// A total map between two realized universes, stored densely by the
/// domain's id order.
#[derive(Debug, Clone)]
pub struct TypeFunction {
    pub domain: TypeUniverse,
    pub codomain: TypeUniverse,
    map: Vec<u32>,
}

impl TypeFunction {
    pub fn new(domain: TypeUniverse, codomain: TypeUniverse, images: &[TypeId]) -> TypeFunction {
        assert_eq!(images.len(), domain.len());
        let map = images
            .iter()
            .map(|&id| codomain.index_of(id).expect("image must lie in the codomain") as u32)
            .collect();
        TypeFunction { domain, codomain, map }
    }

    pub fn identity(universe: TypeUniverse) -> TypeFunction {
        let map = (0..universe.len() as u32).collect();
        TypeFunction { domain: universe.clone(), codomain: universe, map }
    }

    pub fn apply(&self, id: TypeId) -> TypeId {
        let i = self.domain.index_of(id).expect("type outside the table's domain");
        self.codomain.realized[self.map[i] as usize]
    }

    pub fn is_identity(&self) -> bool {
        self.domain.realized == self.codomain.realized
            && self.map.iter().enumerate().all(|(i, &m)| i == m as usize)
    }

    /// `self` followed by `then`.
    pub fn compose(&self, then: &TypeFunction) -> TypeFunction {
        assert_eq!(
            self.codomain.realized, then.domain.realized,
            "composition needs matching universes"
        );
        let map = self.map.iter().map(|&i| then.map[i as usize]).collect();
        TypeFunction { domain: self.domain.clone(), codomain: then.codomain.clone(), map }
    }
}

/// The rank-lowering table over the universe of `u` at time `s`.
pub fn trim_table(
    arena: &TypeArena,
    g: &Graph,
    table: &PartTable,
    u: &[Part],
    s: u32,
    k: u32,
) -> TypeFunction {
    assert!(k >= 1);
    let domain = full_universe(arena, g, table, u, s, k);
    let codomain = full_universe(arena, g, table, u, s, k - 1);
    let q = quotient_at(g, table, s);
    let ctx = QuotientCtx { tri: &q, time: s };
    let mut memo = OpMemo::new();
    let images: Vec<TypeId> = domain.realized.iter().map(|&id| ops::trim(arena, &ctx, &mut memo, id)).collect();
    TypeFunction::new(domain, codomain, &images)
}

/// A binary table combining types of two far-apart tuples.
#[derive(Debug, Clone)]
pub struct JoinTable {
    pub left: TypeUniverse,
    pub right: TypeUniverse,
    pub codomain: TypeUniverse,
    map: Vec<u32>,
}

impl JoinTable {
    pub fn apply(&self, left: TypeId, right: TypeId) -> TypeId {
        let li = self.left.index_of(left).expect("left type outside the table");
        let ri = self.right.index_of(right).expect("right type outside the table");
        self.codomain.realized[self.map[li * self.right.len() + ri] as usize]
    }
}

/// The join table for part tuples `u`, `v` at time `s`, defined when their
/// part sets are farther apart than `2^k`.
pub fn join_table(
    arena: &TypeArena,
    g: &Graph,
    table: &PartTable,
    u: &[Part],
    v: &[Part],
    s: u32,
    k: u32,
) -> Result<JoinTable, EngineError> {
    let q = quotient_at(g, table, s);
    let ball = q.ball(u, 1 << k);
    if v.iter().any(|p| ball.contains_key(p)) {
        return Err(EngineError::Precondition(format!(
            "join table needs dist(u, v) > 2^{k} between {u:?} and {v:?} at time {s}"
        )));
    }
    let left = full_universe(arena, g, table, u, s, k);
    let right = full_universe(arena, g, table, v, s, k);
    let joint: Vec<Part> = u.iter().chain(v.iter()).copied().collect();
    let codomain = full_universe(arena, g, table, &joint, s, k);
    let ctx = QuotientCtx { tri: &q, time: s };
    let mut memo = OpMemo::new();
    let mut map = Vec::with_capacity(left.len() * right.len());
    for &lid in &left.realized {
        for &rid in &right.realized {
            let out = ops::join(arena, &ctx, &mut memo, lid, rid);
            map.push(codomain.index_of(out).expect("join image must be realized") as u32);
        }
    }
    Ok(JoinTable { left, right, codomain, map })
}

/// The one-step time-advance table for the universe of `u` at time `s`.
pub fn promote_table(
    arena: &TypeArena,
    g: &Graph,
    cs: &ContractionSequence,
    table: &PartTable,
    u: &[Part],
    s: u32,
    k: u32,
) -> TypeFunction {
    let ctx = OracleMergeCtx::new(arena, g, cs, table, s, k as u8);
    let step = cs.step_into(s + 1);
    let domain = full_universe(arena, g, table, u, s, k);
    let imgs: Vec<Part> =
        u.iter().map(|&p| if p == step.a || p == step.a2 { step.b } else { p }).collect();
    let codomain = full_universe(arena, g, table, &imgs, s + 1, k);
    let mut memo = OpMemo::new();
    let images: Vec<TypeId> =
        domain.realized.iter().map(|&id| ops::promote(arena, &ctx, &mut memo, id)).collect();
    TypeFunction::new(domain, codomain, &images)
}

/// The composed advance from time `s` to `t ≥ s`, skipping steps whose
/// merge stays farther than `2^k` from every part of the evolving tuple.
pub fn warp_function(
    arena: &TypeArena,
    g: &Graph,
    cs: &ContractionSequence,
    table: &PartTable,
    u: &[Part],
    s: u32,
    t: u32,
    k: u32,
) -> TypeFunction {
    assert!(s <= t);
    let mut u_cur: Vec<Part> = u.to_vec();
    let mut acc = TypeFunction::identity(full_universe(arena, g, table, u, s, k));
    for tau in s..t {
        let step = cs.step_into(tau + 1);
        let touched = u_cur.iter().any(|&p| p == step.a || p == step.a2);
        if !touched {
            let q_next = quotient_at(g, table, tau + 1);
            let near = q_next.ball(&[step.b], 1 << k);
            if u_cur.iter().all(|p| !near.contains_key(p)) {
                continue;
            }
        }
        let table_step = promote_table(arena, g, cs, table, &u_cur, tau, k);
        assert_eq!(
            acc.codomain.realized, table_step.domain.realized,
            "skipped steps must leave the realized universe unchanged"
        );
        u_cur = table_step.codomain.u.clone();
        acc = acc.compose(&table_step);
    }
    let fin = full_universe(arena, g, table, &u_cur, t, k);
    assert_eq!(acc.codomain.realized, fin.realized, "trailing skipped steps must preserve the universe");
    TypeFunction { domain: acc.domain, codomain: fin, map: acc.map }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::tests::p4;
    use crate::trigraph::{vicinity, ImpurityState};
    use crate::types::reference::ltp;

    #[test]
    fn atomic_counts_match_small_cases() {
        assert_eq!(count_atomic_types(0), 1);
        assert_eq!(count_atomic_types(1), 1);
        assert_eq!(count_atomic_types(2), 3);
        assert_eq!(count_atomic_types(3), 15);
    }

    #[test]
    fn universe_examples_on_p4() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let arena = TypeArena::new();
        // Part 6 = {1,2} at time 3: vertex 1 and vertex 2 are distinguished
        // at rank 1.
        let uni = full_universe(&arena, &g, &table, &[6], 3, 1);
        assert_eq!(uni.len(), 2);
        let uni0 = full_universe(&arena, &g, &table, &[6], 3, 0);
        assert_eq!(uni0.len(), 1);
    }

    #[test]
    fn vicinity_universe_checks_radius() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let arena = TypeArena::new();
        let mut state = ImpurityState::new(&g, &cs, &table);
        state.advance();
        state.advance(); // time 3
        let small = vicinity(&state, &[6], 1);
        assert!(matches!(
            enumerate_types(&arena, &g, &table, &[6], 3, 1, &small),
            Err(EngineError::VicinityTooSmall { have: 1, need: 2 })
        ));
        let wide = vicinity(&state, &[6], 4);
        let uni = enumerate_types(&arena, &g, &table, &[6], 3, 1, &wide).unwrap();
        assert_eq!(uni.len(), 2);
        assert_eq!(uni, full_universe(&arena, &g, &table, &[6], 3, 1));
    }

    #[test]
    fn edgeless_universe_is_a_point() {
        let g = Graph::from_edges(3, &[]).unwrap();
        let cs = ContractionSequence::parse("1 2 4 0\n4 3 5 0\n", 3).unwrap();
        let table = PartTable::new(&cs);
        let arena = TypeArena::new();
        for t in 1..=3 {
            for k in 0..=2 {
                for p in table.parts_at(t) {
                    assert_eq!(full_universe(&arena, &g, &table, &[p], t, k).len(), 1, "t={t} k={k}");
                }
            }
        }
    }

    #[test]
    fn tables_match_reference_on_p4() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let arena = TypeArena::new();
        // Trim chain down to rank 0 equals the direct rank-0 type.
        let f2 = trim_table(&arena, &g, &table, &[6], 3, 2);
        let f1 = trim_table(&arena, &g, &table, &[6], 3, 1);
        for v in [1, 2] {
            let hi = ltp(&arena, &g, &table, 3, &[v], 2);
            assert_eq!(f1.apply(f2.apply(hi)), ltp(&arena, &g, &table, 3, &[v], 0));
        }
        // Join at time 1 where all parts are far apart.
        let jt = join_table(&arena, &g, &table, &[1], &[2], 1, 1).unwrap();
        assert_eq!(
            jt.apply(ltp(&arena, &g, &table, 1, &[1], 1), ltp(&arena, &g, &table, 1, &[2], 1)),
            ltp(&arena, &g, &table, 1, &[1, 2], 1)
        );
        assert!(join_table(&arena, &g, &table, &[6], &[5], 3, 1).is_err());
        // Promote across step 2→3 for the surviving part 5.
        let pt = promote_table(&arena, &g, &cs, &table, &[5], 2, 1);
        for v in [3, 4] {
            assert_eq!(
                pt.apply(ltp(&arena, &g, &table, 2, &[v], 1)),
                ltp(&arena, &g, &table, 3, &[v], 1)
            );
        }
    }

    #[test]
    fn warp_matches_reference_and_composes() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let arena = TypeArena::new();
        for k in 0..=2u32 {
            for v in 1..=4u32 {
                let u = [v as Part];
                let w = warp_function(&arena, &g, &cs, &table, &u, 1, 4, k);
                assert_eq!(
                    w.apply(ltp(&arena, &g, &table, 1, &[v], k)),
                    ltp(&arena, &g, &table, 4, &[v], k),
                    "k={k} v={v}"
                );
                let first = warp_function(&arena, &g, &cs, &table, &u, 1, 2, k);
                let rest = warp_function(&arena, &g, &cs, &table, &first.codomain.u, 2, 4, k);
                let two_hop = first.compose(&rest);
                for &id in &w.domain.realized {
                    assert_eq!(two_hop.apply(id), w.apply(id), "composition law k={k} v={v}");
                }
            }
        }
    }
}
