//! Sentence evaluation by a single scan over a contraction sequence, and
//! the interpretation construction that equips a transformed graph with a
//! validated contraction sequence of its own.
//!
//! The scan maintains, for every live part, the set of realized local
//! singleton types at the current time. A merge can only change that set
//! for parts near the merge, so each step touches a bounded neighborhood
//! and everything else keeps its previous set by object identity.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rustc_hash::FxHashMap;

use crate::err::LogicError;
use crate::graph::Graph;
use crate::logic::{naive_eval, Formula};
use crate::seq::{from_merges, ContractionSequence, Part, PartTable};
use crate::trigraph::ImpurityState;
use crate::types::arena::{GlobalArena, TypeArena, TypeId};
use crate::types::global::{eval_on_type, sentence_type};
use crate::types::ops::{ltp_time1_constant, promote, OpMemo, ScanCtx};
use crate::types::reference::ltp;
use crate::Vertex;

/// Quantifier-rank cap for the indexed engines. The naive evaluators have
/// no cap; the scan, query, and enumeration entry points refuse deeper
/// formulas up front.
pub const RANK_CAP: u32 = 4;

/// Advances the per-part realized singleton rank-`k` type sets across the
/// pending merge of `state`. Only parts inside the radius-`2^k` ball of
/// the merged part can change; everything else keeps its set by object
/// identity. Does not advance `state` itself.
pub(crate) fn advance_singles(
    arena: &TypeArena,
    state: &ImpurityState<'_>,
    singles: &mut FxHashMap<Part, Arc<Vec<TypeId>>>,
    memo: &mut OpMemo,
    k: u32,
) {
    let step = state.next_step().expect("advance_singles needs a pending merge");
    let (a, a2, b) = (step.a, step.a2, step.b);
    let r = 1u32 << k;
    // Parts at the next time whose singleton sets may change: the ball
    // around the merged part. Everything else is provably untouched.
    let mut near: Vec<Part> = state.next_ball(&[b], r).into_keys().collect();
    near.sort_unstable();
    let mut updates: Vec<(Part, Arc<Vec<TypeId>>)> = Vec::with_capacity(near.len());
    {
        let ctx = ScanCtx { state, singles, rank: k as u8 };
        for &p_next in &near {
            let sources: Vec<Part> = if p_next == b { vec![a, a2] } else { vec![p_next] };
            let mut set: Vec<TypeId> = Vec::new();
            for &p in &sources {
                for &id in singles[&p].iter() {
                    set.push(promote(arena, &ctx, memo, id));
                }
            }
            set.sort_unstable();
            set.dedup();
            updates.push((p_next, Arc::new(set)));
        }
        // Tripwire on small inputs: the skipped parts really would have
        // promoted to themselves.
        #[cfg(debug_assertions)]
        if state.graph().n() <= 16 {
            for (&p, set) in singles.iter() {
                if p == a || p == a2 || near.binary_search(&p).is_ok() {
                    continue;
                }
                let promoted: Vec<TypeId> =
                    set.iter().map(|&id| promote(arena, &ctx, memo, id)).collect();
                assert_eq!(&promoted, set.as_ref(), "far part {p} changed across the merge");
            }
        }
    }
    #[cfg(debug_assertions)]
    let before: Vec<(Part, *const Vec<TypeId>)> =
        singles.iter().map(|(&p, s)| (p, Arc::as_ptr(s))).collect();
    singles.remove(&a);
    singles.remove(&a2);
    for (p, set) in updates {
        singles.insert(p, set);
    }
    #[cfg(debug_assertions)]
    for (p, ptr) in before {
        if p != a && p != a2 && near.binary_search(&p).is_err() {
            assert_eq!(
                Arc::as_ptr(&singles[&p]),
                ptr,
                "part {p} outside the update set must keep its object"
            );
        }
    }
}

/// The realized singleton sets at time 1: every part is one vertex.
pub(crate) fn initial_singles(arena: &TypeArena, g: &Graph, k: u32) -> FxHashMap<Part, Arc<Vec<TypeId>>> {
    g.vertices()
        .map(|v| (v as Part, Arc::new(vec![ltp_time1_constant(arena, g, &[v], k)])))
        .collect()
}

/// Decides whether the graph satisfies the sentence, scanning the
/// contraction sequence once.
pub fn model_check(g: &Graph, cs: &ContractionSequence, phi: &Formula) -> Result<bool, LogicError> {
    let free = phi.free_vars();
    if !free.is_empty() {
        return Err(LogicError::NotASentence(free.into_iter().collect()));
    }
    let q = phi.rank();
    if q > RANK_CAP {
        return Err(LogicError::RankCap { rank: q, cap: RANK_CAP });
    }
    assert!(q >= 1, "the grammar cannot build a quantifier-free sentence");
    let k = q - 1;

    let table = PartTable::new(cs);
    let arena = TypeArena::new();
    let mut singles = initial_singles(&arena, g, k);
    let mut state = ImpurityState::new(g, cs, &table);
    let mut memo = OpMemo::new();

    while state.next_step().is_some() {
        advance_singles(&arena, &state, &mut singles, &mut memo, k);
        state.advance();
    }

    let root = table.root();
    let final_set = singles.remove(&root).expect("scan ends at the root part");
    debug_assert!(singles.is_empty(), "scan must consume every other part");
    let global = GlobalArena::new();
    let st = sentence_type(&arena, &global, q as u8, &final_set)
        .expect("final-time local types always translate to graph types");
    eval_on_type(&global, st, phi)
}

/// Applies a symmetric binary interpretation to the graph: the output has
/// an edge `uv` iff `phi(u,v)` and `phi(v,u)` both hold. Returns the new
/// graph together with a contraction sequence for it, built by refining
/// each partition of the input sequence into local-type classes and
/// realizing each coarsening by pairwise merges.
pub fn interpret(
    g: &Graph,
    cs: &ContractionSequence,
    phi: &Formula,
) -> Result<(Graph, ContractionSequence), LogicError> {
    let free: Vec<String> = phi.free_vars().into_iter().collect();
    if free.len() != 2 {
        return Err(LogicError::VariableMismatch {
            formula: free,
            engine: vec!["#0".to_string(), "#1".to_string()],
        });
    }
    let q = phi.rank();
    if q > RANK_CAP {
        return Err(LogicError::RankCap { rank: q, cap: RANK_CAP });
    }
    let n = g.n();
    let (x, y) = (free[0].clone(), free[1].clone());
    let mut edges = Vec::new();
    for u in 1..=n {
        for v in (u + 1)..=n {
            let uv = HashMap::from([(x.clone(), u as Vertex), (y.clone(), v as Vertex)]);
            let vu = HashMap::from([(x.clone(), v as Vertex), (y.clone(), u as Vertex)]);
            if naive_eval(g, phi, &uv)? && naive_eval(g, phi, &vu)? {
                edges.push((u as Vertex, v as Vertex));
            }
        }
    }
    let h = Graph::from_edges(n, &edges).expect("edges stay in range");

    // Chain of partitions: each input-time partition split by the rank-q
    // local type of its single vertices, then the coarsest partition.
    // Consecutive duplicates collapse. Each class of one partition lies
    // inside a single class of the next because a merge maps equal types
    // to equal types.
    let table = PartTable::new(cs);
    let arena = TypeArena::new();
    let mut chain: Vec<Vec<Vec<Vertex>>> = Vec::new();
    for t in 1..=n {
        let mut classes: Vec<Vec<Vertex>> = Vec::new();
        for p in table.parts_at(t) {
            let mut by_type: BTreeMap<TypeId, Vec<Vertex>> = BTreeMap::new();
            for v in table.members(p) {
                by_type.entry(ltp(&arena, g, &table, t, &[v], q)).or_default().push(v);
            }
            classes.extend(by_type.into_values());
        }
        for c in &mut classes {
            c.sort_unstable();
        }
        classes.sort();
        chain.push(classes);
    }
    chain.push(vec![(1..=n as Vertex).collect()]);
    chain.dedup();
    assert_eq!(chain[0].len(), n as usize, "the first partition is discrete");

    // Realize each coarsening by merging, inside every target class, its
    // source classes in ascending part-id order.
    let mut active: Vec<(Vec<Vertex>, Part)> =
        chain[0].iter().map(|c| (c.clone(), c[0] as Part)).collect();
    let mut merges: Vec<(Part, Part)> = Vec::new();
    let mut fresh: Part = n as Part + 1;
    for next in chain.iter().skip(1) {
        let mut target_of: HashMap<Vertex, usize> = HashMap::new();
        for (i, class) in next.iter().enumerate() {
            for &v in class {
                target_of.insert(v, i);
            }
        }
        let mut grouped: Vec<Vec<(Vec<Vertex>, Part)>> = vec![Vec::new(); next.len()];
        for (class, id) in active.drain(..) {
            grouped[target_of[&class[0]]].push((class, id));
        }
        for (i, mut sources) in grouped.into_iter().enumerate() {
            sources.sort_by_key(|&(_, id)| id);
            let mut merged: Vec<Vertex> = Vec::new();
            let mut id: Part = 0;
            for (j, (class, cid)) in sources.into_iter().enumerate() {
                merged.extend(class);
                if j == 0 {
                    id = cid;
                } else {
                    merges.push((id, cid));
                    id = fresh;
                    fresh += 1;
                }
            }
            merged.sort_unstable();
            assert_eq!(merged, next[i], "sources must tile the target class");
            active.push((merged, id));
        }
    }
    assert_eq!(merges.len() as u32, n - 1, "coarsening to a point takes n-1 merges");
    let hcs = from_merges(&h, &merges);
    Ok((h, hcs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::naive_sentence;
    use crate::seq::{tests::p4, validate};

    #[test]
    fn spec_sentences_on_p4() {
        let (g, cs) = p4();
        let t = Formula::parse("exists x exists y (E x y)").unwrap();
        assert_eq!(model_check(&g, &cs, &t), Ok(true));
        let f = Formula::parse("exists x forall y (not E x y)").unwrap();
        assert_eq!(model_check(&g, &cs, &f), Ok(false));
    }

    #[test]
    fn edgeless_graph_has_no_edges() {
        let g = Graph::from_edges(3, &[]).unwrap();
        let cs = ContractionSequence::parse("1 2 4 0\n4 3 5 0\n", 3).unwrap();
        let phi = Formula::parse("forall x forall y (x = y or not E x y)").unwrap();
        assert_eq!(model_check(&g, &cs, &phi), Ok(true));
    }

    #[test]
    fn agrees_with_naive_on_a_pool() {
        let (g, cs) = p4();
        let pool = [
            "exists x exists y (E x y and not x = y)",
            "forall x exists y (E x y)",
            "exists x forall y (x = y or E x y)",
            "forall x forall y (E x y or x = y or exists z (E x z and E z y))",
            "exists x exists y exists z (E x y and E y z and not x = z)",
            "forall x exists y exists z (E x y and E y z and not x = z)",
        ];
        for phi in pool.map(|s| Formula::parse(s).unwrap()) {
            assert_eq!(
                model_check(&g, &cs, &phi).unwrap(),
                naive_sentence(&g, &phi).unwrap(),
                "phi = {phi}"
            );
        }
    }

    #[test]
    fn rejects_open_formulas_and_deep_rank() {
        let (g, cs) = p4();
        let open = Formula::parse("E x y").unwrap();
        assert!(matches!(model_check(&g, &cs, &open), Err(LogicError::NotASentence(_))));
        let deep = Formula::parse(
            "exists a exists b exists c exists d exists e \
             (E a b and E b c and E c d and E d e)",
        )
        .unwrap();
        assert!(matches!(
            model_check(&g, &cs, &deep),
            Err(LogicError::RankCap { rank: 5, cap: RANK_CAP })
        ));
    }

    fn same_graph(a: &Graph, b: &Graph) -> bool {
        a.n() == b.n()
            && (1..=a.n()).all(|u| (1..=a.n()).all(|v| a.has_edge(u, v) == b.has_edge(u, v)))
    }

    #[test]
    fn interpret_identity_formula_reproduces_the_graph() {
        let (g, cs) = p4();
        let phi = Formula::parse("E x y").unwrap();
        let (h, hcs) = interpret(&g, &cs, &phi).unwrap();
        assert!(same_graph(&g, &h));
        assert_eq!(validate(&h, &hcs), Ok(1));
    }

    #[test]
    fn interpret_inequality_gives_complete_graph() {
        let (g, cs) = p4();
        let phi = Formula::parse("not x = y").unwrap();
        let (h, hcs) = interpret(&g, &cs, &phi).unwrap();
        assert_eq!(h.m(), 6);
        assert_eq!(validate(&h, &hcs), Ok(0));
    }

    #[test]
    fn interpret_two_hop_on_p4() {
        let (g, cs) = p4();
        let phi = Formula::parse("exists z (E x z and E z y)").unwrap();
        let (h, hcs) = interpret(&g, &cs, &phi).unwrap();
        // Common-neighbor pairs of the path 1-2-3-4.
        assert_eq!(h.m(), 2);
        assert!(h.has_edge(1, 3) && h.has_edge(2, 4));
        assert!(validate(&h, &hcs).is_ok());
    }

    #[test]
    fn interpret_rejects_wrong_arity() {
        let (g, cs) = p4();
        let phi = Formula::parse("exists y E x y").unwrap();
        assert!(matches!(interpret(&g, &cs, &phi), Err(LogicError::VariableMismatch { .. })));
    }
}
