//! Per-tuple query answering: given a formula `phi(x̄)` preprocessed over a
//! graph and its contraction sequence, decide `G ⊨ phi(w̄)` for arbitrary
//! vertex tuples without replaying the sequence per query.
//!
//! Preprocessing works over the convex reindexing of the input and builds:
//! the first-close range index at radius `r = 2^k` (`k` the quantifier
//! rank), a close tree plus path-product index for every nonempty subset of
//! the free variables, the relevant regions at radius `r(m + 1)` (`m` the
//! number of free variables), and per-merge snapshots of the realized
//! singleton sets the regions' parts carry.
//!
//! A query touches only the tuple's own history. The times where two query
//! vertices first come within `r` split the sequence into quiet stretches:
//! inside a stretch every group of already-close variables evolves along
//! one close-tree lineage, so its type warps forward through composed path
//! products; when groups meet, their types are joined at the pre-merge
//! time, permuted into position order, and promoted across that one merge
//! inside its stored region. The final type, warped to the root, converts
//! to a graph-level type on which the formula is evaluated directly.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::closetree::{build_close_tree, warp_query, CloseTree, NodeId, PathProductIndex};
use crate::err::LogicError;
use crate::firstclose::{build_firstclose_rectangles, RangeIndex};
use crate::graph::{Graph, Vertex};
use crate::logic::Formula;
use crate::modelcheck::{advance_singles, initial_singles, RANK_CAP};
use crate::regions::{build_relevant_regions, RegionSet};
use crate::seq::{reindex_convex, ContractionSequence, Part, PartTable};
use crate::trigraph::ImpurityState;
#[cfg(debug_assertions)]
use crate::types::ltp;
use crate::types::{
    eval_on_type, join, ltp_time1_constant, permute, promote, to_global_type, GlobalArena, OpMemo,
    RegionCtx, TypeArena, TypeId, MAX_ARITY,
};

/// Immutable per-formula index answering `G ⊨ phi(w̄)` for arbitrary
/// tuples. Safe to share across threads; every call keeps its own state.
pub struct QueryEngine {
    pub(crate) g: Graph,
    pub(crate) table: PartTable,
    /// Original vertex id -> id in the convex reindexing (index 0 unused).
    pub(crate) old_to_new: Vec<Vertex>,
    /// Inverse of `old_to_new` (index 0 unused).
    pub(crate) new_to_old: Vec<Vertex>,
    pub(crate) phi: Formula,
    /// Free variables, sorted; tuple position `i` holds variable `vars[i]`.
    pub(crate) vars: Vec<String>,
    pub(crate) k: u32,
    pub(crate) arena: TypeArena,
    pub(crate) global: GlobalArena,
    range: RangeIndex,
    /// Per nonempty position mask: the close tree and its path products.
    pub(crate) trees: HashMap<u32, (CloseTree, PathProductIndex)>,
    regions: RegionSet,
    /// `snapshots[s - 1]`: realized singleton sets at time `s` for the
    /// parts of `regions.at(s)`.
    snapshots: Vec<HashMap<Part, Arc<Vec<TypeId>>>>,
}

/// A group of variables already within distance `r` of each other, pinned
/// to the close-tree node where its type was last computed.
struct Pinned {
    mask: u32,
    node: NodeId,
    tau: TypeId,
}

fn bits(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| (mask >> i) & 1 == 1)
}

/// Connected components of the "first-close time ≤ s" relation on tuple
/// positions, each as a position mask, ordered by lowest position.
fn components_at(fc: &[Vec<u32>], s: u32) -> Vec<u32> {
    let m = fc.len();
    let mut seen = vec![false; m];
    let mut out = Vec::new();
    for i in 0..m {
        if seen[i] {
            continue;
        }
        seen[i] = true;
        let mut mask = 0u32;
        let mut stack = vec![i];
        while let Some(x) = stack.pop() {
            mask |= 1 << x;
            for (y, saw) in seen.iter_mut().enumerate() {
                if !*saw && fc[x][y] <= s {
                    *saw = true;
                    stack.push(y);
                }
            }
        }
        out.push(mask);
    }
    out
}

/// Preprocesses `phi` over the graph and sequence. Expects a valid
/// sequence (convexity is not required; the engine reindexes internally).
pub fn build_query_engine(
    g: &Graph,
    cs: &ContractionSequence,
    phi: &Formula,
) -> Result<QueryEngine, LogicError> {
    let vars = phi.free_vars();
    if vars.is_empty() {
        return Err(LogicError::Unsupported(
            "the formula is a sentence; use model checking, not a query engine".to_string(),
        ));
    }
    let k = phi.rank();
    if k > RANK_CAP {
        return Err(LogicError::RankCap { rank: k, cap: RANK_CAP });
    }
    let m = vars.len() as u32;
    if m + k > MAX_ARITY as u32 {
        return Err(LogicError::Unsupported(format!(
            "{m} free variables at rank {k} need tuple arity {}, above the supported {MAX_ARITY}",
            m + k
        )));
    }
    let r = 1u32 << k;

    let t0 = std::time::Instant::now();
    let re = reindex_convex(g, cs);
    let (g, cs) = (re.graph, re.seq);
    let table = PartTable::new(&cs);
    let arena = TypeArena::new();
    eprintln!("phase reindex+table {:?}", t0.elapsed());

    // Close trees for every nonempty subset of the positions, by ascending
    // arity so each build finds its sub-trees ready.
    let t0 = std::time::Instant::now();
    let full: u32 = (1u32 << m) - 1;
    let mut masks: Vec<u32> = (1..=full).collect();
    masks.sort_by_key(|z| z.count_ones());
    let mut plain: HashMap<u32, CloseTree> = HashMap::new();
    for z in masks {
        let tree = build_close_tree(&g, &cs, &table, &arena, k, z, &plain);
        plain.insert(z, tree);
    }
    eprintln!("phase close-trees {:?}", t0.elapsed());
    let t0 = std::time::Instant::now();
    let trees = plain
        .into_iter()
        .map(|(z, tree)| {
            let idx = PathProductIndex::new(&tree);
            (z, (tree, idx))
        })
        .collect();
    eprintln!("phase lifting {:?}", t0.elapsed());

    let t0 = std::time::Instant::now();
    let rects = build_firstclose_rectangles(&g, &cs, r);
    eprintln!("phase rectangles {:?}", t0.elapsed());
    let t0 = std::time::Instant::now();
    let range = RangeIndex::new(&table, &rects);
    eprintln!("phase range-index {:?}", t0.elapsed());
    let t0 = std::time::Instant::now();
    let regions = build_relevant_regions(&g, &cs, &table, r * (m + 1))
        .expect("a valid sequence resolves every region pair");
    eprintln!("phase regions {:?}", t0.elapsed());

    // One replay capturing, per merge, the singleton types of the parts
    // its region holds at the pre-merge time.
    let t0 = std::time::Instant::now();
    let mut snapshots = Vec::with_capacity(cs.n().saturating_sub(1) as usize);
    let mut singles = initial_singles(&arena, &g, k);
    let mut state = ImpurityState::new(&g, &cs, &table);
    let mut memo = OpMemo::new();
    while state.next_step().is_some() {
        let region = regions.at(state.time());
        snapshots.push(region.parts().iter().map(|&q| (q, singles[&q].clone())).collect());
        advance_singles(&arena, &state, &mut singles, &mut memo, k);
        state.advance();
    }
    eprintln!("phase snapshots {:?}", t0.elapsed());

    Ok(QueryEngine {
        g,
        table,
        old_to_new: re.old_to_new,
        new_to_old: re.new_to_old,
        phi: phi.clone(),
        vars,
        k,
        arena,
        global: GlobalArena::new(),
        range,
        trees,
        regions,
        snapshots,
    })
}

impl QueryEngine {
    /// The engine's free variables, sorted; this is the tuple position
    /// order of [`QueryEngine::answer_tuple`].
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn formula(&self) -> &Formula {
        &self.phi
    }

    /// Decides `G ⊨ phi(w̄)` for an assignment naming every free variable.
    pub fn answer(&self, w: &HashMap<String, Vertex>) -> Result<bool, LogicError> {
        for var in &self.vars {
            if !w.contains_key(var) {
                return Err(LogicError::UnboundVariable(var.clone()));
            }
        }
        if w.len() != self.vars.len() {
            let extra = w.keys().find(|v| !self.vars.contains(v)).expect("some key is extra");
            return Err(LogicError::ExtraVariable(extra.clone()));
        }
        let tuple: Vec<Vertex> = self.vars.iter().map(|v| w[v]).collect();
        self.answer_tuple(&tuple)
    }

    /// Positional form of [`QueryEngine::answer`]: `tuple[i]` assigns the
    /// `i`-th variable in sorted order.
    pub fn answer_tuple(&self, tuple: &[Vertex]) -> Result<bool, LogicError> {
        if tuple.len() != self.vars.len() {
            return Err(LogicError::Unsupported(format!(
                "tuple has {} entries but the formula has {} free variables",
                tuple.len(),
                self.vars.len()
            )));
        }
        let n = self.g.n();
        let mut verts = Vec::with_capacity(tuple.len());
        for &v in tuple {
            if v < 1 || v > n {
                return Err(LogicError::VertexRange(v, n));
            }
            verts.push(self.old_to_new[v as usize]);
        }
        let root_tau = self.run(&verts);
        let mut memo = HashMap::new();
        let gid = to_global_type(&self.arena, &self.global, &mut memo, root_tau)
            .expect("final-time types have all parts equal");
        eval_on_type(&self.global, gid, &self.phi)
    }

    /// Computes the tuple's rank-`k` local type at the final time. Works on
    /// reindexed vertex ids.
    fn run(&self, verts: &[Vertex]) -> TypeId {
        let n = self.g.n();
        let m = verts.len();
        // First-close times of all entry pairs; the diagonal is time 1.
        let mut fc = vec![vec![1u32; m]; m];
        let mut s_times: BTreeSet<u32> = BTreeSet::from([1, n]);
        for i in 0..m {
            for j in (i + 1)..m {
                let t = self.range.first_close(verts[i], verts[j]).expect("ids are in range");
                fc[i][j] = t;
                fc[j][i] = t;
                s_times.insert(t);
            }
        }

        // Components of the closeness graph on positions change only at
        // times in `s_times`; sweep those, processing each component birth.
        let mut comps: Vec<Pinned> = Vec::new();
        let mut cur_masks: Vec<u32> = Vec::new();
        let mut memo = OpMemo::new();
        for &s in &s_times {
            let masks_now = components_at(&fc, s);
            for &z in &masks_now {
                if s == 1 {
                    // At time 1 the impurity graph is empty, so close
                    // groups are exactly groups of equal vertices.
                    let tuple: Vec<Vertex> = bits(z).map(|i| verts[i]).collect();
                    debug_assert!(tuple.windows(2).all(|p| p[0] == p[1]));
                    let tau = ltp_time1_constant(&self.arena, &self.g, &tuple, self.k);
                    let parts: Vec<Part> = tuple.iter().map(|&v| v as Part).collect();
                    let node =
                        self.trees[&z].0.node_at(&parts, 1).expect("constant tuples are leaves");
                    self.debug_check(&tuple, 1, tau);
                    comps.push(Pinned { mask: z, node, tau });
                } else if !cur_masks.contains(&z) {
                    self.component_birth(z, s, &mut comps, &mut memo, verts);
                }
            }
            cur_masks = masks_now;
        }

        // At time `n` everything shares one part, so one component is left.
        debug_assert_eq!(comps.len(), 1);
        let last = comps.pop().expect("the full tuple forms one component");
        debug_assert_eq!(last.mask, (1u32 << m) - 1);
        let (tree, jump) = &self.trees[&last.mask];
        let out = warp_query(tree, jump, last.node, tree.root, last.tau)
            .expect("the root is an ancestor of every node");
        self.debug_check(&bits(last.mask).map(|i| verts[i]).collect::<Vec<_>>(), n, out);
        out
    }

    /// Handles the birth of component `z` at time `s > 1`: warps the
    /// merging groups to `s - 1`, joins them (pairwise distance exceeds
    /// `r`, so the joint type factorizes), restores position order, and
    /// promotes across the merge into `s` inside that merge's region.
    fn component_birth(
        &self,
        z: u32,
        s: u32,
        comps: &mut Vec<Pinned>,
        memo: &mut OpMemo,
        verts: &[Vertex],
    ) {
        let subs: Vec<Pinned> = {
            let mut subs = Vec::new();
            let mut rest = Vec::new();
            for c in comps.drain(..) {
                if c.mask & z != 0 {
                    subs.push(c);
                } else {
                    rest.push(c);
                }
            }
            *comps = rest;
            subs
        };
        debug_assert!(subs.len() >= 2, "a born component unites at least two groups");
        debug_assert_eq!(subs.iter().fold(0, |acc, c| acc | c.mask), z);

        let ctx = RegionCtx {
            region: self.regions.at(s - 1),
            radius: self.regions.radius,
            singles: &self.snapshots[(s - 2) as usize],
            rank: self.k as u8,
        };
        let mut acc: Option<TypeId> = None;
        let mut concat: Vec<u8> = Vec::new();
        for sub in &subs {
            let parts: Vec<Part> =
                bits(sub.mask).map(|i| self.table.part_of(verts[i], s - 1)).collect();
            let (tree, jump) = &self.trees[&sub.mask];
            let target = tree
                .node_at(&parts, s - 1)
                .expect("a group meeting others at s sits near the merge at s");
            let tau = warp_query(tree, jump, sub.node, target, sub.tau)
                .expect("later nodes of a lineage are ancestors");
            self.debug_check(&bits(sub.mask).map(|i| verts[i]).collect::<Vec<_>>(), s - 1, tau);
            concat.extend(bits(sub.mask).map(|i| i as u8));
            acc = Some(match acc {
                None => tau,
                Some(l) => join(&self.arena, &ctx, memo, l, tau),
            });
        }
        let joined = acc.expect("at least two groups joined");
        self.debug_check(&concat.iter().map(|&i| verts[i as usize]).collect::<Vec<_>>(), s - 1, joined);

        let zbits: Vec<u8> = bits(z).map(|i| i as u8).collect();
        let perm: Vec<u8> = zbits
            .iter()
            .map(|b| concat.iter().position(|c| c == b).expect("masks partition z") as u8)
            .collect();
        let ordered = permute(&self.arena, memo, joined, &perm);
        let tau = promote(&self.arena, &ctx, memo, ordered);

        let parts: Vec<Part> = bits(z).map(|i| self.table.part_of(verts[i], s)).collect();
        let node = self.trees[&z]
            .0
            .node_at(&parts, s)
            .expect("a component born at s sits within r of the merge");
        self.debug_check(&zbits.iter().map(|&i| verts[i as usize]).collect::<Vec<_>>(), s, tau);

        let at = comps
            .iter()
            .position(|c| c.mask.trailing_zeros() > z.trailing_zeros())
            .unwrap_or(comps.len());
        comps.insert(at, Pinned { mask: z, node, tau });
    }

    /// Desk-scale instrumentation: every intermediate type must equal the
    /// from-scratch local type of its tuple at its time.
    #[cfg(debug_assertions)]
    fn debug_check(&self, tuple: &[Vertex], t: u32, tau: TypeId) {
        if self.g.n() > 8 {
            return;
        }
        let want = ltp(&self.arena, &self.g, &self.table, t, tuple, self.k);
        assert_eq!(tau, want, "engine type of {tuple:?} at time {t} disagrees with the reference");
    }

    #[cfg(not(debug_assertions))]
    fn debug_check(&self, _tuple: &[Vertex], _t: u32, _tau: TypeId) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::naive_eval;
    use crate::seq::{from_merges, tests::p4, validate};

    fn env(vars: &[&str], tuple: &[Vertex]) -> HashMap<String, Vertex> {
        vars.iter().map(|v| v.to_string()).zip(tuple.iter().copied()).collect()
    }

    /// Every tuple over the graph's vertices, checked engine vs naive.
    fn check_all_tuples(g: &Graph, cs: &ContractionSequence, phi: &Formula) {
        let engine = build_query_engine(g, cs, phi).unwrap();
        let vars = engine.vars().to_vec();
        let m = vars.len();
        let n = g.n();
        let mut tuple = vec![1 as Vertex; m];
        loop {
            let w: HashMap<String, Vertex> =
                vars.iter().cloned().zip(tuple.iter().copied()).collect();
            assert_eq!(
                engine.answer(&w).unwrap(),
                naive_eval(g, phi, &w).unwrap(),
                "phi = {phi}, tuple = {tuple:?}"
            );
            let mut i = 0;
            while i < m {
                tuple[i] += 1;
                if tuple[i] <= n {
                    break;
                }
                tuple[i] = 1;
                i += 1;
            }
            if i == m {
                break;
            }
        }
    }

    #[test]
    fn p4_edge_query_matches_pinned_answers() {
        let (g, cs) = p4();
        let phi = Formula::parse("E x y").unwrap();
        let engine = build_query_engine(&g, &cs, &phi).unwrap();
        assert_eq!(engine.answer(&env(&["x", "y"], &[2, 3])), Ok(true));
        assert_eq!(engine.answer(&env(&["x", "y"], &[1, 3])), Ok(false));
        assert_eq!(engine.answer(&env(&["x", "y"], &[1, 4])), Ok(false));
        check_all_tuples(&g, &cs, &phi);
    }

    #[test]
    fn p4_two_hop_query() {
        let (g, cs) = p4();
        let phi = Formula::parse("exists z (E x z and E z y)").unwrap();
        let engine = build_query_engine(&g, &cs, &phi).unwrap();
        assert_eq!(engine.answer(&env(&["x", "y"], &[1, 3])), Ok(true));
        check_all_tuples(&g, &cs, &phi);
    }

    #[test]
    fn p4_rank_two_pool() {
        let (g, cs) = p4();
        for text in [
            "exists z (E x z and exists w (E z w and E w y))",
            "forall z (E x z or not E z y)",
            "exists z (E x z and forall w (E w y or w = z))",
        ] {
            check_all_tuples(&g, &cs, &Formula::parse(text).unwrap());
        }
    }

    #[test]
    fn constant_equality_tuple() {
        let (g, cs) = p4();
        let phi = Formula::parse("x = y").unwrap();
        let engine = build_query_engine(&g, &cs, &phi).unwrap();
        for v in 1..=4 {
            assert_eq!(engine.answer(&env(&["x", "y"], &[v, v])), Ok(true));
        }
        assert_eq!(engine.answer(&env(&["x", "y"], &[1, 2])), Ok(false));
        check_all_tuples(&g, &cs, &phi);
    }

    #[test]
    fn three_variable_queries_on_p4() {
        let (g, cs) = p4();
        let phi = Formula::parse("exists w (E x w and E w y and not w = z)").unwrap();
        check_all_tuples(&g, &cs, &phi);
    }

    /// Deterministic dense-ish graph on ten vertices with a merge order
    /// that mixes distant vertices, forcing a nontrivial reindexing.
    fn ten_vertex_fixture() -> (Graph, ContractionSequence) {
        let mut edges = Vec::new();
        for u in 1..=10u32 {
            for v in (u + 1)..=10u32 {
                if (u * 7 + v * 3) % 5 < 2 {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::from_edges(10, &edges).unwrap();
        let merges =
            [(1, 3), (11, 5), (12, 7), (13, 9), (14, 2), (15, 4), (16, 6), (17, 8), (18, 10)];
        let cs = from_merges(&g, &merges);
        validate(&g, &cs).unwrap();
        (g, cs)
    }

    #[test]
    fn ten_vertex_engine_answers_all_pairs() {
        let (g, cs) = ten_vertex_fixture();
        for text in ["E x y", "exists z (E x z and E z y)"] {
            let phi = Formula::parse(text).unwrap();
            let engine = build_query_engine(&g, &cs, &phi).unwrap();
            for u in 1..=10 {
                for v in 1..=10 {
                    let w = env(&["x", "y"], &[u, v]);
                    assert_eq!(
                        engine.answer(&w).unwrap(),
                        naive_eval(&g, &phi, &w).unwrap(),
                        "phi = {phi}, ({u}, {v})"
                    );
                }
            }
        }
    }

    #[test]
    fn single_vertex_engine() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let cs = ContractionSequence::parse("", 1).unwrap();
        let engine = build_query_engine(&g, &cs, &Formula::parse("x = y").unwrap()).unwrap();
        assert_eq!(engine.answer(&env(&["x", "y"], &[1, 1])), Ok(true));
        let engine = build_query_engine(&g, &cs, &Formula::parse("E x y").unwrap()).unwrap();
        assert_eq!(engine.answer(&env(&["x", "y"], &[1, 1])), Ok(false));
    }

    #[test]
    fn rejects_sentences_high_rank_and_bad_assignments() {
        let (g, cs) = p4();
        let sentence = Formula::parse("exists x exists y (E x y)").unwrap();
        assert!(matches!(
            build_query_engine(&g, &cs, &sentence),
            Err(LogicError::Unsupported(_))
        ));
        let deep = Formula::parse(
            "exists a exists b exists c exists d exists e \
             (E x a and E a b and E b c and E c d and E d e)",
        )
        .unwrap();
        assert!(matches!(
            build_query_engine(&g, &cs, &deep),
            Err(LogicError::RankCap { rank: 5, cap: RANK_CAP })
        ));

        let phi = Formula::parse("E x y").unwrap();
        let engine = build_query_engine(&g, &cs, &phi).unwrap();
        assert_eq!(
            engine.answer(&env(&["x"], &[1])),
            Err(LogicError::UnboundVariable("y".to_string()))
        );
        assert_eq!(
            engine.answer(&env(&["x", "y", "z"], &[1, 2, 3])),
            Err(LogicError::ExtraVariable("z".to_string()))
        );
        assert_eq!(engine.answer(&env(&["x", "y"], &[1, 5])), Err(LogicError::VertexRange(5, 4)));
        assert!(matches!(engine.answer_tuple(&[1]), Err(LogicError::Unsupported(_))));
    }

    #[test]
    fn concurrent_answers_share_the_engine() {
        let (g, cs) = p4();
        let phi = Formula::parse("exists z (E x z and E z y)").unwrap();
        let engine = build_query_engine(&g, &cs, &phi).unwrap();
        let want: Vec<bool> = (1..=4)
            .flat_map(|u| (1..=4).map(move |v| (u, v)))
            .map(|(u, v)| naive_eval(&g, &phi, &env(&["x", "y"], &[u, v])).unwrap())
            .collect();
        std::thread::scope(|scope| {
            for _ in 0..4 {
                scope.spawn(|| {
                    let got: Vec<bool> = (1..=4)
                        .flat_map(|u| (1..=4).map(move |v| (u, v)))
                        .map(|(u, v)| engine.answer(&env(&["x", "y"], &[u, v])).unwrap())
                        .collect();
                    assert_eq!(got, want);
                });
            }
        });
    }
}
