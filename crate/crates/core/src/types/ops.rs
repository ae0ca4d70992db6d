//! The effective operations on local types: `trim` (rank down), `permute`
//! (tuple reorder), `join` (far-tuple concatenation), and `promote` (one
//! merge step forward in time), plus the contexts that supply the distance
//! and relation queries they need.
//!
//! Types are positional: a member of a rank-`k` type always extends its
//! tuple by one final position. Joins therefore produce extension-in-the-
//! middle layouts that are immediately repaired with an explicit
//! permutation, keeping every stored type in the canonical
//! extensions-last shape.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::graph::Graph;
use crate::regions::RelevantRegion;
use crate::seq::{ContractionSequence, Part, PartTable, Rel};
use crate::trigraph::{quotient_at, DistMap, ImpurityState, Trigraph};
use crate::types::arena::{Payload, TypeArena, TypeId, TypeNode};
use crate::types::reference;
use crate::Vertex;

/// Distance and relation queries at a fixed time `s`.
pub trait TimeCtx {
    fn time(&self) -> u32;
    fn rel(&self, p: Part, q: Part) -> Rel;
    /// Parts within impurity distance `cap` of `from`, with distances.
    fn ball(&self, from: &[Part], cap: u32) -> DistMap;
}

/// A [`TimeCtx`] positioned just before a merge, additionally exposing the
/// post-merge view and the realized singleton type sets `promote` consults.
pub trait MergeCtx: TimeCtx {
    /// The pending merge `(a, a2, b)`: parts `a`, `a2` of time `s` form `b`
    /// at `s + 1`.
    fn merge(&self) -> (Part, Part, Part);

    fn image(&self, p: Part) -> Part {
        let (a, a2, b) = self.merge();
        if p == a || p == a2 {
            b
        } else {
            p
        }
    }

    /// Ball at time `s + 1` over images.
    fn ball_next(&self, from: &[Part], cap: u32) -> DistMap;

    /// The realized singleton types of part `p` at time `s`, at rank
    /// [`MergeCtx::realized_rank`].
    fn realized_singletons(&self, p: Part) -> Vec<TypeId>;

    fn realized_rank(&self) -> u8;
}

/// Memo tables for the operations; keys carry the time so one memo can span
/// several steps, but long scans should [`OpMemo::clear`] periodically.
#[derive(Default)]
pub struct OpMemo {
    trim: FxHashMap<(TypeId, u32), TypeId>,
    join: FxHashMap<(TypeId, TypeId, u32), TypeId>,
    promote: FxHashMap<(TypeId, u32), TypeId>,
    permute: FxHashMap<(TypeId, SmallVec<[u8; 8]>), TypeId>,
}

impl OpMemo {
    pub fn new() -> OpMemo {
        OpMemo::default()
    }

    pub fn clear(&mut self) {
        self.trim.clear();
        self.join.clear();
        self.promote.clear();
        self.permute.clear();
    }
}

/// Lowers a rank-`k` type of `ā` to the rank-`(k−1)` type of the same
/// tuple (`k ≥ 1`).
pub fn trim(arena: &TypeArena, ctx: &impl TimeCtx, memo: &mut OpMemo, id: TypeId) -> TypeId {
    let key = (id, ctx.time());
    if let Some(&out) = memo.trim.get(&key) {
        return out;
    }
    let node = arena.node(id);
    let k = node.rank;
    assert!(k >= 1, "trim needs rank >= 1");
    let out = if k == 1 {
        // Extensions at distance 0 stay inside the tuple's own parts;
        // dropping their last coordinate recovers the tuple's atomic type.
        let keep = node.arity();
        let mut result = None;
        for &m in node.members() {
            let member = arena.node(m);
            let last = *member.parts.last().unwrap();
            if !node.parts.contains(&last) {
                continue;
            }
            let (eq, adj) = member.atomic();
            let cand = arena.intern(TypeNode {
                rank: 0,
                parts: node.parts.clone(),
                payload: Payload::Atomic { eq: eq.restricted(keep), adj: adj.restricted(keep) },
            });
            match result {
                None => result = Some(cand),
                Some(prev) => assert_eq!(prev, cand, "distance-0 extensions disagree on the atomic type"),
            }
        }
        result.expect("a type always extends into its own parts")
    } else {
        let ball = ctx.ball(&node.parts, 1 << (k - 2));
        let mut members = Vec::new();
        for &m in node.members() {
            let last = *arena.node(m).parts.last().unwrap();
            if ball.contains_key(&last) {
                members.push(trim(arena, ctx, memo, m));
            }
        }
        members.sort_unstable();
        members.dedup();
        arena.intern(TypeNode { rank: k - 1, parts: node.parts.clone(), payload: Payload::Members(members) })
    };
    memo.trim.insert(key, out);
    out
}

/// Lowers a type through several ranks.
pub fn trim_to(arena: &TypeArena, ctx: &impl TimeCtx, memo: &mut OpMemo, id: TypeId, rank: u8) -> TypeId {
    let mut cur = id;
    let mut have = arena.node(id).rank;
    assert!(have >= rank);
    while have > rank {
        cur = trim(arena, ctx, memo, cur);
        have -= 1;
    }
    cur
}

/// Reorders a type's tuple: position `i` of the result is position
/// `perm[i]` of the input.
pub fn permute(arena: &TypeArena, memo: &mut OpMemo, id: TypeId, perm: &[u8]) -> TypeId {
    if perm.iter().enumerate().all(|(i, &p)| i == p as usize) {
        return id;
    }
    let key = (id, SmallVec::from_slice(perm));
    if let Some(&out) = memo.permute.get(&key) {
        return out;
    }
    let node = arena.node(id);
    assert_eq!(perm.len(), node.arity());
    let parts: SmallVec<[Part; 4]> = perm.iter().map(|&p| node.parts[p as usize]).collect();
    let out = match &node.payload {
        Payload::Atomic { eq, adj } => arena.intern(TypeNode {
            rank: 0,
            parts,
            payload: Payload::Atomic { eq: eq.permuted(perm), adj: adj.permuted(perm) },
        }),
        Payload::Members(members) => {
            let mut ext: SmallVec<[u8; 8]> = SmallVec::from_slice(perm);
            ext.push(node.arity() as u8);
            let mut mapped: Vec<TypeId> = members.iter().map(|&m| permute(arena, memo, m, &ext)).collect();
            mapped.sort_unstable();
            mapped.dedup();
            arena.intern(TypeNode { rank: node.rank, parts, payload: Payload::Members(mapped) })
        }
    };
    memo.permute.insert(key, out);
    out
}

/// Combines the rank-`k` types of two tuples whose part sets are farther
/// apart than `2^k` into the rank-`k` type of the concatenated tuple.
pub fn join(arena: &TypeArena, ctx: &impl TimeCtx, memo: &mut OpMemo, left: TypeId, right: TypeId) -> TypeId {
    let key = (left, right, ctx.time());
    if let Some(&out) = memo.join.get(&key) {
        return out;
    }
    let l = arena.node(left);
    let r = arena.node(right);
    assert_eq!(l.rank, r.rank, "join needs equal ranks");
    let k = l.rank;
    #[cfg(debug_assertions)]
    {
        let ball = ctx.ball(&l.parts, 1 << k);
        assert!(
            r.parts.iter().all(|p| !ball.contains_key(p)),
            "join precondition: part sets within distance 2^{k}"
        );
    }
    let p = l.arity();
    let q = r.arity();
    let mut parts = l.parts.clone();
    parts.extend_from_slice(&r.parts);
    let out = if k == 0 {
        let (leq, ladj) = l.atomic();
        let (req, radj) = r.atomic();
        let mut eq = leq.with_shifted(req, p);
        let mut adj = ladj.with_shifted(radj, p);
        let _ = &mut eq; // cross pairs sit in distinct parts, so never equal
        for i in 0..p {
            for j in 0..q {
                match ctx.rel(l.parts[i], r.parts[j]) {
                    Rel::Complete => {
                        adj.set(i, p + j);
                        adj.set(p + j, i);
                    }
                    Rel::Anti => {}
                    Rel::Impure => panic!("join precondition: impure cross pair"),
                }
            }
        }
        arena.intern(TypeNode { rank: 0, parts, payload: Payload::Atomic { eq, adj } })
    } else {
        let l_low = trim(arena, ctx, memo, left);
        let r_low = trim(arena, ctx, memo, right);
        // Extensions near the left tuple: join leaves them mid-tuple, so
        // rotate that position to the end.
        let mut rot: SmallVec<[u8; 8]> = (0..p as u8).collect();
        rot.extend((p as u8 + 1)..(p + 1 + q) as u8);
        rot.push(p as u8);
        let mut members = Vec::new();
        for &m in l.members() {
            let joined = join(arena, ctx, memo, m, r_low);
            members.push(permute(arena, memo, joined, &rot));
        }
        for &m in r.members() {
            members.push(join(arena, ctx, memo, l_low, m));
        }
        members.sort_unstable();
        members.dedup();
        arena.intern(TypeNode { rank: k, parts, payload: Payload::Members(members) })
    };
    memo.join.insert(key, out);
    out
}

/// Advances a rank-`k` type one merge step, from time `s` to `s + 1`.
pub fn promote(arena: &TypeArena, ctx: &impl MergeCtx, memo: &mut OpMemo, id: TypeId) -> TypeId {
    let key = (id, ctx.time());
    if let Some(&out) = memo.promote.get(&key) {
        return out;
    }
    let node = arena.node(id);
    let (a, a2, b) = ctx.merge();
    let out = if node.rank == 0 {
        if node.parts.iter().any(|&p| p == a || p == a2) {
            let parts = node.parts.iter().map(|&p| ctx.image(p)).collect();
            arena.intern(TypeNode { rank: 0, parts, payload: node.payload.clone() })
        } else {
            id
        }
    } else {
        let k = node.rank;
        let half = 1u32 << (k - 1);
        let mut members: Vec<TypeId> =
            node.members().iter().map(|&m| promote(arena, ctx, memo, m)).collect();
        let imgs: SmallVec<[Part; 4]> = node.parts.iter().map(|&p| ctx.image(p)).collect();
        // Parts that newly enter the extension ball after the merge.
        let near_next = ctx.ball_next(&imgs, half);
        let mut cands: Vec<Part> = Vec::new();
        for &w in near_next.keys() {
            if w == b {
                cands.push(a);
                cands.push(a2);
            } else {
                cands.push(w);
            }
        }
        cands.sort_unstable();
        cands.dedup();
        let near_now = ctx.ball(&node.parts, half);
        let mut l_low = None;
        for v in cands {
            if near_now.contains_key(&v) {
                continue;
            }
            let low = *l_low.get_or_insert_with(|| trim(arena, ctx, memo, id));
            for single in ctx.realized_singletons(v) {
                let gamma = trim_to(arena, ctx, memo, single, k - 1);
                let joined = join(arena, ctx, memo, low, gamma);
                members.push(promote(arena, ctx, memo, joined));
            }
        }
        members.sort_unstable();
        members.dedup();
        arena.intern(TypeNode { rank: k, parts: imgs, payload: Payload::Members(members) })
    };
    memo.promote.insert(key, out);
    out
}

/// The rank-`k` local type of any constant tuple at time 1, where the
/// impurity graph is empty and extensions stay inside the tuple's own
/// singleton parts.
pub fn ltp_time1_constant(arena: &TypeArena, g: &Graph, tuple: &[Vertex], k: u32) -> TypeId {
    let parts: SmallVec<[Part; 4]> = tuple.iter().map(|&v| v as Part).collect();
    if k == 0 {
        let (eq, adj) = reference::atomic_bits(g, tuple);
        return arena.intern(TypeNode { rank: 0, parts, payload: Payload::Atomic { eq, adj } });
    }
    let mut values: Vec<Vertex> = tuple.to_vec();
    values.sort_unstable();
    values.dedup();
    let mut members = Vec::new();
    for v in values {
        let mut ext = tuple.to_vec();
        ext.push(v);
        members.push(ltp_time1_constant(arena, g, &ext, k - 1));
    }
    members.sort_unstable();
    members.dedup();
    arena.intern(TypeNode { rank: k as u8, parts, payload: Payload::Members(members) })
}

/// Time context over a full quotient trigraph.
pub struct QuotientCtx<'a> {
    pub tri: &'a Trigraph,
    pub time: u32,
}

impl TimeCtx for QuotientCtx<'_> {
    fn time(&self) -> u32 {
        self.time
    }

    fn rel(&self, p: Part, q: Part) -> Rel {
        self.tri.rel(p, q)
    }

    fn ball(&self, from: &[Part], cap: u32) -> DistMap {
        self.tri.ball(from, cap)
    }
}

/// Merge context over a live replay plus maintained singleton sets; used by
/// the scanning engines.
pub struct ScanCtx<'a, 'b> {
    pub state: &'a ImpurityState<'b>,
    pub singles: &'a FxHashMap<Part, Arc<Vec<TypeId>>>,
    pub rank: u8,
}

impl TimeCtx for ScanCtx<'_, '_> {
    fn time(&self) -> u32 {
        self.state.time()
    }

    fn rel(&self, p: Part, q: Part) -> Rel {
        self.state.rel(p, q)
    }

    fn ball(&self, from: &[Part], cap: u32) -> DistMap {
        self.state.ball(from, cap)
    }
}

impl MergeCtx for ScanCtx<'_, '_> {
    fn merge(&self) -> (Part, Part, Part) {
        let step = self.state.next_step().expect("scan context needs a pending merge");
        (step.a, step.a2, step.b)
    }

    fn ball_next(&self, from: &[Part], cap: u32) -> DistMap {
        self.state.next_ball(from, cap)
    }

    fn realized_singletons(&self, p: Part) -> Vec<TypeId> {
        self.singles.get(&p).unwrap_or_else(|| panic!("no singleton set for part {p}")).as_ref().clone()
    }

    fn realized_rank(&self) -> u8 {
        self.rank
    }
}

/// Merge context over a stored relevant region plus singleton-set
/// snapshots; used at query time. Every ball request is checked against the
/// region radius so an under-provisioned region fails loudly instead of
/// returning truncated distances.
pub struct RegionCtx<'a> {
    pub region: &'a RelevantRegion,
    pub radius: u32,
    pub singles: &'a FxHashMap<Part, Arc<Vec<TypeId>>>,
    pub rank: u8,
}

impl RegionCtx<'_> {
    fn check_cover(&self, from: &[Part], cap: u32) {
        for &p in from {
            let d = self
                .region
                .dist_from_merge(p)
                .unwrap_or_else(|| panic!("part {p} outside region at time {}", self.region.s));
            assert!(
                d + cap <= self.radius,
                "region radius {} cannot cover a ball of radius {cap} around part {p} at distance {d}",
                self.radius
            );
        }
    }
}

impl TimeCtx for RegionCtx<'_> {
    fn time(&self) -> u32 {
        self.region.s
    }

    fn rel(&self, p: Part, q: Part) -> Rel {
        self.region.rel(p, q)
    }

    fn ball(&self, from: &[Part], cap: u32) -> DistMap {
        self.check_cover(from, cap);
        self.region.ball(from, cap)
    }
}

impl MergeCtx for RegionCtx<'_> {
    fn merge(&self) -> (Part, Part, Part) {
        (self.region.a, self.region.a2, self.region.b)
    }

    fn ball_next(&self, from: &[Part], cap: u32) -> DistMap {
        self.check_cover(from, cap);
        self.region.ball_next(from, cap)
    }

    fn realized_singletons(&self, p: Part) -> Vec<TypeId> {
        self.singles.get(&p).unwrap_or_else(|| panic!("no singleton snapshot for part {p}")).as_ref().clone()
    }

    fn realized_rank(&self) -> u8 {
        self.rank
    }
}

/// Self-contained merge context computing singleton sets with the reference
/// oracle; desk-scale, used by the public table builders and tests.
pub struct OracleMergeCtx<'a> {
    arena: &'a TypeArena,
    g: &'a Graph,
    table: &'a PartTable,
    s: u32,
    rank: u8,
    step: (Part, Part, Part),
    q_now: Trigraph,
    q_next: Trigraph,
    singles: RefCell<HashMap<Part, Vec<TypeId>>>,
}

impl<'a> OracleMergeCtx<'a> {
    pub fn new(
        arena: &'a TypeArena,
        g: &'a Graph,
        cs: &ContractionSequence,
        table: &'a PartTable,
        s: u32,
        rank: u8,
    ) -> OracleMergeCtx<'a> {
        let step = cs.step_into(s + 1);
        OracleMergeCtx {
            arena,
            g,
            table,
            s,
            rank,
            step: (step.a, step.a2, step.b),
            q_now: quotient_at(g, table, s),
            q_next: quotient_at(g, table, s + 1),
            singles: RefCell::new(HashMap::new()),
        }
    }
}

impl TimeCtx for OracleMergeCtx<'_> {
    fn time(&self) -> u32 {
        self.s
    }

    fn rel(&self, p: Part, q: Part) -> Rel {
        self.q_now.rel(p, q)
    }

    fn ball(&self, from: &[Part], cap: u32) -> DistMap {
        self.q_now.ball(from, cap)
    }
}

impl MergeCtx for OracleMergeCtx<'_> {
    fn merge(&self) -> (Part, Part, Part) {
        self.step
    }

    fn ball_next(&self, from: &[Part], cap: u32) -> DistMap {
        self.q_next.ball(from, cap)
    }

    fn realized_singletons(&self, p: Part) -> Vec<TypeId> {
        if let Some(cached) = self.singles.borrow().get(&p) {
            return cached.clone();
        }
        let mut out: Vec<TypeId> = self
            .table
            .members(p)
            .into_iter()
            .map(|v| reference::ltp(self.arena, self.g, self.table, self.s, &[v], self.rank as u32))
            .collect();
        out.sort_unstable();
        out.dedup();
        self.singles.borrow_mut().insert(p, out.clone());
        out
    }

    fn realized_rank(&self) -> u8 {
        self.rank
    }
}
