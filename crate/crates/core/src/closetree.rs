//! The tree of close tuples: for a fixed variable subset, all (part-tuple,
//! time) pairs whose entries cannot be split into two far groups, organized
//! by the "advance in time and take images" ancestor relation. Each edge
//! carries the map sending a realizing tuple's local type at the child to
//! its local type at the parent, and each node carries its realized
//! universe.
//!
//! The tree is built in one scan. A merge can only create closeness near
//! the merged part, so each step inspects a bounded ball: new nodes are the
//! close tuples within reach of the merge, their children are the close
//! preimages (bridged from older nodes by identity edges when they sat far
//! from every merge in between), and tuples whose preimage was not close
//! register here — their types are the joins of the far sub-tuple types
//! recorded in the trees of smaller variable subsets.

use std::collections::HashMap;

use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::err::EngineError;
use crate::graph::Graph;
use crate::modelcheck::{advance_singles, initial_singles};
use crate::seq::{ContractionSequence, Part, PartTable};
use crate::trigraph::ImpurityState;
use crate::types::arena::{TypeArena, TypeId};
use crate::types::ops::{join, ltp_time1_constant, permute, promote, OpMemo, ScanCtx};
use crate::types::universe::{abstract_bound, TypeFunction, TypeUniverse};

/// Node id within one tree.
pub type NodeId = u32;

/// One tree node: a part tuple at a time, its parent edge, and the
/// realized types of the vertex tuples mapping onto it.
#[derive(Debug, Clone)]
pub struct Node {
    pub tuple: Vec<Part>,
    pub time: u32,
    pub parent: Option<NodeId>,
    /// Child-universe index → parent-universe index, dense over the
    /// child's realized list. Present iff `parent` is.
    pub edge: Option<Vec<u32>>,
    pub universe: TypeUniverse,
    pub depth: u32,
}

/// How tuples first arriving at a node decompose: their preimage split
/// into pairwise-far components, each pinned to a node of a smaller tree.
#[derive(Debug, Clone)]
pub struct Recipe {
    /// (variable mask in the full tuple's position space, node in that
    /// mask's tree), ordered by each component's first position.
    pub components: Vec<(u32, NodeId)>,
    /// Tree-local positions covered by each component.
    pub positions: Vec<Vec<u8>>,
    /// `perm[i]` = index inside the component concatenation holding
    /// tree-local position `i`.
    pub perm: Vec<u8>,
    /// Component type combination (in component order) → resulting type
    /// at this node.
    pub table: HashMap<Vec<TypeId>, TypeId>,
}

/// The tree for one variable subset, with per-node universes, per-edge
/// type maps, registration recipes, and a (tuple, time) lookup map.
#[derive(Debug, Clone)]
pub struct CloseTree {
    /// Bitmask over the positions of the full variable tuple.
    pub mask: u32,
    pub k: u32,
    pub r: u32,
    pub nodes: Vec<Node>,
    pub root: NodeId,
    /// Per node, the recipes of the tuples that register there.
    pub recipes: Vec<Vec<Recipe>>,
    by_key: FxHashMap<(SmallVec<[Part; 8]>, u32), NodeId>,
}

impl CloseTree {
    pub fn arity(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn node_at(&self, tuple: &[Part], time: u32) -> Option<NodeId> {
        self.by_key.get(&(SmallVec::from_slice(tuple), time)).copied()
    }

    /// The edge map of `child` as a dense function between the two
    /// universes.
    pub fn edge_function(&self, child: NodeId) -> Option<TypeFunction> {
        let c = &self.nodes[child as usize];
        let parent = &self.nodes[c.parent? as usize];
        let map = c.edge.as_ref().unwrap();
        let images: Vec<TypeId> =
            map.iter().map(|&i| parent.universe.realized[i as usize]).collect();
        Some(TypeFunction::new(c.universe.clone(), parent.universe.clone(), &images))
    }
}

fn universe_of(tuple: &[Part], time: u32, k: u32, realized: Vec<TypeId>, scope: usize) -> TypeUniverse {
    TypeUniverse {
        u: tuple.to_vec(),
        s: time,
        k: k as u8,
        realized,
        abstract_bound: abstract_bound(tuple.len() as u32, k, scope as u128),
    }
}

/// Pairwise closeness on parts via cached capped balls, over either the
/// current or the post-merge impurity graph.
struct CloseCheck<'a, 'b> {
    state: &'a ImpurityState<'b>,
    r: u32,
    next: bool,
    cache: FxHashMap<Part, HashMap<Part, u32>>,
}

impl<'a, 'b> CloseCheck<'a, 'b> {
    fn new(state: &'a ImpurityState<'b>, r: u32, next: bool) -> CloseCheck<'a, 'b> {
        CloseCheck { state, r, next, cache: FxHashMap::default() }
    }

    fn close(&mut self, p: Part, q: Part) -> bool {
        if p == q {
            return true;
        }
        let (state, r, next) = (self.state, self.r, self.next);
        let ball = self.cache.entry(p).or_insert_with(|| {
            if next {
                state.next_ball(&[p], r)
            } else {
                state.ball(&[p], r)
            }
        });
        ball.contains_key(&q)
    }

    /// Partition of the positions into connectivity classes of the
    /// distance-`r` relation; classes ordered by first position, each
    /// sorted.
    fn components(&mut self, tuple: &[Part]) -> Vec<Vec<u8>> {
        let m = tuple.len();
        let mut comp: Vec<usize> = (0..m).collect();
        loop {
            let mut changed = false;
            for i in 0..m {
                for j in (i + 1)..m {
                    if comp[i] != comp[j] && self.close(tuple[i], tuple[j]) {
                        let (lo, hi) = (comp[i].min(comp[j]), comp[i].max(comp[j]));
                        for c in comp.iter_mut() {
                            if *c == hi {
                                *c = lo;
                            }
                        }
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut out: Vec<Vec<u8>> = Vec::new();
        let mut seen: Vec<usize> = Vec::new();
        for (i, &c) in comp.iter().enumerate() {
            match seen.iter().position(|&s| s == c) {
                Some(idx) => out[idx].push(i as u8),
                None => {
                    seen.push(c);
                    out.push(vec![i as u8]);
                }
            }
        }
        out
    }

    fn is_close(&mut self, tuple: &[Part]) -> bool {
        self.components(tuple).len() == 1
    }
}

/// The preimages of `tuple` under the merge: all position-wise choices of
/// `a`/`a2` for entries equal to `b`, other entries kept.
fn preimages(tuple: &[Part], a: Part, a2: Part, b: Part) -> Vec<Vec<Part>> {
    let slots: Vec<usize> =
        tuple.iter().enumerate().filter(|&(_, &p)| p == b).map(|(i, _)| i).collect();
    let mut out = Vec::with_capacity(1 << slots.len());
    for bits in 0..(1u32 << slots.len()) {
        let mut t = tuple.to_vec();
        for (j, &i) in slots.iter().enumerate() {
            t[i] = if bits & (1 << j) != 0 { a2 } else { a };
        }
        out.push(t);
    }
    out
}

fn push_node(
    nodes: &mut Vec<Node>,
    recipes: &mut Vec<Vec<Recipe>>,
    by_key: &mut FxHashMap<(SmallVec<[Part; 8]>, u32), NodeId>,
    node: Node,
) -> NodeId {
    let id = nodes.len() as NodeId;
    let prev = by_key.insert((SmallVec::from_slice(&node.tuple), node.time), id);
    debug_assert!(prev.is_none(), "one node per (tuple, time)");
    nodes.push(node);
    recipes.push(Vec::new());
    id
}

/// Builds the tree for the variable positions in `mask` at rank `k`. The
/// trees for all proper nonempty submasks must already be in `sub`; tuples
/// whose preimage entries were far until now pull their component types
/// from those trees, so all trees must share `arena`.
pub fn build_close_tree(
    g: &Graph,
    cs: &ContractionSequence,
    table: &PartTable,
    arena: &TypeArena,
    k: u32,
    mask: u32,
    sub: &HashMap<u32, CloseTree>,
) -> CloseTree {
    assert!(mask != 0, "a tree needs at least one variable");
    let m = mask.count_ones() as usize;
    let r = 1u32 << k;
    let n = g.n();
    let mask_bits: Vec<u8> = (0..32).filter(|&i| mask & (1 << i) != 0).collect();

    let mut nodes: Vec<Node> = Vec::new();
    let mut recipes: Vec<Vec<Recipe>> = Vec::new();
    let mut by_key: FxHashMap<(SmallVec<[Part; 8]>, u32), NodeId> = FxHashMap::default();
    // Live frontier: current close part tuples → their latest node. Every
    // close tuple over the alive parts has an entry (closeness is born
    // next to a merge, so its birth always creates a node).
    let mut latest: FxHashMap<SmallVec<[Part; 8]>, NodeId> = FxHashMap::default();

    // Leaves: at time 1 the impurity graph is empty, so exactly the
    // constant tuples are close, each realized by one vertex tuple.
    for v in 1..=n {
        let tuple = vec![v as Part; m];
        let tau = ltp_time1_constant(arena, g, &vec![v; m], k);
        let universe = universe_of(&tuple, 1, k, vec![tau], 1);
        let id = push_node(&mut nodes, &mut recipes, &mut by_key, Node {
            tuple: tuple.clone(),
            time: 1,
            parent: None,
            edge: None,
            universe,
            depth: 0,
        });
        latest.insert(SmallVec::from_slice(&tuple), id);
    }

    let mut state = ImpurityState::new(g, cs, table);
    let mut singles = initial_singles(arena, g, k);
    let mut memo = OpMemo::new();

    let mut t_reach = std::time::Duration::ZERO;
    let mut t_enum = std::time::Duration::ZERO;
    let mut t_adv = std::time::Duration::ZERO;
    let mut n_tuples = 0u64;

    while let Some(step) = state.next_step() {
        let (a, a2, b) = (step.a, step.a2, step.b);
        let t = state.time() + 1;
        let w0 = std::time::Instant::now();
        // Candidates for new nodes: a close tuple with an entry within r
        // of the merged part fits inside radius r·m of it.
        let reach = state.next_ball(&[b], r * m as u32);
        let mut cand: Vec<Part> = reach.keys().copied().collect();
        cand.sort_unstable();
        let mut next_close = CloseCheck::new(&state, r, true);
        let mut prev_close = CloseCheck::new(&state, r, false);
        let mut created: Vec<(Vec<Part>, NodeId)> = Vec::new();
        t_reach += w0.elapsed();
        let w0 = std::time::Instant::now();

        let mut stack: Vec<Vec<Part>> = vec![Vec::new()];
        while let Some(partial) = stack.pop() {
            if partial.len() < m {
                for &p in &cand {
                    let mut next = partial.clone();
                    next.push(p);
                    stack.push(next);
                }
                continue;
            }
            let tuple = partial;
            if !tuple.iter().any(|&p| reach[&p] <= r) || !next_close.is_close(&tuple) {
                continue;
            }
            let ctx = ScanCtx { state: &state, singles: &singles, rank: k as u8 };
            let mut child_ids: Vec<NodeId> = Vec::new();
            let mut fresh: Vec<TypeId> = Vec::new();
            let mut new_recipes: Vec<Recipe> = Vec::new();
            for pre in preimages(&tuple, a, a2, b) {
                let comps = prev_close.components(&pre);
                if comps.len() == 1 {
                    let &cid = latest.get(&pre[..]).expect("a close tuple always has a node");
                    let cid = if nodes[cid as usize].time < t - 1 {
                        // The tuple sat far from every merge since its
                        // last node, so its universe is unchanged; bridge
                        // the gap with an identity edge.
                        let old = &nodes[cid as usize];
                        let uni = universe_of(
                            &pre,
                            t - 1,
                            k,
                            old.universe.realized.clone(),
                            state.ball(&pre, r).len(),
                        );
                        let len = uni.realized.len() as u32;
                        let mid = push_node(&mut nodes, &mut recipes, &mut by_key, Node {
                            tuple: pre.clone(),
                            time: t - 1,
                            parent: None,
                            edge: None,
                            universe: uni,
                            depth: 0,
                        });
                        nodes[cid as usize].parent = Some(mid);
                        nodes[cid as usize].edge = Some((0..len).collect());
                        mid
                    } else {
                        cid
                    };
                    for &tau in nodes[cid as usize].universe.realized.clone().iter() {
                        fresh.push(promote(arena, &ctx, &mut memo, tau));
                    }
                    child_ids.push(cid);
                } else {
                    // The tuple first becomes close here: tabulate the
                    // promoted joins of all component type combinations.
                    let mut comp_nodes: Vec<(u32, NodeId)> = Vec::new();
                    let mut concat: Vec<u8> = Vec::new();
                    for positions in &comps {
                        let submask: u32 =
                            positions.iter().map(|&i| 1u32 << mask_bits[i as usize]).sum();
                        let sub_tuple: Vec<Part> =
                            positions.iter().map(|&i| pre[i as usize]).collect();
                        let nid = sub[&submask]
                            .node_at(&sub_tuple, t - 1)
                            .expect("far components are pinned in their trees");
                        comp_nodes.push((submask, nid));
                        concat.extend(positions.iter().copied());
                    }
                    let perm: Vec<u8> = (0..m as u8)
                        .map(|i| concat.iter().position(|&c| c == i).unwrap() as u8)
                        .collect();
                    let mut combos: Vec<Vec<TypeId>> = vec![Vec::new()];
                    for &(sm, nid) in &comp_nodes {
                        let universe = &sub[&sm].nodes[nid as usize].universe.realized;
                        combos = combos
                            .into_iter()
                            .flat_map(|c| {
                                universe.iter().map(move |&ty| {
                                    let mut e = c.clone();
                                    e.push(ty);
                                    e
                                })
                            })
                            .collect();
                    }
                    let mut tab: HashMap<Vec<TypeId>, TypeId> = HashMap::new();
                    for combo in combos {
                        let mut acc = combo[0];
                        for &next in &combo[1..] {
                            acc = join(arena, &ctx, &mut memo, acc, next);
                        }
                        let ordered = permute(arena, &mut memo, acc, &perm);
                        let tau = promote(arena, &ctx, &mut memo, ordered);
                        fresh.push(tau);
                        tab.insert(combo, tau);
                    }
                    new_recipes.push(Recipe {
                        components: comp_nodes,
                        positions: comps,
                        perm,
                        table: tab,
                    });
                }
            }
            fresh.sort_unstable();
            fresh.dedup();
            let uni = universe_of(&tuple, t, k, fresh, state.next_ball(&tuple, r).len());
            let nid = push_node(&mut nodes, &mut recipes, &mut by_key, Node {
                tuple: tuple.clone(),
                time: t,
                parent: None,
                edge: None,
                universe: uni,
                depth: 0,
            });
            recipes[nid as usize] = new_recipes;
            for cid in child_ids {
                let images: Vec<u32> = nodes[cid as usize]
                    .universe
                    .realized
                    .clone()
                    .iter()
                    .map(|&tau| {
                        let img = promote(arena, &ctx, &mut memo, tau);
                        nodes[nid as usize]
                            .universe
                            .index_of(img)
                            .expect("promoted type is realized at the parent")
                            as u32
                    })
                    .collect();
                nodes[cid as usize].parent = Some(nid);
                nodes[cid as usize].edge = Some(images);
            }
            created.push((tuple, nid));
        }

        // Refresh the frontier: every preimage key becomes its image.
        for (tuple, nid) in created {
            n_tuples += 1;
            for pre in preimages(&tuple, a, a2, b) {
                latest.remove(&pre[..]);
            }
            latest.insert(SmallVec::from_slice(&tuple), nid);
        }
        t_enum += w0.elapsed();
        let w0 = std::time::Instant::now();
        advance_singles(arena, &state, &mut singles, &mut memo, k);
        state.advance();
        t_adv += w0.elapsed();
    }
    eprintln!(
        "  mask {mask}: reach {t_reach:?} enum {t_enum:?} adv {t_adv:?} nodes {} created {n_tuples}",
        nodes.len()
    );

    let root = (nodes.len() - 1) as NodeId;
    assert!(nodes[root as usize].parent.is_none());
    assert_eq!(nodes[root as usize].time, n);
    // Parents are always created after their children, so one descending
    // pass settles the depths.
    for i in (0..nodes.len()).rev() {
        if let Some(p) = nodes[i].parent {
            assert!(p > i as NodeId, "parents are created after children");
            nodes[i].depth = nodes[p as usize].depth + 1;
        } else {
            assert_eq!(i as NodeId, root, "only the root lacks a parent");
        }
    }
    CloseTree { mask, k, r, nodes, root, recipes, by_key }
}

/// Binary-lifting jump tables over a close tree: per node, the ancestor
/// `2^j` levels up together with the composed edge map along the way.
///
/// The composed maps are index functions between small type universes, so
/// few are distinct; they are interned into a pool and each table entry
/// stores only `(ancestor, map id)`. Compositions are memoized on pairs of
/// pool ids, keeping the build allocation-free per entry.
#[derive(Debug, Clone)]
pub struct PathProductIndex {
    /// Interned index maps (child-universe index → ancestor-universe index).
    maps: Vec<SmallVec<[u32; 8]>>,
    /// `levels[j][v]` = (ancestor `2^j` above `v`, pool id of the composed
    /// map), or `(ABSENT, 0)` when the root is nearer than that.
    levels: Vec<Vec<(NodeId, u32)>>,
}

const ABSENT: NodeId = NodeId::MAX;

#[derive(Default)]
struct MapPool {
    maps: Vec<SmallVec<[u32; 8]>>,
    ids: FxHashMap<SmallVec<[u32; 8]>, u32>,
    comp: FxHashMap<(u32, u32), u32>,
}

impl MapPool {
    fn intern(&mut self, f: SmallVec<[u32; 8]>) -> u32 {
        if let Some(&id) = self.ids.get(&f) {
            return id;
        }
        let id = self.maps.len() as u32;
        self.maps.push(f.clone());
        self.ids.insert(f, id);
        id
    }

    /// The pool id of `second ∘ first` (apply `first`, then `second`).
    fn compose(&mut self, first: u32, second: u32) -> u32 {
        if let Some(&id) = self.comp.get(&(first, second)) {
            return id;
        }
        let g = &self.maps[second as usize];
        let composed: SmallVec<[u32; 8]> =
            self.maps[first as usize].iter().map(|&i| g[i as usize]).collect();
        let id = self.intern(composed);
        self.comp.insert((first, second), id);
        id
    }
}

impl PathProductIndex {
    pub fn new(tree: &CloseTree) -> PathProductIndex {
        let n = tree.nodes.len();
        let max_depth = tree.nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        let mut pool = MapPool::default();
        let base: Vec<(NodeId, u32)> = tree
            .nodes
            .iter()
            .map(|node| match node.parent {
                Some(p) => {
                    let f = SmallVec::from_slice(node.edge.as_ref().unwrap());
                    (p, pool.intern(f))
                }
                None => (ABSENT, 0),
            })
            .collect();
        let mut levels = vec![base];
        let mut h = 1u32;
        while h < max_depth {
            let prev = levels.last().unwrap();
            let mut next = Vec::with_capacity(n);
            for v in 0..n {
                let (mid, first) = prev[v];
                if mid == ABSENT {
                    next.push((ABSENT, 0));
                    continue;
                }
                let (top, second) = prev[mid as usize];
                if top == ABSENT {
                    next.push((ABSENT, 0));
                    continue;
                }
                next.push((top, pool.compose(first, second)));
            }
            levels.push(next);
            h *= 2;
        }
        PathProductIndex { maps: pool.maps, levels }
    }
}

/// Maps `tau`, realized at node `from`, to the corresponding type at the
/// ancestor node `to`, composing the edge maps along the path in
/// logarithmically many jumps.
pub fn warp_query(
    tree: &CloseTree,
    idx: &PathProductIndex,
    from: NodeId,
    to: NodeId,
    tau: TypeId,
) -> Result<TypeId, EngineError> {
    let (df, dt) = (tree.nodes[from as usize].depth, tree.nodes[to as usize].depth);
    if dt > df {
        return Err(EngineError::Precondition(format!("node {to} is not an ancestor of node {from}")));
    }
    let mut i = tree.nodes[from as usize]
        .universe
        .index_of(tau)
        .ok_or_else(|| {
            EngineError::Precondition(format!("type {tau} is not realized at node {from}"))
        })? as u32;
    let mut v = from;
    let mut climb = df - dt;
    let mut j = 0;
    while climb > 0 {
        if climb & 1 == 1 {
            let (anc, map) = idx.levels[j][v as usize];
            assert!(anc != ABSENT, "jump stays inside the tree");
            i = idx.maps[map as usize][i as usize];
            v = anc;
        }
        climb >>= 1;
        j += 1;
    }
    if v != to {
        return Err(EngineError::Precondition(format!("node {to} is not an ancestor of node {from}")));
    }
    Ok(tree.nodes[v as usize].universe.realized[i as usize])
}
