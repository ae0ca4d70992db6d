//! Constant-delay (amortized) enumeration of the satisfying tuples of a
//! formula with free variables.
//!
//! Every tuple registers at exactly one close-tree node: the node holding
//! its parts at the first time all its entries sit within distance
//! `r = 2^k` of each other. The registration sets `R` at a node, grouped by
//! the tuples' local type there, have constant-size descriptions: a leaf
//! holds its one constant tuple; an inner node holds, per registering
//! part-tuple, products of realized sets of strictly smaller variable
//! subsets. The realized set `S` of a node and type — all tuples whose
//! parts at that time form the node's tuple and whose type is the given
//! one — is the disjoint union of registration sets over descendants,
//! reached by a depth-first cursor that only enters subtrees contributing
//! a preimage of the wanted type.
//!
//! The full enumeration concatenates, over every root type the formula
//! accepts, the root's realized-set enumerators. All cursors are cyclic:
//! after yielding every element exactly once they report an end-of-sequence
//! marker and restart.
//!
//! Delay is amortized constant per output (plus one end marker): the
//! depth-first walks touch each (node, type) pair a bounded number of times
//! per full cycle, and every entered subtree produces output. Worst-case
//! per-call delay is bounded by the tree depth, a deliberate simplification
//! measured by the step counters the tests check.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::closetree::NodeId;
use crate::err::LogicError;
use crate::graph::{Graph, Vertex};
use crate::logic::Formula;
use crate::query::{build_query_engine, QueryEngine};
use crate::seq::ContractionSequence;
use crate::types::{eval_on_type, ltp_time1_constant, to_global_type};

/// A cyclic, stateful cursor over a fixed finite set: `next` yields each
/// element exactly once, then `None` as the end-of-sequence marker, then
/// starts the cycle again.
pub trait Enumerator {
    type Item;
    fn next(&mut self) -> Option<Self::Item>;
}

/// Enumerator over an explicit list of items, in list order.
pub struct VecEnumerator<T: Clone> {
    items: Vec<T>,
    pos: usize,
}

pub fn enum_items<T: Clone>(items: Vec<T>) -> VecEnumerator<T> {
    VecEnumerator { items, pos: 0 }
}

impl<T: Clone> Enumerator for VecEnumerator<T> {
    type Item = T;

    fn next(&mut self) -> Option<T> {
        if self.pos == self.items.len() {
            self.pos = 0;
            return None;
        }
        self.pos += 1;
        Some(self.items[self.pos - 1].clone())
    }
}

/// Cartesian-product enumerator: one full cycle yields every pair exactly
/// once. Both factors must be nonempty; an empty factor is a contract
/// violation and panics.
pub struct ProductEnum<A: Enumerator, B: Enumerator>
where
    A::Item: Clone,
{
    a: A,
    b: B,
    cur: Option<A::Item>,
    any_b: bool,
    fresh: bool,
}

pub fn enum_product<A, B>(a: A, b: B) -> ProductEnum<A, B>
where
    A: Enumerator,
    B: Enumerator,
    A::Item: Clone,
{
    ProductEnum { a, b, cur: None, any_b: false, fresh: true }
}

impl<A, B> Enumerator for ProductEnum<A, B>
where
    A: Enumerator,
    B: Enumerator,
    A::Item: Clone,
{
    type Item = (A::Item, B::Item);

    fn next(&mut self) -> Option<(A::Item, B::Item)> {
        loop {
            if self.cur.is_none() {
                match self.a.next() {
                    Some(x) => {
                        self.cur = Some(x);
                        self.any_b = false;
                        self.fresh = false;
                    }
                    None => {
                        assert!(!self.fresh, "enum_product needs a nonempty left factor");
                        self.fresh = true;
                        return None;
                    }
                }
            }
            match self.b.next() {
                Some(y) => {
                    self.any_b = true;
                    return Some((self.cur.as_ref().expect("factor item held").clone(), y));
                }
                None => {
                    assert!(self.any_b, "enum_product needs a nonempty right factor");
                    self.cur = None;
                }
            }
        }
    }
}

/// Disjoint-union enumerator: cycles through the left set, then the right.
/// Disjointness is the caller's contract; empty sides are fine.
pub struct UnionEnum<A: Enumerator, B: Enumerator<Item = A::Item>> {
    a: A,
    b: B,
    right: bool,
}

pub fn enum_union<A, B>(a: A, b: B) -> UnionEnum<A, B>
where
    A: Enumerator,
    B: Enumerator<Item = A::Item>,
{
    UnionEnum { a, b, right: false }
}

impl<A, B> Enumerator for UnionEnum<A, B>
where
    A: Enumerator,
    B: Enumerator<Item = A::Item>,
{
    type Item = A::Item;

    fn next(&mut self) -> Option<A::Item> {
        if !self.right {
            if let Some(x) = self.a.next() {
                return Some(x);
            }
            self.right = true;
        }
        match self.b.next() {
            Some(x) => Some(x),
            None => {
                self.right = false;
                None
            }
        }
    }
}

/// Union of a family of pairwise disjoint, nonempty sets, driven by an
/// enumerator that produces the member enumerators. An empty family ends
/// immediately; an empty member violates the contract and panics.
pub struct FamilyUnion<F: Enumerator>
where
    F::Item: Enumerator,
{
    family: F,
    current: Option<F::Item>,
}

pub fn enum_family_union<F>(family: F) -> FamilyUnion<F>
where
    F: Enumerator,
    F::Item: Enumerator,
{
    FamilyUnion { family, current: None }
}

impl<F> Enumerator for FamilyUnion<F>
where
    F: Enumerator,
    F::Item: Enumerator,
{
    type Item = <F::Item as Enumerator>::Item;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(cur) = &mut self.current {
                match cur.next() {
                    Some(x) => return Some(x),
                    None => self.current = None,
                }
            } else {
                match self.family.next() {
                    None => return None,
                    Some(mut member) => match member.next() {
                        None => panic!("family union over an empty member violates the contract"),
                        Some(x) => {
                            self.current = Some(member);
                            return Some(x);
                        }
                    },
                }
            }
        }
    }
}

/// Growable bitset keyed by a node's dense universe index.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(len: usize) -> Bits {
        Bits(vec![0; len.div_ceil(64)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
}

/// One way to produce registering tuples at an inner node: a registering
/// part-tuple (`recipe`) together with one type choice per component.
struct Plan {
    recipe: usize,
    /// Universe index of each component's type at its sub-tree node.
    sigma: Vec<usize>,
}

/// Per close-tree node: which tuples register there, grouped by their type
/// at that node (as a dense universe index).
pub struct RegisterIndex {
    /// Inner nodes: type index -> the plans producing it.
    plans: Vec<HashMap<usize, Vec<Plan>>>,
    /// Leaves: the universe index of the constant tuple's type.
    leaf_type: Vec<Option<usize>>,
    /// Per node: type indices whose registration set is nonempty.
    y: Vec<Bits>,
}

/// Builds the registration structure for one close tree. Tuples register
/// where they first become close: constants at their leaf, everything else
/// at the node created when its last two groups meet, where the recorded
/// recipes list the registering part-tuples and their type tables.
pub fn build_register_index(engine: &QueryEngine, mask: u32) -> RegisterIndex {
    let tree = &engine.trees[&mask].0;
    let count = tree.nodes.len();
    let mut plans: Vec<HashMap<usize, Vec<Plan>>> = (0..count).map(|_| HashMap::new()).collect();
    let mut leaf_type = vec![None; count];
    let mut y: Vec<Bits> = tree.nodes.iter().map(|n| Bits::new(n.universe.realized.len())).collect();

    for (id, node) in tree.nodes.iter().enumerate() {
        if node.time == 1 {
            let tuple: Vec<Vertex> = node.tuple.iter().map(|&p| p as Vertex).collect();
            let tau = ltp_time1_constant(&engine.arena, &engine.g, &tuple, engine.k);
            let idx = node.universe.index_of(tau).expect("a leaf realizes its constant's type");
            leaf_type[id] = Some(idx);
            y[id].set(idx);
            continue;
        }
        for (ri, recipe) in tree.recipes[id].iter().enumerate() {
            for (combo, &tau) in &recipe.table {
                // Every table entry is realized: each component type comes
                // from a realized universe, so the product is nonempty.
                let sigma: Vec<usize> = combo
                    .iter()
                    .zip(&recipe.components)
                    .map(|(&sig, &(sub_mask, sub_node))| {
                        engine.trees[&sub_mask].0.nodes[sub_node as usize]
                            .universe
                            .index_of(sig)
                            .expect("component types come from sub-tree universes")
                    })
                    .collect();
                let idx = node
                    .universe
                    .index_of(tau)
                    .expect("a realized combination promotes to a realized type");
                plans[id].entry(idx).or_default().push(Plan { recipe: ri, sigma });
                y[id].set(idx);
            }
        }
    }
    RegisterIndex { plans, leaf_type, y }
}

/// Per close-tree node: children lists and, per type, whether some
/// descendant's registration set pulls forward to it.
pub struct DescendantIndex {
    flag: Vec<Bits>,
    kids: Vec<Vec<NodeId>>,
}

/// Bottom-up nonempty flags: a type is flagged at a node if registration
/// is nonempty there, or some child has a flagged preimage under its edge
/// map. Because universes store only realized types and every realized
/// type has a registrant below, the flags must come out identically true;
/// this is asserted, making the pass a completeness check of the recipes.
pub fn build_descendant_index(
    engine: &QueryEngine,
    mask: u32,
    register: &RegisterIndex,
) -> DescendantIndex {
    let tree = &engine.trees[&mask].0;
    let count = tree.nodes.len();
    let mut kids: Vec<Vec<NodeId>> = vec![Vec::new(); count];
    for (id, node) in tree.nodes.iter().enumerate() {
        if let Some(p) = node.parent {
            kids[p as usize].push(id as NodeId);
        }
    }
    let mut flag: Vec<Bits> = register.y.clone();
    // Children always carry smaller ids, so one ascending pass finishes
    // each node before pushing its flags through the edge map.
    for id in 0..count {
        let node = &tree.nodes[id];
        if let (Some(p), Some(edge)) = (node.parent, node.edge.as_ref()) {
            for i in 0..node.universe.realized.len() {
                if flag[id].get(i) {
                    let up = edge[i] as usize;
                    flag[p as usize].set(up);
                }
            }
        }
        for i in 0..node.universe.realized.len() {
            assert!(
                flag[id].get(i),
                "type index {i} at node {id} has no registrant below; a recipe is missing"
            );
        }
    }
    DescendantIndex { flag, kids }
}

/// Registration and descendant structure for every variable-subset tree,
/// plus the accepted root types; the immutable base enumerators read.
pub struct QueryEnumeration {
    engine: QueryEngine,
    masks: HashMap<u32, (RegisterIndex, DescendantIndex)>,
    /// Root-universe indices of the types the formula accepts.
    gamma: Vec<usize>,
}

/// Preprocesses the formula for enumeration. The formula needs at least
/// one free variable; sentences are a model-checking question.
pub fn enumerate_query(
    g: &Graph,
    cs: &ContractionSequence,
    phi: &Formula,
) -> Result<QueryEnumeration, LogicError> {
    let engine = build_query_engine(g, cs, phi)?;
    let t0 = std::time::Instant::now();
    let mut masks = HashMap::new();
    for &z in engine.trees.keys() {
        let register = build_register_index(&engine, z);
        let descend = build_descendant_index(&engine, z, &register);
        masks.insert(z, (register, descend));
    }
    eprintln!("phase register+descend {:?}", t0.elapsed());
    let full = (1u32 << engine.vars.len()) - 1;
    let root = engine.trees[&full].0.root;
    let universe = &engine.trees[&full].0.nodes[root as usize].universe;
    let mut gamma = Vec::new();
    let mut memo = HashMap::new();
    for (i, &tau) in universe.realized.iter().enumerate() {
        let gid = to_global_type(&engine.arena, &engine.global, &mut memo, tau)
            .expect("final-time types have all parts equal");
        if eval_on_type(&engine.global, gid, phi)? {
            gamma.push(i);
        }
    }
    Ok(QueryEnumeration { engine, masks, gamma })
}

type Steps = Arc<AtomicU64>;

impl QueryEnumeration {
    pub fn engine(&self) -> &QueryEngine {
        &self.engine
    }

    /// A fresh enumerator handle over the formula's satisfying tuples.
    /// Handles are single-consumer; distinct handles may run concurrently.
    pub fn enumerator(&self) -> TupleEnumerator<'_> {
        TupleEnumerator {
            ix: self,
            counter: Arc::new(AtomicU64::new(0)),
            pos: 0,
            current: None,
        }
    }

    /// Enumerator over the realized set of one node and type: all tuples
    /// whose parts at the node's time form its part-tuple and whose type
    /// there has the given universe index. Yields reindexed vertex ids.
    pub fn s_enumerator(
        &self,
        mask: u32,
        node: NodeId,
        tau: usize,
    ) -> impl Enumerator<Item = Vec<Vertex>> + '_ {
        self.s_cursor(mask, node, tau, Arc::new(AtomicU64::new(0)))
    }

    /// Enumerator over the registration set of one node and type; empty
    /// unless the type index is flagged. Yields reindexed vertex ids.
    pub fn r_enumerator(
        &self,
        mask: u32,
        node: NodeId,
        tau: usize,
    ) -> impl Enumerator<Item = Vec<Vertex>> + '_ {
        RCursor::new(self, mask, node, tau, Arc::new(AtomicU64::new(0)))
    }

    fn s_cursor(&self, mask: u32, node: NodeId, tau: usize, counter: Steps) -> SCursor<'_> {
        enum_family_union(DescCursor {
            ix: self,
            mask,
            counter,
            start: (node, tau),
            stack: Vec::new(),
            begun: false,
        })
    }
}

type SCursor<'a> = FamilyUnion<DescCursor<'a>>;

/// Depth-first walk over the (descendant node, pulled-back type) pairs of
/// a start pair, emitting an registration enumerator for each pair whose
/// registration set is nonempty. A child is entered only for preimages of
/// the current type under its edge map, so every entered subtree
/// contributes output.
struct DescCursor<'a> {
    ix: &'a QueryEnumeration,
    mask: u32,
    counter: Steps,
    start: (NodeId, usize),
    stack: Vec<Frame>,
    begun: bool,
}

struct Frame {
    node: NodeId,
    tau: usize,
    kid: usize,
    cand: usize,
}

impl<'a> Enumerator for DescCursor<'a> {
    type Item = RCursor<'a>;

    fn next(&mut self) -> Option<RCursor<'a>> {
        let (register, descend) = &self.ix.masks[&self.mask];
        let tree = &self.ix.engine.trees[&self.mask].0;
        if !self.begun {
            self.begun = true;
            self.counter.fetch_add(1, Ordering::Relaxed);
            self.stack.push(Frame { node: self.start.0, tau: self.start.1, kid: 0, cand: 0 });
            if register.y[self.start.0 as usize].get(self.start.1) {
                return Some(RCursor::new(
                    self.ix,
                    self.mask,
                    self.start.0,
                    self.start.1,
                    self.counter.clone(),
                ));
            }
        }
        loop {
            let Some(top) = self.stack.last() else {
                self.begun = false;
                return None;
            };
            let (node, tau) = (top.node, top.tau);
            let kids = &descend.kids[node as usize];
            let mut pushed = None;
            {
                let top = self.stack.last_mut().expect("frame present");
                'scan: while top.kid < kids.len() {
                    let c = kids[top.kid];
                    let child = &tree.nodes[c as usize];
                    let edge = child.edge.as_ref().expect("non-root nodes carry edge maps");
                    while top.cand < child.universe.realized.len() {
                        let sp = top.cand;
                        top.cand += 1;
                        if edge[sp] as usize == tau && descend.flag[c as usize].get(sp) {
                            pushed = Some((c, sp));
                            break 'scan;
                        }
                    }
                    top.kid += 1;
                    top.cand = 0;
                }
            }
            match pushed {
                Some((c, sp)) => {
                    self.counter.fetch_add(1, Ordering::Relaxed);
                    self.stack.push(Frame { node: c, tau: sp, kid: 0, cand: 0 });
                    if register.y[c as usize].get(sp) {
                        return Some(RCursor::new(self.ix, self.mask, c, sp, self.counter.clone()));
                    }
                }
                None => {
                    self.stack.pop();
                }
            }
        }
    }
}

/// Enumerator over one registration set: a leaf yields its constant tuple;
/// an inner node runs an odometer over the component realized-set
/// enumerators of each plan, reordering entries into position order.
struct RCursor<'a> {
    ix: &'a QueryEnumeration,
    mask: u32,
    node: NodeId,
    tau: usize,
    counter: Steps,
    plan: usize,
    factors: Vec<SCursor<'a>>,
    items: Vec<Vec<Vertex>>,
}

impl<'a> RCursor<'a> {
    fn new(ix: &'a QueryEnumeration, mask: u32, node: NodeId, tau: usize, counter: Steps) -> RCursor<'a> {
        RCursor { ix, mask, node, tau, counter, plan: 0, factors: Vec::new(), items: Vec::new() }
    }

    fn emit(&self, perm: &[u8]) -> Vec<Vertex> {
        let flat: Vec<Vertex> = self.items.iter().flatten().copied().collect();
        perm.iter().map(|&i| flat[i as usize]).collect()
    }
}

impl Enumerator for RCursor<'_> {
    type Item = Vec<Vertex>;

    fn next(&mut self) -> Option<Vec<Vertex>> {
        self.counter.fetch_add(1, Ordering::Relaxed);
        let (register, _) = &self.ix.masks[&self.mask];
        let tree = &self.ix.engine.trees[&self.mask].0;
        let node = &tree.nodes[self.node as usize];

        if let Some(idx) = register.leaf_type[self.node as usize] {
            // Leaf: the one constant tuple, if the type matches.
            if idx != self.tau || self.plan == 1 {
                self.plan = 0;
                return None;
            }
            self.plan = 1;
            return Some(node.tuple.iter().map(|&p| p as Vertex).collect());
        }

        let plans = match register.plans[self.node as usize].get(&self.tau) {
            Some(plans) => plans,
            None => return None,
        };
        loop {
            if self.plan == plans.len() {
                self.plan = 0;
                return None;
            }
            let plan = &plans[self.plan];
            let recipe = &tree.recipes[self.node as usize][plan.recipe];
            if self.factors.is_empty() {
                for (j, &(sub_mask, sub_node)) in recipe.components.iter().enumerate() {
                    let mut factor =
                        self.ix.s_cursor(sub_mask, sub_node, plan.sigma[j], self.counter.clone());
                    let item = factor.next().expect("realized sets are nonempty");
                    self.factors.push(factor);
                    self.items.push(item);
                }
                return Some(self.emit(&recipe.perm));
            }
            // Odometer step: advance the last factor, carrying cycle ends
            // leftward; each ended factor restarts at its first element.
            let mut j = self.factors.len();
            loop {
                if j == 0 {
                    self.plan += 1;
                    self.factors.clear();
                    self.items.clear();
                    break;
                }
                j -= 1;
                match self.factors[j].next() {
                    Some(item) => {
                        self.items[j] = item;
                        return Some(self.emit(&recipe.perm));
                    }
                    None => {
                        self.items[j] =
                            self.factors[j].next().expect("realized sets are nonempty");
                    }
                }
            }
        }
    }
}

/// Enumerator over the satisfying tuples of the preprocessed formula, in
/// original vertex ids, positions following the sorted free variables.
pub struct TupleEnumerator<'a> {
    ix: &'a QueryEnumeration,
    counter: Steps,
    pos: usize,
    current: Option<SCursor<'a>>,
}

impl TupleEnumerator<'_> {
    /// Internal cursor invocations so far; the delay measure.
    pub fn steps(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }
}

impl Enumerator for TupleEnumerator<'_> {
    type Item = Vec<Vertex>;

    fn next(&mut self) -> Option<Vec<Vertex>> {
        self.counter.fetch_add(1, Ordering::Relaxed);
        let full = (1u32 << self.ix.engine.vars.len()) - 1;
        let root = self.ix.engine.trees[&full].0.root;
        loop {
            if self.current.is_none() {
                if self.pos == self.ix.gamma.len() {
                    self.pos = 0;
                    return None;
                }
                let tau = self.ix.gamma[self.pos];
                self.pos += 1;
                self.current = Some(self.ix.s_cursor(full, root, tau, self.counter.clone()));
            }
            match self.current.as_mut().expect("cursor present").next() {
                Some(t) => {
                    return Some(
                        t.iter().map(|&v| self.ix.engine.new_to_old[v as usize]).collect(),
                    )
                }
                None => self.current = None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::naive_satisfying_set;
    use crate::seq::{from_merges, tests::p4, Part};
    use std::collections::BTreeSet;

    #[test]
    fn product_and_union_examples() {
        let mut p = enum_product(enum_items(vec!['a', 'b']), enum_items(vec!['c']));
        assert_eq!(p.next(), Some(('a', 'c')));
        assert_eq!(p.next(), Some(('b', 'c')));
        assert_eq!(p.next(), None);
        // Two full cycles yield every pair exactly twice.
        let mut p = enum_product(enum_items(vec![1, 2]), enum_items(vec![3, 4]));
        let mut seen = Vec::new();
        for _ in 0..2 {
            loop {
                match p.next() {
                    Some(x) => seen.push(x),
                    None => break,
                }
            }
        }
        for pair in [(1, 3), (1, 4), (2, 3), (2, 4)] {
            assert_eq!(seen.iter().filter(|&&x| x == pair).count(), 2, "{pair:?}");
        }

        let mut u = enum_union(enum_items(vec!['a']), enum_items(vec!['b']));
        assert_eq!(u.next(), Some('a'));
        assert_eq!(u.next(), Some('b'));
        assert_eq!(u.next(), None);
        assert_eq!(u.next(), Some('a'));
    }

    #[test]
    #[should_panic(expected = "nonempty right factor")]
    fn product_rejects_empty_factor() {
        let mut p = enum_product(enum_items(vec![1]), enum_items(Vec::<i32>::new()));
        p.next();
    }

    #[test]
    fn family_union_examples() {
        let family = enum_items(vec![vec![1, 2], vec![3]]);
        struct Lift<F: Enumerator<Item = Vec<i32>>>(F);
        impl<F: Enumerator<Item = Vec<i32>>> Enumerator for Lift<F> {
            type Item = VecEnumerator<i32>;
            fn next(&mut self) -> Option<VecEnumerator<i32>> {
                self.0.next().map(enum_items)
            }
        }
        let mut fu = enum_family_union(Lift(family));
        assert_eq!(fu.next(), Some(1));
        assert_eq!(fu.next(), Some(2));
        assert_eq!(fu.next(), Some(3));
        assert_eq!(fu.next(), None);
        assert_eq!(fu.next(), Some(1));

        // Singleton family is a passthrough; empty family ends at once.
        let mut single = enum_family_union(Lift(enum_items(vec![vec![7, 8]])));
        assert_eq!(single.next(), Some(7));
        assert_eq!(single.next(), Some(8));
        assert_eq!(single.next(), None);
        let mut empty = enum_family_union(Lift(enum_items(Vec::new())));
        assert_eq!(empty.next(), None);
    }

    #[test]
    #[should_panic(expected = "empty member")]
    fn family_union_rejects_empty_member() {
        struct Lift<F: Enumerator<Item = Vec<i32>>>(F);
        impl<F: Enumerator<Item = Vec<i32>>> Enumerator for Lift<F> {
            type Item = VecEnumerator<i32>;
            fn next(&mut self) -> Option<VecEnumerator<i32>> {
                self.0.next().map(enum_items)
            }
        }
        let mut fu = enum_family_union(Lift(enum_items(vec![vec![1], vec![]])));
        fu.next();
        fu.next();
    }

    fn full_cycle(e: &mut impl Enumerator<Item = Vec<Vertex>>) -> Vec<Vec<Vertex>> {
        let mut out = Vec::new();
        while let Some(t) = e.next() {
            out.push(t);
            assert!(out.len() < 1_000_000, "cycle does not terminate");
        }
        out
    }

    fn check_matches_naive(g: &Graph, cs: &ContractionSequence, text: &str) {
        let phi = Formula::parse(text).unwrap();
        let ix = enumerate_query(g, cs, &phi).unwrap();
        let mut e = ix.enumerator();
        let got = full_cycle(&mut e);
        let set: BTreeSet<Vec<Vertex>> = got.iter().cloned().collect();
        assert_eq!(set.len(), got.len(), "duplicate outputs for {text}");
        let want = naive_satisfying_set(g, &phi).unwrap();
        assert_eq!(set, want.tuples, "phi = {text}");
        // The cycle restarts and yields the same set again.
        let again: BTreeSet<Vec<Vertex>> = full_cycle(&mut e).into_iter().collect();
        assert_eq!(again, set, "second cycle differs for {text}");
    }

    #[test]
    fn p4_edge_enumeration_matches_naive() {
        let (g, cs) = p4();
        check_matches_naive(&g, &cs, "E x y");
        check_matches_naive(&g, &cs, "x = y");
    }

    #[test]
    fn edgeless_graph_enumerates_nothing() {
        let g = Graph::from_edges(3, &[]).unwrap();
        let cs = from_merges(&g, &[(1, 2), (4, 3)]);
        let phi = Formula::parse("E x y").unwrap();
        let ix = enumerate_query(&g, &cs, &phi).unwrap();
        let mut e = ix.enumerator();
        assert_eq!(e.next(), None);
        assert_eq!(e.next(), None);
    }

    #[test]
    fn pool_formulas_match_naive() {
        let (g, cs) = p4();
        for text in [
            "exists z (E x z and E z y)",
            "not E x y",
            "E x y or x = y",
            "exists z (E x z and exists w (E z w and E w y))",
            "forall z (E x z or not E z y)",
            "exists w (E x w and E w y and not w = z)",
            "exists y (E x y)",
            "forall y (not E x y or exists z (E y z and not z = x))",
        ] {
            check_matches_naive(&g, &cs, text);
        }
    }

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
        (g.clone(), from_merges(&g, &merges))
    }

    #[test]
    fn ten_vertex_enumeration_matches_naive() {
        let (g, cs) = ten_vertex_fixture();
        check_matches_naive(&g, &cs, "E x y");
        check_matches_naive(&g, &cs, "exists z (E x z and E z y)");
    }

    /// Every tuple registers exactly once: the registration sets over all
    /// nodes and types of the full tree partition the tuple space.
    fn check_registration_partition(g: &Graph, cs: &ContractionSequence, text: &str) {
        let phi = Formula::parse(text).unwrap();
        let ix = enumerate_query(g, cs, &phi).unwrap();
        let m = ix.engine.vars.len();
        let full = (1u32 << m) - 1;
        let tree = &ix.engine.trees[&full].0;
        let mut seen: Vec<Vec<Vertex>> = Vec::new();
        for id in 0..tree.nodes.len() {
            for tau in 0..tree.nodes[id].universe.realized.len() {
                if !ix.masks[&full].0.y[id].get(tau) {
                    continue;
                }
                let mut r = ix.r_enumerator(full, id as NodeId, tau);
                seen.extend(full_cycle(&mut r));
            }
        }
        let n = g.n() as usize;
        assert_eq!(seen.len(), n.pow(m as u32), "registration total for {text}");
        let set: BTreeSet<Vec<Vertex>> = seen.into_iter().collect();
        assert_eq!(set.len(), n.pow(m as u32), "registration duplicates for {text}");
    }

    #[test]
    fn registration_partitions_all_tuples() {
        let (g, cs) = p4();
        check_registration_partition(&g, &cs, "E x y");
        check_registration_partition(&g, &cs, "exists z (E x z and E z y)");
        let (g, cs) = ten_vertex_fixture();
        check_registration_partition(&g, &cs, "E x y");
    }

    /// The earliest-close pair (1, 4) on the path registers at the node
    /// whose parts are {1,2} and {3,4} at the time those parts first sit
    /// within distance 1.
    #[test]
    fn pinned_registration_node_on_p4() {
        let (g, cs) = p4();
        let phi = Formula::parse("E x y").unwrap();
        let ix = enumerate_query(&g, &cs, &phi).unwrap();
        let e = &ix.engine;
        let w: Vec<Vertex> = [1, 4].iter().map(|&v| e.old_to_new[v as usize]).collect();
        let parts: Vec<Part> =
            w.iter().map(|&v| e.table.part_of(v, 3)).collect();
        let tree = &e.trees[&3].0;
        let node = tree.node_at(&parts, 3).expect("registration node exists");
        let members: BTreeSet<Vec<Vertex>> = {
            let node_ref = &tree.nodes[node as usize];
            let mut all = BTreeSet::new();
            for tau in 0..node_ref.universe.realized.len() {
                if ix.masks[&3].0.y[node as usize].get(tau) {
                    let mut r = ix.r_enumerator(3, node, tau);
                    all.extend(full_cycle(&mut r));
                }
            }
            all
        };
        assert!(members.contains(&w), "tuple (1,4) registers at its first-close node");
        // Check the node is the expected one: both parts have two members.
        for &p in &parts {
            assert_eq!(e.table.members(p).len(), 2);
        }
    }

    /// Realized sets at the root partition the vertex tuples; at a leaf
    /// the realized set equals the registration set.
    #[test]
    fn realized_sets_partition_at_root() {
        let (g, cs) = p4();
        let phi = Formula::parse("exists y (E x y)").unwrap(); // one free var, rank 1
        let ix = enumerate_query(&g, &cs, &phi).unwrap();
        let tree = &ix.engine.trees[&1].0;
        let root = tree.root;
        let mut all: Vec<Vec<Vertex>> = Vec::new();
        for tau in 0..tree.nodes[root as usize].universe.realized.len() {
            let mut s = ix.s_enumerator(1, root, tau);
            all.extend(full_cycle(&mut s));
        }
        assert_eq!(all.len(), g.n() as usize);
        let set: BTreeSet<Vec<Vertex>> = all.into_iter().collect();
        assert_eq!(set.len(), g.n() as usize);

        // Leaf: the sole descendant is itself, so S = R there.
        let leaf = (0..tree.nodes.len() as NodeId)
            .find(|&v| tree.nodes[v as usize].time == 1)
            .expect("leaves exist");
        let tau = ix.masks[&1].0.leaf_type[leaf as usize].expect("leaf registers its constant");
        let s: Vec<_> = full_cycle(&mut ix.s_enumerator(1, leaf, tau));
        let r: Vec<_> = full_cycle(&mut ix.r_enumerator(1, leaf, tau));
        assert_eq!(s, r);
    }

    /// The cursor's descendant set matches a brute-force filter: all
    /// descendants with a composed edge-map preimage whose registration
    /// set is nonempty.
    #[test]
    fn descendant_cursor_matches_bruteforce() {
        let (g, cs) = p4();
        let phi = Formula::parse("exists z (E x z and E z y)").unwrap();
        let ix = enumerate_query(&g, &cs, &phi).unwrap();
        for (&mask, (register, _)) in &ix.masks {
            let tree = &ix.engine.trees[&mask].0;
            for u in 0..tree.nodes.len() as NodeId {
                for tau in 0..tree.nodes[u as usize].universe.realized.len() {
                    // Brute force over all nodes: walk parents composing
                    // edge maps, keep pairs registering a preimage of tau.
                    let mut want = BTreeSet::new();
                    for v in 0..tree.nodes.len() as NodeId {
                        for sig in 0..tree.nodes[v as usize].universe.realized.len() {
                            let (mut cur, mut idx) = (v, sig);
                            loop {
                                if cur == u {
                                    if idx == tau && register.y[v as usize].get(sig) {
                                        want.insert((v, sig));
                                    }
                                    break;
                                }
                                let node = &tree.nodes[cur as usize];
                                match (node.parent, node.edge.as_ref()) {
                                    (Some(p), Some(edge)) => {
                                        idx = edge[idx] as usize;
                                        cur = p;
                                    }
                                    _ => break,
                                }
                            }
                        }
                    }
                    let mut cursor = DescCursor {
                        ix: &ix,
                        mask,
                        counter: Arc::new(AtomicU64::new(0)),
                        start: (u, tau),
                        stack: Vec::new(),
                        begun: false,
                    };
                    let mut got = BTreeSet::new();
                    while let Some(r) = cursor.next() {
                        assert!(got.insert((r.node, r.tau)), "duplicate descendant");
                    }
                    assert_eq!(got, want, "mask {mask} node {u} tau {tau}");
                }
            }
        }
    }

    /// Total steps over a full cycle stay proportional to the output
    /// count; the slope comparison across sizes lives in the acceptance
    /// suite, this guards against super-linear blowups.
    #[test]
    fn step_count_tracks_output_count() {
        for n in [32u32, 64] {
            let edges: Vec<(u32, u32)> = (1..n).map(|v| (v, v + 1)).collect();
            let g = Graph::from_edges(n, &edges).unwrap();
            let mut merges = vec![(1 as Part, 2 as Part)];
            for v in 3..=n {
                merges.push((n + v - 2, v as Part));
            }
            let cs = from_merges(&g, &merges);
            let phi = Formula::parse("E x y").unwrap();
            let ix = enumerate_query(&g, &cs, &phi).unwrap();
            let mut e = ix.enumerator();
            let got = full_cycle(&mut e);
            assert_eq!(got.len(), 2 * (n as usize - 1));
            let ratio = e.steps() as f64 / (got.len() as f64 + 1.0);
            assert!(ratio < 60.0, "n = {n}: ratio {ratio}");
        }
    }

    #[test]
    fn concurrent_handles_share_the_index() {
        let (g, cs) = p4();
        let phi = Formula::parse("E x y").unwrap();
        let ix = enumerate_query(&g, &cs, &phi).unwrap();
        let want: BTreeSet<Vec<Vertex>> = full_cycle(&mut ix.enumerator()).into_iter().collect();
        std::thread::scope(|scope| {
            for _ in 0..4 {
                scope.spawn(|| {
                    let got: BTreeSet<Vec<Vertex>> =
                        full_cycle(&mut ix.enumerator()).into_iter().collect();
                    assert_eq!(got, want);
                });
            }
        });
    }

    #[test]
    fn sentences_are_rejected() {
        let (g, cs) = p4();
        let phi = Formula::parse("exists x exists y (E x y)").unwrap();
        assert!(matches!(enumerate_query(&g, &cs, &phi), Err(LogicError::Unsupported(_))));
    }
}
