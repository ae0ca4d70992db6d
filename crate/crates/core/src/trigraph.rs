//! Quotient trigraphs, the impurity-graph replay cursor, and vicinities.
//!
//! A trigraph records, for every pair of parts, whether the pair is
//! complete, anti-complete, or impure in the underlying graph. The impurity
//! graph has the parts as vertices and the impure pairs as edges; distances
//! below always mean BFS distances there, with absent connections treated as
//! infinite (`None`).

use std::collections::HashMap;

use rustc_hash::{FxBuildHasher, FxHashMap};
use smallvec::SmallVec;

use crate::graph::{Graph, Vertex};
use crate::seq::{ContractionSequence, Part, PartTable, Rel};

/// Distance map returned by the capped BFS balls; keys are parts, values
/// their impurity-graph distance from the source set.
pub type DistMap = HashMap<Part, u32, FxBuildHasher>;

/// A symmetric relation table over an explicit part list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trigraph {
    parts: Vec<Part>,
    index: HashMap<Part, usize>,
    rel: Vec<Rel>, // row-major |parts| x |parts|; the diagonal is unused
}

impl Trigraph {
    pub fn new(parts: Vec<Part>, rel_of: impl Fn(Part, Part) -> Rel) -> Trigraph {
        let k = parts.len();
        let index = parts.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let mut rel = vec![Rel::Anti; k * k];
        for i in 0..k {
            for j in (i + 1)..k {
                let r = rel_of(parts[i], parts[j]);
                rel[i * k + j] = r;
                rel[j * k + i] = r;
            }
        }
        Trigraph { parts, index, rel }
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn contains(&self, p: Part) -> bool {
        self.index.contains_key(&p)
    }

    pub fn rel(&self, p: Part, q: Part) -> Rel {
        let (i, j) = (self.index[&p], self.index[&q]);
        self.rel[i * self.parts.len() + j]
    }

    /// Parts impure to `p` inside this trigraph.
    pub fn imp_neighbors(&self, p: Part) -> Vec<Part> {
        let i = self.index[&p];
        let k = self.parts.len();
        (0..k)
            .filter(|&j| j != i && self.rel[i * k + j] == Rel::Impure)
            .map(|j| self.parts[j])
            .collect()
    }

    /// BFS distances (capped) from a set of parts, inside this trigraph's
    /// impurity graph. Sources must belong to the trigraph.
    pub fn ball(&self, from: &[Part], cap: u32) -> DistMap {
        bfs(from, cap, |p| self.imp_neighbors(p).into())
    }

    /// The induced sub-trigraph on a subset of the parts.
    pub fn induced(&self, sub: &[Part]) -> Trigraph {
        Trigraph::new(sub.to_vec(), |p, q| self.rel(p, q))
    }
}

/// Capped multi-source BFS over an adjacency callback.
pub(crate) fn bfs(from: &[Part], cap: u32, adj: impl Fn(Part) -> SmallVec<[Part; 8]>) -> DistMap {
    let mut dist: DistMap = from.iter().map(|&p| (p, 0)).collect();
    let mut frontier: Vec<Part> = dist.keys().copied().collect();
    let mut d = 0;
    while d < cap && !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for p in frontier {
            for q in adj(p) {
                dist.entry(q).or_insert_with(|| {
                    next.push(q);
                    d
                });
            }
        }
        frontier = next;
    }
    dist
}

/// The quotient trigraph of `g` by an explicit partition, computed from
/// scratch by counting cross edges. Desk-scale; used as the oracle against
/// which increments are tested.
pub fn quotient_trigraph(g: &Graph, partition: &[Vec<Vertex>], ids: &[Part]) -> Trigraph {
    assert_eq!(partition.len(), ids.len());
    let mut of: HashMap<Vertex, usize> = HashMap::new();
    for (i, block) in partition.iter().enumerate() {
        for &v in block {
            of.insert(v, i);
        }
    }
    let k = partition.len();
    let mut cross = vec![0u64; k * k];
    for u in g.vertices() {
        for &v in g.neighbors(u) {
            if u < v {
                let (i, j) = (of[&u], of[&v]);
                if i != j {
                    cross[i * k + j] += 1;
                    cross[j * k + i] += 1;
                }
            }
        }
    }
    Trigraph::new(ids.to_vec(), |p, q| {
        let (i, j) = (ids.iter().position(|&x| x == p).unwrap(), ids.iter().position(|&x| x == q).unwrap());
        let full = partition[i].len() as u64 * partition[j].len() as u64;
        match cross[i * k + j] {
            0 => Rel::Anti,
            c if c == full => Rel::Complete,
            _ => Rel::Impure,
        }
    })
}

/// The quotient trigraph of `g` by the partition at time `t` of a sequence.
pub fn quotient_at(g: &Graph, table: &PartTable, t: u32) -> Trigraph {
    let parts = table.parts_at(t);
    let partition: Vec<Vec<Vertex>> = parts.iter().map(|&p| table.members(p)).collect();
    quotient_trigraph(g, &partition, &parts)
}

/// A forward-only replay cursor over a validated sequence. Maintains the
/// impure adjacency among alive parts at the current time and answers
/// relation and capped-distance queries; pure polarities are resolved by
/// sampling the representatives' edge (sound because the sequence has been
/// validated). The next step can be inspected without committing via the
/// `next_*` methods.
pub struct ImpurityState<'a> {
    g: &'a Graph,
    cs: &'a ContractionSequence,
    table: &'a PartTable,
    time: u32,
    imp: FxHashMap<Part, SmallVec<[Part; 8]>>,
}

impl<'a> ImpurityState<'a> {
    pub fn new(g: &'a Graph, cs: &'a ContractionSequence, table: &'a PartTable) -> ImpurityState<'a> {
        ImpurityState { g, cs, table, time: 1, imp: FxHashMap::default() }
    }

    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn table(&self) -> &PartTable {
        self.table
    }

    pub fn graph(&self) -> &Graph {
        self.g
    }

    /// The step that `advance` would apply, if any.
    pub fn next_step(&self) -> Option<&'a crate::seq::Step> {
        if self.time < self.cs.n() {
            Some(self.cs.step_into(self.time + 1))
        } else {
            None
        }
    }

    /// Applies the next merge, moving from time `t` to `t + 1`.
    pub fn advance(&mut self) {
        let step = self.next_step().expect("already at the final partition");
        for &(c, _, _) in &step.impure {
            let list = self.imp.entry(c).or_default();
            list.retain(|&mut x| x != step.a && x != step.a2);
            list.push(step.b);
        }
        self.imp.remove(&step.a);
        self.imp.remove(&step.a2);
        if !step.impure.is_empty() {
            self.imp.insert(step.b, step.impure.iter().map(|&(c, _, _)| c).collect());
        }
        self.time += 1;
    }

    pub fn imp_neighbors(&self, p: Part) -> SmallVec<[Part; 8]> {
        self.imp.get(&p).cloned().unwrap_or_default()
    }

    /// Relation between two distinct alive parts at the current time.
    pub fn rel(&self, p: Part, q: Part) -> Rel {
        if self.imp.get(&p).map_or(false, |l| l.contains(&q)) {
            Rel::Impure
        } else if self.g.has_edge(self.table.rep(p), self.table.rep(q)) {
            Rel::Complete
        } else {
            Rel::Anti
        }
    }

    /// Capped BFS ball in the current impurity graph.
    pub fn ball(&self, from: &[Part], cap: u32) -> DistMap {
        bfs(from, cap, |p| self.imp_neighbors(p))
    }

    /// `dist(from, to) <= cap` in the current impurity graph.
    pub fn dist_le(&self, from: &[Part], to: Part, cap: u32) -> bool {
        self.ball(from, cap).contains_key(&to)
    }

    /// The image of an alive part under the next merge.
    pub fn next_image(&self, p: Part) -> Part {
        match self.next_step() {
            Some(s) if p == s.a || p == s.a2 => s.b,
            _ => p,
        }
    }

    /// Impure neighbors in the post-merge impurity graph, without advancing.
    pub fn next_imp_neighbors(&self, p: Part) -> SmallVec<[Part; 8]> {
        let step = match self.next_step() {
            Some(s) => s,
            None => return self.imp_neighbors(p),
        };
        if p == step.b {
            step.impure.iter().map(|&(c, _, _)| c).collect()
        } else {
            let mut list = self.imp_neighbors(p);
            if step.impure.iter().any(|&(c, _, _)| c == p) {
                list.retain(|&mut x| x != step.a && x != step.a2);
                list.push(step.b);
            }
            list
        }
    }

    /// Capped BFS ball in the post-merge impurity graph.
    pub fn next_ball(&self, from: &[Part], cap: u32) -> DistMap {
        bfs(from, cap, |p| self.next_imp_neighbors(p))
    }

    /// Relation between distinct parts alive after the next merge.
    pub fn next_rel(&self, p: Part, q: Part) -> Rel {
        let step = match self.next_step() {
            Some(s) => s,
            None => return self.rel(p, q),
        };
        let expand = |x: Part| -> [Option<Part>; 2] {
            if x == step.b {
                [Some(step.a), Some(step.a2)]
            } else {
                [Some(x), None]
            }
        };
        let mut acc: Option<Rel> = None;
        for x in expand(p).into_iter().flatten() {
            for y in expand(q).into_iter().flatten() {
                let r = self.rel(x, y);
                acc = Some(match acc {
                    None => r,
                    Some(prev) => prev.compose(r),
                });
            }
        }
        acc.unwrap()
    }
}

/// A vicinity: the sub-trigraph induced on all parts within impurity-graph
/// distance `radius` of a focus set, tagged with the radius and time it was
/// taken at.
#[derive(Debug, Clone)]
pub struct Vicinity {
    pub trigraph: Trigraph,
    pub radius: u32,
    pub time: u32,
}

/// The vicinity of radius `r` around the focus parts at the cursor's time.
pub fn vicinity(state: &ImpurityState<'_>, focus: &[Part], r: u32) -> Vicinity {
    let ball = state.ball(focus, r);
    let mut parts: Vec<Part> = ball.keys().copied().collect();
    parts.sort_unstable();
    Vicinity { trigraph: Trigraph::new(parts, |p, q| state.rel(p, q)), radius: r, time: state.time() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::tests::p4;

    fn p4_state_at(t: u32) -> (Graph, ContractionSequence, PartTable) {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let _ = t;
        (g, cs, table)
    }

    #[test]
    fn quotient_matches_fixture_annotations() {
        let (g, _, table) = p4_state_at(2);
        let q2 = quotient_at(&g, &table, 2);
        assert_eq!(q2.parts(), &[1, 2, 5]);
        assert_eq!(q2.rel(1, 2), Rel::Complete);
        assert_eq!(q2.rel(2, 5), Rel::Impure);
        assert_eq!(q2.rel(1, 5), Rel::Anti);
        let q3 = quotient_at(&g, &table, 3);
        assert_eq!(q3.rel(6, 5), Rel::Impure);
    }

    #[test]
    fn replay_agrees_with_quotient() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let mut st = ImpurityState::new(&g, &cs, &table);
        for t in 1..=4 {
            let q = quotient_at(&g, &table, t);
            for &p in q.parts() {
                for &r in q.parts() {
                    if p < r {
                        assert_eq!(st.rel(p, r), q.rel(p, r), "time {t} pair ({p},{r})");
                    }
                }
            }
            if t < 4 {
                st.advance();
            }
        }
    }

    #[test]
    fn next_views_preview_the_merge() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let st = ImpurityState::new(&g, &cs, &table);
        // At time 1 the next merge forms part 5 = {3, 4}; part 2 becomes impure to it.
        assert_eq!(st.next_image(3), 5);
        assert_eq!(st.next_image(1), 1);
        assert_eq!(st.next_rel(2, 5), Rel::Impure);
        assert_eq!(st.next_rel(1, 5), Rel::Anti);
        let ball = st.next_ball(&[5], 1);
        assert_eq!(ball.get(&5), Some(&0));
        assert_eq!(ball.get(&2), Some(&1));
        assert_eq!(ball.get(&1), None);
    }

    #[test]
    fn vicinity_isolated_part_is_alone() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let mut st = ImpurityState::new(&g, &cs, &table);
        st.advance(); // time 2: parts {1}, {2}, {5}; impurity edge (2, 5)
        let vic = vicinity(&st, &[1], 5);
        assert_eq!(vic.trigraph.parts(), &[1]);
        let vic2 = vicinity(&st, &[2], 1);
        assert_eq!(vic2.trigraph.parts(), &[2, 5]);
    }
}
