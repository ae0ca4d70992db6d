//! Relevant regions: for every merge, the bounded sub-trigraph around it
//! that downstream index structures consult instead of the whole quotient.
//!
//! The region for time `s` (the merge forming `b` at `s + 1`) holds the two
//! merged parts plus every surviving part within impurity distance `p` of
//! `b` at time `s + 1`, with all pairwise relations taken at time `s`.
//!
//! Construction is a single replay. Impure pairs are read off the
//! maintained impurity adjacency; each non-impure pair becomes a pending
//! slot whose polarity is filled in later, at the first time its containing
//! parts merge with each other (the sampled representative edge decides) or
//! become impure (the step's own annotations decide). Pending slots are
//! kept in per-pair lists that migrate along merges. Pairs of ball parts
//! start at mutual distance at most `2p` and distances never grow, so every
//! pending pair stays tracked until it resolves.

use std::collections::{HashMap, HashSet};

use rustc_hash::FxHashMap;

use crate::err::EngineError;
use crate::graph::Graph;
use crate::seq::{ContractionSequence, Part, PartTable, Rel};
use crate::trigraph::{bfs, DistMap, ImpurityState};

#[derive(Debug, Clone)]
pub struct RelevantRegion {
    /// Pre-merge time; the merge happens at `s + 1`.
    pub s: u32,
    pub a: Part,
    pub a2: Part,
    pub b: Part,
    parts: Vec<Part>,
    index: FxHashMap<Part, usize>,
    rel: Vec<Rel>,
    /// Distance from `b` at time `s + 1`; keyed by surviving parts and `b`.
    dist_next: DistMap,
}

impl RelevantRegion {
    /// All region parts (the two merged parts and the nearby survivors),
    /// sorted ascending. These are parts of the time-`s` partition.
    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn contains(&self, p: Part) -> bool {
        self.index.contains_key(&p)
    }

    /// Parts alive at time `s + 1`: the survivors plus `b`.
    pub fn parts_next(&self) -> Vec<Part> {
        let mut out: Vec<Part> = self.parts.iter().copied().filter(|&p| p != self.a && p != self.a2).collect();
        out.push(self.b);
        out
    }

    pub fn image(&self, p: Part) -> Part {
        if p == self.a || p == self.a2 {
            self.b
        } else {
            p
        }
    }

    /// Relation between two distinct region parts at time `s`.
    pub fn rel(&self, p: Part, q: Part) -> Rel {
        let (i, j) = (self.index[&p], self.index[&q]);
        self.rel[i * self.parts.len() + j]
    }

    /// Relation at time `s + 1` between two distinct parts of
    /// `parts_next()`.
    pub fn rel_next(&self, p: Part, q: Part) -> Rel {
        if p == self.b {
            self.rel(self.a, q).compose(self.rel(self.a2, q))
        } else if q == self.b {
            self.rel(p, self.a).compose(self.rel(p, self.a2))
        } else {
            self.rel(p, q)
        }
    }

    pub fn imp_neighbors(&self, p: Part) -> Vec<Part> {
        self.parts.iter().copied().filter(|&q| q != p && self.rel(p, q) == Rel::Impure).collect()
    }

    pub fn imp_neighbors_next(&self, p: Part) -> Vec<Part> {
        self.parts_next().into_iter().filter(|&q| q != p && self.rel_next(p, q) == Rel::Impure).collect()
    }

    /// Capped BFS ball at time `s`, confined to the region. Valid for the
    /// engines' queries because every consulted part sits deep enough inside
    /// the region for paths of the capped length not to leave it.
    pub fn ball(&self, from: &[Part], cap: u32) -> DistMap {
        bfs(from, cap, |p| self.imp_neighbors(p).into())
    }

    /// Capped BFS ball at time `s + 1`, confined to the region's images.
    pub fn ball_next(&self, from: &[Part], cap: u32) -> DistMap {
        bfs(from, cap, |p| self.imp_neighbors_next(p).into())
    }

    /// The stored distance from `b` at time `s + 1` (`0` for `a`, `a2`, `b`).
    pub fn dist_from_merge(&self, p: Part) -> Option<u32> {
        if p == self.a || p == self.a2 {
            Some(0)
        } else {
            self.dist_next.get(&p).copied()
        }
    }
}

/// Regions for every `s in 1..=n-1` at a fixed radius `p`.
#[derive(Debug, Clone)]
pub struct RegionSet {
    pub radius: u32,
    regions: Vec<RelevantRegion>,
}

impl RegionSet {
    /// The region for time `s` (merge at `s + 1`).
    pub fn at(&self, s: u32) -> &RelevantRegion {
        &self.regions[(s - 1) as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelevantRegion> {
        self.regions.iter()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

struct RegionBuild {
    s: u32,
    a: Part,
    a2: Part,
    b: Part,
    parts: Vec<Part>,
    rel: Vec<Option<Rel>>,
    dist_next: DistMap,
}

/// Builds all relevant regions at radius `p` in one replay of the sequence.
pub fn build_relevant_regions(
    g: &Graph,
    cs: &ContractionSequence,
    table: &PartTable,
    p: u32,
) -> Result<RegionSet, EngineError> {
    let n = cs.n();
    let mut state = ImpurityState::new(g, cs, table);
    let mut builds: Vec<RegionBuild> = Vec::with_capacity(n.saturating_sub(1) as usize);
    let mut lists: FxHashMap<(Part, Part), Vec<(usize, usize, usize)>> = FxHashMap::default();
    let mut partners: FxHashMap<Part, HashSet<Part>> = FxHashMap::default();
    let norm = |x: Part, y: Part| (x.min(y), x.max(y));

    for t in 2..=n {
        let s = t - 1;
        let step = cs.step_into(t);
        let ball = state.next_ball(&[step.b], p);
        let mut parts: Vec<Part> = ball.keys().copied().filter(|&q| q != step.b).collect();
        parts.push(step.a);
        parts.push(step.a2);
        parts.sort_unstable();
        let k = parts.len();
        let mut rel = vec![None; k * k];
        let idx = builds.len();
        for i in 0..k {
            rel[i * k + i] = Some(Rel::Anti); // diagonal is never queried
            let ni = state.imp_neighbors(parts[i]);
            for j in (i + 1)..k {
                if ni.contains(&parts[j]) {
                    rel[i * k + j] = Some(Rel::Impure);
                    rel[j * k + i] = Some(Rel::Impure);
                } else {
                    let key = norm(parts[i], parts[j]);
                    lists.entry(key).or_default().push((idx, i, j));
                    partners.entry(key.0).or_default().insert(key.1);
                    partners.entry(key.1).or_default().insert(key.0);
                }
            }
        }
        let dist_next = ball.iter().map(|(&q, &d)| (q, d)).collect();
        builds.push(RegionBuild { s, a: step.a, a2: step.a2, b: step.b, parts, rel, dist_next });

        let resolve = |builds: &mut Vec<RegionBuild>, entries: Vec<(usize, usize, usize)>, r: Rel| {
            for (idx, i, j) in entries {
                let k = builds[idx].parts.len();
                builds[idx].rel[i * k + j] = Some(r);
                builds[idx].rel[j * k + i] = Some(r);
            }
        };
        let drop_pair = |partners: &mut FxHashMap<Part, HashSet<Part>>, x: Part, y: Part| {
            if let Some(set) = partners.get_mut(&x) {
                set.remove(&y);
            }
            if let Some(set) = partners.get_mut(&y) {
                set.remove(&x);
            }
        };

        // The merged pair itself: polarity from a representative edge.
        if let Some(entries) = lists.remove(&norm(step.a, step.a2)) {
            let r = if g.has_edge(table.rep(step.a), table.rep(step.a2)) { Rel::Complete } else { Rel::Anti };
            resolve(&mut builds, entries, r);
            drop_pair(&mut partners, step.a, step.a2);
        }
        // Pairs that become impure at this merge: the annotations carry the
        // polarity each merged side had one step earlier.
        for &(c, ra, ra2) in &step.impure {
            for (side, r) in [(step.a, ra), (step.a2, ra2)] {
                if let Some(entries) = lists.remove(&norm(side, c)) {
                    debug_assert!(r != Rel::Impure, "a pending pair cannot already be impure");
                    resolve(&mut builds, entries, r);
                    drop_pair(&mut partners, side, c);
                }
            }
        }
        // Remaining pending pairs of the merged sides migrate to b.
        for side in [step.a, step.a2] {
            if let Some(ds) = partners.remove(&side) {
                for d in ds {
                    if let Some(set) = partners.get_mut(&d) {
                        set.remove(&side);
                    }
                    if d == step.a || d == step.a2 {
                        continue;
                    }
                    if let Some(mut entries) = lists.remove(&norm(side, d)) {
                        lists.entry(norm(step.b, d)).or_default().append(&mut entries);
                        partners.entry(step.b).or_default().insert(d);
                        partners.entry(d).or_default().insert(step.b);
                    }
                }
            }
        }
        state.advance();
    }

    if lists.values().any(|l| !l.is_empty()) {
        return Err(EngineError::Precondition("region build ended with unresolved pure pairs".to_string()));
    }
    let regions = builds
        .into_iter()
        .map(|bld| {
            let index = bld.parts.iter().enumerate().map(|(i, &q)| (q, i)).collect();
            RelevantRegion {
                s: bld.s,
                a: bld.a,
                a2: bld.a2,
                b: bld.b,
                parts: bld.parts,
                index,
                rel: bld.rel.into_iter().map(|r| r.expect("all pairs resolved")).collect(),
                dist_next: bld.dist_next,
            }
        })
        .collect();
    Ok(RegionSet { radius: p, regions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::tests::p4;
    use crate::trigraph::quotient_at;

    #[test]
    fn p4_region_radius_1() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let set = build_relevant_regions(&g, &cs, &table, 1).unwrap();
        let r = set.at(2); // merge of {1},{2} into 6 at time 3
        assert_eq!((r.a, r.a2, r.b), (1, 2, 6));
        assert_eq!(r.parts(), &[1, 2, 5]);
        assert_eq!(r.rel(1, 2), Rel::Complete);
        assert_eq!(r.rel(2, 5), Rel::Impure);
        assert_eq!(r.rel(1, 5), Rel::Anti);
        assert_eq!(r.rel_next(6, 5), Rel::Impure);
        assert_eq!(r.dist_from_merge(5), Some(1));
    }

    #[test]
    fn p4_region_radius_0_has_only_merged_parts() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let set = build_relevant_regions(&g, &cs, &table, 0).unwrap();
        for s in 1..=3u32 {
            let r = set.at(s);
            let mut expect = vec![r.a, r.a2];
            expect.sort_unstable();
            assert_eq!(r.parts(), &expect[..], "s = {s}");
        }
        assert_eq!(set.at(1).rel(3, 4), Rel::Complete);
        assert_eq!(set.at(2).rel(1, 2), Rel::Complete);
    }

    /// Region contents and relations must equal the from-scratch definition.
    pub(crate) fn check_against_definition(g: &Graph, cs: &ContractionSequence, p: u32) {
        let table = PartTable::new(cs);
        let set = build_relevant_regions(g, cs, &table, p).unwrap();
        for s in 1..cs.n() {
            let region = set.at(s);
            let q_next = quotient_at(g, &table, s + 1);
            let ball = q_next.ball(&[region.b], p);
            let mut expect: Vec<Part> = ball.keys().copied().filter(|&c| c != region.b).collect();
            expect.push(region.a);
            expect.push(region.a2);
            expect.sort_unstable();
            assert_eq!(region.parts(), &expect[..], "parts of region {s}");
            let q = quotient_at(g, &table, s);
            for &x in region.parts() {
                for &y in region.parts() {
                    if x < y {
                        assert_eq!(region.rel(x, y), q.rel(x, y), "region {s} pair ({x},{y})");
                    }
                }
            }
        }
    }

    #[test]
    fn regions_match_definition_on_p4() {
        let (g, cs) = p4();
        for p in 0..=3 {
            check_against_definition(&g, &cs, p);
        }
    }
}
