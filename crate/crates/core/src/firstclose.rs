//! The proximity oracle: for every vertex pair, the first time their parts
//! come within impurity-distance `r` of each other.
//!
//! A single scan collects member-interval rectangles: whenever a merge
//! makes two previously far parts close, the full product of their member
//! intervals is tagged with that time. New closeness always routes through
//! the merged part, so candidates live in its radius-`r` ball and the
//! rectangles tile `[n]×[n]` exactly once.

use std::collections::HashMap;

use crate::err::EngineError;
use crate::graph::Graph;
use crate::seq::{ContractionSequence, Part, PartTable};
use crate::trigraph::{quotient_at, ImpurityState};
use crate::Vertex;

/// One tagged rectangle: all pairs in `x × y` first become close at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    /// Part whose member interval is the x-side (for index bucketing).
    pub x_part: Part,
    pub x: (Vertex, Vertex),
    pub y: (Vertex, Vertex),
    pub t: u32,
}

/// The complete set of tagged rectangles for one `(sequence, r)` pair.
#[derive(Debug, Clone)]
pub struct RectanglePartition {
    pub n: u32,
    pub r: u32,
    pub rects: Vec<Rect>,
}

/// Scans the sequence once and emits the tagged rectangle partition.
/// Requires a convex sequence so member sets are intervals.
pub fn build_firstclose_rectangles(g: &Graph, cs: &ContractionSequence, r: u32) -> RectanglePartition {
    let table = PartTable::new(cs);
    assert!(table.convex(), "rectangle construction needs a convex sequence");
    let n = g.n();
    let mut rects: Vec<Rect> = (1..=n)
        .map(|u| Rect { x_part: u, x: (u, u), y: (u, u), t: 1 })
        .collect();
    let mut state = ImpurityState::new(g, cs, &table);
    while let Some(step) = state.next_step() {
        let (a, a2, b) = (step.a, step.a2, step.b);
        let t = state.time() + 1;
        // Candidate parts at time t near the merge, listed as their
        // preimages at the current time.
        let mut pre: Vec<Part> = Vec::new();
        for p_next in state.next_ball(&[b], r).into_keys() {
            if p_next == b {
                pre.push(a);
                pre.push(a2);
            } else {
                pre.push(p_next);
            }
        }
        pre.sort_unstable();
        for i in 0..pre.len() {
            for j in (i + 1)..pre.len() {
                let (x, y) = (pre[i], pre[j]);
                if state.dist_le(&[x], y, r) {
                    continue; // already close before the merge
                }
                let (xi, yi) = (state.next_image(x), state.next_image(y));
                let close_now = xi == yi || state.next_ball(&[xi], r).contains_key(&yi);
                if !close_now {
                    continue;
                }
                let (ix, iy) = (table.interval(x), table.interval(y));
                rects.push(Rect { x_part: x, x: ix, y: iy, t });
                rects.push(Rect { x_part: y, x: iy, y: ix, t });
            }
        }
        state.advance();
    }
    RectanglePartition { n, r, rects }
}

/// Point-location index over a rectangle partition: rectangles bucket by
/// their x-side part, and a query walks the part chain of `u` upward,
/// binary-searching the sorted y-intervals in each bucket.
#[derive(Debug, Clone)]
pub struct RangeIndex {
    n: u32,
    /// parent[p] = the part p merges into (0 for the root), indexed by id.
    parent: Vec<Part>,
    /// For each x-side part: (y_lo, y_hi, tag), sorted by y_lo.
    buckets: HashMap<Part, Vec<(Vertex, Vertex, u32)>>,
}

impl RangeIndex {
    pub fn new(table: &PartTable, partition: &RectanglePartition) -> RangeIndex {
        let n = partition.n;
        let mut parent = vec![0 as Part; (2 * n) as usize];
        for p in 1..(2 * n) {
            if let Some(q) = table.parent(p) {
                parent[p as usize] = q;
            }
        }
        let mut buckets: HashMap<Part, Vec<(Vertex, Vertex, u32)>> = HashMap::new();
        for rect in &partition.rects {
            buckets.entry(rect.x_part).or_default().push((rect.y.0, rect.y.1, rect.t));
        }
        for list in buckets.values_mut() {
            list.sort_unstable();
            debug_assert!(
                list.windows(2).all(|w| w[0].1 < w[1].0),
                "y-intervals within a bucket must be disjoint"
            );
        }
        RangeIndex { n, parent, buckets }
    }

    /// The first time `u` and `v` are in parts at impurity distance ≤ r.
    pub fn first_close(&self, u: Vertex, v: Vertex) -> Result<u32, EngineError> {
        for w in [u, v] {
            if w < 1 || w > self.n {
                return Err(EngineError::Precondition(format!(
                    "vertex {w} outside 1..={}",
                    self.n
                )));
            }
        }
        let mut p = u as Part;
        while p != 0 {
            if let Some(list) = self.buckets.get(&p) {
                let i = list.partition_point(|&(lo, _, _)| lo <= v);
                if i > 0 {
                    let (lo, hi, t) = list[i - 1];
                    if lo <= v && v <= hi {
                        return Ok(t);
                    }
                }
            }
            p = self.parent[p as usize];
        }
        unreachable!("rectangle partition must cover ({u},{v})")
    }
}

/// Reference recomputation: the full `n×n` matrix of first-close times at
/// radius `r`, entry `[u-1][v-1]`, by replaying every quotient.
pub fn brute_first_close(g: &Graph, cs: &ContractionSequence, r: u32) -> Vec<Vec<u32>> {
    let table = PartTable::new(cs);
    let n = g.n() as usize;
    let mut out = vec![vec![0u32; n]; n];
    for t in 1..=g.n() {
        let q = quotient_at(g, &table, t);
        let part_of: Vec<Part> = (1..=g.n()).map(|v| table.part_of(v, t)).collect();
        let mut near: HashMap<Part, HashMap<Part, u32>> = HashMap::new();
        for &p in q.parts() {
            near.insert(p, q.ball(&[p], r));
        }
        for u in 0..n {
            for v in 0..n {
                if out[u][v] == 0 && near[&part_of[u]].contains_key(&part_of[v]) {
                    out[u][v] = t;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::tests::p4;

    fn check_partition(partition: &RectanglePartition) {
        let n = partition.n as usize;
        let mut cover = vec![vec![0u32; n]; n];
        for rect in &partition.rects {
            for u in rect.x.0..=rect.x.1 {
                for v in rect.y.0..=rect.y.1 {
                    cover[(u - 1) as usize][(v - 1) as usize] += 1;
                }
            }
        }
        for row in &cover {
            assert!(row.iter().all(|&c| c == 1), "every cell covered exactly once");
        }
    }

    fn check_against_brute(g: &Graph, cs: &ContractionSequence, r: u32) {
        let partition = build_firstclose_rectangles(g, cs, r);
        check_partition(&partition);
        let table = PartTable::new(cs);
        let idx = RangeIndex::new(&table, &partition);
        let brute = brute_first_close(g, cs, r);
        for u in 1..=g.n() {
            for v in 1..=g.n() {
                assert_eq!(
                    idx.first_close(u, v).unwrap(),
                    brute[(u - 1) as usize][(v - 1) as usize],
                    "r={r} pair=({u},{v})"
                );
            }
        }
    }

    #[test]
    fn p4_frozen_times_at_radius_1() {
        let (g, cs) = p4();
        let partition = build_firstclose_rectangles(&g, &cs, 1);
        let table = PartTable::new(&cs);
        let idx = RangeIndex::new(&table, &partition);
        for u in 1..=4 {
            assert_eq!(idx.first_close(u, u), Ok(1));
        }
        assert_eq!(idx.first_close(2, 3), Ok(2));
        assert_eq!(idx.first_close(3, 2), Ok(2));
        assert_eq!(idx.first_close(2, 4), Ok(2));
        assert_eq!(idx.first_close(3, 4), Ok(2));
        assert_eq!(idx.first_close(1, 2), Ok(3));
        assert_eq!(idx.first_close(1, 3), Ok(3));
        assert_eq!(idx.first_close(1, 4), Ok(3));
        assert!(idx.first_close(0, 1).is_err());
        assert!(idx.first_close(1, 5).is_err());
    }

    #[test]
    fn p4_matches_brute_at_all_radii() {
        let (g, cs) = p4();
        for r in [0, 1, 2, 4] {
            check_against_brute(&g, &cs, r);
        }
    }

    #[test]
    fn edgeless_radius_zero_tags_merge_times() {
        let g = Graph::from_edges(3, &[]).unwrap();
        let cs = ContractionSequence::parse("1 2 4 0\n4 3 5 0\n", 3).unwrap();
        let partition = build_firstclose_rectangles(&g, &cs, 0);
        check_partition(&partition);
        let table = PartTable::new(&cs);
        let idx = RangeIndex::new(&table, &partition);
        // Vertices meet exactly when their parts coincide.
        assert_eq!(idx.first_close(1, 2), Ok(2));
        assert_eq!(idx.first_close(1, 3), Ok(3));
        assert_eq!(idx.first_close(2, 3), Ok(3));
        check_against_brute(&g, &cs, 0);
    }

    #[test]
    fn single_vertex_graph() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let cs = ContractionSequence::parse("", 1).unwrap();
        let partition = build_firstclose_rectangles(&g, &cs, 1);
        assert_eq!(partition.rects.len(), 1);
        let table = PartTable::new(&cs);
        let idx = RangeIndex::new(&table, &partition);
        assert_eq!(idx.first_close(1, 1), Ok(1));
    }
}
