//! Fixture generators: graph families with matching contraction
//! sequences, plus a greedy sequence search for arbitrary graphs.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twinwidth::{from_merges, ContractionSequence, Graph, Part};

/// A path `1 — 2 — … — n` with the left-fold sequence (absorb each next
/// vertex into the growing prefix part), which has width 1 for n ≥ 3.
pub fn path_fixture(n: u32) -> Result<(Graph, ContractionSequence)> {
    if n < 1 {
        bail!("path needs n >= 1");
    }
    let edges: Vec<(u32, u32)> = (1..n).map(|v| (v, v + 1)).collect();
    let g = Graph::from_edges(n, &edges)?;
    let mut merges: Vec<(Part, Part)> = Vec::new();
    if n >= 2 {
        merges.push((1, 2));
        for v in 3..=n {
            merges.push((n + v - 2, v));
        }
    }
    let cs = from_merges(&g, &merges);
    Ok((g, cs))
}

/// A `side × side` grid, vertices row-major, with a row-absorption
/// sequence: fold each row into the accumulated top band column by
/// column, then fold the final band left to right.
pub fn grid_fixture(side: u32) -> Result<(Graph, ContractionSequence)> {
    if side < 1 {
        bail!("grid needs side >= 1");
    }
    let n = side * side;
    let id = |r: u32, c: u32| (r - 1) * side + c;
    let mut edges = Vec::new();
    for r in 1..=side {
        for c in 1..=side {
            if c < side {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r < side {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    let g = Graph::from_edges(n, &edges)?;
    let mut merges: Vec<(Part, Part)> = Vec::new();
    let mut cur: Vec<Part> = (1..=side).collect();
    for r in 2..=side {
        for c in 1..=side {
            merges.push((cur[(c - 1) as usize], id(r, c)));
            cur[(c - 1) as usize] = n + merges.len() as u32;
        }
    }
    let mut acc = cur[0];
    for c in 2..=side {
        merges.push((acc, cur[(c - 1) as usize]));
        acc = n + merges.len() as u32;
    }
    let cs = from_merges(&g, &merges);
    Ok((g, cs))
}

/// An Erdős–Rényi graph with edge probability 1/2 from a seeded ChaCha
/// stream, sequenced by the greedy search. The search is quartic in the
/// part count, so keep n desk-scale.
pub fn random_fixture(n: u32, seed: u64) -> Result<(Graph, ContractionSequence)> {
    if n < 1 {
        bail!("random graph needs n >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 1..n {
        for v in (u + 1)..=n {
            if rng.gen_bool(0.5) {
                edges.push((u, v));
            }
        }
    }
    let g = Graph::from_edges(n, &edges)?;
    let cs = greedy_contraction_sequence(&g);
    Ok((g, cs))
}

pub fn by_name(family: &str, n: u32, seed: u64) -> Result<(Graph, ContractionSequence)> {
    match family {
        "path" => path_fixture(n),
        "grid" => {
            let side = (n as f64).sqrt().round() as u32;
            if side * side != n {
                bail!("grid needs a square vertex count, got {n}");
            }
            grid_fixture(side)
        }
        "random" => random_fixture(n, seed),
        other => bail!("unknown family `{other}`; expected path, grid, or random"),
    }
}

/// Greedily contracts the pair of parts minimizing the resulting maximum
/// impurity degree, ties broken by the smallest part-id pair.
pub fn greedy_contraction_sequence(g: &Graph) -> ContractionSequence {
    let n = g.n();
    let total = (2 * n - 1) as usize;
    // Cross-edge counts and sizes per part id; a pair is pure iff its
    // count is zero or saturates the member-pair product.
    let mut size = vec![0u64; total + 1];
    let mut cross = vec![vec![0u64; total + 1]; total + 1];
    for v in 1..=n {
        size[v as usize] = 1;
    }
    for u in 1..=n {
        for &w in g.neighbors(u) {
            if u < w {
                cross[u as usize][w as usize] = 1;
                cross[w as usize][u as usize] = 1;
            }
        }
    }
    let mut alive: Vec<Part> = (1..=n).collect();
    let mut merges: Vec<(Part, Part)> = Vec::new();
    for step in 0..n.saturating_sub(1) {
        let b = n + step + 1;
        let mut best: Option<((Part, Part), u32)> = None;
        for (i, &p) in alive.iter().enumerate() {
            for &q in &alive[(i + 1)..] {
                let width = width_after(&alive, &cross, &size, p, q, b);
                if best.map_or(true, |(_, w)| width < w) {
                    best = Some(((p, q), width));
                }
            }
        }
        let ((p, q), _) = best.expect("at least two parts remain");
        for &c in &alive {
            if c != p && c != q {
                cross[b as usize][c as usize] =
                    cross[p as usize][c as usize] + cross[q as usize][c as usize];
                cross[c as usize][b as usize] = cross[b as usize][c as usize];
            }
        }
        size[b as usize] = size[p as usize] + size[q as usize];
        alive.retain(|&c| c != p && c != q);
        alive.push(b);
        merges.push((p, q));
    }
    from_merges(g, &merges)
}

/// The maximum impurity degree after merging `p` and `q` into `b`.
fn width_after(alive: &[Part], cross: &[Vec<u64>], size: &[u64], p: Part, q: Part, b: Part) -> u32 {
    let merged_size = size[p as usize] + size[q as usize];
    let pair_impure = |c: Part, c2: Part| -> bool {
        let other = if c == b { Some(c2) } else if c2 == b { Some(c) } else { None };
        let (cnt, full) = match other {
            Some(o) => (
                cross[p as usize][o as usize] + cross[q as usize][o as usize],
                merged_size * size[o as usize],
            ),
            None => (cross[c as usize][c2 as usize], size[c as usize] * size[c2 as usize]),
        };
        cnt > 0 && cnt < full
    };
    let mut width = 0u32;
    let parts = alive.iter().copied().filter(|&c| c != p && c != q).chain([b]);
    for c in parts.clone() {
        let deg = parts.clone().filter(|&c2| c2 != c && pair_impure(c, c2)).count();
        width = width.max(deg as u32);
    }
    width
}

#[cfg(test)]
mod tests {
    use super::*;
    use twinwidth::validate;

    #[test]
    fn path_fixture_validates_at_width_one() {
        for n in [1u32, 2, 3, 8, 33] {
            let (g, cs) = path_fixture(n).unwrap();
            let w = validate(&g, &cs).unwrap();
            assert!(w <= 1, "n = {n}: width {w}");
        }
    }

    #[test]
    fn grid_fixture_validates_at_small_width() {
        for side in [1u32, 2, 3, 5] {
            let (g, cs) = grid_fixture(side).unwrap();
            let w = validate(&g, &cs).unwrap();
            assert!(w <= 4, "side = {side}: width {w}");
        }
    }

    #[test]
    fn random_fixtures_validate_and_are_seed_deterministic() {
        for n in [1u32, 5, 8, 10] {
            let (g, cs) = random_fixture(n, 7).unwrap();
            validate(&g, &cs).unwrap();
            let (g2, cs2) = random_fixture(n, 7).unwrap();
            assert_eq!(g, g2);
            assert_eq!(cs, cs2);
        }
        let (a, _) = random_fixture(10, 1).unwrap();
        let (b, _) = random_fixture(10, 2).unwrap();
        assert_ne!(a, b, "different seeds give different graphs");
    }

    #[test]
    fn greedy_handles_pure_families_at_width_zero() {
        // Edgeless and complete graphs contract along twins for free.
        let edgeless = Graph::from_edges(6, &[]).unwrap();
        let cs = greedy_contraction_sequence(&edgeless);
        assert_eq!(validate(&edgeless, &cs).unwrap(), 0);

        let mut edges = Vec::new();
        for u in 1..=5u32 {
            for v in (u + 1)..=5 {
                edges.push((u, v));
            }
        }
        let k5 = Graph::from_edges(5, &edges).unwrap();
        let cs = greedy_contraction_sequence(&k5);
        assert_eq!(validate(&k5, &cs).unwrap(), 0);
    }

    #[test]
    fn greedy_keeps_p4_narrow() {
        let (g, _) = path_fixture(4).unwrap();
        let cs = greedy_contraction_sequence(&g);
        let w = validate(&g, &cs).unwrap();
        assert!(w <= 2, "width {w}");
    }
}
