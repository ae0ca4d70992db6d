//! Experiment toolkit for the density of definable set systems.
//!
//! Fix a set `A` of vertices and a formula with free variables split into
//! trace variables `x̄` and parameter variables `ȳ`. Every parameter tuple
//! `b̄` defines the trace `{ā ∈ A^x̄ : G ⊨ φ(ā, b̄)}`; the collection of
//! distinct traces is the trace space of `φ` over `A`, and its growth as a
//! function of `|A|` is the object of study. The supporting machinery —
//! `A`-bipartite contraction sequences, radius-`r` distance colorings,
//! meeting times, and brute-force type-class counting — lets experiments
//! check that parameter tuples with the same color profile and local type
//! signature define the same trace, which is why the trace space stays
//! near-linear in `|A|` per parameter variable.
//!
//! Everything here is desk-scale and exhaustive by design: traces come from
//! the brute-force evaluator and type signatures from the reference local
//! type computation, guarded by explicit work budgets.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::err::EngineError;
use crate::graph::{Graph, Vertex};
use crate::logic::{naive_eval, Formula};
use crate::seq::{from_merges, ContractionSequence, Part, PartTable};
use crate::trigraph::quotient_at;
use crate::types::{ltp, TypeArena};

/// Default work budget for the exhaustive operations, in evaluation units.
pub const DEFAULT_BUDGET: u64 = 50_000_000;

/// Splits a formula's free variables into trace variables (names starting
/// with `x`) and parameter variables (all others), each list sorted.
pub fn split_parameters(phi: &Formula) -> (Vec<String>, Vec<String>) {
    phi.free_vars().into_iter().partition(|v| v.starts_with('x'))
}

/// The radius the type-class experiments use: `2^k · (|x̄| + |ȳ| − 1)`.
pub fn lemma_radius(k: u32, x_arity: usize, y_arity: usize) -> u32 {
    assert!(x_arity + y_arity >= 1, "radius needs at least one variable");
    (1u32 << k) * (x_arity + y_arity - 1) as u32
}

/// A contraction sequence in which every part, at every time before the
/// last, lies inside `A` or inside its complement.
pub struct BipartiteSequence {
    pub cs: ContractionSequence,
    pub a: BTreeSet<Vertex>,
}

/// Splits each contraction of `cs` into its `A`-side and complement-side
/// halves (skipping empty sides, `A`-side first), then merges the two
/// final sides. The output has the same length and at most twice the
/// width. `A = ∅` or `A = V` returns the input unchanged.
pub fn make_bipartite(
    g: &Graph,
    cs: &ContractionSequence,
    a: &BTreeSet<Vertex>,
) -> Result<BipartiteSequence, EngineError> {
    let n = g.n();
    for &v in a {
        if v < 1 || v > n {
            return Err(EngineError::Precondition(format!(
                "vertex {v} out of range for graph with n = {n}"
            )));
        }
    }
    if a.is_empty() || a.len() == n as usize {
        return Ok(BipartiteSequence { cs: cs.clone(), a: a.clone() });
    }

    // For each part of the input sequence, the output parts currently
    // holding its A-side and complement-side members.
    let mut sides: HashMap<Part, (Option<Part>, Option<Part>)> = HashMap::new();
    for v in 1..=n {
        sides.insert(v, if a.contains(&v) { (Some(v), None) } else { (None, Some(v)) });
    }
    let mut merges: Vec<(Part, Part)> = Vec::new();
    let mut last = 0;
    for step in cs.steps() {
        let (xa, xc) = sides[&step.a];
        let (ya, yc) = sides[&step.a2];
        let mut half = |l: Option<Part>, r: Option<Part>| match (l, r) {
            (Some(p), Some(q)) => {
                merges.push((p, q));
                Some(n + merges.len() as u32)
            }
            (p, q) => p.or(q),
        };
        let za = half(xa, ya);
        let zc = half(xc, yc);
        sides.insert(step.b, (za, zc));
        last = step.b;
    }
    let (pa, pc) = sides[&last];
    merges.push((
        pa.expect("a nonempty A has an A-side part"),
        pc.expect("a proper A has a complement-side part"),
    ));
    Ok(BipartiteSequence { cs: from_merges(g, &merges), a: a.clone() })
}

/// A coloring of the vertices outside `A`, read off an `A`-bipartite
/// sequence: each merge of two `A`-side parts hands a fresh color to every
/// not-yet-colored vertex of each off-`A` part within impurity-graph
/// distance `r` of the merged part (one color per such part); whatever
/// remains uncolored at the end shares one final color.
pub struct DistanceColoring {
    pub r: u32,
    /// Color id of each vertex outside `A`.
    pub color: HashMap<Vertex, u32>,
    /// Color classes; ids index this list. Each class is sorted.
    pub classes: Vec<Vec<Vertex>>,
}

impl DistanceColoring {
    pub fn palette(&self) -> usize {
        self.classes.len()
    }
}

pub fn distance_coloring(g: &Graph, bcs: &BipartiteSequence, r: u32) -> DistanceColoring {
    let n = g.n();
    let table = PartTable::new(&bcs.cs);
    let mut color: HashMap<Vertex, u32> = HashMap::new();
    let mut classes: Vec<Vec<Vertex>> = Vec::new();
    for (i, step) in bcs.cs.steps().iter().enumerate() {
        let t = i as u32 + 1;
        if !table.members(step.b).iter().all(|v| bcs.a.contains(v)) {
            continue;
        }
        let tri = quotient_at(g, &table, t + 1);
        let ball = tri.ball(&[step.b], r);
        let mut qs: Vec<Part> = ball
            .keys()
            .copied()
            .filter(|&q| q != step.b && !bcs.a.contains(&table.members(q)[0]))
            .collect();
        qs.sort_unstable();
        for q in qs {
            let fresh: Vec<Vertex> = table
                .members(q)
                .into_iter()
                .filter(|v| !color.contains_key(v))
                .collect();
            if fresh.is_empty() {
                continue;
            }
            // The merge joined two A-side parts, so q is also a part at
            // time t; the new color class sits inside one part there.
            assert!(fresh.iter().all(|&v| table.part_of(v, t) == q));
            let id = classes.len() as u32;
            for &v in &fresh {
                color.insert(v, id);
            }
            classes.push(fresh);
        }
    }
    let leftover: Vec<Vertex> =
        (1..=n).filter(|v| !bcs.a.contains(v) && !color.contains_key(v)).collect();
    if !leftover.is_empty() {
        let id = classes.len() as u32;
        for &v in &leftover {
            color.insert(v, id);
        }
        classes.push(leftover);
    }
    DistanceColoring { r, color, classes }
}

/// The earliest time at which all vertices of `x` share one part.
pub fn meeting_time(cs: &ContractionSequence, x: &BTreeSet<Vertex>) -> Result<u32, EngineError> {
    if x.is_empty() {
        return Err(EngineError::Precondition(
            "the meeting time of the empty set is undefined".into(),
        ));
    }
    let n = cs.n();
    for &v in x {
        if v < 1 || v > n {
            return Err(EngineError::Precondition(format!(
                "vertex {v} out of range for sequence with n = {n}"
            )));
        }
    }
    let table = PartTable::new(cs);
    let first = *x.iter().next().expect("nonempty");
    for t in 1..=n {
        let p = table.part_of(first, t);
        if x.iter().all(|&v| table.part_of(v, t) == p) {
            return Ok(t);
        }
    }
    unreachable!("all vertices share the final part");
}

/// The exact trace space of a formula over `A`: every distinct trace
/// `{ā ∈ A^x̄ : G ⊨ φ(ā, b̄)}` with the first parameter tuple defining it.
pub struct StoneSpace {
    pub a: Vec<Vertex>,
    pub x_vars: Vec<String>,
    pub y_vars: Vec<String>,
    /// Trace → witness `b̄`. Traces hold `x̄`-tuples in sorted-variable
    /// position order; witnesses likewise.
    pub traces: BTreeMap<BTreeSet<Vec<Vertex>>, Vec<Vertex>>,
}

impl StoneSpace {
    pub fn size(&self) -> usize {
        self.traces.len()
    }
}

/// Steps an odometer over `arity` positions drawing from `domain`;
/// returns false when the cycle completes.
fn odometer_step(tuple: &mut [usize], len: usize) -> bool {
    for slot in tuple.iter_mut().rev() {
        *slot += 1;
        if *slot < len {
            return true;
        }
        *slot = 0;
    }
    false
}

fn pow_units(base: u64, exp: usize) -> u128 {
    let mut out: u128 = 1;
    for _ in 0..exp {
        out = out.saturating_mul(base as u128);
    }
    out
}

pub fn stone_space(
    g: &Graph,
    a: &BTreeSet<Vertex>,
    phi: &Formula,
    budget: u64,
) -> Result<StoneSpace, EngineError> {
    let n = g.n();
    if a.is_empty() {
        return Err(EngineError::Precondition("the trace set A must be nonempty".into()));
    }
    for &v in a {
        if v < 1 || v > n {
            return Err(EngineError::Precondition(format!(
                "vertex {v} out of range for graph with n = {n}"
            )));
        }
    }
    let (x_vars, y_vars) = split_parameters(phi);
    let estimate = pow_units(n as u64, y_vars.len())
        .saturating_mul(pow_units(a.len() as u64, x_vars.len()))
        .saturating_mul(pow_units(n as u64, phi.rank() as usize));
    if estimate > budget as u128 {
        return Err(EngineError::Budget { estimate, budget: budget as u128 });
    }

    let a_sorted: Vec<Vertex> = a.iter().copied().collect();
    let mut traces: BTreeMap<BTreeSet<Vec<Vertex>>, Vec<Vertex>> = BTreeMap::new();
    let mut env: HashMap<String, Vertex> = HashMap::new();
    let mut b_idx = vec![0usize; y_vars.len()];
    loop {
        let b_tuple: Vec<Vertex> = b_idx.iter().map(|&i| i as Vertex + 1).collect();
        for (name, &v) in y_vars.iter().zip(&b_tuple) {
            env.insert(name.clone(), v);
        }
        let mut trace: BTreeSet<Vec<Vertex>> = BTreeSet::new();
        let mut a_idx = vec![0usize; x_vars.len()];
        loop {
            let a_tuple: Vec<Vertex> = a_idx.iter().map(|&i| a_sorted[i]).collect();
            for (name, &v) in x_vars.iter().zip(&a_tuple) {
                env.insert(name.clone(), v);
            }
            if naive_eval(g, phi, &env).map_err(|e| EngineError::Precondition(e.to_string()))? {
                trace.insert(a_tuple);
            }
            if !odometer_step(&mut a_idx, a_sorted.len()) {
                break;
            }
        }
        traces.entry(trace).or_insert(b_tuple);
        if !odometer_step(&mut b_idx, n as usize) {
            break;
        }
    }
    Ok(StoneSpace { a: a_sorted, x_vars, y_vars, traces })
}

/// Brute-force count of the equivalence classes of parameter tuples drawn
/// from the color classes `p`: two tuples are equivalent when they give
/// equal local types at time `t` when juxtaposed with every `ā ∈ A^x̄`.
/// The coloring is recomputed at the radius the class-count bound
/// prescribes for `x_arity` trace variables and `|p|` parameter variables.
/// `t` must be at or after the meeting time of every class in `p`.
pub fn count_type_classes(
    g: &Graph,
    bcs: &BipartiteSequence,
    p: &[usize],
    x_arity: usize,
    t: u32,
    k: u32,
    budget: u64,
) -> Result<usize, EngineError> {
    if p.is_empty() {
        return Ok(1);
    }
    let arity = x_arity + p.len();
    if arity > crate::types::MAX_ARITY {
        return Err(EngineError::Precondition(format!(
            "tuple arity {arity} exceeds the supported cap {}",
            crate::types::MAX_ARITY
        )));
    }
    let r = lemma_radius(k, x_arity, p.len());
    let coloring = distance_coloring(g, bcs, r);
    for &c in p {
        if c >= coloring.palette() {
            return Err(EngineError::Precondition(format!(
                "color {c} out of range; the coloring uses {} colors",
                coloring.palette()
            )));
        }
        let class: BTreeSet<Vertex> = coloring.classes[c].iter().copied().collect();
        let meet = meeting_time(&bcs.cs, &class)?;
        if t < meet {
            return Err(EngineError::Precondition(format!(
                "time {t} is before the meeting time {meet} of color class {c}"
            )));
        }
    }

    let a_sorted: Vec<Vertex> = bcs.a.iter().copied().collect();
    let tuples: u128 = p.iter().map(|&c| coloring.classes[c].len() as u128).product();
    let estimate = tuples.saturating_mul(pow_units(a_sorted.len() as u64, x_arity));
    if estimate > budget as u128 {
        return Err(EngineError::Budget { estimate, budget: budget as u128 });
    }

    let table = PartTable::new(&bcs.cs);
    let arena = TypeArena::new();
    let mut signatures: BTreeSet<Vec<crate::types::TypeId>> = BTreeSet::new();
    let mut b_idx = vec![0usize; p.len()];
    loop {
        let b_tuple: Vec<Vertex> =
            b_idx.iter().zip(p).map(|(&i, &c)| coloring.classes[c][i]).collect();
        let mut sig = Vec::new();
        let mut a_idx = vec![0usize; x_arity];
        loop {
            let mut tuple: Vec<Vertex> = a_idx.iter().map(|&i| a_sorted[i]).collect();
            tuple.extend_from_slice(&b_tuple);
            sig.push(ltp(&arena, g, &table, t, &tuple, k));
            if !odometer_step(&mut a_idx, a_sorted.len()) {
                break;
            }
        }
        signatures.insert(sig);
        let mut rolled = false;
        for (slot, &c) in b_idx.iter_mut().zip(p).rev() {
            *slot += 1;
            if *slot < coloring.classes[c].len() {
                rolled = true;
                break;
            }
            *slot = 0;
        }
        if !rolled {
            break;
        }
    }
    Ok(signatures.len())
}

/// One measured size in a density report.
pub struct VcDensityRow {
    pub n: u32,
    pub a_size: usize,
    pub stone_size: usize,
}

/// Trace-space sizes across graph sizes with a log–log slope fit. The
/// report flags slopes above `|ȳ| + 0.3`, a small-sample tolerance over
/// the linear-per-parameter bound.
pub struct VcDensityReport {
    pub rows: Vec<VcDensityRow>,
    pub exponent: f64,
    pub threshold: f64,
    pub flagged: bool,
}

/// Least-squares slope of `ln(size)` against `ln(a_size)`.
fn fit_exponent(points: &[(usize, usize)]) -> Result<f64, EngineError> {
    let logs: Vec<(f64, f64)> =
        points.iter().map(|&(a, s)| ((a as f64).ln(), (s as f64).ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(EngineError::Precondition(
            "the slope fit needs at least two distinct trace-set sizes".into(),
        ));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// Runs the trace-space experiment: for each size, generate the graph,
/// take `A` as the first `⌈fraction·n⌉` vertices, and record the exact
/// trace-space size; then fit the growth exponent.
pub fn vc_density_report(
    family: impl Fn(u32) -> Result<Graph, EngineError>,
    fraction: f64,
    phi: &Formula,
    sizes: &[u32],
    budget: u64,
) -> Result<VcDensityReport, EngineError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EngineError::Precondition(format!(
            "A-fraction {fraction} must lie in (0, 1]"
        )));
    }
    if sizes.len() < 2 {
        return Err(EngineError::Precondition("the exponent fit needs at least two sizes".into()));
    }
    let (_, y_vars) = split_parameters(phi);
    let mut rows = Vec::new();
    for &n in sizes {
        let g = family(n)?;
        let a_size = ((fraction * n as f64).round() as u32).clamp(1, n);
        let a: BTreeSet<Vertex> = (1..=a_size).collect();
        let space = stone_space(&g, &a, phi, budget)?;
        rows.push(VcDensityRow { n, a_size: a_size as usize, stone_size: space.size() });
    }
    let points: Vec<(usize, usize)> = rows.iter().map(|r| (r.a_size, r.stone_size)).collect();
    let exponent = fit_exponent(&points)?;
    let threshold = y_vars.len() as f64 + 0.3;
    Ok(VcDensityReport { rows, exponent, threshold, flagged: exponent > threshold })
}
