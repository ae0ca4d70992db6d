//! Contraction sequences: the `.cs` text format, structural bookkeeping
//! (part table, birth/death times, binary lifting), replay validation, and
//! convex reindexing.
//!
//! A sequence over an n-vertex graph is a chain of partitions `P_1 .. P_n`
//! from singletons to one part; step `t` (for `t in 2..=n`) merges two parts
//! of `P_{t-1}` into a fresh part. Part ids are fixed: singletons are `1..=n`
//! and the part created by the i-th step is `n + i`.

use std::collections::HashMap;
use std::fmt::Write as _;

use smallvec::SmallVec;

use crate::err::{ParseError, ValidateError};
use crate::graph::{content_lines, Graph, Vertex};

/// Parts share the id space `1..=2n-1`.
pub type Part = u32;

/// The relation between two distinct parts in a quotient trigraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    /// Every cross pair is an edge.
    Complete,
    /// No cross pair is an edge.
    Anti,
    /// Mixed.
    Impure,
}

impl Rel {
    /// Relation of a merged part `x ∪ y` to a third part, from the relations
    /// of `x` and `y` to it.
    pub fn compose(self, other: Rel) -> Rel {
        match (self, other) {
            (Rel::Complete, Rel::Complete) => Rel::Complete,
            (Rel::Anti, Rel::Anti) => Rel::Anti,
            _ => Rel::Impure,
        }
    }

    fn parse(tok: &str, lno: usize) -> Result<Rel, ParseError> {
        match tok {
            "C" => Ok(Rel::Complete),
            "N" => Ok(Rel::Anti),
            "I" => Ok(Rel::Impure),
            _ => Err(ParseError::seq(lno, format!("unknown relation token `{tok}` (expected C, N or I)"))),
        }
    }

    fn letter(self) -> char {
        match self {
            Rel::Complete => 'C',
            Rel::Anti => 'N',
            Rel::Impure => 'I',
        }
    }
}

/// One merge step. `impure` lists, for every part `c` impure to `b` in the
/// post-merge partition, the relations of `c` to `a` and to `a2` in the
/// pre-merge partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub a: Part,
    pub a2: Part,
    pub b: Part,
    pub impure: Vec<(Part, Rel, Rel)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractionSequence {
    n: u32,
    steps: Vec<Step>,
}

impl ContractionSequence {
    pub fn new(n: u32, steps: Vec<Step>) -> ContractionSequence {
        assert!(n >= 1 && steps.len() as u32 == n - 1, "a sequence over n vertices has n-1 steps");
        ContractionSequence { n, steps }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// The step leading from partition `t` to partition `t+1`, i.e. the merge
    /// applied at time `t+1` (so `t` ranges over `1..=n-1`).
    pub fn step_into(&self, t_plus_1: u32) -> &Step {
        &self.steps[(t_plus_1 - 2) as usize]
    }

    /// Parses the `.cs` format for an `n`-vertex graph: `n-1` records, each a
    /// `A A2 B k` line followed by `k` lines `C ra ra2`. `#`-comments and
    /// blank lines are ignored.
    pub fn parse(text: &str, n: u32) -> Result<ContractionSequence, ParseError> {
        assert!(n >= 1);
        let mut lines = content_lines(text);
        let mut steps = Vec::with_capacity(n.saturating_sub(1) as usize);
        let mut alive = vec![true; n as usize + 1];
        alive[0] = false;
        for i in 1..n {
            let (lno, header) = lines.next().ok_or_else(|| {
                ParseError::seq(0, format!("expected {} step records, input ended after {}", n - 1, i - 1))
            })?;
            let toks: Vec<&str> = header.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(ParseError::seq(lno, format!("expected `A A2 B k`, got {} tokens", toks.len())));
            }
            let a: Part = num(toks[0], lno)?;
            let a2: Part = num(toks[1], lno)?;
            let b: Part = num(toks[2], lno)?;
            let k: usize = num(toks[3], lno)?;
            if b != n + i {
                return Err(ParseError::seq(lno, format!("step {i} must create part {} (got {b})", n + i)));
            }
            if a == a2 {
                return Err(ParseError::seq(lno, format!("step {i} merges part {a} with itself")));
            }
            for p in [a, a2] {
                if p == 0 || p >= b || !alive[p as usize] {
                    return Err(ParseError::seq(lno, format!("step {i} uses part {p} which is not alive")));
                }
            }
            let mut impure = Vec::with_capacity(k);
            let mut seen: Vec<Part> = Vec::with_capacity(k);
            for _ in 0..k {
                let (lno, line) = lines
                    .next()
                    .ok_or_else(|| ParseError::seq(0, format!("step {i}: expected {k} impure lines, input ended")))?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(ParseError::seq(lno, format!("expected `C ra ra2`, got {} tokens", toks.len())));
                }
                let c: Part = num(toks[0], lno)?;
                if c == 0 || c >= b || c == a || c == a2 || !alive[c as usize] {
                    return Err(ParseError::seq(lno, format!("step {i}: impure part {c} is not a distinct alive part")));
                }
                if seen.contains(&c) {
                    return Err(ParseError::seq(lno, format!("step {i}: duplicate impure part {c}")));
                }
                seen.push(c);
                impure.push((c, Rel::parse(toks[1], lno)?, Rel::parse(toks[2], lno)?));
            }
            alive[a as usize] = false;
            alive[a2 as usize] = false;
            alive.push(true); // part b = n + i
            steps.push(Step { a, a2, b, impure });
        }
        if let Some((lno, _)) = lines.next() {
            return Err(ParseError::seq(lno, "trailing content after the last step".to_string()));
        }
        Ok(ContractionSequence { n, steps })
    }

    /// Renders the sequence back into the `.cs` format.
    pub fn to_cs(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let _ = writeln!(out, "{} {} {} {}", s.a, s.a2, s.b, s.impure.len());
            for (c, ra, ra2) in &s.impure {
                let _ = writeln!(out, "{} {} {}", c, ra.letter(), ra2.letter());
            }
        }
        out
    }
}

fn num<T: std::str::FromStr>(tok: &str, lno: usize) -> Result<T, ParseError> {
    tok.parse().map_err(|_| ParseError::seq(lno, format!("not a valid number: `{tok}`")))
}

/// Structural data derived from a parsed sequence: the contraction tree with
/// birth/death times, sizes, representatives, and vertex intervals (valid
/// once the sequence is convex). Supports `part_of(v, t)` in `O(log n)` via
/// binary lifting over the tree (births strictly increase towards the root).
#[derive(Debug, Clone)]
pub struct PartTable {
    n: u32,
    parent: Vec<Part>,
    birth: Vec<u32>,
    death: Vec<u32>,
    kids: Vec<Option<(Part, Part)>>,
    size: Vec<u32>,
    rep: Vec<Vertex>,
    interval: Vec<(u32, u32)>,
    convex: bool,
    jump: Vec<Vec<Part>>,
}

impl PartTable {
    pub fn new(cs: &ContractionSequence) -> PartTable {
        let n = cs.n();
        let total = (2 * n - 1) as usize;
        let mut parent = vec![0 as Part; total + 1];
        let mut birth = vec![0u32; total + 1];
        let mut death = vec![n + 1; total + 1];
        let mut kids = vec![None; total + 1];
        let mut size = vec![0u32; total + 1];
        let mut rep = vec![0 as Vertex; total + 1];
        let mut interval = vec![(0u32, 0u32); total + 1];
        for v in 1..=n {
            birth[v as usize] = 1;
            size[v as usize] = 1;
            rep[v as usize] = v;
            interval[v as usize] = (v, v);
        }
        let mut convex = true;
        for (i, s) in cs.steps().iter().enumerate() {
            let t = i as u32 + 2;
            let b = s.b as usize;
            parent[s.a as usize] = s.b;
            parent[s.a2 as usize] = s.b;
            death[s.a as usize] = t;
            death[s.a2 as usize] = t;
            birth[b] = t;
            kids[b] = Some((s.a, s.a2));
            size[b] = size[s.a as usize] + size[s.a2 as usize];
            rep[b] = rep[s.a as usize].min(rep[s.a2 as usize]);
            let (lo1, hi1) = interval[s.a as usize];
            let (lo2, hi2) = interval[s.a2 as usize];
            interval[b] = (lo1.min(lo2), hi1.max(hi2));
            if !(hi1 + 1 == lo2 || hi2 + 1 == lo1) {
                convex = false;
            }
        }
        let levels = (usize::BITS - total.leading_zeros()) as usize + 1;
        let mut jump = Vec::with_capacity(levels);
        jump.push(parent.clone());
        for j in 1..levels {
            let prev = &jump[j - 1];
            let mut next = vec![0 as Part; total + 1];
            for p in 1..=total {
                let mid = prev[p];
                if mid != 0 {
                    next[p] = prev[mid as usize];
                }
            }
            jump.push(next);
        }
        PartTable { n, parent, birth, death, kids, size, rep, interval, convex, jump }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// The final (root) part.
    pub fn root(&self) -> Part {
        2 * self.n - 1
    }

    pub fn parent(&self, p: Part) -> Option<Part> {
        match self.parent[p as usize] {
            0 => None,
            q => Some(q),
        }
    }

    pub fn birth(&self, p: Part) -> u32 {
        self.birth[p as usize]
    }

    /// The time at which `p` stops being a part (it is merged into its
    /// parent); `n + 1` for the root.
    pub fn death(&self, p: Part) -> u32 {
        self.death[p as usize]
    }

    pub fn alive_at(&self, p: Part, t: u32) -> bool {
        self.birth[p as usize] <= t && t < self.death[p as usize]
    }

    pub fn kids(&self, p: Part) -> Option<(Part, Part)> {
        self.kids[p as usize]
    }

    pub fn size(&self, p: Part) -> u32 {
        self.size[p as usize]
    }

    /// The minimum vertex contained in `p` — a stable representative.
    pub fn rep(&self, p: Part) -> Vertex {
        self.rep[p as usize]
    }

    /// Whether every part is a vertex interval.
    pub fn convex(&self) -> bool {
        self.convex
    }

    /// The vertex interval `[lo, hi]` of `p` (only meaningful when convex).
    pub fn interval(&self, p: Part) -> (u32, u32) {
        self.interval[p as usize]
    }

    /// All parts alive at time `t`.
    pub fn parts_at(&self, t: u32) -> Vec<Part> {
        (1..=2 * self.n - 1).filter(|&p| self.alive_at(p, t)).collect()
    }

    /// The part of `P_t` containing vertex `v`, in `O(log n)`.
    pub fn part_of(&self, v: Vertex, t: u32) -> Part {
        let mut p = v as usize;
        for j in (0..self.jump.len()).rev() {
            let q = self.jump[j][p];
            if q != 0 && self.birth[q as usize] <= t {
                p = q as usize;
            }
        }
        p as Part
    }

    /// The image of part `p` (alive at some time `s`) at a later time
    /// `t >= s`: the part of `P_t` containing it.
    pub fn image_at(&self, p: Part, t: u32) -> Part {
        let mut p = p as usize;
        for j in (0..self.jump.len()).rev() {
            let q = self.jump[j][p];
            if q != 0 && self.birth[q as usize] <= t {
                p = q as usize;
            }
        }
        p as Part
    }

    /// Collects the member vertices of `p`, ascending.
    pub fn members(&self, p: Part) -> Vec<Vertex> {
        let mut out = Vec::with_capacity(self.size(p) as usize);
        let mut stack = vec![p];
        while let Some(q) = stack.pop() {
            match self.kids(q) {
                None => out.push(q as Vertex),
                Some((x, y)) => {
                    stack.push(x);
                    stack.push(y);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Replays `cs` against `g`, checking every step's annotations, and returns
/// the width: the maximum impurity degree seen over all partitions.
///
/// The replay keeps the impure adjacency sets incrementally (the claimed list
/// of each step is admitted only after it is shown both sound and complete),
/// resolves pure polarities by sampling one representative edge (sound by
/// induction once earlier steps validated), and detects unclaimed
/// newly-impure pairs by scanning the symmetric difference of the merged
/// parts' representative neighborhoods.
pub fn validate(g: &Graph, cs: &ContractionSequence) -> Result<u32, ValidateError> {
    if g.n() != cs.n() {
        return Err(ValidateError::SizeMismatch { seq_n: cs.n(), graph_n: g.n() });
    }
    let n = g.n();
    let total = (2 * n - 1) as usize;
    let mut rep = vec![0 as Vertex; total + 1];
    for v in 1..=n {
        rep[v as usize] = v;
    }
    // Union-find over vertices; the set representative indexes `set_part`.
    let mut dsu: Vec<u32> = (0..=n).collect();
    let mut dsu_size = vec![1u32; n as usize + 1];
    let mut set_part: Vec<Part> = (0..=n).collect();
    fn find(dsu: &mut [u32], v: u32) -> u32 {
        let mut r = v;
        while dsu[r as usize] != r {
            r = dsu[r as usize];
        }
        let mut v = v;
        while dsu[v as usize] != r {
            let next = dsu[v as usize];
            dsu[v as usize] = r;
            v = next;
        }
        r
    }
    let part_of = |dsu: &mut [u32], set_part: &[Part], v: Vertex| -> Part { set_part[find(dsu, v) as usize] };

    let mut imp: Vec<SmallVec<[Part; 8]>> = vec![SmallVec::new(); total + 1];
    let mut width = 0u32;

    for (i, step) in cs.steps().iter().enumerate() {
        let t = i as u32 + 2;
        let (a, a2, b) = (step.a, step.a2, step.b);
        let xa = rep[a as usize];
        let xa2 = rep[a2 as usize];
        let claimed: Vec<Part> = step.impure.iter().map(|&(c, _, _)| c).collect();

        // Soundness of each claimed annotation against the time t-1 state.
        for &(c, ra, ra2) in &step.impure {
            for (p, x, r) in [(a, xa, ra), (a2, xa2, ra2)] {
                let stored_impure = imp[p as usize].contains(&c);
                match r {
                    Rel::Impure => {
                        if !stored_impure {
                            return Err(ValidateError::BadRelation {
                                time: t,
                                a: p,
                                b: c,
                                msg: "claimed impure but the pair is pure".to_string(),
                            });
                        }
                    }
                    pure => {
                        if stored_impure {
                            return Err(ValidateError::BadRelation {
                                time: t,
                                a: p,
                                b: c,
                                msg: "claimed pure but the pair is impure".to_string(),
                            });
                        }
                        let adjacent = g.has_edge(x, rep[c as usize]);
                        if adjacent != (pure == Rel::Complete) {
                            return Err(ValidateError::BadRelation {
                                time: t,
                                a: p,
                                b: c,
                                msg: format!("claimed {} but the parts are {}", if pure == Rel::Complete { "complete" } else { "anti-complete" }, if adjacent { "complete" } else { "anti-complete" }),
                            });
                        }
                    }
                }
            }
            if ra.compose(ra2) != Rel::Impure {
                return Err(ValidateError::BadImpureList {
                    time: t,
                    part: b,
                    msg: format!("lists part {c} whose composed relation is pure"),
                });
            }
        }

        // Completeness: everything impure to a or a2 stays impure to b.
        for p in [a, a2] {
            for &c in &imp[p as usize] {
                if c != a && c != a2 && !claimed.contains(&c) {
                    return Err(ValidateError::BadImpureList {
                        time: t,
                        part: b,
                        msg: format!("misses part {c} which is impure to part {p}"),
                    });
                }
            }
        }
        // Completeness: pure-pure pairs with opposite polarity become impure.
        // Any witness vertex adjacent to exactly one of the representatives
        // exposes such a part.
        {
            let (na, na2) = (g.neighbors(xa), g.neighbors(xa2));
            let (mut i1, mut i2) = (0usize, 0usize);
            let check = |w: Vertex, dsu: &mut [u32]| -> Result<(), ValidateError> {
                let c = part_of(dsu, &set_part, w);
                if c == a || c == a2 || claimed.contains(&c) {
                    return Ok(());
                }
                if imp[a as usize].contains(&c) || imp[a2 as usize].contains(&c) {
                    return Ok(()); // already reported as missing above
                }
                Err(ValidateError::BadImpureList {
                    time: t,
                    part: b,
                    msg: format!("misses part {c} (opposite pure polarities towards the merged parts)"),
                })
            };
            while i1 < na.len() || i2 < na2.len() {
                if i2 >= na2.len() || (i1 < na.len() && na[i1] < na2[i2]) {
                    check(na[i1], &mut dsu)?;
                    i1 += 1;
                } else if i1 >= na.len() || na2[i2] < na[i1] {
                    check(na2[i2], &mut dsu)?;
                    i2 += 1;
                } else {
                    i1 += 1;
                    i2 += 1;
                }
            }
        }

        // Admit the step: rewire the impure adjacency around b.
        for &(c, _, _) in &step.impure {
            let list = &mut imp[c as usize];
            list.retain(|&mut x| x != a && x != a2);
            list.push(b);
            width = width.max(list.len() as u32);
        }
        imp[b as usize] = claimed.iter().copied().collect();
        width = width.max(claimed.len() as u32);
        imp[a as usize] = SmallVec::new();
        imp[a2 as usize] = SmallVec::new();

        rep[b as usize] = xa.min(xa2);
        let (ra, ra2) = (find(&mut dsu, xa), find(&mut dsu, xa2));
        let merged_root = if dsu_size[ra as usize] >= dsu_size[ra2 as usize] {
            dsu[ra2 as usize] = ra;
            dsu_size[ra as usize] += dsu_size[ra2 as usize];
            ra
        } else {
            dsu[ra as usize] = ra2;
            dsu_size[ra2 as usize] += dsu_size[ra as usize];
            ra2
        };
        set_part[merged_root as usize] = b;
    }
    Ok(width)
}

/// The result of reindexing a graph/sequence pair so that every part becomes
/// a vertex interval.
#[derive(Debug, Clone)]
pub struct Reindexed {
    pub graph: Graph,
    pub seq: ContractionSequence,
    /// `old_to_new[v]` is the new id of original vertex `v` (index 0 unused).
    pub old_to_new: Vec<Vertex>,
    /// `new_to_old[v]` is the original id of new vertex `v` (index 0 unused).
    pub new_to_old: Vec<Vertex>,
}

/// Relabels vertices by the leaf order of a pre-order walk of the
/// contraction tree (children visited in `(a, a2)` order). Every part of the
/// resulting sequence is a vertex interval, and all part relations carry
/// over unchanged.
pub fn reindex_convex(g: &Graph, cs: &ContractionSequence) -> Reindexed {
    let n = g.n();
    let table = PartTable::new(cs);
    let mut new_to_old = Vec::with_capacity(n as usize + 1);
    new_to_old.push(0);
    let mut stack = vec![table.root()];
    while let Some(p) = stack.pop() {
        match table.kids(p) {
            None => new_to_old.push(p as Vertex),
            Some((x, y)) => {
                // Visit x before y: push in reverse.
                stack.push(y);
                stack.push(x);
            }
        }
    }
    let mut old_to_new = vec![0 as Vertex; n as usize + 1];
    for (new, &old) in new_to_old.iter().enumerate().skip(1) {
        old_to_new[old as usize] = new as Vertex;
    }
    let graph = g.relabel(&old_to_new);
    let map = |p: Part| -> Part {
        if p <= n {
            old_to_new[p as usize]
        } else {
            p
        }
    };
    let steps = cs
        .steps()
        .iter()
        .map(|s| Step {
            a: map(s.a),
            a2: map(s.a2),
            b: s.b,
            impure: s.impure.iter().map(|&(c, ra, ra2)| (map(c), ra, ra2)).collect(),
        })
        .collect();
    let seq = ContractionSequence::new(n, steps);
    Reindexed { graph, seq, old_to_new, new_to_old }
}

/// Builds a full sequence (with impurity annotations) from an ordered list of
/// merges given as pairs of part ids; the i-th merge creates part `n + i`.
/// Intended for desk-scale construction (generators, refinement chains):
/// each step inspects the neighborhoods of the merged part's members.
pub fn from_merges(g: &Graph, merges: &[(Part, Part)]) -> ContractionSequence {
    let n = g.n();
    assert_eq!(merges.len() as u32, n - 1, "need exactly n-1 merges");
    let total = (2 * n - 1) as usize;
    let mut members: Vec<Vec<Vertex>> = (0..=total as u32).map(|p| if p >= 1 && p <= n { vec![p] } else { vec![] }).collect();
    let mut part_of: Vec<Part> = (0..=n).collect();
    let mut alive: Vec<bool> = (0..=total).map(|p| p >= 1 && p <= n as usize).collect();
    let mut steps = Vec::with_capacity(merges.len());
    for (i, &(a, a2)) in merges.iter().enumerate() {
        let b = n + i as u32 + 1;
        assert!(alive[a as usize] && alive[a2 as usize] && a != a2, "merge {i} uses dead or equal parts");
        let mut mem = members[a as usize].clone();
        mem.extend_from_slice(&members[a2 as usize]);
        mem.sort_unstable();
        // Candidate parts with at least one cross edge to b.
        let mut cross: HashMap<Part, u64> = HashMap::new();
        for &v in &mem {
            for &w in g.neighbors(v) {
                let c = part_of[w as usize];
                if c != a && c != a2 {
                    *cross.entry(c).or_insert(0) += 1;
                }
            }
        }
        let count_cross = |xs: &[Vertex], c: Part, part_of: &[Part]| -> u64 {
            xs.iter().map(|&v| g.neighbors(v).iter().filter(|&&w| part_of[w as usize] == c).count() as u64).sum()
        };
        let mut impure = Vec::new();
        for (&c, &cnt) in &cross {
            let full = mem.len() as u64 * members[c as usize].len() as u64;
            if cnt < full {
                let classify = |xs: &[Vertex]| -> Rel {
                    let k = count_cross(xs, c, &part_of);
                    let full = xs.len() as u64 * members[c as usize].len() as u64;
                    if k == 0 {
                        Rel::Anti
                    } else if k == full {
                        Rel::Complete
                    } else {
                        Rel::Impure
                    }
                };
                impure.push((c, classify(&members[a as usize]), classify(&members[a2 as usize])));
            }
        }
        impure.sort_unstable_by_key(|&(c, _, _)| c);
        for &v in &mem {
            part_of[v as usize] = b;
        }
        alive[a as usize] = false;
        alive[a2 as usize] = false;
        alive[b as usize] = true;
        members[b as usize] = mem;
        steps.push(Step { a, a2, b, impure });
    }
    ContractionSequence::new(n, steps)
}
