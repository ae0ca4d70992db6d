//! Simple undirected graphs with 1-based vertex ids and the `.gr` text format.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::err::ParseError;

/// Vertices are 1-based ids, `1..=n`.
pub type Vertex = u32;

/// An undirected simple graph. Adjacency lists are sorted, so membership
/// tests are binary searches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: u32,
    m: usize,
    adj: Vec<Vec<Vertex>>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges and reversed
    /// duplicates collapse; self-loops are rejected.
    pub fn from_edges(n: u32, edges: &[(Vertex, Vertex)]) -> Result<Graph, ParseError> {
        let mut set: BTreeSet<(Vertex, Vertex)> = BTreeSet::new();
        for &(u, v) in edges {
            if u == 0 || v == 0 || u > n || v > n {
                return Err(ParseError::graph(0, format!("vertex id out of range: ({u}, {v}) with n = {n}")));
            }
            if u == v {
                return Err(ParseError::graph(0, format!("self-loop at vertex {u}")));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let mut adj = vec![Vec::new(); n as usize + 1];
        for &(u, v) in &set {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Ok(Graph { n, m: set.len(), adj })
    }

    /// Parses the `.gr` format: a `n m` header line, then `m` lines `u v`.
    /// Lines starting with `#` and blank lines are ignored.
    pub fn parse(text: &str) -> Result<Graph, ParseError> {
        let mut lines = content_lines(text);
        let (lno, header) = lines
            .next()
            .ok_or_else(|| ParseError::graph(0, "empty input, expected `n m` header".to_string()))?;
        let mut it = header.split_whitespace();
        let n: u32 = parse_field(it.next(), lno, "n")?;
        let m: usize = parse_field(it.next(), lno, "m")?;
        if it.next().is_some() {
            return Err(ParseError::graph(lno, "trailing tokens after `n m` header".to_string()));
        }
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (lno, line) = lines
                .next()
                .ok_or_else(|| ParseError::graph(0, format!("expected {m} edge lines, input ended early")))?;
            let mut it = line.split_whitespace();
            let u: u32 = parse_field(it.next(), lno, "u")?;
            let v: u32 = parse_field(it.next(), lno, "v")?;
            if it.next().is_some() {
                return Err(ParseError::graph(lno, "trailing tokens after edge".to_string()));
            }
            if u == 0 || v == 0 || u > n || v > n {
                return Err(ParseError::graph(lno, format!("vertex id out of range: ({u}, {v}) with n = {n}")));
            }
            if u == v {
                return Err(ParseError::graph(lno, format!("self-loop at vertex {u}")));
            }
            edges.push((u, v));
        }
        if let Some((lno, _)) = lines.next() {
            return Err(ParseError::graph(lno, "trailing content after edge list".to_string()));
        }
        Graph::from_edges(n, &edges)
    }

    /// Renders the graph back into the `.gr` format.
    pub fn to_gr(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n, self.m);
        for u in 1..=self.n {
            for &v in self.neighbors(u) {
                if u < v {
                    let _ = writeln!(out, "{u} {v}");
                }
            }
        }
        out
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> {
        1..=self.n
    }

    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adj[v as usize].len()
    }

    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.adj[u as usize].binary_search(&v).is_ok()
    }

    /// Applies a bijective relabeling `new_id[v]` (1-based slots) and returns
    /// the isomorphic copy.
    pub fn relabel(&self, new_id: &[Vertex]) -> Graph {
        let mut edges = Vec::with_capacity(self.m);
        for u in self.vertices() {
            for &v in self.neighbors(u) {
                if u < v {
                    edges.push((new_id[u as usize], new_id[v as usize]));
                }
            }
        }
        Graph::from_edges(self.n, &edges).expect("relabeling a valid graph stays valid")
    }
}

/// Yields `(line_number, content)` for lines that are neither blank nor
/// `#`-comments. Line numbers are 1-based over the raw input.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, lno: usize, what: &str) -> Result<T, ParseError> {
    let tok = tok.ok_or_else(|| ParseError::graph(lno, format!("missing field `{what}`")))?;
    tok.parse()
        .map_err(|_| ParseError::graph(lno, format!("field `{what}` is not a valid number: `{tok}`")))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const P4: &str = "4 3\n1 2\n2 3\n3 4\n";

    #[test]
    fn parses_p4() {
        let g = Graph::parse(P4).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.m(), 3);
        assert!(g.has_edge(1, 2) && g.has_edge(2, 1));
        assert!(g.has_edge(2, 3) && g.has_edge(3, 4));
        assert!(!g.has_edge(1, 3) && !g.has_edge(1, 4) && !g.has_edge(2, 4));
    }

    #[test]
    fn ignores_comments_and_blanks() {
        let g = Graph::parse("# a path\n\n4 3\n1 2\n# middle\n2 3\n3 4\n\n").unwrap();
        assert_eq!(g.m(), 3);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Graph::parse("").is_err());
        assert!(Graph::parse("2 1\n1 1\n").is_err(), "self-loop");
        assert!(Graph::parse("2 1\n1 3\n").is_err(), "id out of range");
        assert!(Graph::parse("2 2\n1 2\n").is_err(), "missing edge line");
        assert!(Graph::parse("x y\n").is_err(), "malformed header");
    }

    #[test]
    fn roundtrip() {
        let g = Graph::parse(P4).unwrap();
        assert_eq!(Graph::parse(&g.to_gr()).unwrap(), g);
    }
}
