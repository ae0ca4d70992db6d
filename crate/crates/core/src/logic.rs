//! First-order formulas over graphs and the naive reference evaluators.
//!
//! Concrete syntax, loosest to tightest: `or`, `and`, `not`; atoms are
//! `E x y`, `x = y`, and parenthesized formulas. A quantifier (`exists v`,
//! `forall v`) scopes to the end of the enclosing formula — up to the next
//! closing parenthesis or the end of input — so
//! `exists x E x y and E y x` reads as `exists x (E x y and E y x)`.
//!
//! Free variables of a formula are always ordered lexicographically by
//! name; every tuple-valued API in the crate follows that order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::err::{LogicError, ParseError};
use crate::graph::Graph;
use crate::Vertex;

const KEYWORDS: [&str; 6] = ["exists", "forall", "not", "and", "or", "E"];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Edge(String, String),
    Eq(String, String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Exists(String, Box<Formula>),
    Forall(String, Box<Formula>),
}

impl Formula {
    pub fn parse(text: &str) -> Result<Formula, ParseError> {
        let tokens = lex(text)?;
        let mut p = Parser { tokens, pos: 0 };
        let f = p.formula()?;
        if let Some(tok) = p.peek() {
            return Err(ParseError::formula(tok.line, format!("unexpected `{}` after formula", tok.text())));
        }
        Ok(f)
    }

    /// Free variables, sorted lexicographically.
    pub fn free_vars(&self) -> Vec<String> {
        let mut set = BTreeSet::new();
        self.collect_free(&mut set);
        set.into_iter().collect()
    }

    fn collect_free(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Edge(x, y) | Formula::Eq(x, y) => {
                out.insert(x.clone());
                out.insert(y.clone());
            }
            Formula::Not(f) => f.collect_free(out),
            Formula::And(l, r) | Formula::Or(l, r) => {
                l.collect_free(out);
                r.collect_free(out);
            }
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                let mut inner = BTreeSet::new();
                f.collect_free(&mut inner);
                inner.remove(v);
                out.extend(inner);
            }
        }
    }

    /// Quantifier rank.
    pub fn rank(&self) -> u32 {
        match self {
            Formula::Edge(..) | Formula::Eq(..) => 0,
            Formula::Not(f) => f.rank(),
            Formula::And(l, r) | Formula::Or(l, r) => l.rank().max(r.rank()),
            Formula::Exists(_, f) | Formula::Forall(_, f) => 1 + f.rank(),
        }
    }

    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Operands of a binary connective and quantifier bodies are
        // parenthesized unless atomic, so the printed form re-parses to the
        // same tree under the maximal-scope rule.
        fn wrap(f: &Formula, out: &mut fmt::Formatter<'_>) -> fmt::Result {
            match f {
                Formula::Edge(..) | Formula::Eq(..) => write!(out, "{f}"),
                Formula::Not(inner) => {
                    write!(out, "not ")?;
                    wrap(inner, out)
                }
                _ => write!(out, "({f})"),
            }
        }
        match self {
            Formula::Edge(x, y) => write!(out, "E {x} {y}"),
            Formula::Eq(x, y) => write!(out, "{x} = {y}"),
            Formula::Not(f) => {
                write!(out, "not ")?;
                wrap(f, out)
            }
            Formula::And(l, r) => {
                wrap(l, out)?;
                write!(out, " and ")?;
                wrap(r, out)
            }
            Formula::Or(l, r) => {
                wrap(l, out)?;
                write!(out, " or ")?;
                wrap(r, out)
            }
            Formula::Exists(v, f) => {
                write!(out, "exists {v} ")?;
                wrap(f, out)
            }
            Formula::Forall(v, f) => {
                write!(out, "forall {v} ")?;
                wrap(f, out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TokKind {
    Ident(String),
    LParen,
    RParen,
    EqSign,
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    line: usize,
}

impl Tok {
    fn text(&self) -> String {
        match &self.kind {
            TokKind::Ident(s) => s.clone(),
            TokKind::LParen => "(".to_string(),
            TokKind::RParen => ")".to_string(),
            TokKind::EqSign => "=".to_string(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<Tok>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                out.push(Tok { kind: TokKind::LParen, line });
                chars.next();
            }
            ')' => {
                out.push(Tok { kind: TokKind::RParen, line });
                chars.next();
            }
            '=' => {
                out.push(Tok { kind: TokKind::EqSign, line });
                chars.next();
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok { kind: TokKind::Ident(word), line });
            }
            other => {
                return Err(ParseError::formula(line, format!("unexpected character `{other}`")));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Tok { kind: TokKind::Ident(s), .. }) => Some(s),
            _ => None,
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|t| t.line).or_else(|| self.tokens.last().map(|t| t.line)).unwrap_or(1)
    }

    fn variable(&mut self) -> Result<String, ParseError> {
        let line = self.here();
        match self.next() {
            Some(Tok { kind: TokKind::Ident(s), line }) => {
                if KEYWORDS.contains(&s.as_str()) {
                    Err(ParseError::formula(line, format!("`{s}` is reserved and cannot name a variable")))
                } else {
                    Ok(s)
                }
            }
            Some(tok) => Err(ParseError::formula(tok.line, format!("expected a variable, found `{}`", tok.text()))),
            None => Err(ParseError::formula(line, "expected a variable, found end of input".to_string())),
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.and_chain()?;
        while self.peek_word() == Some("or") {
            self.next();
            let right = self.and_chain()?;
            left = Formula::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_chain(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.unary()?;
        while self.peek_word() == Some("and") {
            self.next();
            let right = self.unary()?;
            left = Formula::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek_word() {
            Some("not") => {
                self.next();
                Ok(Formula::Not(Box::new(self.unary()?)))
            }
            Some("exists") => {
                self.next();
                let v = self.variable()?;
                Ok(Formula::Exists(v, Box::new(self.formula()?)))
            }
            Some("forall") => {
                self.next();
                let v = self.variable()?;
                Ok(Formula::Forall(v, Box::new(self.formula()?)))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let line = self.here();
        match self.next() {
            Some(Tok { kind: TokKind::LParen, .. }) => {
                let f = self.formula()?;
                match self.next() {
                    Some(Tok { kind: TokKind::RParen, .. }) => Ok(f),
                    Some(tok) => Err(ParseError::formula(tok.line, format!("expected `)`, found `{}`", tok.text()))),
                    None => Err(ParseError::formula(line, "expected `)`, found end of input".to_string())),
                }
            }
            Some(Tok { kind: TokKind::Ident(s), line }) if s == "E" => {
                let x = self.variable()?;
                let y = self.variable()?;
                let _ = line;
                Ok(Formula::Edge(x, y))
            }
            Some(Tok { kind: TokKind::Ident(s), line }) => {
                if KEYWORDS.contains(&s.as_str()) {
                    return Err(ParseError::formula(line, format!("unexpected `{s}`")));
                }
                match self.next() {
                    Some(Tok { kind: TokKind::EqSign, .. }) => {
                        let y = self.variable()?;
                        Ok(Formula::Eq(s, y))
                    }
                    Some(tok) => Err(ParseError::formula(tok.line, format!("expected `=` after `{s}`, found `{}`", tok.text()))),
                    None => Err(ParseError::formula(line, format!("expected `=` after `{s}`, found end of input"))),
                }
            }
            Some(tok) => Err(ParseError::formula(tok.line, format!("expected an atom, found `{}`", tok.text()))),
            None => Err(ParseError::formula(line, "expected an atom, found end of input".to_string())),
        }
    }
}

/// Evaluates `f` under `env`, which must bind exactly the free variables.
/// Exhaustive recursion over all vertices; the reference the fast engines
/// are checked against.
pub fn naive_eval(g: &Graph, f: &Formula, env: &HashMap<String, Vertex>) -> Result<bool, LogicError> {
    let free = f.free_vars();
    for v in &free {
        match env.get(v) {
            None => return Err(LogicError::UnboundVariable(v.clone())),
            Some(&w) if w == 0 || w > g.n() => return Err(LogicError::VertexRange(w, g.n())),
            _ => {}
        }
    }
    for k in env.keys() {
        if !free.iter().any(|v| v == k) {
            return Err(LogicError::ExtraVariable(k.clone()));
        }
    }
    let mut scratch = env.clone();
    Ok(eval_rec(g, f, &mut scratch))
}

fn eval_rec(g: &Graph, f: &Formula, env: &mut HashMap<String, Vertex>) -> bool {
    match f {
        Formula::Edge(x, y) => g.has_edge(env[x], env[y]),
        Formula::Eq(x, y) => env[x] == env[y],
        Formula::Not(inner) => !eval_rec(g, inner, env),
        Formula::And(l, r) => eval_rec(g, l, env) && eval_rec(g, r, env),
        Formula::Or(l, r) => eval_rec(g, l, env) || eval_rec(g, r, env),
        Formula::Exists(v, body) => {
            let saved = env.get(v).copied();
            let mut hit = false;
            for w in 1..=g.n() {
                env.insert(v.clone(), w);
                if eval_rec(g, body, env) {
                    hit = true;
                    break;
                }
            }
            restore(env, v, saved);
            hit
        }
        Formula::Forall(v, body) => {
            let saved = env.get(v).copied();
            let mut all = true;
            for w in 1..=g.n() {
                env.insert(v.clone(), w);
                if !eval_rec(g, body, env) {
                    all = false;
                    break;
                }
            }
            restore(env, v, saved);
            all
        }
    }
}

fn restore(env: &mut HashMap<String, Vertex>, v: &str, saved: Option<Vertex>) {
    match saved {
        Some(w) => {
            env.insert(v.to_string(), w);
        }
        None => {
            env.remove(v);
        }
    }
}

/// Evaluates a sentence.
pub fn naive_sentence(g: &Graph, f: &Formula) -> Result<bool, LogicError> {
    if !f.is_sentence() {
        return Err(LogicError::NotASentence(f.free_vars()));
    }
    naive_eval(g, f, &HashMap::new())
}

/// Tuples over the sorted free variables; coordinates follow that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatisfyingSet {
    pub vars: Vec<String>,
    pub tuples: BTreeSet<Vec<Vertex>>,
}

/// All satisfying assignments by exhaustive search. Cost `n^k` evaluations;
/// intended for desk-scale oracle checks.
pub fn naive_satisfying_set(g: &Graph, f: &Formula) -> Result<SatisfyingSet, LogicError> {
    let vars = f.free_vars();
    let k = vars.len();
    let mut tuples = BTreeSet::new();
    let mut tuple = vec![1 as Vertex; k];
    'outer: loop {
        let env: HashMap<String, Vertex> = vars.iter().cloned().zip(tuple.iter().copied()).collect();
        if naive_eval(g, f, &env)? {
            tuples.insert(tuple.clone());
        }
        for i in (0..k).rev() {
            if tuple[i] < g.n() {
                tuple[i] += 1;
                tuple[i + 1..].fill(1);
                continue 'outer;
            }
        }
        break;
    }
    if k == 0 {
        // The zero-length tuple stands for "the sentence holds".
        tuples.clear();
        if naive_sentence(g, f)? {
            tuples.insert(Vec::new());
        }
    }
    Ok(SatisfyingSet { vars, tuples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::P4;

    fn fof(s: &str) -> Formula {
        Formula::parse(s).unwrap()
    }

    #[test]
    fn parses_atoms_and_connectives() {
        assert_eq!(fof("E x y"), Formula::Edge("x".into(), "y".into()));
        assert_eq!(fof("x = y"), Formula::Eq("x".into(), "y".into()));
        let f = fof("E x y or E y z and not x = y");
        let expect = Formula::Or(
            Box::new(Formula::Edge("x".into(), "y".into())),
            Box::new(Formula::And(
                Box::new(Formula::Edge("y".into(), "z".into())),
                Box::new(Formula::Not(Box::new(Formula::Eq("x".into(), "y".into())))),
            )),
        );
        assert_eq!(f, expect);
    }

    #[test]
    fn quantifier_scope_is_maximal() {
        assert_eq!(fof("exists x E x y and E y x"), fof("exists x (E x y and E y x)"));
        assert_eq!(fof("forall x exists y E x y"), fof("forall x (exists y (E x y))"));
        assert_ne!(fof("(exists x E x y) and E y y"), fof("exists x (E x y and E y y)"));
    }

    #[test]
    fn rejects_malformed_formulas() {
        assert!(Formula::parse("E x").is_err());
        assert!(Formula::parse("exists and E x y").is_err());
        assert!(Formula::parse("(E x y").is_err());
        assert!(Formula::parse("E x y )").is_err());
        assert!(Formula::parse("x == y").is_err());
        assert!(Formula::parse("E x y extra z").is_err());
        assert!(Formula::parse("").is_err());
    }

    #[test]
    fn free_vars_sorted_and_rank() {
        let f = fof("exists z (E x z and E z y)");
        assert_eq!(f.free_vars(), vec!["x".to_string(), "y".to_string()]);
        assert_eq!(f.rank(), 1);
        assert_eq!(fof("forall x exists y E x y").rank(), 2);
        assert!(fof("forall x exists y E x y").is_sentence());
        assert_eq!(fof("exists x E x x").free_vars(), Vec::<String>::new());
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "E x y",
            "x = y",
            "not E x y",
            "not not x = y",
            "E x y and x = y or not E y x",
            "exists x (E x y and not x = y)",
            "forall x exists y (E x y or x = y)",
            "not (exists x E x x)",
            "exists x forall y (not E x y or exists z (E y z and not z = x))",
        ] {
            let f = fof(s);
            assert_eq!(fof(&f.to_string()), f, "round trip of `{s}` via `{f}`");
        }
    }

    #[test]
    fn naive_eval_on_path() {
        let g = Graph::parse(P4).unwrap();
        let env = HashMap::from([("x".to_string(), 1), ("y".to_string(), 2)]);
        assert!(naive_eval(&g, &fof("E x y"), &env).unwrap());
        let env = HashMap::from([("x".to_string(), 1), ("y".to_string(), 3)]);
        assert!(!naive_eval(&g, &fof("E x y"), &env).unwrap());
        assert!(naive_eval(&g, &fof("exists z (E x z and E z y)"), &env).unwrap());
        assert!(naive_sentence(&g, &fof("forall x exists y E x y")).unwrap());
        assert!(!naive_sentence(&g, &fof("forall x forall y (E x y or x = y)")).unwrap());
        assert!(naive_sentence(&g, &fof("exists x exists y (E x y and not x = y)")).unwrap());
    }

    #[test]
    fn eval_rejects_bad_environments() {
        let g = Graph::parse(P4).unwrap();
        let f = fof("E x y");
        assert!(matches!(
            naive_eval(&g, &f, &HashMap::from([("x".to_string(), 1)])),
            Err(LogicError::UnboundVariable(_))
        ));
        let env = HashMap::from([("x".to_string(), 1), ("y".to_string(), 2), ("z".to_string(), 3)]);
        assert!(matches!(naive_eval(&g, &f, &env), Err(LogicError::ExtraVariable(_))));
        let env = HashMap::from([("x".to_string(), 0), ("y".to_string(), 2)]);
        assert!(matches!(naive_eval(&g, &f, &env), Err(LogicError::VertexRange(0, 4))));
    }

    #[test]
    fn satisfying_set_on_path() {
        let g = Graph::parse(P4).unwrap();
        let set = naive_satisfying_set(&g, &fof("E x y")).unwrap();
        assert_eq!(set.vars, vec!["x", "y"]);
        let expect: BTreeSet<Vec<Vertex>> =
            [[1, 2], [2, 1], [2, 3], [3, 2], [3, 4], [4, 3]].into_iter().map(|t| t.to_vec()).collect();
        assert_eq!(set.tuples, expect);

        let two_hop = naive_satisfying_set(&g, &fof("exists z (E x z and E z y)")).unwrap();
        let expect: BTreeSet<Vec<Vertex>> =
            [[1, 1], [1, 3], [2, 2], [2, 4], [3, 1], [3, 3], [4, 2], [4, 4]]
                .into_iter()
                .map(|t| t.to_vec())
                .collect();
        assert_eq!(two_hop.tuples, expect);

        let sent = naive_satisfying_set(&g, &fof("exists x E x x")).unwrap();
        assert!(sent.tuples.is_empty());
        let sent = naive_satisfying_set(&g, &fof("forall x exists y E x y")).unwrap();
        assert_eq!(sent.tuples.len(), 1);
    }
}
