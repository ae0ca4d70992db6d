//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while reading the `.gr` / `.cs` text formats.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{kind} parse error at line {line}: {msg}")]
pub struct ParseError {
    pub kind: &'static str,
    /// 1-based line number in the raw input; 0 when no single line is at fault.
    pub line: usize,
    pub msg: String,
}

impl ParseError {
    pub fn graph(line: usize, msg: String) -> ParseError {
        ParseError { kind: "graph", line, msg }
    }

    pub fn seq(line: usize, msg: String) -> ParseError {
        ParseError { kind: "sequence", line, msg }
    }

    pub fn formula(line: usize, msg: String) -> ParseError {
        ParseError { kind: "formula", line, msg }
    }
}

/// Errors raised while replaying a contraction sequence against a graph.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidateError {
    #[error("step {time}: part {part} is not alive")]
    DeadPart { time: u32, part: u32 },
    #[error("step {time}: pair ({a}, {b}): {msg}")]
    BadRelation { time: u32, a: u32, b: u32, msg: String },
    #[error("step {time}: impure list for part {part} {msg}")]
    BadImpureList { time: u32, part: u32, msg: String },
    #[error("sequence is for {seq_n} vertices but graph has {graph_n}")]
    SizeMismatch { seq_n: u32, graph_n: u32 },
}

/// Errors raised by the logic layer and the type calculus.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("assignment does not cover free variable `{0}`")]
    UnboundVariable(String),
    #[error("assignment binds `{0}` which is not free in the formula")]
    ExtraVariable(String),
    #[error("vertex {0} out of range for graph with n = {1}")]
    VertexRange(u32, u32),
    #[error("quantifier rank {rank} exceeds the supported cap {cap}")]
    RankCap { rank: u32, cap: u32 },
    #[error("formula has rank {formula} but the type only supports rank {available}")]
    RankTooLow { formula: u32, available: u32 },
    #[error("expected a sentence but formula has free variables {0:?}")]
    NotASentence(Vec<String>),
    #[error("formula free variables {formula:?} do not match the engine's variables {engine:?}")]
    VariableMismatch { formula: Vec<String>, engine: Vec<String> },
    #[error("{0}")]
    Unsupported(String),
}

/// Errors raised by index construction and desk-scale analysis operations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("vicinity of radius {have} is too small, need radius {need}")]
    VicinityTooSmall { have: u32, need: u32 },
    #[error("operation needs a convex (interval-reindexed) sequence")]
    NotConvex,
    #[error("exhaustive work estimate {estimate} exceeds the budget {budget}; raise the budget to proceed")]
    Budget { estimate: u128, budget: u128 },
    #[error("{0}")]
    Precondition(String),
}
