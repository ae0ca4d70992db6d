//! Local and global type machinery: hash-consed arenas, the reference
//! (exhaustive) constructions, the incremental operators (trim, join,
//! promote, permute), global translation with formula evaluation, and
//! dense per-universe tables.

pub mod arena;
pub mod global;
pub mod ops;
pub mod reference;
pub mod universe;

pub use arena::{BitRel, GlobalArena, GlobalId, Payload, TypeArena, TypeId, TypeNode, MAX_ARITY};
pub use global::{atomic_of, eval_on_type, sentence_type, to_global_type};
pub use ops::{
    join, ltp_time1_constant, permute, promote, trim, trim_to, MergeCtx, OpMemo, OracleMergeCtx,
    QuotientCtx, RegionCtx, ScanCtx, TimeCtx,
};
pub use reference::{atomic_type, ltp, tp, tp_sentence, AtomicType};
pub use universe::{
    count_atomic_types, enumerate_types, full_universe, join_table, promote_table, trim_table,
    warp_function, JoinTable, TypeFunction, TypeUniverse,
};
