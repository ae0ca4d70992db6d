//! Twin-width tooling: trigraphs, contraction sequences, local types, and
//! the index structures built on them (model checking, query answering,
//! constant-delay enumeration, density experiments).
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`], [`seq`], [`trigraph`]: plain graphs, contraction sequences
//!   with impurity annotations, and the quotient trigraphs they induce.
//! - [`regions`]: the bounded per-merge sub-trigraphs everything else reads
//!   instead of full quotients.
//! - [`logic`]: first-order formulas over graphs plus naive evaluators that
//!   serve as oracles for the fast engines.
//! - [`types`]: local types of vertex tuples, the operators that maintain
//!   them across merges, and their translation to graph-level types that
//!   decide formulas.

pub mod closetree;
pub mod enumerate;
pub mod err;
pub mod firstclose;
pub mod graph;
pub mod logic;
pub mod modelcheck;
pub mod query;
pub mod regions;
pub mod seq;
pub mod trigraph;
pub mod types;
pub mod vcdensity;

pub use closetree::{build_close_tree, warp_query, CloseTree, NodeId, PathProductIndex, Recipe};
pub use enumerate::{
    build_descendant_index, build_register_index, enum_family_union, enum_items, enum_product,
    enum_union, enumerate_query, DescendantIndex, Enumerator, QueryEnumeration, RegisterIndex,
    TupleEnumerator,
};
pub use err::{EngineError, LogicError, ParseError, ValidateError};
pub use firstclose::{brute_first_close, build_firstclose_rectangles, RangeIndex, Rect, RectanglePartition};
pub use graph::{Graph, Vertex};
pub use logic::{naive_eval, naive_satisfying_set, naive_sentence, Formula, SatisfyingSet};
pub use modelcheck::{interpret, model_check, RANK_CAP};
pub use query::{build_query_engine, QueryEngine};
pub use regions::{build_relevant_regions, RegionSet, RelevantRegion};
pub use seq::{from_merges, reindex_convex, validate, ContractionSequence, Part, PartTable, Reindexed, Rel, Step};
pub use trigraph::{quotient_at, quotient_trigraph, vicinity, ImpurityState, Trigraph, Vicinity};
pub use types::{
    eval_on_type, full_universe, sentence_type, to_global_type, GlobalArena, GlobalId, TypeArena,
    TypeFunction, TypeId, TypeUniverse,
};
pub use vcdensity::{
    count_type_classes, distance_coloring, lemma_radius, make_bipartite, meeting_time,
    split_parameters, stone_space, vc_density_report, BipartiteSequence, DistanceColoring,
    StoneSpace, VcDensityReport, VcDensityRow, DEFAULT_BUDGET,
};
