//! Explanation-template mining and auditing for relational access logs.
//!
//! An access log records who looked at which record. Most accesses have a
//! mundane reason — an appointment, a shared care team, a repeat visit — and
//! that reason is visible as a join path through the rest of the database:
//! a chain of equality conditions that starts at the accessed record and ends
//! back at the user who made the access. This crate mines those path-shaped
//! *explanation templates* directly from the data, evaluates how much of a
//! log they explain, and ships the supporting machinery: a small columnar
//! store, a level-wise miner with bidirectional and bridged variants, a
//! modularity-based grouping stage that materializes collaborative groups as
//! an extra table, and a measurement harness with fake-access evaluation and
//! synthetic data generation.

pub mod error;
pub mod evaluator;
pub mod graph;
pub mod groups;
pub mod harness;
pub mod miner;
pub mod path;
pub mod schema;
pub mod store;
pub mod synth;
pub mod template;
pub mod value;

pub use error::{ConfigError, EvalError, StoreError, TemplateError};
pub use evaluator::{explain_access, EvalContext, ExplanationInstance, SupportCache, SupportResult};
pub use graph::{build_graph, AttrRef, EdgeId, EdgeKind, EdgeUniverse, JoinEdge, OrientedEdge};
pub use groups::{build_hierarchy, cluster, AccessMatrix, Group, Hierarchy, WeightMatrix};
pub use harness::{
    connected_rows, evaluate, first_accesses, gen_fake_log, restrict_log, stability,
    EvaluationReport, Metrics, StabilityReport, TemplateMetrics,
};
pub use miner::{
    bridge, mine, mine_bridged, mine_one_way, mine_two_way, Algorithm, LevelStats, MiningConfig,
    MiningOutput, MiningStats,
};
pub use path::Path;
pub use schema::{parse_schema, SchemaCatalog, TableDecl, TableId};
pub use store::{load_dir, Database, Relation, StoreBuilder};
pub use synth::{generate, GroundTruth, PlantedShape, SyntheticData, SyntheticSpec};
pub use template::{CmpOp, Filter, SupportInfo, Template};
pub use value::{Interner, Sym, Value, ValueKind};
