//! Inference-protected secure views over a single relation.
//!
//! Given a table, a set of denial constraints and function-based constraints,
//! and per-querier deny policies, the engine computes a view that hides the
//! sensitive cells plus a near-minimal set of additional cells so that the
//! constraints cannot be used to reconstruct hidden values. A brute-force
//! oracle, simulated attackers, and baseline strategies live alongside for
//! verification.
//!
//! Constraint file grammar (one constraint per line, `#` comments):
//!
//! ```text
//! dc [: id] : !(pred { & pred })        pred := operand op operand
//! fc [: id] : t1.Out = fn(t1.In, ...) (invertible|noninvertible)
//! operand   := t1.Attr | t2.Attr | number | "string"
//! op        := == | != | < | <= | > | >=
//! ```

pub mod constraints;
pub mod detect;
pub mod engine;
pub mod error;
pub mod gen;
pub mod model;
pub mod protect;
pub mod verify;

pub use constraints::{
    format_constraints, format_dc, format_fc, parse_constraints, validate_instance,
    DenialConstraint, DependencySet, FunctionConstraint, Violation,
};
pub use detect::{
    detect, detect_oblivious, detect_query_based, eval_predicate, fc_instantiate, filter_owner,
    instantiate, ttc, Cueset, DetectOptions, DetectOutcome, InstantiatedDependency,
    ResidualWarning, ThreeValued,
};
pub use engine::{
    check_coverage, compute_leakage, is_deniable, run_binning, run_full, run_with_sensitive,
    DetectionMethod, EngineOptions, LeakageSet, Mode, ProtectionMethod, RunReport,
};
pub use error::{Error, Result};
pub use gen::generate_instance;
pub use model::{
    base_view, load_relation, load_view_hidden, sensitivity_determination, AttrKind, AttributeDef,
    CellRef, CmpOp, Policy, QuerierView, RelationInstance, Schema, SensitiveSet, Value, NULL_TOKEN,
};
pub use protect::{protect_cloak, protect_mvc, protect_random, HideSelection};
pub use verify::{
    attack_constraint_propagation, attack_weighted_sampling, check_full_deniability,
    dependency_connectivity, oracle_inferred_set, AttackOutcome, ConnectivityReport, OracleResult,
    DEFAULT_ORACLE_BUDGET,
};
