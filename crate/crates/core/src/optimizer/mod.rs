//! Cost-driven merge and inject transformations of the evaluation tree.

mod cost;
mod search;
mod transform;

pub use cost::{
    delta_cost, f_and, f_optional, f_union, inject_cost, merge_cost, Affected, LocalCost, Model,
};
pub use search::{
    annotate_estimates, decide_inject, decide_merge, local_cost_inject, local_cost_merge,
    multi_level_transform, single_level_transform, TransformRecord, Trial,
};
pub use transform::{
    apply_inject, apply_merge, undo, Snapshot, TransformError, TransformKind, Transformation,
};
