//! Graph rewrites and analyses run by transformers before execution.

mod cse;
mod fold;
mod layouts;
mod liveness;
mod memory;
mod partition;
mod pattern;
mod pipeline;
mod simplify;

pub use cse::eliminate_common_subexpressions;
pub use fold::constant_fold;
pub use layouts::{
    assign_layouts, assign_layouts_with, tensor_layouts, ConvLayout, LayoutPreferences, OpLayout,
};
pub use liveness::{liveness, LiveInterval};
pub use memory::{align_up, plan_memory, MemoryPlan, Placement, ALIGNMENT};
pub use partition::{partition, BackendTag, Group, Partitioning};
pub use pattern::{match_pattern, Bindings, ConstantPredicate, Pattern};
pub use pipeline::{run_pipeline, Pass};
pub use simplify::algebraic_simplify;

use thiserror::Error;

use crate::ir::{Diagnostic, IrError, NodeId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PassError {
    #[error("unknown pass `{0}` (expected simplify, cse, fold or layouts)")]
    UnknownPass(String),
    #[error("invalid function: {}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("folding node {node} failed: {message}")]
    FoldFailure { node: NodeId, message: String },
    #[error(transparent)]
    Ir(#[from] IrError),
}

pub(crate) fn join(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
