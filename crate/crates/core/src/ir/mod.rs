//! The graph IR: element types, shapes, the op set, and functions.

mod buffer;
mod builders;
mod function;
mod infer;
mod op;
mod types;

pub use buffer::Buffer;
pub use builders::build_softmax;
pub use function::{Diagnostic, Function, Node, NodeId, Output};
pub use infer::infer_output;
pub use op::{MaxOperand, Op, OpTag, Padding, ReductionKind, Strides};
pub use types::{
    axis_set, inverse_permutation, is_identity_order, is_permutation, AxisSet, AxisVector,
    ElementType, Shape, TensorDescriptor,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrError {
    #[error("{op}: expected {expected} inputs, found {found}")]
    ArityMismatch {
        op: OpTag,
        expected: usize,
        found: usize,
    },
    #[error("{op}: incompatible shapes {}", fmt_shapes(.shapes))]
    ShapeMismatch { op: OpTag, shapes: Vec<Shape> },
    #[error("{op}: unsupported or mismatched element types {types:?}")]
    ElementTypeMismatch { op: OpTag, types: Vec<ElementType> },
    #[error("{op}: invalid attribute: {reason}")]
    InvalidAttribute { op: OpTag, reason: String },
    #[error("input {0} does not exist")]
    UnknownInput(Output),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("{0} is internal and cannot be constructed directly")]
    InternalOp(OpTag),
    #[error("cycle detected among nodes {0:?}")]
    CycleDetected(Vec<NodeId>),
}

fn fmt_shapes(shapes: &[Shape]) -> String {
    shapes
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" vs ")
}
