//! The reference interpreter: compiles a function into an instruction list
//! over a static memory plan and executes it with scalar kernels.

mod executable;
mod fallback;
pub mod kernels;
mod tensor;

pub use executable::{compile, CompileOptions, Executable, Instruction, Signature, Slot};
pub use fallback::run_with_fallback;
pub use tensor::{create_tensor, TensorValue};

use thiserror::Error;

use crate::ir::{Diagnostic, ElementType, IrError, OpTag, Shape};
use crate::passes::{join, PassError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("layout of rank {layout} does not fit shape {shape}")]
    RankMismatch { shape: Shape, layout: usize },
    #[error("buffer holds {found} {element_type} elements, expected {expected}")]
    BufferMismatch {
        element_type: ElementType,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    SignatureMismatch(String),
    #[error("{op} has no kernel for {element_type}")]
    UnsupportedOp {
        op: OpTag,
        element_type: ElementType,
    },
    #[error("invalid function: {}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("invalid instruction order: {0}")]
    InvalidOrder(String),
    #[error(transparent)]
    Pass(#[from] PassError),
    #[error(transparent)]
    Ir(#[from] IrError),
}
